#pragma once

#include <cstddef>

#include "otfsim/fft.hpp"
#include "otfsim/types.hpp"

namespace otfsim {

/// Frame geometry shared by the OTFS and OFDM paths. M delay bins map to M
/// subcarriers, N Doppler bins map to N OFDM blocks; each block carries a
/// cyclic prefix of cp_len samples.
struct FrameParams {
  int num_delay_bins = 32;     // M
  int num_doppler_bins = 16;   // N
  int cp_len = 10;
  double subcarrier_spacing_hz = 15.0e3;

  FrameParams() = default;
  FrameParams(int m, int n, int cp, double spacing);

  /// cp_len from a target prefix duration, floored at the channel's maximum
  /// delay so every block absorbs the full delay spread:
  /// cp = max(ceil(duration / Ts), max_delay_samples).
  static FrameParams from_cp_duration(int m, int n, double spacing,
                                      double cp_duration_s,
                                      int max_delay_samples);

  double sample_interval_s() const {
    return 1.0 / (subcarrier_spacing_hz * num_delay_bins);
  }
  int grid_size() const { return num_delay_bins * num_doppler_bins; }
  int samples_per_block() const { return num_delay_bins + cp_len; }
  int frame_samples() const { return samples_per_block() * num_doppler_bins; }
};

/// Unit-modulus transmit/receive windows applied on the time-frequency grid
/// (vectorized M*N diagonal). Defaults to all-ones.
struct WindowPair {
  cvec tx;
  cvec rx;

  static WindowPair identity(std::size_t grid_size);
  void validate(std::size_t grid_size) const;
};

/// OTFS/OFDM modulator-demodulator for a fixed frame geometry. All grids are
/// vectorized column-major with the delay (or subcarrier) index fastest:
/// x[k + M*l] is delay bin k, Doppler bin l. Transforms are unitary
/// (1/sqrt(M), 1/sqrt(N) on each axis), so modulation preserves energy up to
/// the cyclic prefix copies. Immutable and safe to share across threads.
class OtfsModem {
 public:
  explicit OtfsModem(const FrameParams& params);

  const FrameParams& params() const { return params_; }

  /// Delay-Doppler grid -> time-frequency grid: forward M-point DFT along
  /// each delay column, inverse N-point DFT along each Doppler row.
  cvec isfft(const cvec& dd) const;
  /// Inverse of isfft.
  cvec sfft(const cvec& tf) const;

  /// Full transmit chain: ISFFT, transmit window, per-block OFDM modulation
  /// (inverse DFT across subcarriers), cyclic prefix insertion.
  cvec otfs_modulate(const cvec& dd) const;
  cvec otfs_modulate(const cvec& dd, const WindowPair& window) const;

  /// Full receive chain: per-block prefix removal and forward DFT, receive
  /// window, SFFT back to the delay-Doppler grid.
  cvec otfs_demodulate(const cvec& r) const;
  cvec otfs_demodulate(const cvec& r, const WindowPair& window) const;

  /// Plain OFDM transmit chain for a time-frequency grid (no ISFFT).
  cvec ofdm_modulate(const cvec& tf) const;
  /// Plain OFDM receive chain back to the time-frequency grid.
  cvec ofdm_demodulate(const cvec& r) const;

 private:
  cvec blocks_to_stream(const cvec& tf) const;
  cvec stream_to_blocks(const cvec& r) const;

  FrameParams params_;
  Fft fft_m_;
  Fft fft_n_;
};

}  // namespace otfsim
