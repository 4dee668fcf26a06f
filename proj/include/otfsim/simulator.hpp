#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "otfsim/channel.hpp"
#include "otfsim/detector.hpp"
#include "otfsim/modem.hpp"

namespace otfsim {

/// Fully resolved experiment configuration. Loadable from JSON (every field
/// optional, unknown keys rejected); to_json() emits the resolved values for
/// the run manifest.
struct SimConfig {
  // frame
  int num_delay_bins = 32;
  int num_doppler_bins = 16;
  double subcarrier_spacing_hz = 15.0e3;
  double cp_duration_s = 5.0e-6;
  // channel
  int num_taps = 6;
  int paths_per_tap = 8;
  int max_delay_samples = 10;
  double speed_kmh = 240.0;
  double carrier_hz = 4.0e9;
  /// When >= 0: maximum Doppler offset = this value times the subcarrier
  /// spacing, instead of the speed-derived value.
  double normalized_max_dfo = -1.0;
  // receiver
  int num_antennas = 8;
  double spacing_over_wavelength = 0.5;
  /// Beam count; -1 means one beam per antenna.
  int num_beams = -1;
  std::string beam_mode = "uniform";  // "uniform" | "known-aoa"
  int qam_order = 16;
  DetectorConfig detector;
  // run
  std::uint64_t seed = 1;
  int trials = 500;
  std::vector<double> snr_db = {10.0, 12.5, 15.0, 17.5, 20.0};
  int threads = 1;

  FrameParams frame() const;
  ChannelConfig channel() const;
  int beam_count() const { return num_beams > 0 ? num_beams : num_antennas; }

  static SimConfig from_json_text(const std::string& text);
  static SimConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

/// Ideal per-block channel state for the OFDM baseline: the time-variant
/// frequency response of each antenna sampled at the middle of every block,
///   h_a(m, l) = sum_i g_{a,i}(n_mid(l)) exp(-j 2 pi m d_i / M).
/// Rows are the vectorized M x N grid (subcarrier fastest), one column per
/// antenna. Doppler-induced inter-carrier leakage within a block is not
/// represented, matching a conventional OFDM receiver.
CMatrix ideal_ofdm_csi(const GeometricChannel& chan, const FrameParams& params);

/// Per-resource-element MMSE equalizer with maximum-ratio combining across
/// antennas, followed by hard decisions:
///   xhat = (sum_a conj(h_a) y_a) / (sum_a |h_a|^2 + noise_variance).
std::vector<int> mmse_mrc_ofdm(const CMatrix& y_grids, const CMatrix& csi,
                               double noise_variance,
                               const Constellation& constellation);

/// Exact (Clopper-Pearson) two-sided binomial confidence interval for
/// `successes` out of `trials` at the given confidence level.
std::pair<double, double> clopper_pearson(long successes, long trials,
                                          double confidence);

struct BerRow {
  double snr_db = 0.0;
  std::string scheme;  // "otfs" | "ofdm"
  long frames = 0;
  long bits = 0;
  long bit_errors = 0;
  double ber = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct SparsityRow {
  int num_antennas = 0;
  int draw = 0;
  int branch = 0;
  long nonzero_count = 0;
  int max_row_support = 0;
};

struct ConvergenceRow {
  double snr_db = 0.0;
  std::string receiver;  // "mp-mrc" | "mp-single"
  long frames = 0;
  double mean_iterations = 0.0;
};

/// Paired uncoded BER sweep: every trial sends the same payload bits through
/// the same channel realization and the same noise draws once as an OTFS
/// frame (beamformed branches + joint message-passing detection) and once as
/// an OFDM frame (per-antenna MMSE-MRC). Two rows per SNR point.
std::vector<BerRow> run_ber(const SimConfig& cfg);

/// Thresholded nonzero structure of the branch channel matrices as the
/// antenna count grows, with the channel realization shared across antenna
/// counts within a draw. One row per (antenna count, draw, branch).
std::vector<SparsityRow> run_sparsity(const SimConfig& cfg,
                                      std::span<const int> antenna_counts,
                                      int draws);

/// Mean detector iteration counts per SNR for the multi-branch receiver
/// against a single-antenna receiver on the same channel and payload.
std::vector<ConvergenceRow> run_convergence(const SimConfig& cfg);

std::string to_csv(std::span<const BerRow> rows);
std::string to_csv(std::span<const SparsityRow> rows);
std::string to_csv(std::span<const ConvergenceRow> rows);

/// Quick end-to-end self-checks (modem roundtrip, channel probing oracle,
/// detector sanity on a toy problem, determinism). Prints one line per check;
/// returns the number of failures.
int run_selfcheck(std::ostream& out);

}  // namespace otfsim
