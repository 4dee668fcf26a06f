#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otfsim/rng.hpp"
#include "otfsim/types.hpp"

namespace otfsim {

/// Uniform linear array at the receiver.
struct ArrayGeometry {
  int num_antennas = 1;
  double spacing_over_wavelength = 0.5;
};

/// Array response for angle of arrival theta (radians, measured from
/// broadside). Element a carries phase a * 2*pi * (d/lambda) * sin(theta);
/// element 0 is the reference with phase 0.
cvec steering_vector(const ArrayGeometry& array, double theta);

/// One propagation path inside a tap: complex gain, Doppler frequency offset
/// in Hz, and angle of arrival.
struct PropagationPath {
  cplx gain;
  double dfo_hz = 0.0;
  double aoa = 0.0;
};

/// All paths sharing one discrete delay.
struct ChannelTap {
  int delay_samples = 0;
  std::vector<PropagationPath> paths;
};

/// Sampled geometric channel: a set of delay taps, each a cluster of paths
/// with their own Doppler offsets and arrival angles, observed by a ULA.
struct GeometricChannel {
  std::vector<ChannelTap> taps;
  ArrayGeometry array;
  double sample_interval_s = 0.0;

  int max_delay() const;
  int total_paths() const;
};

struct ChannelConfig {
  int num_taps = 6;
  int paths_per_tap = 8;
  int max_delay_samples = 10;
  double speed_mps = 240.0 / 3.6;
  double carrier_hz = 4.0e9;
  double sample_interval_s = 0.0;
  ArrayGeometry array;
  /// When >= 0, overrides the speed-derived maximum Doppler offset. Path
  /// offsets are then f = max_doppler_hz * cos(beta).
  double max_doppler_hz = -1.0;
};

/// Largest possible Doppler frequency offset for the config (v*fc/c, or the
/// explicit override).
double max_dfo_hz(const ChannelConfig& cfg);

/// Draws a random channel realization. Delays: tap 0 at delay 0, remaining
/// taps drawn without replacement from [1, max_delay]. Per path, the motion
/// angle beta ~ U[0, pi) sets the Doppler offset f = f_max*cos(beta), the
/// arrival angle is an independent U[-pi/2, pi/2), and the gain is complex
/// normal scaled so the total mean channel power over all paths is 1.
GeometricChannel sample_geometry(Rng& rng, const ChannelConfig& cfg);

/// Time-variant gain of one tap as seen by one antenna at a given sample
/// index: sum over the tap's paths of gain * exp(j*2*pi*f*Ts*n) * steering
/// phase of that antenna.
cplx tap_gain(const GeometricChannel& chan, int antenna, int tap,
              std::int64_t sample);

/// Passes a transmit sample stream through the channel. Returns a matrix of
/// received samples, one column per antenna:
///   r_a(n) = sum_i g_{a,i}(n) * s(n - d_i),
/// with s taken as zero before time 0. No noise is added here.
CMatrix apply_channel(const GeometricChannel& chan, const cvec& s);

/// Adds circularly-symmetric complex Gaussian noise of the given variance
/// per sample to every matrix entry.
void add_awgn(CMatrix& rx, double variance, Rng& rng);

/// Noise variance that realizes the requested SNR for unit-energy symbols:
/// variance = Es / 10^(snr_db/10).
double noise_variance_for_snr_db(double snr_db, double symbol_energy = 1.0);

/// Collapses the antenna dimension with fixed combining weights: returns a
/// single-branch channel whose path gains are the original gains scaled by
/// the combiner's response w^H a(theta) to each path's arrival angle.
/// Applying it to a stream reproduces combining the full array output.
GeometricChannel collapse_to_branch(const GeometricChannel& chan,
                                    const cvec& weights);

/// Round-trippable plain-text form (one header line, then one line per path).
std::string to_text(const GeometricChannel& chan);
GeometricChannel channel_from_text(const std::string& text);

}  // namespace otfsim
