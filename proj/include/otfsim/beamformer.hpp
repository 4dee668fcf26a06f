#pragma once

#include <span>
#include <vector>

#include "otfsim/channel.hpp"
#include "otfsim/modem.hpp"
#include "otfsim/types.hpp"

namespace otfsim {

/// Matched-filter combining weights for one look direction:
/// w = a(theta) / N_r.
cvec mf_weights(const ArrayGeometry& array, double theta);

enum class BeamGridMode {
  /// Directions theta_p = asin(u_p) with u_p uniform over [-1, 1), one beam
  /// per grid point. Covers the full field of view without channel knowledge.
  kUniformSine,
  /// One beam per supplied arrival angle (e.g. the true path angles when the
  /// receiver is assumed to know them).
  kKnownAoa,
};

struct BeamGrid {
  std::vector<double> directions;
  std::vector<cvec> weights;

  int size() const { return static_cast<int>(directions.size()); }
};

BeamGrid make_beam_grid(const ArrayGeometry& array, int count,
                        BeamGridMode mode,
                        std::span<const double> aoas = {});

/// Combines the per-antenna sample matrix into one branch stream:
/// out(n) = sum_a rx(n, a) * conj(w_a).
cvec apply_beamformer(const CMatrix& rx, const cvec& weights);

/// Effective delay-Doppler channel matrix of one beamformed branch, built by
/// probing: column b is the demodulated response to the b-th delay-Doppler
/// basis frame sent through the noiseless channel and combiner. Exact for any
/// window pair, at the cost of M*N pipeline passes.
CMatrix effective_dd_channel(const GeometricChannel& chan,
                             const OtfsModem& modem, const WindowPair& window,
                             const cvec& weights);

/// Same matrix in closed form, valid for identity windows only. With blocks
/// of M + cp samples and per-path phasor step w = 2*pi*f*Ts, entry
/// ((k,n), (k',n')) with k = k' + d mod M accumulates
///   gain * response * exp(j w (cp + k)) * D_N(n' - n + nu) / N,
/// where nu = f*Ts*(M+cp)*N is the path Doppler in bin units and D_N is the
/// N-point Dirichlet kernel. Matches probing to near machine precision.
CMatrix effective_dd_channel_fast(const GeometricChannel& chan,
                                  const FrameParams& params,
                                  const cvec& weights);

/// Everything the detector needs from one beam branch: the demodulated
/// delay-Doppler observation, the branch channel matrix, the branch noise
/// level, and the sparse support of the channel above a magnitude threshold.
struct BranchObservation {
  double direction = 0.0;
  cvec y;
  CMatrix h;
  double noise_variance = 0.0;
  double support_threshold = 0.0;
  std::vector<std::vector<int>> row_support;  // per row: column indices
  std::vector<std::vector<int>> col_support;  // per column: row indices
  int max_row_support = 0;

  static BranchObservation build(double direction, cvec y, CMatrix h,
                                 double noise_variance,
                                 double support_threshold);
};

/// Nonzero structure of a set of branch channel matrices at a magnitude
/// threshold.
struct SparsityReport {
  double threshold = 0.0;
  std::vector<long> nonzero_counts;   // per branch
  std::vector<int> max_row_supports;  // per branch

  double mean_nonzeros() const;
};

SparsityReport sparsity_report(std::span<const CMatrix> branches,
                               double threshold);

}  // namespace otfsim
