#include "otfsim/beamformer.hpp"

#include <cmath>
#include <stdexcept>

namespace otfsim {

cvec mf_weights(const ArrayGeometry& array, double theta) {
  cvec w = steering_vector(array, theta);
  const double scale = 1.0 / array.num_antennas;
  for (cplx& v : w) v *= scale;
  return w;
}

BeamGrid make_beam_grid(const ArrayGeometry& array, int count,
                        BeamGridMode mode, std::span<const double> aoas) {
  if (count < 1) {
    throw std::invalid_argument("make_beam_grid: need at least one beam");
  }
  BeamGrid grid;
  grid.directions.reserve(count);
  switch (mode) {
    case BeamGridMode::kUniformSine:
      // Cell-centered grid in sin(theta): u_p = -1 + (2p+1)/P.
      for (int p = 0; p < count; ++p) {
        const double u = -1.0 + (2.0 * p + 1.0) / count;
        grid.directions.push_back(std::asin(u));
      }
      break;
    case BeamGridMode::kKnownAoa:
      if (static_cast<int>(aoas.size()) != count) {
        throw std::invalid_argument(
            "make_beam_grid: known-aoa mode needs one angle per beam");
      }
      grid.directions.assign(aoas.begin(), aoas.end());
      break;
  }
  grid.weights.reserve(count);
  for (double theta : grid.directions) {
    grid.weights.push_back(mf_weights(array, theta));
  }
  return grid;
}

cvec apply_beamformer(const CMatrix& rx, const cvec& weights) {
  if (weights.size() != rx.cols()) {
    throw std::invalid_argument(
        "apply_beamformer: weight count must match antenna count");
  }
  cvec out(rx.rows(), cplx{0.0, 0.0});
  for (std::size_t a = 0; a < rx.cols(); ++a) {
    const cplx w = std::conj(weights[a]);
    const cplx* col = rx.col(a);
    for (std::size_t n = 0; n < rx.rows(); ++n) out[n] += w * col[n];
  }
  return out;
}

namespace {

/// Branch channel reduced to per-tap gain series, so each probe pass costs
/// one multiply-add per tap per sample instead of one per path per sample.
struct BranchImpulse {
  std::vector<int> delays;
  std::vector<cvec> gain_series;  // [tap][sample]

  BranchImpulse(const GeometricChannel& branch, std::size_t n_samples) {
    delays.reserve(branch.taps.size());
    gain_series.reserve(branch.taps.size());
    for (std::size_t i = 0; i < branch.taps.size(); ++i) {
      delays.push_back(branch.taps[i].delay_samples);
      cvec series(n_samples);
      for (std::size_t n = 0; n < n_samples; ++n) {
        series[n] = tap_gain(branch, 0, static_cast<int>(i),
                             static_cast<std::int64_t>(n));
      }
      gain_series.push_back(std::move(series));
    }
  }

  cvec apply(const cvec& s) const {
    cvec r(s.size(), cplx{0.0, 0.0});
    for (std::size_t i = 0; i < delays.size(); ++i) {
      const int d = delays[i];
      const cvec& g = gain_series[i];
      for (std::size_t n = static_cast<std::size_t>(d); n < s.size(); ++n) {
        r[n] += g[n] * s[n - d];
      }
    }
    return r;
  }
};

}  // namespace

CMatrix effective_dd_channel(const GeometricChannel& chan,
                             const OtfsModem& modem, const WindowPair& window,
                             const cvec& weights) {
  const GeometricChannel branch = collapse_to_branch(chan, weights);
  const std::size_t mn = static_cast<std::size_t>(modem.params().grid_size());
  const BranchImpulse impulse(
      branch, static_cast<std::size_t>(modem.params().frame_samples()));
  CMatrix h(mn, mn);
  cvec basis(mn, cplx{0.0, 0.0});
  for (std::size_t b = 0; b < mn; ++b) {
    basis[b] = cplx{1.0, 0.0};
    const cvec s = modem.otfs_modulate(basis, window);
    const cvec y = modem.otfs_demodulate(impulse.apply(s), window);
    for (std::size_t r = 0; r < mn; ++r) h.at(r, b) = y[r];
    basis[b] = cplx{0.0, 0.0};
  }
  return h;
}

CMatrix effective_dd_channel_fast(const GeometricChannel& chan,
                                  const FrameParams& params,
                                  const cvec& weights) {
  const GeometricChannel branch = collapse_to_branch(chan, weights);
  const int m = params.num_delay_bins;
  const int n = params.num_doppler_bins;
  const int cp = params.cp_len;
  const double ts = params.sample_interval_s();
  const std::size_t mn = static_cast<std::size_t>(m) * n;
  if (branch.max_delay() > cp) {
    throw std::invalid_argument(
        "effective_dd_channel_fast: channel delay exceeds cyclic prefix");
  }
  CMatrix h(mn, mn);

  // Unit roots of order N, shared by all paths.
  cvec roots(n);
  for (int r = 0; r < n; ++r) {
    roots[r] = std::polar(1.0, 2.0 * M_PI * r / n);
  }

  // Per path: the N-periodic Doppler kernel (duplicated so the inner loop can
  // index it without a modulo) and the per-delay-bin phase ramp, then a fill
  // of the M shifted delay diagonals.
  cvec base(n);
  cvec kernel(2 * n);
  cvec ramp(m);
  for (const ChannelTap& tap : branch.taps) {
    const int d = tap.delay_samples;
    for (const PropagationPath& path : tap.paths) {
      const double w = 2.0 * M_PI * path.dfo_hz * ts;
      const double nu = path.dfo_hz * ts * (m + cp) * n;
      for (int l = 0; l < n; ++l) {
        base[l] = std::polar(1.0, 2.0 * M_PI * l * nu / n);
      }
      for (int delta = 0; delta < n; ++delta) {
        cplx acc{0.0, 0.0};
        for (int l = 0; l < n; ++l) {
          acc += base[l] * roots[(l * delta) % n];
        }
        kernel[delta] = acc / static_cast<double>(n);
        kernel[n + delta] = kernel[delta];
      }
      for (int k = 0; k < m; ++k) {
        ramp[k] = path.gain * std::polar(1.0, w * (cp + k));
      }
      for (int kp = 0; kp < m; ++kp) {
        const int k = (kp + d) % m;
        const cplx g = ramp[k];
        for (int np = 0; np < n; ++np) {
          cplx* col = h.col(static_cast<std::size_t>(kp) +
                            static_cast<std::size_t>(m) * np);
          // Rows k + m*nn take kernel index (np - nn) mod n.
          const cplx* ker = kernel.data() + np;
          for (int nn = 0; nn < n; ++nn) {
            col[k + m * nn] += g * ker[n - nn];
          }
        }
      }
    }
  }
  return h;
}

BranchObservation BranchObservation::build(double direction, cvec y, CMatrix h,
                                           double noise_variance,
                                           double support_threshold) {
  if (h.rows() != h.cols() || y.size() != h.rows()) {
    throw std::invalid_argument(
        "BranchObservation: observation and channel sizes must agree");
  }
  BranchObservation obs;
  obs.direction = direction;
  obs.y = std::move(y);
  obs.h = std::move(h);
  obs.noise_variance = noise_variance;
  obs.support_threshold = support_threshold;
  const std::size_t mn = obs.h.rows();
  obs.row_support.resize(mn);
  obs.col_support.resize(mn);
  for (std::size_t c = 0; c < mn; ++c) {
    const cplx* col = obs.h.col(c);
    for (std::size_t r = 0; r < mn; ++r) {
      if (std::abs(col[r]) > support_threshold) {
        obs.row_support[r].push_back(static_cast<int>(c));
        obs.col_support[c].push_back(static_cast<int>(r));
      }
    }
  }
  for (const std::vector<int>& row : obs.row_support) {
    obs.max_row_support =
        std::max(obs.max_row_support, static_cast<int>(row.size()));
  }
  return obs;
}

double SparsityReport::mean_nonzeros() const {
  if (nonzero_counts.empty()) return 0.0;
  double sum = 0.0;
  for (long c : nonzero_counts) sum += static_cast<double>(c);
  return sum / static_cast<double>(nonzero_counts.size());
}

SparsityReport sparsity_report(std::span<const CMatrix> branches,
                               double threshold) {
  if (threshold < 0.0) {
    throw std::invalid_argument("sparsity_report: threshold must be >= 0");
  }
  SparsityReport rep;
  rep.threshold = threshold;
  for (const CMatrix& h : branches) {
    long count = 0;
    std::vector<int> per_row(h.rows(), 0);
    for (std::size_t c = 0; c < h.cols(); ++c) {
      const cplx* col = h.col(c);
      for (std::size_t r = 0; r < h.rows(); ++r) {
        if (std::abs(col[r]) > threshold) {
          ++count;
          ++per_row[r];
        }
      }
    }
    int max_row = 0;
    for (int v : per_row) max_row = std::max(max_row, v);
    rep.nonzero_counts.push_back(count);
    rep.max_row_supports.push_back(max_row);
  }
  return rep;
}

}  // namespace otfsim
