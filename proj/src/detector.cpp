#include "otfsim/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "otfsim/fastexp.hpp"

namespace otfsim {

namespace {

// Largest product-grid side the likelihood loops handle with stack scratch;
// wider alphabets fall back to the symbol-by-symbol path.
constexpr int kMaxGridSide = 64;

// Exponentiates a max-subtracted log weight vector in place and returns the
// total mass. Arguments are <= 0 with the peak at exactly zero, so the mass
// is at least one. Inputs are clamped to -40 nats: the clamped lanes come
// out as exp(-40) ~ 4e-18, which vanishes against the unit peak once the
// vector is normalized, and the surviving domain [-40, 0] needs no overflow
// or denormal handling. Every lane is then branch-free (reduce to
// t = k*ln2 + r, degree-nine polynomial in r, 2^k spliced into the exponent
// bits), which lets the loop vectorize across the alphabet.
inline double exp_weights(double* __restrict w, const int q) {
  constexpr double kLog2e = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  double mass = 0.0;
  for (int j = 0; j < q; ++j) {
    const double t = std::max(w[j], -40.0);
    const std::int64_t k = static_cast<std::int64_t>(t * kLog2e - 0.5);
    const double kd = static_cast<double>(k);
    const double r = (t - kd * kLn2Hi) - kd * kLn2Lo;
    double p = 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    w[j] = p * std::bit_cast<double>(
                   static_cast<std::uint64_t>(1023 + k) << 52);
    mass += w[j];
  }
  return mass;
}

}  // namespace

// Fills w[0..q) with one edge's per-symbol Gaussian log-likelihoods,
// w[j] = -|d - h a_j|^2 / var. On a product-grid alphabet the squared
// distance splits into two per-axis quadratics plus a constant, so the fill
// costs O(side) axis evaluations and q adds instead of q complex multiplies.
// Forced inline: as an opaque call it would block vectorization of every
// message loop around it.
[[gnu::always_inline]] static inline void edge_loglikelihoods(
    const FactorGraph& graph, const cplx h, const cplx d, const double inv_var,
    double* __restrict w) {
  const int q = graph.alphabet_size();
  const int side = graph.grid_side();
  if (side > 0) {
    const double ah = std::norm(h);
    const double dd = std::norm(d);
    const double zre = d.real() * h.real() + d.imag() * h.imag();
    const double zim = d.real() * h.imag() - d.imag() * h.real();
    const double* __restrict ar = graph.axis_re().data();
    const double* __restrict ai = graph.axis_im().data();
    double lr[kMaxGridSide];
    double li[kMaxGridSide];
    for (int a = 0; a < side; ++a) {
      const double v = ar[a];
      lr[a] = -inv_var * ((ah * v - 2.0 * zre) * v + dd);
      const double u = ai[a];
      li[a] = -inv_var * ((ah * u + 2.0 * zim) * u);
    }
    for (int a = 0; a < side; ++a) {
      const double base = lr[a];
      double* __restrict row = w + a * side;
      for (int b2 = 0; b2 < side; ++b2) row[b2] = base + li[b2];
    }
    return;
  }
  const double dre = d.real();
  const double dim = d.imag();
  const double hre = h.real();
  const double him = h.imag();
  const double* __restrict pre = graph.point_re().data();
  const double* __restrict pim = graph.point_im().data();
  for (int j = 0; j < q; ++j) {
    const double tre = dre - (hre * pre[j] - him * pim[j]);
    const double tim = dim - (hre * pim[j] + him * pre[j]);
    w[j] = -(tre * tre + tim * tim) * inv_var;
  }
}

FactorGraph FactorGraph::build(std::span<const BranchObservation> branches,
                               const Constellation& constellation) {
  if (branches.empty()) {
    throw std::invalid_argument("FactorGraph: need at least one branch");
  }
  FactorGraph graph;
  graph.mn_ = static_cast<int>(branches[0].h.rows());
  graph.q_ = constellation.size();
  graph.constellation_ = &constellation;
  const int mn = graph.mn_;
  const int q = graph.q_;

  graph.pt_re_.resize(q);
  graph.pt_im_.resize(q);
  graph.pt_e2_.resize(q);
  for (int j = 0; j < q; ++j) {
    graph.pt_re_[j] = constellation.point(j).real();
    graph.pt_im_[j] = constellation.point(j).imag();
    graph.pt_e2_[j] = std::norm(constellation.point(j));
  }

  // Exact row-major product-grid check: coordinate reuse must be bitwise so
  // the per-axis likelihood split reproduces the symbol-by-symbol distances.
  const int side = static_cast<int>(std::lround(std::sqrt(q)));
  if (side >= 2 && side <= kMaxGridSide && side * side == q) {
    graph.axis_re_.resize(side);
    graph.axis_im_.resize(side);
    for (int a = 0; a < side; ++a) {
      graph.axis_re_[a] = graph.pt_re_[a * side];
      graph.axis_im_[a] = graph.pt_im_[a];
    }
    bool on_grid = true;
    for (int j = 0; j < q && on_grid; ++j) {
      on_grid = graph.pt_re_[j] == graph.axis_re_[j / side] &&
                graph.pt_im_[j] == graph.axis_im_[j % side];
    }
    if (on_grid) {
      graph.side_ = side;
    } else {
      graph.axis_re_.clear();
      graph.axis_im_.clear();
    }
  }
  for (const BranchObservation& obs : branches) {
    if (static_cast<int>(obs.h.rows()) != mn) {
      throw std::invalid_argument("FactorGraph: branch sizes must agree");
    }
    Branch b;
    b.y = obs.y;
    b.noise_variance = obs.noise_variance;

    // Column view first (sequential over the column-major channel matrix),
    // then edge ids assigned in row-major order via per-row cursors.
    b.col_offsets.resize(mn + 1, 0);
    std::vector<int> row_count(mn, 0);
    int nnz = 0;
    for (int c = 0; c < mn; ++c) {
      b.col_offsets[c] = nnz;
      nnz += static_cast<int>(obs.col_support[c].size());
      for (int r : obs.col_support[c]) ++row_count[r];
    }
    b.col_offsets[mn] = nnz;
    b.nnz = nnz;

    b.row_offsets.resize(mn + 1, 0);
    for (int r = 0; r < mn; ++r) {
      b.row_offsets[r + 1] = b.row_offsets[r] + row_count[r];
    }
    std::vector<int> cursor(b.row_offsets.begin(), b.row_offsets.end() - 1);
    b.row_cols.resize(nnz);
    b.h.resize(nnz);
    b.col_edges.resize(nnz);
    b.col_rows.resize(nnz);
    int slot = 0;
    for (int c = 0; c < mn; ++c) {
      for (int r : obs.col_support[c]) {
        const int e = cursor[r]++;
        b.row_cols[e] = c;
        b.h[e] = obs.h.at(r, c);
        b.col_edges[slot] = e;
        b.col_rows[slot] = r;
        ++slot;
      }
    }

    graph.branches_.push_back(std::move(b));
  }
  return graph;
}

std::uint64_t FactorGraph::total_edges() const {
  std::uint64_t n = 0;
  for (const Branch& b : branches_) n += static_cast<std::uint64_t>(b.nnz);
  return n;
}

MessageState MessageState::init(const FactorGraph& graph) {
  MessageState state;
  const int q = graph.alphabet_size();
  const double u = 1.0 / q;
  state.branches.resize(graph.num_branches());
  for (int p = 0; p < graph.num_branches(); ++p) {
    const FactorGraph::Branch& b = graph.branch(p);
    Branch& st = state.branches[p];
    st.pmf.assign(static_cast<std::size_t>(b.nnz) * q, u);
    st.mu.assign(b.nnz, cplx{0.0, 0.0});
    st.var.assign(b.nnz, 0.0);
    st.node_logpost.assign(static_cast<std::size_t>(graph.num_nodes()) * q,
                           0.0);
  }
  state.njp.assign(static_cast<std::size_t>(graph.num_nodes()) * q,
                   1.0 / q);
  return state;
}

void obs_to_var(const FactorGraph& graph, MessageState& state, int branch) {
  const FactorGraph::Branch& b = graph.branch(branch);
  MessageState::Branch& st = state.branches[branch];
  const int mn = graph.num_nodes();
  const int q = graph.alphabet_size();

  std::vector<double> m_re, m_im, m_var;
  for (int r = 0; r < mn; ++r) {
    const int begin = b.row_offsets[r];
    const int end = b.row_offsets[r + 1];
    const int len = end - begin;
    if (len == 0) continue;
    m_re.resize(len);
    m_im.resize(len);
    m_var.resize(len);
    double sum_re = 0.0, sum_im = 0.0, sum_var = 0.0;
    const double* __restrict are = graph.point_re().data();
    const double* __restrict aim = graph.point_im().data();
    const double* __restrict ae2 = graph.point_energy().data();
    for (int i = 0; i < len; ++i) {
      const int e = begin + i;
      const double* __restrict pw =
          st.pmf.data() + static_cast<std::size_t>(e) * q;
      double sre = 0.0, sim = 0.0, se2 = 0.0;
      for (int j = 0; j < q; ++j) {
        sre += pw[j] * are[j];
        sim += pw[j] * aim[j];
        se2 += pw[j] * ae2[j];
      }
      const cplx h = b.h[e];
      const double me_re = sre * h.real() - sim * h.imag();
      const double me_im = sre * h.imag() + sim * h.real();
      const double ve = se2 * std::norm(h) - (me_re * me_re + me_im * me_im);
      m_re[i] = me_re;
      m_im[i] = me_im;
      m_var[i] = ve;
      sum_re += me_re;
      sum_im += me_im;
      sum_var += ve;
    }
    for (int i = 0; i < len; ++i) {
      const int e = begin + i;
      st.mu[e] = cplx{sum_re - m_re[i], sum_im - m_im[i]};
      st.var[e] = sum_var - m_var[i] + b.noise_variance;
    }
  }
}

void var_to_obs_likelihoods(const FactorGraph& graph, MessageState& state,
                            int branch, const DetectorConfig& cfg) {
  const FactorGraph::Branch& b = graph.branch(branch);
  MessageState::Branch& st = state.branches[branch];
  const int mn = graph.num_nodes();
  const int q = graph.alphabet_size();

  std::vector<double> total(q), like(q);
  for (int c = 0; c < mn; ++c) {
    const int begin = b.col_offsets[c];
    const int end = b.col_offsets[c + 1];
    const int len = end - begin;
    double* logpost = st.node_logpost.data() + static_cast<std::size_t>(c) * q;
    if (len == 0) {
      std::fill(logpost, logpost + q, 0.0);
      continue;
    }
    std::fill(total.begin(), total.end(), 0.0);
    double* __restrict tot = total.data();
    double* __restrict lrow = like.data();
    for (int i = 0; i < len; ++i) {
      const int e = b.col_edges[begin + i];
      const int r = b.col_rows[begin + i];
      const cplx d = b.y[r] - st.mu[e];
      const double inv_var = 1.0 / std::max(st.var[e], cfg.variance_floor);
      edge_loglikelihoods(graph, b.h[e], d, inv_var, lrow);
      for (int j = 0; j < q; ++j) tot[j] += lrow[j];
    }
    for (int j = 0; j < q; ++j) logpost[j] = total[j];
  }
}

void var_to_obs_update(const FactorGraph& graph, MessageState& state,
                       int branch, const DetectorConfig& cfg) {
  const FactorGraph::Branch& b = graph.branch(branch);
  MessageState::Branch& st = state.branches[branch];
  const int mn = graph.num_nodes();
  const int q = graph.alphabet_size();
  const int np = graph.num_branches();
  const double damp = cfg.damping;
  const double keep = 1.0 - damp;

  std::vector<double> total(q);
  std::vector<double> w(q);
  std::vector<double> like(q);
  for (int c = 0; c < mn; ++c) {
    const int begin = b.col_offsets[c];
    const int end = b.col_offsets[c + 1];
    const int len = end - begin;
    if (len == 0) continue;
    std::fill(total.begin(), total.end(), 0.0);
    double* __restrict tot = total.data();
    for (int p = 0; p < np; ++p) {
      const double* __restrict lp = state.branches[p].node_logpost.data() +
                                    static_cast<std::size_t>(c) * q;
      for (int j = 0; j < q; ++j) tot[j] += lp[j];
    }
    double* __restrict wv = w.data();
    double* __restrict lrow = like.data();
    for (int i = 0; i < len; ++i) {
      const int e = b.col_edges[begin + i];
      const int r = b.col_rows[begin + i];
      const cplx d = b.y[r] - st.mu[e];
      const double inv_var = 1.0 / std::max(st.var[e], cfg.variance_floor);
      edge_loglikelihoods(graph, b.h[e], d, inv_var, lrow);
      double peak = -HUGE_VAL;
      for (int j = 0; j < q; ++j) {
        wv[j] = tot[j] - lrow[j];
        peak = std::max(peak, wv[j]);
      }
      for (int j = 0; j < q; ++j) wv[j] -= peak;
      const double mass = exp_weights(wv, q);
      const double scale = damp / mass;
      double* __restrict pw = st.pmf.data() + static_cast<std::size_t>(e) * q;
      for (int j = 0; j < q; ++j) {
        pw[j] = scale * wv[j] + keep * pw[j];
      }
    }
  }
}

void var_to_obs(const FactorGraph& graph, MessageState& state, int branch,
                const DetectorConfig& cfg) {
  var_to_obs_likelihoods(graph, state, branch, cfg);
  var_to_obs_update(graph, state, branch, cfg);
}

void fuse_branch_posteriors(const FactorGraph& graph, MessageState& state) {
  const int mn = graph.num_nodes();
  const int q = graph.alphabet_size();
  const int np = graph.num_branches();
  std::vector<double> acc(q);
  for (int c = 0; c < mn; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int p = 0; p < np; ++p) {
      const double* lp =
          state.branches[p].node_logpost.data() + static_cast<std::size_t>(c) * q;
      for (int j = 0; j < q; ++j) acc[j] += lp[j];
    }
    double peak = -HUGE_VAL;
    for (int j = 0; j < q; ++j) peak = std::max(peak, acc[j]);
    double* out = state.njp.data() + static_cast<std::size_t>(c) * q;
    for (int j = 0; j < q; ++j) out[j] = acc[j] - peak;
    const double inv_mass = 1.0 / exp_weights(out, q);
    for (int j = 0; j < q; ++j) out[j] *= inv_mass;
  }
}

std::vector<double> njp_combine(
    std::span<const std::vector<double>> posteriors) {
  if (posteriors.empty()) {
    throw std::invalid_argument("njp_combine: need at least one posterior");
  }
  const std::size_t q = posteriors[0].size();
  std::vector<double> acc(q, 0.0);
  std::vector<bool> dead(q, false);
  for (const std::vector<double>& p : posteriors) {
    if (p.size() != q) {
      throw std::invalid_argument("njp_combine: posterior sizes must agree");
    }
    for (std::size_t j = 0; j < q; ++j) {
      if (p[j] <= 0.0) {
        dead[j] = true;
      } else {
        acc[j] += std::log(p[j]);
      }
    }
  }
  double peak = -HUGE_VAL;
  for (std::size_t j = 0; j < q; ++j) {
    if (!dead[j]) peak = std::max(peak, acc[j]);
  }
  std::vector<double> out(q, 0.0);
  if (peak == -HUGE_VAL) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(q));
    return out;
  }
  double mass = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    if (!dead[j]) {
      out[j] = fast_exp(acc[j] - peak);
      mass += out[j];
    }
  }
  for (double& v : out) v /= mass;
  return out;
}

double convergence_indicator(const std::vector<double>& njp, int num_nodes,
                             int alphabet_size, double slack) {
  int converged = 0;
  for (int c = 0; c < num_nodes; ++c) {
    const double* row = njp.data() + static_cast<std::size_t>(c) * alphabet_size;
    double peak = 0.0;
    for (int j = 0; j < alphabet_size; ++j) peak = std::max(peak, row[j]);
    if (peak >= 1.0 - slack) ++converged;
  }
  return static_cast<double>(converged) / num_nodes;
}

DetectionResult detect_mp_mrc(std::span<const BranchObservation> branches,
                              const Constellation& constellation,
                              const DetectorConfig& cfg) {
  if (cfg.damping <= 0.0 || cfg.damping > 1.0) {
    throw std::invalid_argument("detect_mp_mrc: damping must be in (0, 1]");
  }
  if (cfg.max_iterations < 1) {
    throw std::invalid_argument("detect_mp_mrc: need at least one iteration");
  }
  const FactorGraph graph = FactorGraph::build(branches, constellation);
  MessageState state = MessageState::init(graph);
  const int mn = graph.num_nodes();
  const int q = graph.alphabet_size();

  DetectionResult result;
  result.decisions.assign(mn, 0);
  result.confidence.assign(mn, 0.0);
  for (int c = 0; c < mn; ++c) {
    bool covered = false;
    for (int p = 0; p < graph.num_branches(); ++p) {
      const FactorGraph::Branch& b = graph.branch(p);
      if (b.col_offsets[c + 1] > b.col_offsets[c]) {
        covered = true;
        break;
      }
    }
    if (!covered) ++result.uncovered_nodes;
  }

  const std::uint64_t ops_per_iter =
      2ull * static_cast<std::uint64_t>(q) * graph.total_edges();
  double best = -1.0;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    for (int p = 0; p < graph.num_branches(); ++p) {
      obs_to_var(graph, state, p);
    }
    for (int p = 0; p < graph.num_branches(); ++p) {
      var_to_obs_likelihoods(graph, state, p, cfg);
    }
    for (int p = 0; p < graph.num_branches(); ++p) {
      var_to_obs_update(graph, state, p, cfg);
    }
    fuse_branch_posteriors(graph, state);
    const double ind =
        convergence_indicator(state.njp, mn, q, cfg.indicator_slack);
    result.indicator_trace.push_back(ind);
    result.ops_per_iteration.push_back(ops_per_iter);
    result.total_ops += ops_per_iter;
    result.iterations = it + 1;
    if (ind > best) {
      best = ind;
      for (int c = 0; c < mn; ++c) {
        const double* row = state.njp.data() + static_cast<std::size_t>(c) * q;
        int arg = 0;
        for (int j = 1; j < q; ++j) {
          if (row[j] > row[arg]) arg = j;
        }
        result.decisions[c] = arg;
        result.confidence[c] = row[arg];
      }
    }
    if (ind == 1.0) break;
    if (ind < best - cfg.backtrack_slack) break;
  }
  return result;
}

std::vector<int> map_oracle(std::span<const BranchObservation> branches,
                            const Constellation& constellation) {
  if (branches.empty()) {
    throw std::invalid_argument("map_oracle: need at least one branch");
  }
  const int mn = static_cast<int>(branches[0].h.rows());
  const int q = constellation.size();
  double combos = 1.0;
  for (int c = 0; c < mn; ++c) {
    combos *= q;
    if (combos > (1 << 18)) {
      throw std::invalid_argument("map_oracle: search space too large");
    }
  }
  std::vector<int> idx(mn, 0);
  std::vector<int> best_idx(mn, 0);
  double best_score = -HUGE_VAL;
  while (true) {
    double score = 0.0;
    for (const BranchObservation& obs : branches) {
      double ss = 0.0;
      for (int r = 0; r < mn; ++r) {
        cplx acc = obs.y[r];
        for (int c = 0; c < mn; ++c) {
          acc -= obs.h.at(r, c) * constellation.point(idx[c]);
        }
        ss += std::norm(acc);
      }
      score -= ss / std::max(obs.noise_variance, 1e-300);
    }
    if (score > best_score) {
      best_score = score;
      best_idx = idx;
    }
    int c = 0;
    while (c < mn && ++idx[c] == q) {
      idx[c] = 0;
      ++c;
    }
    if (c == mn) break;
  }
  return best_idx;
}

}  // namespace otfsim
