#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>

#include "doctest.h"
#include "otfsim/detector.hpp"
#include "otfsim/modem.hpp"
#include "otfsim/rng.hpp"

using namespace otfsim;

namespace {

BranchObservation make_obs(const CMatrix& h, const cvec& y, double noise_var,
                           double threshold = 1e-5) {
  return BranchObservation::build(0.0, y, h, noise_var, threshold);
}

}  // namespace

TEST_CASE("obs_to_var: uniform pmfs give zero mean and power-sum variance") {
  // Uniform symbol pmfs over a zero-mean unit-energy alphabet make every
  // edge's symbol mean 0 and symbol energy 1, so the interference message for
  // edge (r,c) is mean 0 and variance sum(|H(r,t)|^2, t != c) + noise.
  const Constellation cs = Constellation::qam(4);
  CMatrix h(2, 2);
  h.at(0, 0) = {0.6, 0.2};
  h.at(0, 1) = {-0.3, 0.4};
  h.at(1, 1) = {0.0, 0.9};
  cvec y = {cplx{1.0, 0.0}, cplx{0.0, -1.0}};
  const double noise = 0.05;
  const std::vector<BranchObservation> obs = {make_obs(h, y, noise)};
  const FactorGraph graph = FactorGraph::build(obs, cs);
  MessageState state = MessageState::init(graph);
  obs_to_var(graph, state, 0);

  // Row-major edges: e0=(0,0), e1=(0,1), e2=(1,1).
  const auto& st = state.branches[0];
  CHECK(std::abs(st.mu[0]) < 1e-14);
  CHECK(std::abs(st.mu[1]) < 1e-14);
  CHECK(std::abs(st.mu[2]) < 1e-14);
  CHECK(st.var[0] == doctest::Approx(std::norm(h.at(0, 1)) + noise));
  CHECK(st.var[1] == doctest::Approx(std::norm(h.at(0, 0)) + noise));
  CHECK(st.var[2] == doctest::Approx(noise));
}

TEST_CASE("var_to_obs: reproduces the extrinsic softmax with damping") {
  const Constellation cs = Constellation::qam(4);
  Rng rng(41);
  CMatrix h(3, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) h.at(r, c) = rng.cnormal(1.0);
  }
  cvec y(3);
  for (cplx& v : y) v = rng.cnormal(1.0);
  const double noise = 0.1;
  const std::vector<BranchObservation> obs = {make_obs(h, y, noise)};
  const FactorGraph graph = FactorGraph::build(obs, cs);
  MessageState state = MessageState::init(graph);

  DetectorConfig cfg;
  cfg.damping = 0.6;
  obs_to_var(graph, state, 0);

  // Keep a copy of the pre-update pmfs and messages to recompute the damped
  // update independently from the published message definitions.
  const std::vector<double> pmf_before = state.branches[0].pmf;
  const cvec mu = state.branches[0].mu;
  const std::vector<double> var = state.branches[0].var;
  var_to_obs(graph, state, 0, cfg);

  const FactorGraph::Branch& b = graph.branch(0);
  const int q = 4;
  for (int c = 0; c < 3; ++c) {
    for (int slot = b.col_offsets[c]; slot < b.col_offsets[c + 1]; ++slot) {
      const int e = b.col_edges[slot];
      // Independent recomputation: L_t(j) for every observation t seeing c.
      std::vector<double> ext(q, 0.0);
      std::vector<double> own(q, 0.0);
      for (int s2 = b.col_offsets[c]; s2 < b.col_offsets[c + 1]; ++s2) {
        const int e2 = b.col_edges[s2];
        const int r2 = b.col_rows[s2];
        for (int j = 0; j < q; ++j) {
          const cplx resid = y[r2] - mu[e2] - h.at(r2, c) * cs.point(j);
          const double l =
              -std::norm(resid) / std::max(var[e2], cfg.variance_floor);
          ext[j] += l;
          if (e2 == e) own[j] = l;
        }
      }
      double peak = -1e300;
      for (int j = 0; j < q; ++j) peak = std::max(peak, ext[j] - own[j]);
      double mass = 0.0;
      std::vector<double> fresh(q);
      for (int j = 0; j < q; ++j) {
        fresh[j] = std::exp(ext[j] - own[j] - peak);
        mass += fresh[j];
      }
      for (int j = 0; j < q; ++j) {
        const double expected =
            cfg.damping * fresh[j] / mass + (1.0 - cfg.damping) * pmf_before[e * q + j];
        CHECK(state.branches[0].pmf[e * q + j] ==
              doctest::Approx(expected).epsilon(1e-9));
      }
    }
    // Node log-posterior includes every edge of the column.
    std::vector<double> full(q, 0.0);
    for (int s2 = b.col_offsets[c]; s2 < b.col_offsets[c + 1]; ++s2) {
      const int e2 = b.col_edges[s2];
      const int r2 = b.col_rows[s2];
      for (int j = 0; j < q; ++j) {
        const cplx resid = y[r2] - mu[e2] - h.at(r2, c) * cs.point(j);
        full[j] -= std::norm(resid) / std::max(var[e2], cfg.variance_floor);
      }
    }
    for (int j = 0; j < q; ++j) {
      CHECK(state.branches[0].node_logpost[c * q + j] ==
            doctest::Approx(full[j]).epsilon(1e-9));
    }
  }

  // pmfs stay normalized.
  for (int e = 0; e < b.nnz; ++e) {
    double sum = 0.0;
    for (int j = 0; j < q; ++j) {
      const double v = state.branches[0].pmf[e * q + j];
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("var_to_obs_update: pools node evidence across branches") {
  // With two branches, the pmf update for an edge of branch 0 must include
  // branch 1's node log-posterior: only the edge's own observation row is
  // excluded from the pooled evidence.
  const Constellation cs = Constellation::qam(4);
  Rng rng(47);
  std::vector<BranchObservation> obs;
  std::vector<CMatrix> hs;
  cvec ys[2];
  for (int p = 0; p < 2; ++p) {
    CMatrix h(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) h.at(r, c) = rng.cnormal(1.0);
    }
    cvec y(3);
    for (cplx& v : y) v = rng.cnormal(1.0);
    hs.push_back(h);
    ys[p] = y;
    obs.push_back(make_obs(h, y, 0.1));
  }
  const FactorGraph graph = FactorGraph::build(obs, cs);
  MessageState state = MessageState::init(graph);

  DetectorConfig cfg;
  cfg.damping = 0.6;
  for (int p = 0; p < 2; ++p) obs_to_var(graph, state, p);
  std::vector<std::vector<double>> pmf_before;
  std::vector<cvec> mu;
  std::vector<std::vector<double>> var;
  for (int p = 0; p < 2; ++p) {
    pmf_before.push_back(state.branches[p].pmf);
    mu.push_back(state.branches[p].mu);
    var.push_back(state.branches[p].var);
  }
  for (int p = 0; p < 2; ++p) var_to_obs_likelihoods(graph, state, p, cfg);
  for (int p = 0; p < 2; ++p) var_to_obs_update(graph, state, p, cfg);

  const int q = 4;
  const auto loglike = [&](int p, int e2, int r2, int c, int j) {
    const cplx resid =
        ys[p][r2] - mu[p][e2] - hs[p].at(r2, c) * cs.point(j);
    return -std::norm(resid) / std::max(var[p][e2], cfg.variance_floor);
  };
  for (int p = 0; p < 2; ++p) {
    const FactorGraph::Branch& b = graph.branch(p);
    for (int c = 0; c < 3; ++c) {
      // Pooled evidence: every edge of every branch that sees node c.
      std::vector<double> pooled(q, 0.0);
      for (int p2 = 0; p2 < 2; ++p2) {
        const FactorGraph::Branch& b2 = graph.branch(p2);
        for (int s = b2.col_offsets[c]; s < b2.col_offsets[c + 1]; ++s) {
          for (int j = 0; j < q; ++j) {
            pooled[j] += loglike(p2, b2.col_edges[s], b2.col_rows[s], c, j);
          }
        }
      }
      for (int s = b.col_offsets[c]; s < b.col_offsets[c + 1]; ++s) {
        const int e = b.col_edges[s];
        const int r = b.col_rows[s];
        double peak = -1e300;
        std::vector<double> w(q);
        for (int j = 0; j < q; ++j) {
          w[j] = pooled[j] - loglike(p, e, r, c, j);
          peak = std::max(peak, w[j]);
        }
        double mass = 0.0;
        for (int j = 0; j < q; ++j) {
          w[j] = std::exp(w[j] - peak);
          mass += w[j];
        }
        for (int j = 0; j < q; ++j) {
          const double expected = cfg.damping * w[j] / mass +
                                  (1.0 - cfg.damping) * pmf_before[p][e * q + j];
          CHECK(state.branches[p].pmf[e * q + j] ==
                doctest::Approx(expected).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("detection is independent of the alphabet's storage layout") {
  // The same physical alphabet stored as a row-major grid (per-axis
  // likelihood split) and in a scrambled order (symbol-by-symbol path) must
  // give the same decisions and posteriors, up to the index permutation.
  const Constellation grid_cs = Constellation::qam(4);
  const std::vector<int> perm = {3, 1, 2, 0};  // scrambled index -> grid index
  cvec pts(4);
  std::vector<std::uint32_t> labels(4);
  for (int i = 0; i < 4; ++i) {
    pts[i] = grid_cs.point(perm[i]);
    labels[i] = grid_cs.label(perm[i]);
  }
  const Constellation scr_cs(pts, labels);

  Rng rng(53);
  CMatrix h(4, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) h.at(r, c) = rng.cnormal(1.0);
  }
  cvec y(4);
  for (cplx& v : y) v = rng.cnormal(1.0);
  const std::vector<BranchObservation> obs = {make_obs(h, y, 0.2)};

  CHECK(FactorGraph::build(obs, grid_cs).grid_side() == 2);
  CHECK(FactorGraph::build(obs, scr_cs).grid_side() == 0);

  DetectorConfig cfg;
  cfg.max_iterations = 8;
  const DetectionResult a = detect_mp_mrc(obs, grid_cs, cfg);
  const DetectionResult b = detect_mp_mrc(obs, scr_cs, cfg);
  REQUIRE(a.decisions.size() == b.decisions.size());
  for (std::size_t c = 0; c < a.decisions.size(); ++c) {
    CHECK(a.decisions[c] == perm[b.decisions[c]]);
    CHECK(a.confidence[c] == doctest::Approx(b.confidence[c]).epsilon(1e-9));
  }
}

TEST_CASE("njp_combine: normalized product of branch posteriors") {
  const std::vector<std::vector<double>> posts = {{0.8, 0.2}, {0.5, 0.5}};
  const std::vector<double> njp =
      njp_combine(std::span<const std::vector<double>>(posts));
  CHECK(njp[0] == doctest::Approx(0.8));
  CHECK(njp[1] == doctest::Approx(0.2));

  const std::vector<std::vector<double>> sharp = {{0.9, 0.1, 0.0},
                                                  {0.5, 0.25, 0.25}};
  const std::vector<double> njp2 =
      njp_combine(std::span<const std::vector<double>>(sharp));
  CHECK(njp2[0] == doctest::Approx(0.45 / 0.475));
  CHECK(njp2[1] == doctest::Approx(0.025 / 0.475));
  CHECK(njp2[2] == doctest::Approx(0.0));

  // A vanishing product falls back to uniform.
  const std::vector<std::vector<double>> dead = {{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<double> njp3 =
      njp_combine(std::span<const std::vector<double>>(dead));
  CHECK(njp3[0] == doctest::Approx(0.5));
  CHECK(njp3[1] == doctest::Approx(0.5));

  const std::vector<std::vector<double>> none;
  CHECK_THROWS_AS(njp_combine(std::span<const std::vector<double>>(none)),
                  std::invalid_argument);
  const std::vector<std::vector<double>> ragged = {{0.5, 0.5}, {1.0}};
  CHECK_THROWS_AS(njp_combine(std::span<const std::vector<double>>(ragged)),
                  std::invalid_argument);
}

TEST_CASE("convergence indicator: counts confident nodes") {
  // Two nodes: peak 0.995 (converged at slack 0.01) and 0.6 (not).
  const std::vector<double> njp = {0.995, 0.005, 0.6, 0.4};
  CHECK(convergence_indicator(njp, 2, 2, 0.01) == doctest::Approx(0.5));
  CHECK(convergence_indicator(njp, 2, 2, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("detect_mp_mrc: identity channel converges immediately") {
  const Constellation cs = Constellation::qam(4);
  const int mn = 4;
  CMatrix h(mn, mn);
  for (int i = 0; i < mn; ++i) h.at(i, i) = {1.0, 0.0};
  const std::vector<int> truth = {2, 0, 3, 1};
  cvec y(mn);
  for (int i = 0; i < mn; ++i) y[i] = cs.point(truth[i]);
  const std::vector<BranchObservation> obs = {make_obs(h, y, 1e-6)};
  const DetectionResult det = detect_mp_mrc(obs, cs, DetectorConfig{});
  CHECK(det.decisions == truth);
  CHECK(det.iterations == 1);
  REQUIRE(det.indicator_trace.size() == 1);
  CHECK(det.indicator_trace[0] == doctest::Approx(1.0));
  CHECK(det.uncovered_nodes == 0);
  for (double c : det.confidence) CHECK(c > 0.99);
}

TEST_CASE("detect_mp_mrc: uncovered nodes stay uniform") {
  const Constellation cs = Constellation::qam(4);
  CMatrix h(2, 2);
  h.at(0, 0) = {1.0, 0.0};
  h.at(1, 0) = {0.5, 0.0};  // column 1 is empty
  cvec y = {cs.point(1), cplx{0.5, 0.0} * cs.point(1)};
  const std::vector<BranchObservation> obs = {make_obs(h, y, 1e-6)};
  const DetectionResult det = detect_mp_mrc(obs, cs, DetectorConfig{});
  CHECK(det.uncovered_nodes == 1);
  CHECK(det.decisions[0] == 1);
  CHECK(det.confidence[1] == doctest::Approx(0.25));
}

TEST_CASE("detect_mp_mrc: config validation") {
  const Constellation cs = Constellation::qam(4);
  CMatrix h(1, 1);
  h.at(0, 0) = {1.0, 0.0};
  cvec y = {cs.point(0)};
  const std::vector<BranchObservation> obs = {make_obs(h, y, 1e-3)};
  DetectorConfig cfg;
  cfg.damping = 0.0;
  CHECK_THROWS_AS(detect_mp_mrc(obs, cs, cfg), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(detect_mp_mrc(obs, cs, cfg), std::invalid_argument);
  const std::vector<BranchObservation> empty;
  CHECK_THROWS_AS(detect_mp_mrc(empty, cs, DetectorConfig{}),
                  std::invalid_argument);
}

TEST_CASE("ops counter: alphabet-size times edges, twice per iteration") {
  const Constellation cs = Constellation::qam(4);
  const int mn = 4;
  CMatrix h(mn, mn);
  for (int i = 0; i < mn; ++i) h.at(i, i) = {1.0, 0.0};
  cvec y(mn, cplx{0.5, 0.5});
  DetectorConfig cfg;
  cfg.max_iterations = 2;
  cfg.indicator_slack = -1.0;  // unreachable: run both iterations

  const std::vector<BranchObservation> one = {make_obs(h, y, 0.1)};
  const DetectionResult d1 = detect_mp_mrc(one, cs, cfg);
  REQUIRE(d1.ops_per_iteration.size() == 2);
  CHECK(d1.ops_per_iteration[0] == 2ull * 4 * mn);
  CHECK(d1.total_ops == 2ull * 2 * 4 * mn);

  // Doubling the branch count doubles the per-iteration work.
  const std::vector<BranchObservation> two = {make_obs(h, y, 0.1),
                                              make_obs(h, y, 0.1)};
  const DetectionResult d2 = detect_mp_mrc(two, cs, cfg);
  CHECK(d2.ops_per_iteration[0] == 2 * d1.ops_per_iteration[0]);
}

TEST_CASE("map_oracle: exact on a tiny mixing channel") {
  const Constellation cs = Constellation::qam(4);
  Rng rng(43);
  CMatrix h(2, 2);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) h.at(r, c) = rng.cnormal(1.0);
  }
  const std::vector<int> truth = {3, 1};
  cvec y(2);
  for (int r = 0; r < 2; ++r) {
    y[r] = h.at(r, 0) * cs.point(truth[0]) + h.at(r, 1) * cs.point(truth[1]);
  }
  const std::vector<BranchObservation> obs = {make_obs(h, y, 1e-4)};
  CHECK(map_oracle(obs, cs) == truth);
}

TEST_CASE("map_oracle: refuses oversized searches") {
  const Constellation cs = Constellation::qam(16);
  const int mn = 16;
  CMatrix h(mn, mn);
  for (int i = 0; i < mn; ++i) h.at(i, i) = {1.0, 0.0};
  cvec y(mn, cplx{0.3, 0.3});
  const std::vector<BranchObservation> obs = {make_obs(h, y, 0.1)};
  CHECK_THROWS_AS(map_oracle(obs, cs), std::invalid_argument);
}

TEST_CASE("message passing agrees with the exact map detector") {
  // Small mixing problems where the exhaustive search is feasible: a 2x2
  // grid, QPSK, two antennas, two beams, moderate noise.
  const FrameParams p(2, 2, 1, 15.0e3);
  const OtfsModem modem(p);
  const Constellation cs = Constellation::qam(4);
  ChannelConfig ccfg;
  ccfg.num_taps = 2;
  ccfg.paths_per_tap = 2;
  ccfg.max_delay_samples = 1;
  ccfg.sample_interval_s = p.sample_interval_s();
  ccfg.array.num_antennas = 2;
  ccfg.max_doppler_hz = 0.05 * 15.0e3;

  DetectorConfig dcfg;
  dcfg.damping = 1.0;

  Rng rng(47);
  const double nv = noise_variance_for_snr_db(20.0);
  int agree = 0, total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng trial_rng = rng.fork(trial);
    Rng chan_rng = trial_rng.fork("chan");
    Rng bit_rng = trial_rng.fork("bits");
    Rng noise_rng = trial_rng.fork("noise");
    const GeometricChannel chan = sample_geometry(chan_rng, ccfg);
    cvec x(4);
    for (cplx& v : x) {
      v = cs.point(static_cast<int>(bit_rng.uniform_index(4)));
    }
    CMatrix rx = apply_channel(chan, modem.otfs_modulate(x));
    add_awgn(rx, nv, noise_rng);
    const BeamGrid grid =
        make_beam_grid(chan.array, 2, BeamGridMode::kUniformSine);
    std::vector<BranchObservation> branches;
    for (int b = 0; b < 2; ++b) {
      cvec yb = modem.otfs_demodulate(apply_beamformer(rx, grid.weights[b]));
      CMatrix hb = effective_dd_channel_fast(chan, p, grid.weights[b]);
      double wpow = 0.0;
      for (const cplx& w : grid.weights[b]) wpow += std::norm(w);
      branches.push_back(BranchObservation::build(
          grid.directions[b], std::move(yb), std::move(hb), nv * wpow, 1e-5));
    }
    const std::vector<int> mp = detect_mp_mrc(branches, cs, dcfg).decisions;
    const std::vector<int> map = map_oracle(branches, cs);
    for (int c = 0; c < 4; ++c) {
      agree += (mp[c] == map[c]);
      ++total;
    }
  }
  CHECK(static_cast<double>(agree) / total >= 0.9);
}
