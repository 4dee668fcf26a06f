#include "otfsim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "otfsim/beamformer.hpp"
#include "otfsim/rng.hpp"

namespace otfsim {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const char* section,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument(std::string("config: unknown key '") +
                                  item.key() + "' in " + section);
    }
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Runs fn(0..n-1) on the given number of threads. Each index is processed
/// exactly once; callers must write results into per-index slots so the
/// outcome does not depend on scheduling.
template <typename F>
void parallel_for_index(int n, int threads, F&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int t = 0; t < n; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      for (int t = next.fetch_add(1); t < n; t = next.fetch_add(1)) fn(t);
    });
  }
  for (std::thread& th : pool) th.join();
}

double weight_power(const cvec& w) {
  double p = 0.0;
  for (const cplx& v : w) p += std::norm(v);
  return p;
}

/// Arrival angles of the strongest paths (by gain magnitude), for the
/// known-aoa beam mode.
std::vector<double> strongest_aoas(const GeometricChannel& chan, int count) {
  std::vector<std::pair<double, double>> paths;  // (-|gain|, aoa)
  for (const ChannelTap& tap : chan.taps) {
    for (const PropagationPath& p : tap.paths) {
      paths.emplace_back(-std::abs(p.gain), p.aoa);
    }
  }
  if (static_cast<int>(paths.size()) < count) {
    throw std::invalid_argument(
        "known-aoa beams: fewer paths than requested beams");
  }
  std::stable_sort(paths.begin(), paths.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> aoas(count);
  for (int i = 0; i < count; ++i) aoas[i] = paths[i].second;
  return aoas;
}

BeamGrid beams_for(const SimConfig& cfg, const GeometricChannel& chan) {
  const int count = cfg.beam_count();
  if (cfg.beam_mode == "uniform") {
    return make_beam_grid(chan.array, count, BeamGridMode::kUniformSine);
  }
  const std::vector<double> aoas = strongest_aoas(chan, count);
  return make_beam_grid(chan.array, count, BeamGridMode::kKnownAoa, aoas);
}

/// Shared per-trial plumbing: detection outcome of the OTFS receive chain on
/// an already-noisy antenna-domain sample block.
DetectionResult detect_otfs_frame(const SimConfig& cfg, const OtfsModem& modem,
                                  const GeometricChannel& chan,
                                  const CMatrix& rx, double noise_variance,
                                  const Constellation& cs) {
  const BeamGrid grid = beams_for(cfg, chan);
  std::vector<BranchObservation> branches;
  branches.reserve(grid.size());
  for (int p = 0; p < grid.size(); ++p) {
    cvec y = modem.otfs_demodulate(apply_beamformer(rx, grid.weights[p]));
    CMatrix h =
        effective_dd_channel_fast(chan, modem.params(), grid.weights[p]);
    branches.push_back(BranchObservation::build(
        grid.directions[p], std::move(y), std::move(h),
        noise_variance * weight_power(grid.weights[p]),
        cfg.detector.support_threshold));
  }
  return detect_mp_mrc(branches, cs, cfg.detector);
}

}  // namespace

FrameParams SimConfig::frame() const {
  return FrameParams::from_cp_duration(num_delay_bins, num_doppler_bins,
                                       subcarrier_spacing_hz, cp_duration_s,
                                       max_delay_samples);
}

ChannelConfig SimConfig::channel() const {
  ChannelConfig ccfg;
  ccfg.num_taps = num_taps;
  ccfg.paths_per_tap = paths_per_tap;
  ccfg.max_delay_samples = max_delay_samples;
  ccfg.speed_mps = speed_kmh / 3.6;
  ccfg.carrier_hz = carrier_hz;
  ccfg.sample_interval_s = frame().sample_interval_s();
  ccfg.array.num_antennas = num_antennas;
  ccfg.array.spacing_over_wavelength = spacing_over_wavelength;
  ccfg.max_doppler_hz = normalized_max_dfo >= 0.0
                            ? normalized_max_dfo * subcarrier_spacing_hz
                            : -1.0;
  return ccfg;
}

SimConfig SimConfig::from_json_text(const std::string& text) {
  const json root = json::parse(text);
  reject_unknown_keys(root, "config",
                      {"frame", "channel", "array", "beams", "modulation",
                       "detector", "run"});
  SimConfig cfg;
  if (root.contains("frame")) {
    const json& f = root["frame"];
    reject_unknown_keys(f, "frame",
                        {"delay_bins", "doppler_bins", "subcarrier_spacing_hz",
                         "cp_duration_s"});
    cfg.num_delay_bins = f.value("delay_bins", cfg.num_delay_bins);
    cfg.num_doppler_bins = f.value("doppler_bins", cfg.num_doppler_bins);
    cfg.subcarrier_spacing_hz =
        f.value("subcarrier_spacing_hz", cfg.subcarrier_spacing_hz);
    cfg.cp_duration_s = f.value("cp_duration_s", cfg.cp_duration_s);
  }
  if (root.contains("channel")) {
    const json& c = root["channel"];
    reject_unknown_keys(c, "channel",
                        {"taps", "paths_per_tap", "max_delay_samples",
                         "speed_kmh", "carrier_hz", "normalized_max_dfo"});
    cfg.num_taps = c.value("taps", cfg.num_taps);
    cfg.paths_per_tap = c.value("paths_per_tap", cfg.paths_per_tap);
    cfg.max_delay_samples = c.value("max_delay_samples", cfg.max_delay_samples);
    cfg.speed_kmh = c.value("speed_kmh", cfg.speed_kmh);
    cfg.carrier_hz = c.value("carrier_hz", cfg.carrier_hz);
    cfg.normalized_max_dfo =
        c.value("normalized_max_dfo", cfg.normalized_max_dfo);
  }
  if (root.contains("array")) {
    const json& a = root["array"];
    reject_unknown_keys(a, "array", {"antennas", "spacing_over_wavelength"});
    cfg.num_antennas = a.value("antennas", cfg.num_antennas);
    cfg.spacing_over_wavelength =
        a.value("spacing_over_wavelength", cfg.spacing_over_wavelength);
  }
  if (root.contains("beams")) {
    const json& b = root["beams"];
    reject_unknown_keys(b, "beams", {"count", "mode"});
    cfg.num_beams = b.value("count", cfg.num_beams);
    cfg.beam_mode = b.value("mode", cfg.beam_mode);
  }
  if (root.contains("modulation")) {
    const json& m = root["modulation"];
    reject_unknown_keys(m, "modulation", {"qam_order"});
    cfg.qam_order = m.value("qam_order", cfg.qam_order);
  }
  if (root.contains("detector")) {
    const json& d = root["detector"];
    reject_unknown_keys(d, "detector",
                        {"damping", "indicator_slack", "backtrack_slack",
                         "max_iterations", "support_threshold",
                         "variance_floor"});
    cfg.detector.damping = d.value("damping", cfg.detector.damping);
    cfg.detector.indicator_slack =
        d.value("indicator_slack", cfg.detector.indicator_slack);
    cfg.detector.backtrack_slack =
        d.value("backtrack_slack", cfg.detector.backtrack_slack);
    cfg.detector.max_iterations =
        d.value("max_iterations", cfg.detector.max_iterations);
    cfg.detector.support_threshold =
        d.value("support_threshold", cfg.detector.support_threshold);
    cfg.detector.variance_floor =
        d.value("variance_floor", cfg.detector.variance_floor);
  }
  if (root.contains("run")) {
    const json& r = root["run"];
    reject_unknown_keys(r, "run", {"seed", "trials", "snr_db", "threads"});
    cfg.seed = r.value("seed", cfg.seed);
    cfg.trials = r.value("trials", cfg.trials);
    if (r.contains("snr_db")) {
      cfg.snr_db = r["snr_db"].get<std::vector<double>>();
    }
    cfg.threads = r.value("threads", cfg.threads);
  }
  if (cfg.beam_mode != "uniform" && cfg.beam_mode != "known-aoa") {
    throw std::invalid_argument("config: beams.mode must be uniform or known-aoa");
  }
  if (cfg.trials < 1 || cfg.threads < 1 || cfg.snr_db.empty()) {
    throw std::invalid_argument("config: run section values out of range");
  }
  return cfg;
}

SimConfig SimConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("config: cannot open " + path);
  }
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

std::string SimConfig::to_json() const {
  json root;
  root["frame"] = {{"delay_bins", num_delay_bins},
                   {"doppler_bins", num_doppler_bins},
                   {"subcarrier_spacing_hz", subcarrier_spacing_hz},
                   {"cp_duration_s", cp_duration_s}};
  root["channel"] = {{"taps", num_taps},
                     {"paths_per_tap", paths_per_tap},
                     {"max_delay_samples", max_delay_samples},
                     {"speed_kmh", speed_kmh},
                     {"carrier_hz", carrier_hz},
                     {"normalized_max_dfo", normalized_max_dfo}};
  root["array"] = {{"antennas", num_antennas},
                   {"spacing_over_wavelength", spacing_over_wavelength}};
  root["beams"] = {{"count", num_beams}, {"mode", beam_mode}};
  root["modulation"] = {{"qam_order", qam_order}};
  root["detector"] = {{"damping", detector.damping},
                      {"indicator_slack", detector.indicator_slack},
                      {"backtrack_slack", detector.backtrack_slack},
                      {"max_iterations", detector.max_iterations},
                      {"support_threshold", detector.support_threshold},
                      {"variance_floor", detector.variance_floor}};
  root["run"] = {{"seed", seed},
                 {"trials", trials},
                 {"snr_db", snr_db},
                 {"threads", threads}};
  return root.dump(2);
}

CMatrix ideal_ofdm_csi(const GeometricChannel& chan,
                       const FrameParams& params) {
  const int m = params.num_delay_bins;
  const int n = params.num_doppler_bins;
  const int n_ant = chan.array.num_antennas;
  CMatrix csi(static_cast<std::size_t>(m) * n, n_ant);
  const int block = params.samples_per_block();
  for (int a = 0; a < n_ant; ++a) {
    cplx* col = csi.col(a);
    for (int l = 0; l < n; ++l) {
      const std::int64_t n_mid =
          static_cast<std::int64_t>(l) * block + params.cp_len + m / 2;
      for (std::size_t i = 0; i < chan.taps.size(); ++i) {
        const cplx g = tap_gain(chan, a, static_cast<int>(i), n_mid);
        const int d = chan.taps[i].delay_samples;
        for (int sc = 0; sc < m; ++sc) {
          col[sc + m * l] +=
              g * std::polar(1.0, -2.0 * M_PI * sc * d / static_cast<double>(m));
        }
      }
    }
  }
  return csi;
}

std::vector<int> mmse_mrc_ofdm(const CMatrix& y_grids, const CMatrix& csi,
                               double noise_variance,
                               const Constellation& constellation) {
  if (y_grids.rows() != csi.rows() || y_grids.cols() != csi.cols()) {
    throw std::invalid_argument("mmse_mrc_ofdm: grid and csi sizes must agree");
  }
  const std::size_t mn = y_grids.rows();
  const std::size_t n_ant = y_grids.cols();
  std::vector<int> decisions(mn);
  for (std::size_t c = 0; c < mn; ++c) {
    cplx num{0.0, 0.0};
    double den = noise_variance;
    for (std::size_t a = 0; a < n_ant; ++a) {
      num += std::conj(csi.at(c, a)) * y_grids.at(c, a);
      den += std::norm(csi.at(c, a));
    }
    decisions[c] = constellation.nearest(num / den);
  }
  return decisions;
}

namespace {

/// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3.0e-15;
  constexpr double kTiny = 1.0e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

/// Regularized incomplete beta I_x(a, b).
double betainc(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

/// Quantile of the Beta(a, b) distribution by bisection.
double betainc_inv(double a, double b, double p) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (betainc(a, b, mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::pair<double, double> clopper_pearson(long successes, long trials,
                                          double confidence) {
  if (trials <= 0 || successes < 0 || successes > trials) {
    throw std::invalid_argument("clopper_pearson: invalid counts");
  }
  if (confidence <= 0.0 || confidence >= 1.0) {
    throw std::invalid_argument("clopper_pearson: confidence must be in (0,1)");
  }
  const double alpha = 1.0 - confidence;
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  const double lo =
      successes == 0 ? 0.0 : betainc_inv(k, n - k + 1.0, alpha / 2.0);
  const double hi =
      successes == trials ? 1.0 : betainc_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return {lo, hi};
}

namespace {

struct BerTrialOutcome {
  long otfs_bit_errors = 0;
  long ofdm_bit_errors = 0;
};

}  // namespace

std::vector<BerRow> run_ber(const SimConfig& cfg) {
  const FrameParams frame = cfg.frame();
  const OtfsModem modem(frame);
  const Constellation cs = Constellation::qam(cfg.qam_order);
  const ChannelConfig ccfg = cfg.channel();
  const int mn = frame.grid_size();
  const int bps = cs.bits_per_symbol();
  const Rng base = Rng(cfg.seed).fork("ber");

  std::vector<BerRow> rows;
  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    const double snr = cfg.snr_db[si];
    const double nv = noise_variance_for_snr_db(snr);
    std::vector<BerTrialOutcome> outcomes(cfg.trials);
    const Rng snr_rng = base.fork(si);
    parallel_for_index(cfg.trials, cfg.threads, [&](int t) {
      const Rng trial_rng = snr_rng.fork(static_cast<std::uint64_t>(t));
      Rng chan_rng = trial_rng.fork("chan");
      Rng bit_rng = trial_rng.fork("bits");
      const GeometricChannel chan = sample_geometry(chan_rng, ccfg);

      std::vector<std::uint32_t> labels(mn);
      cvec x(mn);
      for (int c = 0; c < mn; ++c) {
        labels[c] =
            static_cast<std::uint32_t>(bit_rng.uniform_index(cs.size()));
        x[c] = cs.point(cs.index_of_label(labels[c]));
      }

      // OTFS side.
      {
        Rng noise_rng = trial_rng.fork("noise");
        CMatrix rx = apply_channel(chan, modem.otfs_modulate(x));
        add_awgn(rx, nv, noise_rng);
        const DetectionResult det =
            detect_otfs_frame(cfg, modem, chan, rx, nv, cs);
        long errs = 0;
        for (int c = 0; c < mn; ++c) {
          errs += Constellation::bit_errors(cs.label(det.decisions[c]),
                                            labels[c]);
        }
        outcomes[t].otfs_bit_errors = errs;
      }

      // OFDM side: same payload grid, same channel, same noise draws.
      {
        Rng noise_rng = trial_rng.fork("noise");
        CMatrix rx = apply_channel(chan, modem.ofdm_modulate(x));
        add_awgn(rx, nv, noise_rng);
        CMatrix y_grids(mn, rx.cols());
        cvec stream(rx.rows());
        for (std::size_t a = 0; a < rx.cols(); ++a) {
          std::copy(rx.col(a), rx.col(a) + rx.rows(), stream.begin());
          const cvec grid = modem.ofdm_demodulate(stream);
          std::copy(grid.begin(), grid.end(), y_grids.col(a));
        }
        const CMatrix csi = ideal_ofdm_csi(chan, frame);
        const std::vector<int> dec = mmse_mrc_ofdm(y_grids, csi, nv, cs);
        long errs = 0;
        for (int c = 0; c < mn; ++c) {
          errs += Constellation::bit_errors(cs.label(dec[c]), labels[c]);
        }
        outcomes[t].ofdm_bit_errors = errs;
      }
    });

    long otfs_errors = 0, ofdm_errors = 0;
    for (const BerTrialOutcome& o : outcomes) {
      otfs_errors += o.otfs_bit_errors;
      ofdm_errors += o.ofdm_bit_errors;
    }
    const long bits = static_cast<long>(cfg.trials) * mn * bps;
    for (const auto& [scheme, errors] :
         {std::pair<const char*, long>{"otfs", otfs_errors},
          std::pair<const char*, long>{"ofdm", ofdm_errors}}) {
      BerRow row;
      row.snr_db = snr;
      row.scheme = scheme;
      row.frames = cfg.trials;
      row.bits = bits;
      row.bit_errors = errors;
      row.ber = static_cast<double>(errors) / static_cast<double>(bits);
      std::tie(row.ci_low, row.ci_high) = clopper_pearson(errors, bits, 0.95);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<SparsityRow> run_sparsity(const SimConfig& cfg,
                                      std::span<const int> antenna_counts,
                                      int draws) {
  if (antenna_counts.empty() || draws < 1) {
    throw std::invalid_argument("run_sparsity: need antenna counts and draws");
  }
  const FrameParams frame = cfg.frame();
  ChannelConfig ccfg = cfg.channel();
  const Rng base = Rng(cfg.seed).fork("sparsity");

  std::vector<SparsityRow> rows;
  for (int d = 0; d < draws; ++d) {
    // One physical channel per draw, shared across antenna counts: path
    // sampling never consults the array, so growing the array only changes
    // the spatial response.
    Rng chan_rng = base.fork(static_cast<std::uint64_t>(d)).fork("chan");
    ccfg.array.num_antennas = antenna_counts[0];
    GeometricChannel chan = sample_geometry(chan_rng, ccfg);
    for (int n_ant : antenna_counts) {
      chan.array.num_antennas = n_ant;
      const int beams = cfg.num_beams > 0 ? cfg.num_beams : n_ant;
      const BeamGrid grid =
          make_beam_grid(chan.array, beams, BeamGridMode::kUniformSine);
      for (int p = 0; p < grid.size(); ++p) {
        const CMatrix h =
            effective_dd_channel_fast(chan, frame, grid.weights[p]);
        const SparsityReport rep =
            sparsity_report(std::span<const CMatrix>(&h, 1),
                            cfg.detector.support_threshold);
        SparsityRow row;
        row.num_antennas = n_ant;
        row.draw = d;
        row.branch = p;
        row.nonzero_count = rep.nonzero_counts[0];
        row.max_row_support = rep.max_row_supports[0];
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::vector<ConvergenceRow> run_convergence(const SimConfig& cfg) {
  const FrameParams frame = cfg.frame();
  const OtfsModem modem(frame);
  const Constellation cs = Constellation::qam(cfg.qam_order);
  const ChannelConfig ccfg = cfg.channel();
  const int mn = frame.grid_size();
  const Rng base = Rng(cfg.seed).fork("convergence");

  SimConfig single = cfg;
  single.num_antennas = 1;
  single.num_beams = 1;
  single.beam_mode = "uniform";

  std::vector<ConvergenceRow> rows;
  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    const double snr = cfg.snr_db[si];
    const double nv = noise_variance_for_snr_db(snr);
    std::vector<std::pair<int, int>> iters(cfg.trials);
    const Rng snr_rng = base.fork(si);
    parallel_for_index(cfg.trials, cfg.threads, [&](int t) {
      const Rng trial_rng = snr_rng.fork(static_cast<std::uint64_t>(t));
      Rng chan_rng = trial_rng.fork("chan");
      Rng bit_rng = trial_rng.fork("bits");
      GeometricChannel chan = sample_geometry(chan_rng, ccfg);

      cvec x(mn);
      for (int c = 0; c < mn; ++c) {
        x[c] = cs.point(static_cast<int>(bit_rng.uniform_index(cs.size())));
      }
      const cvec s = modem.otfs_modulate(x);

      chan.array.num_antennas = cfg.num_antennas;
      {
        Rng noise_rng = trial_rng.fork("noise");
        CMatrix rx = apply_channel(chan, s);
        add_awgn(rx, nv, noise_rng);
        iters[t].first =
            detect_otfs_frame(cfg, modem, chan, rx, nv, cs).iterations;
      }
      chan.array.num_antennas = 1;
      {
        Rng noise_rng = trial_rng.fork("noise");
        CMatrix rx = apply_channel(chan, s);
        add_awgn(rx, nv, noise_rng);
        iters[t].second =
            detect_otfs_frame(single, modem, chan, rx, nv, cs).iterations;
      }
    });

    double sum_mrc = 0.0, sum_single = 0.0;
    for (const auto& [mrc, sgl] : iters) {
      sum_mrc += mrc;
      sum_single += sgl;
    }
    rows.push_back({snr, "mp-mrc", cfg.trials, sum_mrc / cfg.trials});
    rows.push_back({snr, "mp-single", cfg.trials, sum_single / cfg.trials});
  }
  return rows;
}

std::string to_csv(std::span<const BerRow> rows) {
  std::string out = "snr_db,scheme,frames,bits,bit_errors,ber,ci_low,ci_high\n";
  for (const BerRow& r : rows) {
    out += fmt_double(r.snr_db) + "," + r.scheme + "," +
           std::to_string(r.frames) + "," + std::to_string(r.bits) + "," +
           std::to_string(r.bit_errors) + "," + fmt_double(r.ber) + "," +
           fmt_double(r.ci_low) + "," + fmt_double(r.ci_high) + "\n";
  }
  return out;
}

std::string to_csv(std::span<const SparsityRow> rows) {
  std::string out = "num_antennas,draw,branch,nonzero_count,max_row_support\n";
  for (const SparsityRow& r : rows) {
    out += std::to_string(r.num_antennas) + "," + std::to_string(r.draw) +
           "," + std::to_string(r.branch) + "," +
           std::to_string(r.nonzero_count) + "," +
           std::to_string(r.max_row_support) + "\n";
  }
  return out;
}

std::string to_csv(std::span<const ConvergenceRow> rows) {
  std::string out = "snr_db,receiver,frames,mean_iterations\n";
  for (const ConvergenceRow& r : rows) {
    out += fmt_double(r.snr_db) + "," + r.receiver + "," +
           std::to_string(r.frames) + "," + fmt_double(r.mean_iterations) +
           "\n";
  }
  return out;
}

int run_selfcheck(std::ostream& out) {
  int failures = 0;
  const auto report = [&](const char* name, bool ok) {
    out << (ok ? "[ ok ] " : "[fail] ") << name << "\n";
    if (!ok) ++failures;
  };

  // Modem roundtrip.
  {
    const FrameParams frame(32, 16, 10, 15.0e3);
    const OtfsModem modem(frame);
    Rng rng(7);
    double worst = 0.0;
    for (int f = 0; f < 5; ++f) {
      cvec x(frame.grid_size());
      for (cplx& v : x) v = rng.cnormal(1.0);
      const cvec back = modem.otfs_demodulate(modem.otfs_modulate(x));
      for (int i = 0; i < frame.grid_size(); ++i) {
        worst = std::max(worst, std::abs(back[i] - x[i]));
      }
    }
    report("modem roundtrip", worst < 1.0e-12);
  }

  // Probe-built channel matrix: closed form and pipeline agreement.
  {
    const FrameParams frame(8, 4, 3, 15.0e3);
    const OtfsModem modem(frame);
    SimConfig cfg;
    cfg.num_delay_bins = 8;
    cfg.num_doppler_bins = 4;
    cfg.num_taps = 3;
    cfg.paths_per_tap = 2;
    cfg.max_delay_samples = 3;
    cfg.num_antennas = 4;
    ChannelConfig ccfg = cfg.channel();
    Rng rng(11);
    const GeometricChannel chan = sample_geometry(rng, ccfg);
    const cvec w = mf_weights(ccfg.array, 0.3);
    const WindowPair win = WindowPair::identity(frame.grid_size());
    const CMatrix probed = effective_dd_channel(chan, modem, win, w);
    const CMatrix fast = effective_dd_channel_fast(chan, frame, w);
    double worst = 0.0;
    for (std::size_t i = 0; i < probed.data().size(); ++i) {
      worst = std::max(worst, std::abs(probed.data()[i] - fast.data()[i]));
    }
    report("channel matrix closed form vs probing", worst < 1.0e-10);

    cvec x(frame.grid_size());
    for (cplx& v : x) v = rng.cnormal(1.0);
    const cvec y = modem.otfs_demodulate(
        apply_beamformer(apply_channel(chan, modem.otfs_modulate(x)), w));
    double worst2 = 0.0;
    for (int r = 0; r < frame.grid_size(); ++r) {
      cplx acc{0.0, 0.0};
      for (int c = 0; c < frame.grid_size(); ++c) {
        acc += probed.at(r, c) * x[c];
      }
      worst2 = std::max(worst2, std::abs(acc - y[r]));
    }
    report("probed matrix reproduces the pipeline", worst2 < 1.0e-10);
  }

  // Noise-free toy detection.
  {
    SimConfig cfg;
    cfg.num_delay_bins = 8;
    cfg.num_doppler_bins = 4;
    cfg.num_taps = 3;
    cfg.paths_per_tap = 2;
    cfg.max_delay_samples = 3;
    cfg.num_antennas = 4;
    cfg.qam_order = 4;
    const FrameParams frame = cfg.frame();
    const OtfsModem modem(frame);
    const Constellation cs = Constellation::qam(4);
    Rng rng(23);
    Rng chan_rng = rng.fork("chan");
    const GeometricChannel chan = sample_geometry(chan_rng, cfg.channel());
    cvec x(frame.grid_size());
    std::vector<int> truth(frame.grid_size());
    for (int c = 0; c < frame.grid_size(); ++c) {
      truth[c] = static_cast<int>(rng.uniform_index(cs.size()));
      x[c] = cs.point(truth[c]);
    }
    const CMatrix rx = apply_channel(chan, modem.otfs_modulate(x));
    const DetectionResult det = detect_otfs_frame(
        cfg, modem, chan, rx, noise_variance_for_snr_db(200.0), cs);
    report("noise-free toy detection", det.decisions == truth);
  }

  // Determinism across thread counts.
  {
    SimConfig cfg;
    cfg.num_delay_bins = 8;
    cfg.num_doppler_bins = 4;
    cfg.num_taps = 2;
    cfg.paths_per_tap = 2;
    cfg.max_delay_samples = 3;
    cfg.num_antennas = 2;
    cfg.qam_order = 4;
    cfg.trials = 4;
    cfg.snr_db = {15.0};
    cfg.threads = 1;
    const std::vector<BerRow> a = run_ber(cfg);
    cfg.threads = 2;
    const std::vector<BerRow> b = run_ber(cfg);
    report("thread-count determinism",
           to_csv(std::span<const BerRow>(a)) ==
               to_csv(std::span<const BerRow>(b)));
  }

  return failures;
}

}  // namespace otfsim
