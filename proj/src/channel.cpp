#include "otfsim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace otfsim {

namespace {

constexpr double kSpeedOfLight = 3.0e8;

void check_array(const ArrayGeometry& array) {
  if (array.num_antennas < 1) {
    throw std::invalid_argument("ArrayGeometry: need at least one antenna");
  }
  if (array.spacing_over_wavelength <= 0.0) {
    throw std::invalid_argument("ArrayGeometry: spacing must be positive");
  }
}

}  // namespace

cvec steering_vector(const ArrayGeometry& array, double theta) {
  check_array(array);
  cvec a(array.num_antennas);
  const double step =
      2.0 * M_PI * array.spacing_over_wavelength * std::sin(theta);
  for (int i = 0; i < array.num_antennas; ++i) {
    a[i] = std::polar(1.0, step * i);
  }
  return a;
}

int GeometricChannel::max_delay() const {
  int d = 0;
  for (const ChannelTap& tap : taps) d = std::max(d, tap.delay_samples);
  return d;
}

int GeometricChannel::total_paths() const {
  int n = 0;
  for (const ChannelTap& tap : taps) n += static_cast<int>(tap.paths.size());
  return n;
}

double max_dfo_hz(const ChannelConfig& cfg) {
  if (cfg.max_doppler_hz >= 0.0) return cfg.max_doppler_hz;
  return cfg.speed_mps * cfg.carrier_hz / kSpeedOfLight;
}

GeometricChannel sample_geometry(Rng& rng, const ChannelConfig& cfg) {
  check_array(cfg.array);
  if (cfg.num_taps < 1 || cfg.paths_per_tap < 1) {
    throw std::invalid_argument("sample_geometry: need >= 1 tap and path");
  }
  if (cfg.max_delay_samples < cfg.num_taps - 1) {
    throw std::invalid_argument(
        "sample_geometry: max delay too small for distinct tap delays");
  }
  if (cfg.speed_mps < 0.0) {
    throw std::invalid_argument("sample_geometry: speed must be nonnegative");
  }
  if (cfg.carrier_hz <= 0.0 || cfg.sample_interval_s <= 0.0) {
    throw std::invalid_argument(
        "sample_geometry: carrier and sample interval must be positive");
  }

  GeometricChannel chan;
  chan.array = cfg.array;
  chan.sample_interval_s = cfg.sample_interval_s;
  chan.taps.resize(cfg.num_taps);

  // First tap at delay 0; the rest drawn without replacement from
  // [1, max_delay], then sorted so taps are in delay order.
  std::vector<int> pool(cfg.max_delay_samples);
  std::iota(pool.begin(), pool.end(), 1);
  std::vector<int> delays = {0};
  for (int i = 0; i + 1 < cfg.num_taps; ++i) {
    const std::size_t pick =
        rng.uniform_index(static_cast<std::uint64_t>(pool.size()));
    delays.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(delays.begin(), delays.end());

  const double f_max = max_dfo_hz(cfg);
  const double path_power =
      1.0 / (static_cast<double>(cfg.num_taps) * cfg.paths_per_tap);
  for (int i = 0; i < cfg.num_taps; ++i) {
    chan.taps[i].delay_samples = delays[i];
    chan.taps[i].paths.resize(cfg.paths_per_tap);
    for (PropagationPath& path : chan.taps[i].paths) {
      const double beta = rng.uniform(0.0, M_PI);
      path.dfo_hz = f_max * std::cos(beta);
      path.aoa = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
      path.gain = rng.cnormal(path_power);
    }
  }
  return chan;
}

cplx tap_gain(const GeometricChannel& chan, int antenna, int tap,
              std::int64_t sample) {
  const ChannelTap& t = chan.taps.at(tap);
  const double steer_step =
      2.0 * M_PI * chan.array.spacing_over_wavelength * antenna;
  cplx g{0.0, 0.0};
  for (const PropagationPath& path : t.paths) {
    const double angle =
        2.0 * M_PI * path.dfo_hz * chan.sample_interval_s * sample +
        steer_step * std::sin(path.aoa);
    g += path.gain * std::polar(1.0, angle);
  }
  return g;
}

CMatrix apply_channel(const GeometricChannel& chan, const cvec& s) {
  check_array(chan.array);
  if (chan.sample_interval_s <= 0.0) {
    throw std::invalid_argument("apply_channel: sample interval not set");
  }
  const std::size_t n_samp = s.size();
  const int n_ant = chan.array.num_antennas;
  CMatrix rx(n_samp, n_ant);
  cvec rotated(n_samp);
  for (const ChannelTap& tap : chan.taps) {
    const int d = tap.delay_samples;
    for (const PropagationPath& path : tap.paths) {
      const double w = 2.0 * M_PI * path.dfo_hz * chan.sample_interval_s;
      const cplx rot = std::polar(1.0, w);
      // rotated(n) = gain * exp(j w n) * s(n - d); the phasor recurrence is
      // resynced periodically to keep rounding drift below the oracle
      // tolerances used on top of this function.
      cplx phasor = path.gain;
      for (std::size_t n = 0; n < n_samp; ++n) {
        if ((n & 255u) == 0u) {
          phasor = path.gain * std::polar(1.0, w * static_cast<double>(n));
        }
        rotated[n] = (n >= static_cast<std::size_t>(d))
                         ? phasor * s[n - d]
                         : cplx{0.0, 0.0};
        phasor *= rot;
      }
      const double steer_step =
          2.0 * M_PI * chan.array.spacing_over_wavelength * std::sin(path.aoa);
      for (int a = 0; a < n_ant; ++a) {
        const cplx steer = std::polar(1.0, steer_step * a);
        cplx* col = rx.col(a);
        for (std::size_t n = 0; n < n_samp; ++n) col[n] += steer * rotated[n];
      }
    }
  }
  return rx;
}

void add_awgn(CMatrix& rx, double variance, Rng& rng) {
  if (variance < 0.0) {
    throw std::invalid_argument("add_awgn: variance must be nonnegative");
  }
  if (variance == 0.0) return;
  for (cplx& v : rx.data()) v += rng.cnormal(variance);
}

double noise_variance_for_snr_db(double snr_db, double symbol_energy) {
  return symbol_energy / std::pow(10.0, snr_db / 10.0);
}

GeometricChannel collapse_to_branch(const GeometricChannel& chan,
                                    const cvec& weights) {
  check_array(chan.array);
  if (weights.size() != static_cast<std::size_t>(chan.array.num_antennas)) {
    throw std::invalid_argument(
        "collapse_to_branch: weight count must match antenna count");
  }
  GeometricChannel branch;
  branch.array.num_antennas = 1;
  branch.array.spacing_over_wavelength = chan.array.spacing_over_wavelength;
  branch.sample_interval_s = chan.sample_interval_s;
  branch.taps.reserve(chan.taps.size());
  for (const ChannelTap& tap : chan.taps) {
    ChannelTap out;
    out.delay_samples = tap.delay_samples;
    out.paths.reserve(tap.paths.size());
    for (const PropagationPath& path : tap.paths) {
      const cvec a = steering_vector(chan.array, path.aoa);
      cplx response{0.0, 0.0};
      for (std::size_t i = 0; i < a.size(); ++i) {
        response += std::conj(weights[i]) * a[i];
      }
      PropagationPath scaled = path;
      scaled.gain = path.gain * response;
      out.paths.push_back(scaled);
    }
    branch.taps.push_back(std::move(out));
  }
  return branch;
}

std::string to_text(const GeometricChannel& chan) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "channel v1 taps=%zu antennas=%d spacing=%.17g ts=%.17g\n",
                chan.taps.size(), chan.array.num_antennas,
                chan.array.spacing_over_wavelength, chan.sample_interval_s);
  out << line;
  for (const ChannelTap& tap : chan.taps) {
    for (const PropagationPath& path : tap.paths) {
      std::snprintf(line, sizeof(line), "%d %.17g %.17g %.17g %.17g\n",
                    tap.delay_samples, path.gain.real(), path.gain.imag(),
                    path.dfo_hz, path.aoa);
      out << line;
    }
  }
  return out.str();
}

GeometricChannel channel_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "channel" || version != "v1") {
    throw std::invalid_argument("channel_from_text: unrecognized header");
  }
  GeometricChannel chan;
  std::size_t n_taps = 0;
  for (std::string field; in >> field && !field.empty();) {
    const std::size_t eq = field.find('=');
    if (eq == std::string::npos) break;
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "taps") {
      n_taps = std::stoul(val);
    } else if (key == "antennas") {
      chan.array.num_antennas = std::stoi(val);
    } else if (key == "spacing") {
      chan.array.spacing_over_wavelength = std::stod(val);
    } else if (key == "ts") {
      chan.sample_interval_s = std::stod(val);
      break;
    }
  }
  int delay = 0;
  PropagationPath path;
  double re = 0.0, im = 0.0;
  while (in >> delay >> re >> im >> path.dfo_hz >> path.aoa) {
    path.gain = {re, im};
    if (chan.taps.empty() || chan.taps.back().delay_samples != delay) {
      chan.taps.push_back(ChannelTap{delay, {}});
    }
    chan.taps.back().paths.push_back(path);
  }
  if (chan.taps.size() != n_taps) {
    throw std::invalid_argument("channel_from_text: tap count mismatch");
  }
  return chan;
}

}  // namespace otfsim
