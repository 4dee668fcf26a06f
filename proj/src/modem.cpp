#include "otfsim/modem.hpp"

#include <cmath>
#include <stdexcept>

namespace otfsim {

FrameParams::FrameParams(int m, int n, int cp, double spacing)
    : num_delay_bins(m),
      num_doppler_bins(n),
      cp_len(cp),
      subcarrier_spacing_hz(spacing) {
  if (m < 2 || n < 2) {
    throw std::invalid_argument("FrameParams: need at least 2 bins per axis");
  }
  if (cp < 0) {
    throw std::invalid_argument("FrameParams: cp_len must be nonnegative");
  }
  if (spacing <= 0.0) {
    throw std::invalid_argument("FrameParams: spacing must be positive");
  }
}

FrameParams FrameParams::from_cp_duration(int m, int n, double spacing,
                                          double cp_duration_s,
                                          int max_delay_samples) {
  if (cp_duration_s < 0.0 || max_delay_samples < 0) {
    throw std::invalid_argument(
        "FrameParams: cp duration and max delay must be nonnegative");
  }
  const double ts = 1.0 / (spacing * m);
  const int from_duration = static_cast<int>(std::ceil(cp_duration_s / ts));
  return FrameParams(m, n, std::max(from_duration, max_delay_samples),
                     spacing);
}

WindowPair WindowPair::identity(std::size_t grid_size) {
  WindowPair w;
  w.tx.assign(grid_size, cplx{1.0, 0.0});
  w.rx.assign(grid_size, cplx{1.0, 0.0});
  return w;
}

void WindowPair::validate(std::size_t grid_size) const {
  if (tx.size() != grid_size || rx.size() != grid_size) {
    throw std::invalid_argument("WindowPair: size must match the grid");
  }
  for (const cvec* w : {&tx, &rx}) {
    for (const cplx& v : *w) {
      if (std::abs(std::abs(v) - 1.0) > 1e-9) {
        throw std::invalid_argument("WindowPair: entries must be unit modulus");
      }
    }
  }
}

OtfsModem::OtfsModem(const FrameParams& params)
    : params_(params),
      fft_m_(static_cast<std::size_t>(params.num_delay_bins)),
      fft_n_(static_cast<std::size_t>(params.num_doppler_bins)) {}

cvec OtfsModem::isfft(const cvec& dd) const {
  const int m = params_.num_delay_bins;
  const int n = params_.num_doppler_bins;
  if (dd.size() != static_cast<std::size_t>(m * n)) {
    throw std::invalid_argument("isfft: grid size mismatch");
  }
  cvec tf(dd);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m) * n);
  // Forward DFT down each delay column.
  for (int l = 0; l < n; ++l) fft_m_.forward(tf.data() + m * l);
  // Inverse DFT across each Doppler row.
  cvec row(n);
  for (int k = 0; k < m; ++k) {
    for (int l = 0; l < n; ++l) row[l] = tf[k + m * l];
    fft_n_.inverse(row.data());
    for (int l = 0; l < n; ++l) tf[k + m * l] = row[l] * scale;
  }
  return tf;
}

cvec OtfsModem::sfft(const cvec& tf) const {
  const int m = params_.num_delay_bins;
  const int n = params_.num_doppler_bins;
  if (tf.size() != static_cast<std::size_t>(m * n)) {
    throw std::invalid_argument("sfft: grid size mismatch");
  }
  cvec dd(tf);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m) * n);
  for (int l = 0; l < n; ++l) fft_m_.inverse(dd.data() + m * l);
  cvec row(n);
  for (int k = 0; k < m; ++k) {
    for (int l = 0; l < n; ++l) row[l] = dd[k + m * l];
    fft_n_.forward(row.data());
    for (int l = 0; l < n; ++l) dd[k + m * l] = row[l] * scale;
  }
  return dd;
}

cvec OtfsModem::blocks_to_stream(const cvec& tf) const {
  const int m = params_.num_delay_bins;
  const int n = params_.num_doppler_bins;
  const int cp = params_.cp_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  cvec s(static_cast<std::size_t>(params_.frame_samples()));
  cvec block(m);
  for (int l = 0; l < n; ++l) {
    for (int k = 0; k < m; ++k) block[k] = tf[k + m * l];
    fft_m_.inverse(block.data());
    cplx* out = s.data() + static_cast<std::size_t>(l) * (m + cp);
    for (int k = 0; k < cp; ++k) out[k] = block[m - cp + k] * scale;
    for (int k = 0; k < m; ++k) out[cp + k] = block[k] * scale;
  }
  return s;
}

cvec OtfsModem::stream_to_blocks(const cvec& r) const {
  const int m = params_.num_delay_bins;
  const int n = params_.num_doppler_bins;
  const int cp = params_.cp_len;
  if (r.size() != static_cast<std::size_t>(params_.frame_samples())) {
    throw std::invalid_argument("demodulate: stream length mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  cvec tf(static_cast<std::size_t>(m) * n);
  cvec block(m);
  for (int l = 0; l < n; ++l) {
    const cplx* in = r.data() + static_cast<std::size_t>(l) * (m + cp) + cp;
    for (int k = 0; k < m; ++k) block[k] = in[k];
    fft_m_.forward(block.data());
    for (int k = 0; k < m; ++k) tf[k + m * l] = block[k] * scale;
  }
  return tf;
}

cvec OtfsModem::otfs_modulate(const cvec& dd) const {
  return otfs_modulate(dd, WindowPair::identity(dd.size()));
}

cvec OtfsModem::otfs_modulate(const cvec& dd, const WindowPair& window) const {
  window.validate(static_cast<std::size_t>(params_.grid_size()));
  cvec tf = isfft(dd);
  for (std::size_t i = 0; i < tf.size(); ++i) tf[i] *= window.tx[i];
  return blocks_to_stream(tf);
}

cvec OtfsModem::otfs_demodulate(const cvec& r) const {
  return otfs_demodulate(r,
                         WindowPair::identity(
                             static_cast<std::size_t>(params_.grid_size())));
}

cvec OtfsModem::otfs_demodulate(const cvec& r, const WindowPair& window) const {
  window.validate(static_cast<std::size_t>(params_.grid_size()));
  cvec tf = stream_to_blocks(r);
  for (std::size_t i = 0; i < tf.size(); ++i) tf[i] *= window.rx[i];
  return sfft(tf);
}

cvec OtfsModem::ofdm_modulate(const cvec& tf) const {
  if (tf.size() != static_cast<std::size_t>(params_.grid_size())) {
    throw std::invalid_argument("ofdm_modulate: grid size mismatch");
  }
  return blocks_to_stream(tf);
}

cvec OtfsModem::ofdm_demodulate(const cvec& r) const {
  return stream_to_blocks(r);
}

}  // namespace otfsim
