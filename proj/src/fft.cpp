#include "otfsim/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace otfsim {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Fft::Fft(std::size_t n) : n_(n), pow2_(is_pow2(n)) {
  if (n == 0) throw std::invalid_argument("Fft: size must be positive");
  if (pow2_) {
    bitrev_.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
  } else {
    const std::size_t m = next_pow2(2 * n - 1);
    pad_ = std::make_unique<Fft>(m);
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      // exp(-j pi k^2 / n), with k^2 reduced mod 2n to keep the angle small.
      const std::size_t k2 = (k * k) % (2 * n);
      const double a = -M_PI * static_cast<double>(k2) / static_cast<double>(n);
      chirp_[k] = {std::cos(a), std::sin(a)};
    }
    cvec filt(m, cplx{0.0, 0.0});
    filt[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
      filt[k] = std::conj(chirp_[k]);
      filt[m - k] = std::conj(chirp_[k]);
    }
    pad_->forward(filt.data());
    chirp_spectrum_ = std::move(filt);
  }
}

void Fft::transform(cplx* data, int sign) const {
  if (n_ == 1) return;
  if (pow2_) {
    radix2(data, sign);
  } else {
    bluestein(data, sign);
  }
}

void Fft::radix2(cplx* data, int sign) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t base = 0; base < n; base += len) {
      for (std::size_t k = 0; k < half; ++k) {
        cplx w = twiddle_[k * step];
        if (sign > 0) w = std::conj(w);
        const cplx odd = data[base + k + half] * w;
        const cplx even = data[base + k];
        data[base + k] = even + odd;
        data[base + k + half] = even - odd;
      }
    }
  }
}

void Fft::bluestein(cplx* data, int sign) const {
  const std::size_t n = n_;
  const std::size_t m = pad_->size();
  cvec work(m, cplx{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) {
    const cplx c = (sign < 0) ? chirp_[k] : std::conj(chirp_[k]);
    work[k] = data[k] * c;
  }
  pad_->forward(work.data());
  if (sign < 0) {
    for (std::size_t k = 0; k < m; ++k) work[k] *= chirp_spectrum_[k];
  } else {
    for (std::size_t k = 0; k < m; ++k) work[k] *= std::conj(chirp_spectrum_[k]);
  }
  pad_->inverse(work.data());
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) {
    const cplx c = (sign < 0) ? chirp_[k] : std::conj(chirp_[k]);
    data[k] = work[k] * c * scale;
  }
}

}  // namespace otfsim
