#pragma once

#include <cstddef>
#include <memory>

#include "otfsim/types.hpp"

namespace otfsim {

/// In-place DFT engine for a fixed size. Power-of-two sizes run an iterative
/// radix-2 transform with precomputed twiddles; every other size goes through
/// Bluestein's chirp-z algorithm on top of a padded radix-2 engine, so any
/// length works. Immutable after construction; const methods are safe to call
/// concurrently.
class Fft {
 public:
  explicit Fft(std::size_t n);

  std::size_t size() const { return n_; }

  /// Unnormalized forward DFT, kernel exp(-j 2 pi k n / N).
  void forward(cplx* data) const { transform(data, -1); }
  /// Unnormalized inverse DFT, kernel exp(+j 2 pi k n / N).
  void inverse(cplx* data) const { transform(data, +1); }

 private:
  void transform(cplx* data, int sign) const;
  void radix2(cplx* data, int sign) const;
  void bluestein(cplx* data, int sign) const;

  std::size_t n_ = 0;
  bool pow2_ = false;
  std::vector<std::size_t> bitrev_;
  cvec twiddle_;  // n/2 forward roots for the radix-2 path

  // Bluestein workspace: chirp sequence and the forward transform of the
  // zero-padded chirp filter, both for the forward kernel (conjugated on
  // inverse transforms).
  std::unique_ptr<Fft> pad_;
  cvec chirp_;
  cvec chirp_spectrum_;
};

}  // namespace otfsim
