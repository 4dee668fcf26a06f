#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace otfsim {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

/// Dense column-major complex matrix. Used for multi-antenna sample blocks
/// (rows = time samples, cols = antennas) and for effective channel matrices
/// (rows/cols = delay-Doppler bins, delay index fastest).
class CMatrix {
 public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  cplx& at(std::size_t r, std::size_t c) { return data_[r + rows_ * c]; }
  const cplx& at(std::size_t r, std::size_t c) const {
    return data_[r + rows_ * c];
  }

  cplx* col(std::size_t c) { return data_.data() + rows_ * c; }
  const cplx* col(std::size_t c) const { return data_.data() + rows_ * c; }

  cvec& data() { return data_; }
  const cvec& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  cvec data_;
};

}  // namespace otfsim
