#pragma once

#include <cstdint>
#include <vector>

#include "otfsim/types.hpp"

namespace otfsim {

/// Unit-energy symbol alphabet with bit labels. The factory builds Gray-coded
/// square QAM; the raw constructor accepts any zero-mean, unit-average-energy
/// point set (used e.g. for PSK rings in complexity checks).
class Constellation {
 public:
  /// Gray-coded square QAM of the given order (4, 16, 64, 256), scaled to
  /// unit average energy. Label layout: in-phase Gray bits in the high half,
  /// quadrature Gray bits in the low half.
  static Constellation qam(int order);

  Constellation(cvec points, std::vector<std::uint32_t> labels);

  int size() const { return static_cast<int>(points_.size()); }
  int bits_per_symbol() const { return bits_; }

  const cplx& point(int idx) const { return points_[idx]; }
  std::uint32_t label(int idx) const { return labels_[idx]; }
  const cvec& points() const { return points_; }

  /// Index of the symbol carrying this bit pattern.
  int index_of_label(std::uint32_t bits) const { return label_to_index_[bits]; }

  /// Hard decision: index of the nearest point.
  int nearest(cplx v) const;

  /// Hamming distance between the labels of two symbol indices.
  static int bit_errors(std::uint32_t a, std::uint32_t b);

 private:
  cvec points_;
  std::vector<std::uint32_t> labels_;
  std::vector<int> label_to_index_;
  int bits_ = 0;
};

}  // namespace otfsim
