#include "otfsim/constellation.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace otfsim {

namespace {

std::uint32_t to_gray(std::uint32_t x) { return x ^ (x >> 1); }

}  // namespace

Constellation Constellation::qam(int order) {
  if (order < 4 || (order & (order - 1)) != 0 ||
      (std::countr_zero(static_cast<unsigned>(order)) % 2) != 0) {
    throw std::invalid_argument("Constellation::qam: order must be 4^k");
  }
  const int side = static_cast<int>(std::lround(std::sqrt(order)));
  const int axis_bits = std::countr_zero(static_cast<unsigned>(side));
  // Average energy of the unscaled +-1, +-3, ... grid is 2(side^2 - 1)/3.
  const double scale =
      1.0 / std::sqrt(2.0 * (static_cast<double>(side) * side - 1.0) / 3.0);
  cvec points;
  std::vector<std::uint32_t> labels;
  points.reserve(order);
  labels.reserve(order);
  for (int i = 0; i < side; ++i) {
    for (int q = 0; q < side; ++q) {
      const double re = scale * (2 * i - side + 1);
      const double im = scale * (2 * q - side + 1);
      points.push_back({re, im});
      labels.push_back((to_gray(static_cast<std::uint32_t>(i)) << axis_bits) |
                       to_gray(static_cast<std::uint32_t>(q)));
    }
  }
  return Constellation(std::move(points), std::move(labels));
}

Constellation::Constellation(cvec points, std::vector<std::uint32_t> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
  const std::size_t q = points_.size();
  if (q < 2 || labels_.size() != q) {
    throw std::invalid_argument("Constellation: need >= 2 labeled points");
  }
  if ((q & (q - 1)) != 0) {
    throw std::invalid_argument("Constellation: size must be a power of two");
  }
  bits_ = std::countr_zero(q);
  cplx mean{0.0, 0.0};
  double energy = 0.0;
  for (const cplx& p : points_) {
    mean += p;
    energy += std::norm(p);
  }
  mean /= static_cast<double>(q);
  energy /= static_cast<double>(q);
  if (std::abs(mean) > 1e-9) {
    throw std::invalid_argument("Constellation: points must have zero mean");
  }
  if (std::abs(energy - 1.0) > 1e-9) {
    throw std::invalid_argument("Constellation: average energy must be 1");
  }
  label_to_index_.assign(q, -1);
  for (std::size_t i = 0; i < q; ++i) {
    if (labels_[i] >= q || label_to_index_[labels_[i]] != -1) {
      throw std::invalid_argument("Constellation: labels must be a permutation");
    }
    label_to_index_[labels_[i]] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = i + 1; j < q; ++j) {
      if (std::abs(points_[i] - points_[j]) < 1e-12) {
        throw std::invalid_argument("Constellation: points must be distinct");
      }
    }
  }
}

int Constellation::nearest(cplx v) const {
  int best = 0;
  double best_d = std::norm(v - points_[0]);
  for (int i = 1; i < size(); ++i) {
    const double d = std::norm(v - points_[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

int Constellation::bit_errors(std::uint32_t a, std::uint32_t b) {
  return std::popcount(a ^ b);
}

}  // namespace otfsim
