#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "doctest.h"
#include "otfsim/constellation.hpp"
#include "otfsim/fastexp.hpp"
#include "otfsim/fft.hpp"
#include "otfsim/rng.hpp"

using namespace otfsim;

TEST_CASE("rng: same seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: forks are tag-stable and do not disturb the parent") {
  Rng parent(7);
  const std::uint64_t first = parent.next_u64();

  Rng again(7);
  Rng f1 = again.fork("noise");
  Rng f2 = again.fork("noise");
  Rng f3 = again.fork("bits");
  CHECK(again.next_u64() == first);  // forking consumed nothing
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t v1 = f1.next_u64();
    CHECK(v1 == f2.next_u64());  // same tag, same stream
    CHECK(v1 != f3.next_u64());  // different tag, different stream
  }
}

TEST_CASE("rng: uniform stays in [0,1) and has the right mean") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("rng: uniform_index covers its range without bias") {
  Rng rng(5);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("rng: normal moments") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng: cnormal variance splits evenly") {
  Rng rng(13);
  double e2 = 0.0, re = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const cplx z = rng.cnormal(4.0);
    e2 += std::norm(z);
    re += z.real() * z.real();
  }
  CHECK(e2 / n == doctest::Approx(4.0).epsilon(0.02));
  CHECK(re / n == doctest::Approx(2.0).epsilon(0.03));
}

namespace {

cvec naive_dft(const cvec& x, int sign) {
  const std::size_t n = x.size();
  cvec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, sign * 2.0 * M_PI *
                                        static_cast<double>(k * t) / n);
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("fft: matches the direct DFT for power-of-two and general sizes") {
  Rng rng(17);
  for (std::size_t n : {2u, 8u, 32u, 3u, 6u, 12u, 15u}) {
    Fft fft(n);
    cvec x(n);
    for (cplx& v : x) v = rng.cnormal(1.0);
    cvec fwd = x;
    fft.forward(fwd.data());
    const cvec ref = naive_dft(x, -1);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(fwd[i] - ref[i]) < 1e-11);
    }
    cvec inv = x;
    fft.inverse(inv.data());
    const cvec ref_inv = naive_dft(x, +1);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(inv[i] - ref_inv[i]) < 1e-11);
    }
  }
}

TEST_CASE("fft: forward then scaled inverse is the identity") {
  Rng rng(19);
  for (std::size_t n : {16u, 10u, 27u}) {
    Fft fft(n);
    cvec x(n);
    for (cplx& v : x) v = rng.cnormal(1.0);
    cvec y = x;
    fft.forward(y.data());
    fft.inverse(y.data());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(y[i] / static_cast<double>(n) - x[i]) < 1e-12);
    }
  }
}

TEST_CASE("fft: rejects size zero") {
  CHECK_THROWS_AS(Fft(0), std::invalid_argument);
}

TEST_CASE("constellation: gray qam basics") {
  for (int order : {4, 16, 64, 256}) {
    const Constellation cs = Constellation::qam(order);
    CHECK(cs.size() == order);
    cplx mean{0.0, 0.0};
    double energy = 0.0;
    for (int i = 0; i < order; ++i) {
      mean += cs.point(i);
      energy += std::norm(cs.point(i));
    }
    CHECK(std::abs(mean) < 1e-12);
    CHECK(energy / order == doctest::Approx(1.0).epsilon(1e-12));
    // labels are a permutation of 0..order-1
    std::set<std::uint32_t> labels;
    for (int i = 0; i < order; ++i) labels.insert(cs.label(i));
    CHECK(static_cast<int>(labels.size()) == order);
    for (int i = 0; i < order; ++i) {
      CHECK(cs.index_of_label(cs.label(i)) == i);
    }
  }
}

TEST_CASE("constellation: gray labels differ by one bit between neighbors") {
  const Constellation cs = Constellation::qam(16);
  // Minimum distance on the unit-energy 16-QAM grid is 2/sqrt(10).
  const double dmin = 2.0 / std::sqrt(10.0);
  for (int i = 0; i < 16; ++i) {
    for (int j = i + 1; j < 16; ++j) {
      if (std::abs(cs.point(i) - cs.point(j)) < dmin * 1.01) {
        CHECK(Constellation::bit_errors(cs.label(i), cs.label(j)) == 1);
      }
    }
  }
}

TEST_CASE("constellation: nearest point recovers perturbed symbols") {
  const Constellation cs = Constellation::qam(16);
  for (int i = 0; i < 16; ++i) {
    const cplx v = cs.point(i) + cplx{0.05, -0.04};
    CHECK(cs.nearest(v) == i);
  }
}

TEST_CASE("constellation: qam rejects non-4^k orders") {
  CHECK_THROWS_AS(Constellation::qam(8), std::invalid_argument);
  CHECK_THROWS_AS(Constellation::qam(5), std::invalid_argument);
  CHECK_THROWS_AS(Constellation::qam(2), std::invalid_argument);
}

TEST_CASE("constellation: custom point sets are validated") {
  // Unit-energy 8-PSK with a natural binary labeling.
  cvec psk(8);
  std::vector<std::uint32_t> labels(8);
  for (int i = 0; i < 8; ++i) {
    psk[i] = std::polar(1.0, 2.0 * M_PI * i / 8.0);
    labels[i] = static_cast<std::uint32_t>(i);
  }
  const Constellation cs(psk, labels);
  CHECK(cs.size() == 8);
  CHECK(cs.bits_per_symbol() == 3);

  // Off-center sets are rejected.
  cvec shifted = psk;
  for (cplx& v : shifted) v += cplx{0.1, 0.0};
  CHECK_THROWS_AS(Constellation(shifted, labels), std::invalid_argument);

  // Wrong energy is rejected.
  cvec scaled = psk;
  for (cplx& v : scaled) v *= 1.1;
  CHECK_THROWS_AS(Constellation(scaled, labels), std::invalid_argument);

  // Duplicate labels are rejected.
  std::vector<std::uint32_t> bad = labels;
  bad[1] = 0;
  CHECK_THROWS_AS(Constellation(psk, bad), std::invalid_argument);
}

TEST_CASE("fast_exp: accurate over the full underflow-free range") {
  double worst = 0.0;
  for (double x = -700.0; x <= 0.0; x += 0.0103) {
    const double ref = std::exp(x);
    const double got = fast_exp(x);
    worst = std::max(worst, std::abs(got - ref) / ref);
  }
  CHECK(worst < 1e-9);
  CHECK(fast_exp(0.0) == 1.0);
  CHECK(fast_exp(-800.0) == 0.0);
}
