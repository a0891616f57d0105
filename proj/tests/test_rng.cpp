#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "qkdsim/rng.hpp"

using namespace qkdsim;
using doctest::Approx;

TEST_SUITE("rng") {

TEST_CASE("block cipher matches the published 10-round test vectors") {
  // Known-answer vectors for Philox4x32-10.
  auto r = philox4x32({0, 0, 0, 0}, {0, 0});
  CHECK(r[0] == 0x6627e8d5u);
  CHECK(r[1] == 0xe169c58du);
  CHECK(r[2] == 0xbc57ac4cu);
  CHECK(r[3] == 0x9b00dbd8u);

  r = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                 {0xffffffffu, 0xffffffffu});
  CHECK(r[0] == 0x408f276du);
  CHECK(r[1] == 0x41c83b0eu);
  CHECK(r[2] == 0xa20bc7c6u);
  CHECK(r[3] == 0x6d5451fdu);

  r = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                 {0xa4093822u, 0x299f31d0u});
  CHECK(r[0] == 0xd16cfe09u);
  CHECK(r[1] == 0x94fdccebu);
  CHECK(r[2] == 0x5001e420u);
  CHECK(r[3] == 0x24126ea1u);
}

TEST_CASE("streams are deterministic and reproducible") {
  RandomStream s1(42, 7), s2(42, 7);
  for (int i = 0; i < 1000; ++i) CHECK(s1.next_u64() == s2.next_u64());
}

TEST_CASE("distinct stream ids decorrelate even with equal seeds") {
  RandomStream s1(42, 0), s2(42, 1);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += s1.next_u64() == s2.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("uniform doubles stay in the half-open unit interval") {
  RandomStream s(123, 0);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  // mean 1/2 +- 5 sigma, variance 1/12
  CHECK(mean == Approx(0.5).epsilon(0.01));
  CHECK(std::abs(mean - 0.5) < 5.0 / std::sqrt(12.0 * n));
  CHECK(var == Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("gaussian samples have the requested FWHM") {
  RandomStream s(7, 3);
  const double fwhm = 66.0;
  const double sigma_expected = fwhm / 2.354820045030949;
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = s.next_gaussian_fwhm(225.0, fwhm);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double sigma = std::sqrt(sum2 / n - mean * mean);
  CHECK(mean == Approx(225.0).epsilon(0.002));
  CHECK(sigma == Approx(sigma_expected).epsilon(0.02));
}

TEST_CASE("poisson counts match their mean and variance across regimes") {
  // Covers both the product method (small mean) and the transformed
  // rejection sampler (large mean).
  for (double lambda : {0.3, 4.0, 25.0, 8400.0}) {
    RandomStream s(99, 1);
    const int n = 50000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(s.next_poisson(lambda));
      sum += k;
      sum2 += k * k;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double se_mean = std::sqrt(lambda / n);
    CHECK(std::abs(mean - lambda) < 5 * se_mean);
    CHECK(var == Approx(lambda).epsilon(0.08));
  }
}

TEST_CASE("poisson edge cases") {
  RandomStream s(1, 0);
  CHECK(s.next_poisson(0.0) == 0);
  CHECK_THROWS_AS(s.next_poisson(-1.0), std::domain_error);
  CHECK_THROWS_AS(s.next_poisson(std::nan("")), std::domain_error);
}

TEST_CASE("splitting a rate across categories preserves the total law") {
  // Thinning identity: three independent Poisson draws with split means
  // must sum to the statistics of one draw with the full mean.
  const double total = 120.0;
  const double f1 = 0.5, f2 = 0.3, f3 = 0.2;
  RandomStream s(2024, 5);
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double k = static_cast<double>(s.next_poisson(total * f1) +
                                         s.next_poisson(total * f2) +
                                         s.next_poisson(total * f3));
    sum += k;
    sum2 += k * k;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - total) < 5 * std::sqrt(total / n));
  CHECK(var == Approx(total).epsilon(0.08));
}

}  // TEST_SUITE
