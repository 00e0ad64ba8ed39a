#include <doctest.h>

#include <scatlab/sphere_basis.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace scatlab;

namespace {

Vec3 random_dir(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return normalized(Vec3{n(rng), n(rng), n(rng)});
}

double gram_error(const SphereQuadrature& q, int L) {
  const int H = harmonic_count(L);
  const auto Y = q.harmonic_table(L);
  double worst = 0.0;
  for (int a = 0; a < H; ++a)
    for (int b = a; b < H; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) s += q.weights()[k] * Y[k * H + a] * Y[k * H + b];
      worst = std::max(worst, std::abs(s - (a == b ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace

TEST_CASE("harmonic index enumeration") {
  CHECK(HarmonicIndex{0, 1}.valid());
  CHECK_FALSE(HarmonicIndex{0, 2}.valid());
  CHECK_FALSE(HarmonicIndex{2, 0}.valid());
  CHECK_FALSE(HarmonicIndex{-1, 1}.valid());
  for (int k = 0; k < 400; ++k) {
    const auto idx = HarmonicIndex::from_flat(k);
    CHECK(idx.valid());
    CHECK(idx.flat() == k);
  }
  CHECK(HarmonicIndex{3, 1}.order() == -3);
  CHECK(HarmonicIndex{3, 7}.order() == 3);
  CHECK(harmonic_count(10) == 121);
  CHECK_THROWS_AS(eval_harmonic({1, 4}, {0, 0, 1}), std::invalid_argument);
}

TEST_CASE("low-degree harmonics match closed forms") {
  std::mt19937_64 rng(7);
  const double c0 = 1.0 / std::sqrt(4.0 * kPi);
  const double c1 = std::sqrt(3.0 / (4.0 * kPi));
  const double c2 = std::sqrt(15.0 / (4.0 * kPi));
  for (int t = 0; t < 20; ++t) {
    const Vec3 d = random_dir(rng);
    CHECK(eval_harmonic({0, 1}, d) == doctest::Approx(c0).epsilon(1e-14));
    // slots m = -1, 0, 1 carry y, z, x
    CHECK(eval_harmonic({1, 1}, d) == doctest::Approx(c1 * d.y).epsilon(1e-13));
    CHECK(eval_harmonic({1, 2}, d) == doctest::Approx(c1 * d.z).epsilon(1e-13));
    CHECK(eval_harmonic({1, 3}, d) == doctest::Approx(c1 * d.x).epsilon(1e-13));
    CHECK(eval_harmonic({2, 1}, d) == doctest::Approx(c2 * d.x * d.y).epsilon(1e-12));
    CHECK(eval_harmonic({2, 5}, d) ==
          doctest::Approx(0.5 * c2 * (d.x * d.x - d.y * d.y)).epsilon(1e-12));
    CHECK(eval_harmonic({2, 3}, d) ==
          doctest::Approx(std::sqrt(5.0 / (16.0 * kPi)) * (3 * d.z * d.z - 1)).epsilon(1e-12));
  }
}

TEST_CASE("parity and addition theorem") {
  std::mt19937_64 rng(11);
  const int L = 20;
  std::vector<double> a(harmonic_count(L)), b(harmonic_count(L));
  for (int t = 0; t < 30; ++t) {
    const Vec3 d = random_dir(rng);
    eval_harmonics(L, d, a);
    eval_harmonics(L, -d, b);
    for (int j = 0; j <= L; ++j) {
      double sum = 0.0;
      for (int p = 1; p <= 2 * j + 1; ++p) {
        const int k = HarmonicIndex{j, p}.flat();
        CHECK(b[k] == doctest::Approx((j % 2 ? -1.0 : 1.0) * a[k]).epsilon(1e-10).scale(1.0));
        sum += a[k] * a[k];
      }
      CHECK(sum == doctest::Approx((2 * j + 1) / (4 * kPi)).epsilon(1e-10));
    }
  }
}

TEST_CASE("poles are finite") {
  std::vector<double> out(harmonic_count(30));
  eval_harmonics(30, {0, 0, 1}, out);
  for (int j = 0; j <= 30; ++j)
    for (int p = 1; p <= 2 * j + 1; ++p) {
      const HarmonicIndex idx{j, p};
      const double expect = idx.order() == 0 ? std::sqrt((2 * j + 1) / (4 * kPi)) : 0.0;
      CHECK(out[idx.flat()] == doctest::Approx(expect).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("Gauss-Legendre three-point rule") {
  std::vector<double> x, w;
  gauss_legendre(3, x, w);
  CHECK(x[0] == doctest::Approx(std::sqrt(0.6)).epsilon(1e-15));
  CHECK(x[1] == 0.0);
  CHECK(x[2] == doctest::Approx(-std::sqrt(0.6)).epsilon(1e-15));
  CHECK(w[0] == doctest::Approx(5.0 / 9.0).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  gauss_legendre(1, x, w);
  CHECK(x[0] == 0.0);
  CHECK(w[0] == doctest::Approx(2.0));
  gauss_legendre(40, x, w);
  double s = 0.0;
  for (double v : w) s += v;
  CHECK(s == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("quadrature invariants") {
  for (int deg : {0, 1, 2, 5, 24, 40}) {
    const auto q = build_quadrature(deg);
    CHECK(q.exactness_degree() >= deg);
    double sum = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(std::abs(norm(q.nodes()[k]) - 1.0) < 1e-14);
      CHECK(q.weights()[k] > 0.0);
      sum += q.weights()[k];
    }
    CHECK(std::abs(sum - 4 * kPi) < 1e-12);
  }
}

TEST_CASE("second moment 4π/3") {
  const auto q = build_quadrature(2);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const Vec3 e = random_dir(rng);
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) s += q.weights()[k] * std::pow(dot(q.nodes()[k], e), 2);
    CHECK(std::abs(s - 4 * kPi / 3) < 1e-12);
  }
}

TEST_CASE("Gram identity") {
  CHECK(gram_error(build_quadrature(24), 12) < 1e-10);
  CHECK(gram_error(build_quadrature(40), 20) < 1e-10);
  const auto q = build_quadrature(10);
  double s = 0.0;
  const auto Y = q.harmonic_table(5);
  const int k = HarmonicIndex{5, 3}.flat();
  for (std::size_t a = 0; a < q.size(); ++a) s += q.weights()[a] * std::pow(Y[a * 36 + k], 2);
  CHECK(std::abs(s - 1.0) < 1e-10);
}

TEST_CASE("quadrature errors") {
  CHECK_THROWS_AS(build_quadrature(kMaxQuadratureDegree + 1), std::out_of_range);
  CHECK_THROWS_AS(build_quadrature(-1), std::invalid_argument);
  CHECK_NOTHROW(build_quadrature(kMaxQuadratureDegree));
}
