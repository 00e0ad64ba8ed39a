#include <doctest.h>

#include <scatlab/forward_solver.hpp>

#include <cmath>
#include <random>

using namespace scatlab;

namespace {

Vec3 random_dir(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return normalized(Vec3{n(rng), n(rng), n(rng)});
}

// Composite Simpson on [0, a] of r e^{κr}.
cplx simpson_ball(double a, cplx kappa) {
  const int n = 2000;
  const double dr = a / n;
  cplx s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = i * dr;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * r * std::exp(kappa * r);
  }
  return s * dr / 3.0;
}

double rel_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double d = 0.0, m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
    m = std::max(m, std::abs(a[i]));
  }
  return d / m;
}

}  // namespace

TEST_CASE("green kernel") {
  CHECK(green_kernel({1, 0, 0}, 0.0) == cplx(1.0 / (4 * kPi)));
  CHECK(std::abs(green_kernel({0.3, 0.4, 0}, 2.7)) == doctest::Approx(1.0 / (4 * kPi * 0.5)));
  const cplx g = green_kernel({0, 2, 0}, cplx(0, 0.3));
  CHECK(g.imag() == doctest::Approx(0.0).scale(1.0));
  CHECK(g.real() == doctest::Approx(std::exp(-0.6) / (8 * kPi)));
  CHECK_THROWS_AS(green_kernel({0, 0, 0}, 1.0), std::invalid_argument);
}

TEST_CASE("ball integral of the kernel against Simpson") {
  for (double a : {0.01, 0.05, 0.3, 1.5})
    for (cplx k : {cplx(0), cplx(0, 1), cplx(0.4, 0), cplx(-0.2, 2.5), cplx(0, 5)})
      CHECK(std::abs(ball_kernel_integral(a, k) - simpson_ball(a, k)) <
            1e-11 * std::max(1.0, std::abs(simpson_ball(a, k))));
  CHECK(ball_kernel_integral(0.2, 0.0).real() == doctest::Approx(0.02));
  CHECK(ball_kernel_integral(0.0, 1.0) == cplx(0.0));
}

TEST_CASE("c1 constant") {
  CHECK(std::abs(c1_constant(0.0, 32) - 0.5) < 0.005);
  CHECK(std::abs(c1_constant(0.0, 64) - 0.5) < 0.00125);
  CHECK(c1_constant(0.0) == c1_constant(0.0, kC1Resolution));
  // sup attained at the center; the boundary value is 1/3
  CHECK(c1_integral_at({1, 0, 0}, 0.0, 32) < c1_integral_at({0, 0, 0}, 0.0, 32));
  CHECK(c1_integral_at({1, 0, 0}, 0.0, 32) == doctest::Approx(1.0 / 3.0).epsilon(0.01));
  CHECK(c1_integral_at({0, 0, 0}, 0.0, 32) == doctest::Approx(c1_constant(0.0, 32)).epsilon(1e-12));
  double prev = 0.0;
  for (double h : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    const double c = c1_constant(h, 32);
    CHECK(c >= prev);
    prev = c;
  }
  // at h > 0 the weighted potential at the center is ∫_0^1 r e^{2hr} dr
  CHECK(c1_integral_at({0, 0, 0}, 0.2, 64) ==
        doctest::Approx(ball_kernel_integral(1.0, 0.4).real()).epsilon(1e-3));
  CHECK_THROWS_AS(c1_constant(-0.1), std::invalid_argument);
}

TEST_CASE("check_contraction") {
  const VoxelGrid g(16);
  CHECK(check_contraction(Potential::zero(g), 0.2) == 0.0);
  const auto v1 = make_bump(g, {0, 0, 0}, 0.5, 1.0, 2);
  CHECK(check_contraction(v1, 0.0) == doctest::Approx(0.5).epsilon(0.0025));
  const auto v2 = v1.scaled(2.0);
  CHECK(check_contraction(v2, 0.0) == doctest::Approx(1.0).epsilon(0.0025));
  CHECK_THROWS_AS(solve_mu(v2, {{0, 0, 1}, 1.0, 0.0}), PreconditionError);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(IncidentWave({{0, 0, 2}, 1.0, 0.2}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(IncidentWave({{0, 0, 1}, cplx(1, 0.3), 0.2}).validate(), std::invalid_argument);
  CHECK_NOTHROW(IncidentWave({{0, 0, 1}, cplx(1, 0.2), 0.2}).validate());
  SolverConfig bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.tol = 1e-6;
  bad.max_iter = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("green operator against a brute-force sum") {
  const VoxelGrid g(16);
  const auto v = make_bump(g, {0.05, 0, -0.1}, 0.3, 0.4, 2);
  auto support = std::make_shared<const std::vector<std::size_t>>(v.support());
  const std::size_t n = support->size();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<cplx> x(n);
  for (auto& z : x) z = {nd(rng), nd(rng)};
  for (cplx s : {cplx(1.0), cplx(2.0, 0.15)}) {
    const double a = std::cbrt(3.0 * g.cell_volume() / (4 * kPi));
    std::vector<cplx> expect(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const Vec3 r = g.node((*support)[i]) - g.node((*support)[j]);
        expect[i] += (i == j ? simpson_ball(a, cplx(0, 1) * s)
                             : green_kernel(r, s) * g.cell_volume()) * x[j];
      }
    for (auto path : {OperatorPath::direct, OperatorPath::fft}) {
      const GreenOperator op(g, support, s, SingularCellRule::analytic_ball, path);
      std::vector<cplx> y(n);
      op.apply(x, y);
      CHECK(rel_diff(expect, y) < 1e-10);
    }
    const GreenOperator skip(g, support, s, SingularCellRule::zero_skip, OperatorPath::direct);
    CHECK(skip.diagonal() == cplx(0.0));
  }
}

TEST_CASE("zero potential") {
  const VoxelGrid g(16);
  const auto mu = solve_mu(Potential::zero(g), {{0, 0, 1}, 1.0, 0.2});
  CHECK(mu.iterations == 1);
  CHECK(mu.residual == 0.0);
  CHECK(mu.max_abs() == 1.0);
  CHECK(scattering_amplitude(Potential::zero(g), mu, {1, 0, 0}) == cplx(0.0));
  const std::vector<double> radii{2.0, 4.0};
  CHECK(far_field_check(Potential::zero(g), {{0, 0, 1}, 1.0, 0.2}, radii) == 0.0);
}

TEST_CASE("geometric convergence and the mu bound") {
  const VoxelGrid g(24);
  for (double amp : {0.5, 1.0}) {
    const auto v = make_bump(g, {0, 0, 0}, 0.5, amp, 2);
    const IncidentWave w{{0, 0, 1}, 1.0, 0.0};
    const auto mu = solve_mu(v, w);
    const double q = check_contraction(v, 0.0);
    CHECK(mu.contraction == q);
    CHECK(mu.residual <= 1e-12);
    for (double r : mu.residual_ratios()) CHECK(r <= q + 0.05);
    CHECK(mu.max_abs() <= 1.0 / (1.0 - q) + 1e-12);
  }
  // complex wavenumber inside the strip
  const auto v = make_bump(g, {0, 0, 0}, 0.4, 0.6, 2);
  const auto mu = solve_mu(v, {{1, 0, 0}, cplx(1.0, 0.15), 0.2});
  const double q = check_contraction(v, 0.2);
  for (double r : mu.residual_ratios()) CHECK(r <= q + 0.05);
  CHECK(mu.max_abs() <= 1.0 / (1.0 - q) + 1e-12);
}

TEST_CASE("direct and FFT solves agree") {
  const VoxelGrid g(24);
  const auto v = make_bump(g, {0.05, 0.1, 0}, 0.35, 0.7, 2);
  for (cplx s : {cplx(1.0), cplx(2.0, -0.1)}) {
    SolverConfig a, b;
    a.path = OperatorPath::direct;
    b.path = OperatorPath::fft;
    const IncidentWave w{normalized(Vec3{1, 2, 3}), s, 0.2};
    const auto m1 = solve_mu(v, w, a), m2 = solve_mu(v, w, b);
    CHECK(rel_diff(m1.values, m2.values) < 1e-10);
  }
}

TEST_CASE("max_iter exhaustion carries the residual") {
  const VoxelGrid g(16);
  const auto v = make_bump(g, {0, 0, 0}, 0.4, 1.0, 2);
  SolverConfig cfg;
  cfg.max_iter = 2;
  try {
    solve_mu(v, {{0, 0, 1}, 1.0, 0.0}, cfg);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_residual() > 1e-12);
  }
}

TEST_CASE("batch solve equals single solves") {
  const VoxelGrid g(16);
  const auto v = make_bump(g, {0, 0, 0}, 0.4, 0.6, 2);
  std::mt19937_64 rng(9);
  std::vector<Vec3> thetas;
  for (int i = 0; i < 5; ++i) thetas.push_back(random_dir(rng));
  const auto batch = solve_mu_batch(v, 1.5, 0.2, thetas);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const auto one = solve_mu(v, {thetas[i], 1.5, 0.2});
    CHECK(rel_diff(one.values, batch[i].values) < 1e-13);
  }
}

TEST_CASE("Born identity") {
  const VoxelGrid g(24);
  const auto v = make_bump(g, {0.1, -0.05, 0.05}, 0.3, 0.9, 2);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> us(0.2, 3.0);
  for (int t = 0; t < 50; ++t) {
    const Vec3 th = random_dir(rng), om = random_dir(rng);
    const double s = us(rng);
    const auto mu = born_field(v, {th, s, 0.2});
    const cplx f = scattering_amplitude(v, mu, om);
    const cplx ref = potential_fourier(v, s * (th - om));
    CHECK(std::abs(f - ref) <= 1e-13 * std::abs(ref));
  }
}

TEST_CASE("second-order Born remainder") {
  const VoxelGrid g(16);
  const auto v = make_bump(g, {0, 0, 0}, 0.45, 1.0, 2);
  const IncidentWave w{{0, 0, 1}, 1.0, 0.0};
  const Vec3 om{1, 0, 0};
  const cplx born = scattering_amplitude(v, born_field(v, w), om);
  std::vector<double> rem;
  for (double lam : {1e-2, 1e-3}) {
    const auto vl = v.scaled(lam);
    const cplx f = scattering_amplitude(vl, solve_mu(vl, w), om);
    rem.push_back(std::abs(f - lam * born) / (lam * lam));
  }
  CHECK(rem[0] > 0.0);
  CHECK(rem[0] / rem[1] < 2.0);
  CHECK(rem[1] / rem[0] < 2.0);
}

TEST_CASE("translation changes f by the known phase") {
  const VoxelGrid g(24);
  const Vec3 shift{g.cell_size() * 2, -g.cell_size(), g.cell_size()};
  const auto v = make_bump(g, {0, 0, 0}, 0.28, 0.6, 2);
  const auto vs = make_bump(g, shift, 0.28, 0.6, 2);
  const Vec3 th = normalized(Vec3{1, 1, 0}), om = normalized(Vec3{0, -1, 2});
  const double s = 1.3;
  const cplx f = scattering_amplitude(v, solve_mu(v, {th, s, 0.2}), om);
  const cplx fs = scattering_amplitude(vs, solve_mu(vs, {th, s, 0.2}), om);
  const cplx phase = std::exp(cplx(0, s * dot(th - om, shift)));
  CHECK(std::abs(fs - phase * f) < 1e-3 * std::abs(f));
}

TEST_CASE("far field") {
  const VoxelGrid g(24);
  const auto v = make_bump(g, {g.cell_size(), 0, -g.cell_size()}, 0.35, 0.3, 2);
  const IncidentWave w{{0, 0, 1}, 1.0, 0.2};
  const std::vector<double> radii{4.0, 8.0};
  const auto rep = far_field_report(v, w, radii);
  CHECK(rep.discrepancy[1] < rep.discrepancy[0]);
  CHECK(rep.relative_amplitude_error[1] < 0.05);
  CHECK(far_field_check(v, w, radii) == rep.discrepancy[1]);
  const std::vector<double> inside{0.2};
  CHECK_THROWS_AS(far_field_check(v, w, inside), PreconditionError);
  CHECK_THROWS_AS(far_field_check(v, {{0, 0, 1}, cplx(1, 0.1), 0.2}, radii), std::invalid_argument);
}
