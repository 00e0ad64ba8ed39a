#include <scatlab/sphere_basis.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scatlab {

HarmonicIndex HarmonicIndex::from_flat(int k) {
  if (k < 0) throw std::invalid_argument("negative harmonic flat index");
  const int j = static_cast<int>(std::sqrt(static_cast<double>(k)));
  // sqrt may land one off for large k
  int jj = j;
  while (jj * jj > k) --jj;
  while ((jj + 1) * (jj + 1) <= k) ++jj;
  return {jj, k - jj * jj + 1};
}

namespace {

// Fills q[l*(L+1)+m] with the orthonormal associated Legendre function of
// degree l, order m >= 0, divided by sin^m(polar angle).
void reduced_legendre(int L, double x, std::vector<double>& q) {
  const int stride = L + 1;
  q.assign(static_cast<std::size_t>(stride) * stride, 0.0);
  q[0] = 1.0 / std::sqrt(kFourPi);
  for (int m = 0; m <= L; ++m) {
    if (m > 0) {
      q[m * stride + m] = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * q[(m - 1) * stride + (m - 1)];
    }
    if (m + 1 <= L) q[(m + 1) * stride + m] = std::sqrt(2.0 * m + 3.0) * x * q[m * stride + m];
    for (int l = m + 2; l <= L; ++l) {
      const double ll = static_cast<double>(l) * l;
      const double mm = static_cast<double>(m) * m;
      const double a = std::sqrt((4.0 * ll - 1.0) / (ll - mm));
      const double lm1 = static_cast<double>(l - 1) * (l - 1);
      const double b = std::sqrt((lm1 - mm) / (4.0 * lm1 - 1.0));
      q[l * stride + m] = a * (x * q[(l - 1) * stride + m] - b * q[(l - 2) * stride + m]);
    }
  }
}

}  // namespace

void eval_harmonics(int L, const Vec3& dir, std::span<double> out) {
  if (L < 0) throw std::invalid_argument("negative harmonic degree");
  if (out.size() < static_cast<std::size_t>(harmonic_count(L)))
    throw std::invalid_argument("harmonic output buffer too small");

  std::vector<double> q;
  reduced_legendre(L, dir.z, q);
  const int stride = L + 1;

  // (x + iy)^m = sin^m(θ) e^{imφ}, well defined at the poles.
  std::vector<double> re(stride), im(stride);
  re[0] = 1.0;
  im[0] = 0.0;
  for (int m = 1; m <= L; ++m) {
    re[m] = re[m - 1] * dir.x - im[m - 1] * dir.y;
    im[m] = re[m - 1] * dir.y + im[m - 1] * dir.x;
  }

  for (int j = 0; j <= L; ++j) {
    const int base = j * j + j;  // slot of m = 0
    out[base] = q[j * stride];
    for (int m = 1; m <= j; ++m) {
      const double qn = std::numbers::sqrt2 * q[j * stride + m];
      out[base + m] = qn * re[m];
      out[base - m] = qn * im[m];
    }
  }
}

double eval_harmonic(HarmonicIndex idx, const Vec3& dir) {
  if (!idx.valid())
    throw std::invalid_argument("harmonic index out of range: j=" + std::to_string(idx.j) +
                                " p=" + std::to_string(idx.p));
  std::vector<double> all(harmonic_count(idx.j));
  eval_harmonics(idx.j, dir, all);
  return all[idx.flat()];
}

void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights) {
  if (count < 1) throw std::invalid_argument("Gauss-Legendre rule needs at least one node");
  nodes.assign(count, 0.0);
  weights.assign(count, 0.0);
  // Newton on P_n; p1 = P_n(x), p0 = P_{n-1}(x).
  auto legendre = [count](double x, double& p1, double& dp) {
    double p0 = 1.0;
    p1 = x;
    for (int k = 2; k <= count; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = count * (x * p1 - p0) / (x * x - 1.0);
  };
  const int half = (count + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (count + 0.5));
    double p = 0.0, dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      legendre(x, p, dp);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    legendre(x, p, dp);
    nodes[i] = x;
    nodes[count - 1 - i] = -x;
    weights[i] = weights[count - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  if (count % 2 == 1) nodes[count / 2] = 0.0;
}

SphereQuadrature::SphereQuadrature(std::vector<Vec3> nodes, std::vector<double> weights,
                                   int exactness_degree)
    : nodes_(std::move(nodes)), weights_(std::move(weights)), exactness_(exactness_degree) {
  if (nodes_.size() != weights_.size()) throw std::invalid_argument("node/weight count mismatch");
}

std::vector<double> SphereQuadrature::harmonic_table(int L) const {
  const std::size_t h = harmonic_count(L);
  std::vector<double> table(nodes_.size() * h);
  for (std::size_t a = 0; a < nodes_.size(); ++a)
    eval_harmonics(L, nodes_[a], std::span<double>(table.data() + a * h, h));
  return table;
}

SphereQuadrature build_quadrature(int min_exactness_degree) {
  if (min_exactness_degree < 0) throw std::invalid_argument("negative quadrature degree");
  if (min_exactness_degree > kMaxQuadratureDegree)
    throw std::out_of_range("quadrature degree exceeds table: " +
                            std::to_string(min_exactness_degree) + " > " +
                            std::to_string(kMaxQuadratureDegree));

  const int n_polar = min_exactness_degree / 2 + 1;  // exact to 2n-1
  const int n_azimuth = min_exactness_degree + 1;     // exact for |m| <= n-1
  std::vector<double> x, w;
  gauss_legendre(n_polar, x, w);

  std::vector<Vec3> nodes;
  std::vector<double> weights;
  nodes.reserve(static_cast<std::size_t>(n_polar) * n_azimuth);
  weights.reserve(nodes.capacity());
  const double dphi = 2.0 * kPi / n_azimuth;
  for (int i = 0; i < n_polar; ++i) {
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - x[i] * x[i]));
    for (int k = 0; k < n_azimuth; ++k) {
      const double phi = dphi * k;
      nodes.push_back({sin_t * std::cos(phi), sin_t * std::sin(phi), x[i]});
      weights.push_back(w[i] * dphi);
    }
  }
  const int exactness = std::min(2 * n_polar - 1, n_azimuth - 1);
  return SphereQuadrature(std::move(nodes), std::move(weights), exactness);
}

}  // namespace scatlab
