#include <scatlab/potential.hpp>

#include "binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>

namespace scatlab {

namespace {
constexpr double kGeomTol = 1e-12;
constexpr char kPotentialMagic[] = "SCATPOT1";
}  // namespace

VoxelGrid::VoxelGrid(int n) : n_(n), h_(2.0 / n) {
  if (n < 8 || n % 2 != 0)
    throw std::invalid_argument("voxel grid needs an even n >= 8, got " + std::to_string(n));
}

Vec3 VoxelGrid::node(std::size_t linear) const {
  const auto nn = static_cast<std::size_t>(n_);
  const int k = static_cast<int>(linear % nn);
  const int j = static_cast<int>((linear / nn) % nn);
  const int i = static_cast<int>(linear / (nn * nn));
  return node(i, j, k);
}

int VoxelGrid::nearest(double x) const {
  const int i = static_cast<int>(std::lround(x / h_)) + n_ / 2;
  return std::clamp(i, 0, n_ - 1);
}

Potential::Potential(VoxelGrid grid, std::vector<double> values, double support_radius,
                     std::optional<AnalyticSpec> analytic)
    : grid_(grid),
      values_(std::move(values)),
      support_radius_(support_radius),
      analytic_(std::move(analytic)) {
  if (values_.size() != grid_.size()) throw std::invalid_argument("potential value count mismatch");
  if (!(support_radius_ >= 0.0) || support_radius_ > 1.0)
    throw std::invalid_argument("support radius must lie in [0, 1]");
  const double r2 = (support_radius_ + kGeomTol) * (support_radius_ + kGeomTol);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) throw std::invalid_argument("potential values must be finite");
    if (values_[i] != 0.0) {
      const Vec3 x = grid_.node(i);
      if (dot(x, x) > r2) throw std::invalid_argument("potential nonzero outside its support radius");
    }
  }
}

Potential Potential::zero(const VoxelGrid& grid) {
  return Potential(grid, std::vector<double>(grid.size(), 0.0), 0.0, AnalyticSpec{});
}

double Potential::linf_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double Potential::l1_norm() const {
  double s = 0.0;
  for (double v : values_) s += std::abs(v);
  return s * grid_.cell_volume();
}

std::vector<std::size_t> Potential::support() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (values_[i] != 0.0) idx.push_back(i);
  return idx;
}

Potential Potential::scaled(double factor) const {
  std::vector<double> out(values_);
  for (double& v : out) v *= factor;
  std::optional<AnalyticSpec> spec = analytic_;
  if (spec)
    for (Bump& b : spec->bumps) b.amplitude *= factor;
  return Potential(grid_, std::move(out), factor == 0.0 ? 0.0 : support_radius_, std::move(spec));
}

Potential Potential::plus(const Potential& other) const {
  if (!(grid_ == other.grid_)) throw std::invalid_argument("potential grid mismatch");
  std::vector<double> out(values_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += other.values_[i];
  std::optional<AnalyticSpec> spec;
  if (analytic_ && other.analytic_) {
    spec = *analytic_;
    spec->bumps.insert(spec->bumps.end(), other.analytic_->bumps.begin(),
                       other.analytic_->bumps.end());
    if (analytic_->bumps.empty())
      spec->m = other.analytic_->m;
    else if (!other.analytic_->bumps.empty())
      spec->m = std::min(analytic_->m, other.analytic_->m);
  }
  return Potential(grid_, std::move(out), std::max(support_radius_, other.support_radius_),
                   std::move(spec));
}

double mollifier(double r2) {
  if (r2 >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - r2));
}

namespace {

// Taylor coefficients in t of exp(1 - 1/(c - (x+t)^2)) up to order `order`,
// returned as derivatives (k! times the coefficient).
std::array<double, kMaxAnalyticOrder + 1> mollifier_line_derivatives(double c, double x,
                                                                     int order) {
  std::array<double, kMaxAnalyticOrder + 1> d{};
  const double u0 = c - x * x;
  if (u0 <= 0.0) return d;
  const double g0 = 1.0 - 1.0 / u0;
  if (g0 < -700.0) return d;

  std::array<double, kMaxAnalyticOrder + 1> u{}, w{}, g{}, e{};
  u[0] = u0;
  if (order >= 1) u[1] = -2.0 * x;
  if (order >= 2) u[2] = -1.0;
  w[0] = 1.0 / u0;
  for (int k = 1; k <= order; ++k) {
    double acc = 0.0;
    for (int i = 1; i <= std::min(k, 2); ++i) acc += u[i] * w[k - i];
    w[k] = -acc / u0;
  }
  g[0] = g0;
  for (int k = 1; k <= order; ++k) g[k] = -w[k];
  e[0] = std::exp(g0);
  for (int k = 1; k <= order; ++k) {
    double acc = 0.0;
    for (int i = 1; i <= k; ++i) acc += i * g[i] * e[k - i];
    e[k] = acc / k;
  }
  double fact = 1.0;
  for (int k = 0; k <= order; ++k) {
    if (k > 0) fact *= k;
    d[k] = fact * e[k];
  }
  return d;
}

// sup over (x, ρ) of |∂_x^k φ|, k = 0..8, by a scan refined around each maximum.
std::array<double, kMaxAnalyticOrder + 1> tabulate_mollifier_bounds() {
  std::array<double, kMaxAnalyticOrder + 1> best{};
  std::array<double, kMaxAnalyticOrder + 1> best_x{}, best_rho{};
  const int nx = 400, nr = 100;
  for (int ir = 0; ir < nr; ++ir) {
    const double rho = 0.99 * ir / (nr - 1);
    for (int ix = 0; ix < nx; ++ix) {
      const double x = (ix + 0.5) / nx;
      const auto d = mollifier_line_derivatives(1.0 - rho * rho, x, kMaxAnalyticOrder);
      for (int k = 0; k <= kMaxAnalyticOrder; ++k)
        if (std::abs(d[k]) > best[k]) {
          best[k] = std::abs(d[k]);
          best_x[k] = x;
          best_rho[k] = rho;
        }
    }
  }
  for (int k = 0; k <= kMaxAnalyticOrder; ++k) {
    double span_x = 1.0 / nx, span_r = 1.0 / nr;
    for (int round = 0; round < 6; ++round) {
      const double cx = best_x[k], cr = best_rho[k];
      for (int a = -10; a <= 10; ++a)
        for (int b = -10; b <= 10; ++b) {
          const double x = cx + span_x * a / 10.0;
          const double rho = std::max(0.0, cr + span_r * b / 10.0);
          if (x < 0.0 || rho >= 1.0) continue;
          const double v = std::abs(mollifier_line_derivatives(1.0 - rho * rho, x, k)[k]);
          if (v > best[k]) {
            best[k] = v;
            best_x[k] = x;
            best_rho[k] = rho;
          }
        }
      span_x /= 5.0;
      span_r /= 5.0;
    }
  }
  best[0] = 1.0;
  // running max over orders <= m
  for (int k = 1; k <= kMaxAnalyticOrder; ++k) best[k] = std::max(best[k], best[k - 1]);
  return best;
}

void check_inside_support(const Vec3& center, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("bump scale must be positive");
  if (norm(center) + scale > kSupportLimit + kGeomTol)
    throw PreconditionError("bump B(center, scale) leaves B(0, 1/2): |center| + scale = " +
                            std::to_string(norm(center) + scale));
}

void add_bump(const VoxelGrid& grid, const Bump& b, std::vector<double>& values) {
  if (b.amplitude == 0.0) return;
  const int lo_i = std::max(0, grid.nearest(b.center.x - b.scale) - 1);
  const int hi_i = std::min(grid.n() - 1, grid.nearest(b.center.x + b.scale) + 1);
  const int lo_j = std::max(0, grid.nearest(b.center.y - b.scale) - 1);
  const int hi_j = std::min(grid.n() - 1, grid.nearest(b.center.y + b.scale) + 1);
  const int lo_k = std::max(0, grid.nearest(b.center.z - b.scale) - 1);
  const int hi_k = std::min(grid.n() - 1, grid.nearest(b.center.z + b.scale) + 1);
  const double inv = 1.0 / (b.scale * b.scale);
  for (int i = lo_i; i <= hi_i; ++i)
    for (int j = lo_j; j <= hi_j; ++j)
      for (int k = lo_k; k <= hi_k; ++k) {
        const Vec3 d = grid.node(i, j, k) - b.center;
        const double phi = mollifier(dot(d, d) * inv);
        if (phi != 0.0) values[grid.index(i, j, k)] += b.amplitude * phi;
      }
}

}  // namespace

double mollifier_derivative_bound(int m) {
  if (m < 0 || m > kMaxAnalyticOrder)
    throw std::out_of_range("mollifier derivative table covers 0 <= m <= 8, got " +
                            std::to_string(m));
  static const auto table = tabulate_mollifier_bounds();
  return table[m];
}

Potential make_bump(const VoxelGrid& grid, const Vec3& center, double scale, double amplitude,
                    int m) {
  if (m < 0) throw std::invalid_argument("smoothness order must be nonnegative");
  check_inside_support(center, scale);
  std::vector<double> values(grid.size(), 0.0);
  const Bump b{center, scale, amplitude};
  add_bump(grid, b, values);
  AnalyticSpec spec;
  spec.m = m;
  if (amplitude != 0.0) spec.bumps.push_back(b);
  const double radius = amplitude == 0.0 ? 0.0 : std::min(kSupportLimit, norm(center) + scale);
  return Potential(grid, std::move(values), radius, std::move(spec));
}

Potential assemble_from_signs(const VoxelGrid& grid, std::span<const BallSlot> layout,
                              std::span<const int> signs, double epsilon, int m) {
  if (layout.size() != signs.size()) throw std::invalid_argument("layout/sign count mismatch");
  if (m < 0) throw std::invalid_argument("smoothness order must be nonnegative");
  for (std::size_t a = 0; a < layout.size(); ++a) {
    check_inside_support(layout[a].center, layout[a].scale);
    if (signs[a] != 1 && signs[a] != -1) throw std::invalid_argument("signs must be +1 or -1");
    for (std::size_t b = a + 1; b < layout.size(); ++b) {
      const double gap = norm(layout[a].center - layout[b].center);
      if (gap < layout[a].scale + layout[b].scale - kGeomTol)
        throw std::invalid_argument("packing bumps overlap");
    }
  }
  std::vector<double> values(grid.size(), 0.0);
  AnalyticSpec spec;
  spec.m = m;
  double radius = 0.0;
  for (std::size_t a = 0; a < layout.size(); ++a) {
    const Bump b{layout[a].center, layout[a].scale, signs[a] * epsilon};
    add_bump(grid, b, values);
    if (epsilon != 0.0) {
      spec.bumps.push_back(b);
      radius = std::max(radius, norm(b.center) + b.scale);
    }
  }
  return Potential(grid, std::move(values), std::min(kSupportLimit, radius), std::move(spec));
}

double linf_distance(const Potential& a, const Potential& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("potential grid mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double cm_norm_finite_difference(const Potential& v, int m) {
  if (m < 0) throw std::invalid_argument("smoothness order must be nonnegative");
  if (m > kMaxFiniteDifferenceOrder)
    throw std::out_of_range("finite-difference C^m estimate supports m <= 4");
  const VoxelGrid& g = v.grid();
  const int n = g.n();
  const double h = g.cell_size();
  const auto& f = v.values();
  auto at = [&](int i, int j, int k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n) return 0.0;
    return f[g.index(i, j, k)];
  };
  double best = v.linf_norm();
  if (m == 0) return best;
  const std::array<std::array<int, 3>, 3> axes{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        for (const auto& e : axes) {
          auto s = [&](int t) { return at(i + t * e[0], j + t * e[1], k + t * e[2]); };
          const double f0 = s(0), p1 = s(1), m1 = s(-1);
          if (f0 == 0.0 && p1 == 0.0 && m1 == 0.0 && s(2) == 0.0 && s(-2) == 0.0) continue;
          std::array<double, 5> d{};
          d[1] = (p1 - m1) / (2.0 * h);
          d[2] = (p1 - 2.0 * f0 + m1) / (h * h);
          d[3] = (s(2) - 2.0 * p1 + 2.0 * m1 - s(-2)) / (2.0 * h * h * h);
          d[4] = (s(2) - 4.0 * p1 + 6.0 * f0 - 4.0 * m1 + s(-2)) / (h * h * h * h);
          for (int o = 1; o <= m; ++o) best = std::max(best, std::abs(d[o]));
        }
      }
  return best;
}

double cm_norm_estimate(const Potential& v, int m) {
  if (m < 0) throw std::invalid_argument("smoothness order must be nonnegative");
  if (m == 0) return v.linf_norm();
  const auto& spec = v.analytic_spec();
  if (!spec) {
    if (m > kMaxFiniteDifferenceOrder)
      throw std::out_of_range("C^m estimate above order 4 needs an analytic bump description");
    return cm_norm_finite_difference(v, m);
  }
  if (spec->bumps.empty()) return 0.0;
  const double k = mollifier_derivative_bound(m);
  bool disjoint = true;
  for (std::size_t a = 0; a < spec->bumps.size() && disjoint; ++a)
    for (std::size_t b = a + 1; b < spec->bumps.size(); ++b) {
      const auto& x = spec->bumps[a];
      const auto& y = spec->bumps[b];
      if (norm(x.center - y.center) < x.scale + y.scale - kGeomTol) {
        disjoint = false;
        break;
      }
    }
  double acc = 0.0;
  for (const Bump& b : spec->bumps) {
    const double term = std::abs(b.amplitude) * std::max(1.0, std::pow(b.scale, -m)) * k;
    acc = disjoint ? std::max(acc, term) : acc + term;
  }
  return acc;
}

namespace {
std::vector<cplx> support_weights(const Potential& v, const std::vector<std::size_t>& nodes) {
  std::vector<cplx> w(nodes.size());
  for (std::size_t a = 0; a < nodes.size(); ++a) w[a] = v.values()[nodes[a]];
  return w;
}

double fourier_scale(const VoxelGrid& g) { return g.cell_volume() / std::pow(2.0 * kPi, 3); }
}  // namespace

cplx fourier_sum(const VoxelGrid& g, std::span<const std::size_t> nodes,
                 std::span<const cplx> weights, const Vec3& p) {
  if (nodes.size() != weights.size()) throw std::invalid_argument("fourier_sum size mismatch");
  double re = 0.0, im = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const double phase = dot(p, g.node(nodes[a]));
    const double c = std::cos(phase), s = std::sin(phase);
    re += weights[a].real() * c - weights[a].imag() * s;
    im += weights[a].real() * s + weights[a].imag() * c;
  }
  const double scale = fourier_scale(g);
  return {re * scale, im * scale};
}

cplx fourier_sum(const VoxelGrid& g, std::span<const std::size_t> nodes,
                 std::span<const cplx> weights, const CVec3& p) {
  if (nodes.size() != weights.size()) throw std::invalid_argument("fourier_sum size mismatch");
  cplx acc = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a)
    acc += weights[a] * std::exp(cplx(0.0, 1.0) * dot(p, g.node(nodes[a])));
  return acc * fourier_scale(g);
}

cplx potential_fourier(const Potential& v, const Vec3& p) {
  const auto nodes = v.support();
  return fourier_sum(v.grid(), nodes, support_weights(v, nodes), p);
}

cplx potential_fourier(const Potential& v, const CVec3& p) {
  const auto nodes = v.support();
  return fourier_sum(v.grid(), nodes, support_weights(v, nodes), p);
}

void write_potential(std::ostream& out, const Potential& v) {
  nlohmann::json header;
  header["n"] = v.grid().n();
  header["support_radius"] = v.support_radius();
  header["value_count"] = v.values().size();
  if (v.analytic_spec()) {
    nlohmann::json spec;
    spec["m"] = v.analytic_spec()->m;
    spec["bumps"] = nlohmann::json::array();
    for (const Bump& b : v.analytic_spec()->bumps)
      spec["bumps"].push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                               {"scale", b.scale},
                               {"amplitude", b.amplitude}});
    header["analytic_spec"] = spec;
  } else {
    header["analytic_spec"] = nullptr;
  }
  detail::write_container(out, kPotentialMagic, header.dump(), v.values());
}

Potential read_potential(std::istream& in) {
  std::string header_text;
  std::vector<double> values;
  detail::read_container(in, kPotentialMagic, header_text, values);
  const auto header = nlohmann::json::parse(header_text);
  const VoxelGrid grid(header.at("n").get<int>());
  if (header.at("value_count").get<std::size_t>() != values.size())
    throw IoError("potential container value count mismatch");
  std::optional<AnalyticSpec> spec;
  if (!header.at("analytic_spec").is_null()) {
    AnalyticSpec s;
    s.m = header["analytic_spec"].at("m").get<int>();
    for (const auto& b : header["analytic_spec"].at("bumps")) {
      const auto c = b.at("center");
      s.bumps.push_back({{c[0].get<double>(), c[1].get<double>(), c[2].get<double>()},
                         b.at("scale").get<double>(),
                         b.at("amplitude").get<double>()});
    }
    spec = std::move(s);
  }
  return Potential(grid, std::move(values), header.at("support_radius").get<double>(),
                   std::move(spec));
}

void save_potential(const std::string& path, const Potential& v) {
  detail::write_file_atomically(path, [&](std::ostream& out) { write_potential(out, v); });
}

Potential load_potential(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_potential(in);
}

}  // namespace scatlab
