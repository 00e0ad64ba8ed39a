#include <scatlab/forward_solver.hpp>

#include "fft_convolution.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace scatlab {

void IncidentWave::validate() const {
  if (std::abs(norm(theta) - 1.0) > 1e-12)
    throw std::invalid_argument("incident direction must be a unit vector");
  if (!(h >= 0.0)) throw std::invalid_argument("strip half-width h must be nonnegative");
  if (std::abs(s.imag()) > h)
    throw std::invalid_argument("wavenumber outside the strip |Im s| <= h");
}

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
}

double MuField::max_abs() const {
  double m = values.empty() ? 1.0 : 0.0;
  for (const cplx& z : values) m = std::max(m, std::abs(z));
  return m;
}

std::vector<double> MuField::residual_ratios() const {
  std::vector<double> r;
  for (std::size_t i = 1; i < residual_history.size(); ++i)
    if (residual_history[i - 1] > 0.0) r.push_back(residual_history[i] / residual_history[i - 1]);
  return r;
}

cplx green_kernel(const Vec3& r, cplx s) {
  const double d = norm(r);
  if (!(d > 0.0)) throw std::invalid_argument("green_kernel is singular at r = 0");
  return std::exp(cplx(0.0, 1.0) * s * d) / (kFourPi * d);
}

cplx ball_kernel_integral(double a, cplx kappa) {
  if (a <= 0.0) return 0.0;
  const cplx z = kappa * a;
  if (std::abs(z) > 2.0) return (std::exp(z) * (z - 1.0) + 1.0) / (kappa * kappa);
  // Σ_k z^k / (k! (k+2)) times a²
  cplx term = 1.0, sum = 0.0;
  for (int k = 0; k < 60; ++k) {
    const cplx contrib = term / static_cast<double>(k + 2);
    sum += contrib;
    if (std::abs(contrib) < 1e-18 * std::abs(sum)) break;
    term *= z / static_cast<double>(k + 1);
  }
  return sum * a * a;
}

namespace {

// Radius of the ball with the volume of one cell.
double equal_volume_radius(double volume) { return std::cbrt(3.0 * volume / kFourPi); }

// Kernel values indexed by the integer squared lattice distance.
std::vector<cplx> radial_table(int n, double spacing, cplx kappa) {
  const int max_r2 = 3 * (n - 1) * (n - 1);
  std::vector<cplx> t(static_cast<std::size_t>(max_r2) + 1, 0.0);
  const double vol = spacing * spacing * spacing;
  for (int r2 = 1; r2 <= max_r2; ++r2) {
    const double r = std::sqrt(static_cast<double>(r2)) * spacing;
    t[r2] = std::exp(kappa * r) / (kFourPi * r) * vol;
  }
  return t;
}

struct C1Lattice {
  int res;
  int count;  // nodes per axis
  double spacing;
  std::vector<double> weight;  // fraction of each cell inside the unit ball

  explicit C1Lattice(int resolution) : res(resolution), count(resolution + 1) {
    if (res < 2 || res % 2 != 0)
      throw std::invalid_argument("c1 resolution must be even and at least 2");
    spacing = 2.0 / res;
    weight.assign(static_cast<std::size_t>(count) * count * count, 0.0);
    constexpr int sub = 8;
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < count; ++j)
        for (int k = 0; k < count; ++k) {
          const Vec3 x = node(i, j, k);
          auto near = [&](double c) { return std::max(0.0, std::abs(c) - spacing / 2); };
          auto far = [&](double c) { return std::abs(c) + spacing / 2; };
          const double n2 = near(x.x) * near(x.x) + near(x.y) * near(x.y) + near(x.z) * near(x.z);
          const double f2 = far(x.x) * far(x.x) + far(x.y) * far(x.y) + far(x.z) * far(x.z);
          double w = 0.0;
          if (f2 <= 1.0) {
            w = 1.0;
          } else if (n2 < 1.0) {
            int inside = 0;
            for (int a = 0; a < sub; ++a)
              for (int b = 0; b < sub; ++b)
                for (int c = 0; c < sub; ++c) {
                  const Vec3 y = x + Vec3{(a + 0.5) / sub - 0.5, (b + 0.5) / sub - 0.5,
                                          (c + 0.5) / sub - 0.5} * spacing;
                  if (dot(y, y) < 1.0) ++inside;
                }
            w = static_cast<double>(inside) / (sub * sub * sub);
          }
          weight[index(i, j, k)] = w;
        }
  }

  Vec3 node(int i, int j, int k) const {
    return {-1.0 + i * spacing, -1.0 + j * spacing, -1.0 + k * spacing};
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * count + j) * count + k;
  }
  // Ball-of-equal-volume self term for a (possibly partial) cell.
  double self_term(std::size_t idx, double h) const {
    const double vol = weight[idx] * spacing * spacing * spacing;
    return ball_kernel_integral(equal_volume_radius(vol), 2.0 * h).real();
  }
};

double compute_c1(double h, int resolution) {
  const C1Lattice lat(resolution);
  const auto table = radial_table(lat.count, lat.spacing, 2.0 * h);
  detail::LatticeConvolver conv(lat.count, [&](int a, int b, int c) {
    return table[a * a + b * b + c * c];
  });
  std::vector<cplx> in(lat.weight.begin(), lat.weight.end()), out(in.size());
  conv.apply_dense(in, out);
  double best = 0.0;
  for (int i = 0; i < lat.count; ++i)
    for (int j = 0; j < lat.count; ++j)
      for (int k = 0; k < lat.count; ++k) {
        const Vec3 x = lat.node(i, j, k);
        if (dot(x, x) > 1.0 + 1e-12) continue;
        const std::size_t idx = lat.index(i, j, k);
        best = std::max(best, out[idx].real() + lat.self_term(idx, h));
      }
  return best;
}

}  // namespace

double c1_constant(double h, int resolution) {
  if (h < 0.0) throw std::invalid_argument("c1_constant needs h >= 0");
  static std::mutex mutex;
  static std::map<std::pair<double, int>, double> cache;
  std::lock_guard lock(mutex);
  const auto key = std::make_pair(h, resolution);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const double value = compute_c1(h, resolution);
  cache.emplace(key, value);
  return value;
}

double c1_constant(double h) { return c1_constant(h, kC1Resolution); }

double c1_integral_at(const Vec3& x, double h, int resolution) {
  if (h < 0.0) throw std::invalid_argument("c1_integral_at needs h >= 0");
  const C1Lattice lat(resolution);
  const double vol = lat.spacing * lat.spacing * lat.spacing;
  double sum = 0.0;
  for (int i = 0; i < lat.count; ++i)
    for (int j = 0; j < lat.count; ++j)
      for (int k = 0; k < lat.count; ++k) {
        const std::size_t idx = lat.index(i, j, k);
        if (lat.weight[idx] == 0.0) continue;
        const double r = norm(x - lat.node(i, j, k));
        if (r < 1e-9 * lat.spacing) {
          sum += lat.self_term(idx, h);
        } else {
          sum += std::exp(2.0 * h * r) / (kFourPi * r) * lat.weight[idx] * vol;
        }
      }
  return sum;
}

double check_contraction(const Potential& v, double h) {
  const double norm_v = v.linf_norm();
  if (norm_v == 0.0) return 0.0;
  return c1_constant(h) * norm_v;
}

struct GreenOperator::Impl {
  Eigen::MatrixXcd matrix;
  std::unique_ptr<detail::LatticeConvolver> conv;
};

GreenOperator::GreenOperator(const VoxelGrid& grid,
                             std::shared_ptr<const std::vector<std::size_t>> support, cplx s,
                             SingularCellRule rule, OperatorPath path)
    : impl_(std::make_unique<Impl>()), support_(std::move(support)), path_(path) {
  const int n = grid.n();
  const double hcell = grid.cell_size();
  diagonal_ = rule == SingularCellRule::analytic_ball
                  ? ball_kernel_integral(equal_volume_radius(grid.cell_volume()), cplx(0.0, 1.0) * s)
                  : cplx(0.0);
  const auto table = radial_table(n, hcell, cplx(0.0, 1.0) * s);
  const std::size_t count = support_->size();
  if (path_ == OperatorPath::automatic)
    path_ = count <= kDirectPathLimit ? OperatorPath::direct : OperatorPath::fft;

  if (path_ == OperatorPath::direct) {
    const auto nn = static_cast<std::size_t>(n);
    std::vector<std::array<int, 3>> ijk(count);
    for (std::size_t a = 0; a < count; ++a) {
      const std::size_t l = (*support_)[a];
      ijk[a] = {static_cast<int>(l / (nn * nn)), static_cast<int>((l / nn) % nn),
                static_cast<int>(l % nn)};
    }
    impl_->matrix.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(count));
    for (std::size_t b = 0; b < count; ++b)
      for (std::size_t a = 0; a < count; ++a) {
        const int di = ijk[a][0] - ijk[b][0];
        const int dj = ijk[a][1] - ijk[b][1];
        const int dk = ijk[a][2] - ijk[b][2];
        const int r2 = di * di + dj * dj + dk * dk;
        impl_->matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            r2 == 0 ? diagonal_ : table[r2];
      }
  } else {
    const cplx diag = diagonal_;
    impl_->conv = std::make_unique<detail::LatticeConvolver>(n, [&](int a, int b, int c) {
      const int r2 = a * a + b * b + c * c;
      return r2 == 0 ? diag : table[r2];
    });
  }
}

GreenOperator::~GreenOperator() = default;
GreenOperator::GreenOperator(GreenOperator&&) noexcept = default;
GreenOperator& GreenOperator::operator=(GreenOperator&&) noexcept = default;

void GreenOperator::apply(std::span<const cplx> in, std::span<cplx> out,
                          std::size_t columns) const {
  const std::size_t count = size();
  if (in.size() != count * columns || out.size() != count * columns)
    throw std::invalid_argument("GreenOperator::apply buffer size mismatch");
  if (count == 0) return;
  if (path_ == OperatorPath::direct) {
    const auto rows = static_cast<Eigen::Index>(count);
    const auto cols = static_cast<Eigen::Index>(columns);
    Eigen::Map<const Eigen::MatrixXcd> x(in.data(), rows, cols);
    Eigen::Map<Eigen::MatrixXcd> y(out.data(), rows, cols);
    y.noalias() = impl_->matrix * x;
  } else {
    parallel_for(columns, [&](std::size_t c) {
      impl_->conv->apply(*support_, in.subspan(c * count, count), out.subspan(c * count, count));
    });
  }
}

namespace {

std::shared_ptr<const std::vector<std::size_t>> shared_support(const Potential& v) {
  return std::make_shared<const std::vector<std::size_t>>(v.support());
}

void require_contraction(double q) {
  if (q > 0.5) {
    std::ostringstream msg;
    msg << "contraction condition violated: q = c1(h)*|v|_inf = " << q << " > 1/2";
    throw PreconditionError(msg.str());
  }
}

}  // namespace

std::vector<MuField> solve_mu_batch(const Potential& v, cplx s, double h,
                                    std::span<const Vec3> thetas, const SolverConfig& cfg) {
  cfg.validate();
  for (const Vec3& t : thetas) IncidentWave{t, s, h}.validate();
  const double q = check_contraction(v, h);
  require_contraction(q);

  auto support = shared_support(v);
  const std::size_t count = support->size();
  const std::size_t cols = thetas.size();
  const VoxelGrid& grid = v.grid();

  std::vector<MuField> out(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    out[c].grid = grid;
    out[c].support = support;
    out[c].values.assign(count, cplx(1.0));
    out[c].wave = {thetas[c], s, h};
    out[c].contraction = q;
  }
  if (cols == 0) return out;

  const GreenOperator op(grid, support, s, cfg.singular_cell_rule, cfg.path);
  const cplx is = cplx(0.0, 1.0) * s;
  // Source factor e^{isθ·y} v(y) and target factor e^{-isθ·x}.
  std::vector<cplx> src(count * cols), dst(count * cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t a = 0; a < count; ++a) {
      const Vec3 x = grid.node((*support)[a]);
      const cplx phase = is * dot(thetas[c], x);
      src[c * count + a] = std::exp(phase) * v.values()[(*support)[a]];
      dst[c * count + a] = std::exp(-phase);
    }

  std::vector<cplx> x(count * cols), y(count * cols);
  std::vector<bool> done(cols, false);
  std::size_t remaining = cols;
  for (int it = 1; it <= cfg.max_iter && remaining > 0; ++it) {
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t a = 0; a < count; ++a)
        x[c * count + a] = src[c * count + a] * out[c].values[a];
    op.apply(x, y, cols);
    for (std::size_t c = 0; c < cols; ++c) {
      if (done[c]) continue;
      double res = 0.0;
      for (std::size_t a = 0; a < count; ++a) {
        const cplx next = 1.0 - dst[c * count + a] * y[c * count + a];
        res = std::max(res, std::abs(next - out[c].values[a]));
        out[c].values[a] = next;
      }
      out[c].residual = res;
      out[c].iterations = it;
      out[c].residual_history.push_back(res);
      if (res <= cfg.tol) {
        done[c] = true;
        --remaining;
      }
    }
  }
  if (remaining > 0) {
    double worst = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (!done[c]) worst = std::max(worst, out[c].residual);
    std::ostringstream msg;
    msg << "successive approximations did not converge in " << cfg.max_iter
        << " iterations; last residual " << worst;
    throw ConvergenceError(msg.str(), worst);
  }
  return out;
}

MuField solve_mu(const Potential& v, const IncidentWave& wave, const SolverConfig& cfg) {
  wave.validate();
  const std::array<Vec3, 1> theta{wave.theta};
  auto fields = solve_mu_batch(v, wave.s, wave.h, theta, cfg);
  return std::move(fields.front());
}

MuField born_field(const Potential& v, const IncidentWave& wave) {
  wave.validate();
  MuField mu;
  mu.grid = v.grid();
  mu.support = shared_support(v);
  mu.values.assign(mu.support->size(), cplx(1.0));
  mu.wave = wave;
  return mu;
}

cplx scattering_amplitude(const Potential& v, const MuField& mu, const Vec3& omega) {
  if (!mu.support || mu.support->size() != mu.values.size())
    throw std::invalid_argument("MuField has no support description");
  std::vector<cplx> w(mu.values.size());
  for (std::size_t a = 0; a < w.size(); ++a) w[a] = v.values()[(*mu.support)[a]] * mu.values[a];
  const Vec3 dir = mu.wave.theta - omega;
  if (mu.wave.s.imag() == 0.0) return fourier_sum(v.grid(), *mu.support, w, mu.wave.s.real() * dir);
  return fourier_sum(v.grid(), *mu.support, w, scaled(mu.wave.s, dir));
}

cplx scattered_field(const Potential& v, const MuField& mu, const Vec3& x) {
  const VoxelGrid& g = v.grid();
  const cplx is = cplx(0.0, 1.0) * mu.wave.s;
  cplx acc = 0.0;
  for (std::size_t a = 0; a < mu.values.size(); ++a) {
    const std::size_t l = (*mu.support)[a];
    const Vec3 y = g.node(l);
    acc += green_kernel(x - y, mu.wave.s) * std::exp(is * dot(mu.wave.theta, y)) * v.values()[l] *
           mu.values[a];
  }
  return -acc * g.cell_volume();
}

std::vector<Vec3> far_field_directions() {
  std::vector<Vec3> dirs{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int a : {-1, 1})
    for (int b : {-1, 1})
      for (int c : {-1, 1}) dirs.push_back(normalized(Vec3{double(a), double(b), double(c)}));
  return dirs;
}

FarFieldReport far_field_report(const Potential& v, const IncidentWave& wave,
                                std::span<const double> radii, const SolverConfig& cfg) {
  wave.validate();
  if (wave.s.imag() != 0.0) throw std::invalid_argument("far-field check needs a real wavenumber");
  double extent = 0.0;
  for (std::size_t l : v.support()) extent = std::max(extent, norm(v.grid().node(l)));
  for (double r : radii)
    if (!(r > extent)) {
      std::ostringstream msg;
      msg << "far-field radius " << r << " lies inside the support (extent " << extent << ")";
      throw PreconditionError(msg.str());
    }

  const MuField mu = solve_mu(v, wave, cfg);
  const auto dirs = far_field_directions();
  std::vector<cplx> f(dirs.size());
  double fmax = 0.0;
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    f[d] = scattering_amplitude(v, mu, dirs[d]);
    fmax = std::max(fmax, std::abs(f[d]));
  }
  const double s = wave.s.real();
  const double two_pi2 = 2.0 * kPi * kPi;
  FarFieldReport rep;
  for (double r : radii) {
    double disc = 0.0, rel = 0.0;
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      const cplx sc = scattered_field(v, mu, dirs[d] * r);
      const cplx outgoing = std::exp(cplx(0.0, s * r));
      disc = std::max(disc, std::abs(r * sc + two_pi2 * outgoing * f[d]));
      const cplx extracted = -r * sc / (two_pi2 * outgoing);
      rel = std::max(rel, std::abs(extracted - f[d]));
    }
    rep.radii.push_back(r);
    rep.discrepancy.push_back(disc);
    rep.relative_amplitude_error.push_back(fmax > 0.0 ? rel / fmax : 0.0);
  }
  return rep;
}

double far_field_check(const Potential& v, const IncidentWave& wave,
                       std::span<const double> radii, const SolverConfig& cfg) {
  if (radii.empty()) throw std::invalid_argument("far_field_check needs at least one radius");
  const auto rep = far_field_report(v, wave, radii, cfg);
  const auto it = std::max_element(rep.radii.begin(), rep.radii.end());
  return rep.discrepancy[static_cast<std::size_t>(it - rep.radii.begin())];
}

}  // namespace scatlab
