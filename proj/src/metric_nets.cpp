#include <scatlab/metric_nets.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace scatlab {

namespace {

constexpr double kLog2To63 = 43.66827237527655;  // 63 ln 2

constexpr std::uint64_t kCountLimit = std::uint64_t{1} << 63;

// acc *= f, false once the product reaches 2^63
bool mul_capped(std::uint64_t& acc, std::uint64_t f) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(acc, f, &r) || r >= kCountLimit) return false;
  acc = r;
  return true;
}

double chebyshev_x(const EllipseDomain& d, double s) { return (2.0 * s - d.a - d.b) / (d.b - d.a); }

constexpr double kExactIntegerLimit = 9007199254740992.0;  // 2^53

std::int64_t quantize_part(double value, double step, double half_range) {
  return static_cast<std::int64_t>(std::clamp(std::round(value / step), -half_range, half_range));
}

}  // namespace

// ---------------------------------------------------------------- packings

std::vector<BallSlot> lattice_layout(int k) {
  if (k < 1) throw std::invalid_argument("lattice size must be positive");
  const double a = kPackingHalfSide;
  const double r = a / k;
  std::vector<BallSlot> out;
  out.reserve(static_cast<std::size_t>(k) * k * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l)
        out.push_back({{-a + (2 * i + 1) * r, -a + (2 * j + 1) * r, -a + (2 * l + 1) * r}, r});
  return out;
}

std::vector<BallSlot> snap_layout(std::span<const BallSlot> layout, const VoxelGrid& grid) {
  std::vector<BallSlot> out;
  out.reserve(layout.size());
  double r = std::numeric_limits<double>::infinity();
  for (const BallSlot& b : layout) {
    const Vec3 c{grid.coord(grid.nearest(b.center.x)), grid.coord(grid.nearest(b.center.y)),
                 grid.coord(grid.nearest(b.center.z))};
    out.push_back({c, 0.0});
    r = std::min({r, b.scale, kSupportLimit - norm(c)});
  }
  // lattice neighbours are the closest pairs, but snapping can collapse any pair
  for (std::size_t a = 0; a < out.size(); ++a)
    for (std::size_t b = a + 1; b < out.size(); ++b)
      r = std::min(r, 0.5 * norm(out[a].center - out[b].center));
  if (!(r > 0.0)) throw PreconditionError("grid too coarse for the packing layout");
  for (BallSlot& b : out) b.scale = r;
  return out;
}

double PackingFamily::log_member_count() const {
  return static_cast<double>(bump_count()) * std::log(2.0);
}

std::optional<std::uint64_t> PackingFamily::member_count() const {
  if (bump_count() >= 63) return std::nullopt;
  return std::uint64_t{1} << bump_count();
}

std::vector<int> PackingFamily::signs(std::uint64_t index) const {
  if (bump_count() > 64) throw std::out_of_range("member index needs more than 64 bits");
  if (bump_count() < 64 && index >> bump_count())
    throw std::out_of_range("member index out of range");
  std::vector<int> out(bump_count());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = (index >> b) & 1 ? 1 : -1;
  return out;
}

Potential PackingFamily::member(const VoxelGrid& grid, std::uint64_t index) const {
  const auto s = signs(index);
  return member(grid, s);
}

Potential PackingFamily::member(const VoxelGrid& grid, std::span<const int> s) const {
  return assemble_from_signs(grid, layout, s, budget.epsilon, budget.m);
}

int packing_lattice_k(const SmoothnessBudget& budget) {
  if (budget.m < 1) throw std::invalid_argument("packing needs m >= 1");
  if (!(budget.beta > 0.0) || !(budget.epsilon > 0.0))
    throw std::invalid_argument("beta and epsilon must be positive");
  const double K = mollifier_derivative_bound(budget.m);
  const double a = kPackingHalfSide;
  const double raw = a * std::pow(budget.beta / (budget.epsilon * K), 1.0 / budget.m);
  if (raw > 1e6) throw std::out_of_range("packing lattice too large");
  int k = static_cast<int>(std::floor(raw));
  while (k > 0 && budget.epsilon * std::pow(k / a, budget.m) * K > budget.beta) --k;
  return k;
}

PackingFamily build_packing(const SmoothnessBudget& budget, const VoxelGrid* grid) {
  PackingFamily fam;
  fam.budget = budget;
  fam.k = packing_lattice_k(budget);
  fam.mu_eff = std::pow(kPackingHalfSide, budget.m) / mollifier_derivative_bound(budget.m);
  if (fam.k == 0) throw PreconditionError("epsilon too large for beta");
  if (!grid) {
    fam.layout = lattice_layout(fam.k);
    return fam;
  }
  const double K = mollifier_derivative_bound(budget.m);
  for (; fam.k > 0; --fam.k) {
    std::vector<BallSlot> snapped;
    try {
      snapped = snap_layout(lattice_layout(fam.k), *grid);
    } catch (const PreconditionError&) {
      continue;
    }
    const double r = snapped.front().scale;
    if (budget.epsilon * std::max(1.0, std::pow(r, -budget.m)) * K <= budget.beta) {
      fam.layout = std::move(snapped);
      return fam;
    }
  }
  throw PreconditionError("epsilon too large for beta on this grid");
}

// ------------------------------------------------------ holomorphic nets

double EllipseDomain::max_imag() const { return 0.5 * (b - a) * std::sinh(gamma); }

void EllipseDomain::validate(double h) const {
  if (!(a < b)) throw std::invalid_argument("ellipse needs a < b");
  if (!(gamma > 0.0)) throw std::invalid_argument("ellipse needs gamma > 0");
  if (max_imag() > h * (1.0 + 1e-12)) throw std::invalid_argument("ellipse leaves the strip");
}

double strip_gamma(double a, double b, double h) {
  if (!(a < b)) throw std::invalid_argument("strip_gamma needs a < b");
  if (!(h > 0.0)) throw std::invalid_argument("strip_gamma needs h > 0");
  return std::asinh(2.0 * h / (b - a));
}

double HoloNet::log_cardinality() const {
  double acc = 0.0;
  for (double m : half_range) acc += 2.0 * std::log(2.0 * m + 1.0);
  return acc;
}

std::optional<std::uint64_t> HoloNet::cardinality() const {
  if (log_cardinality() >= kLog2To63) return std::nullopt;
  std::uint64_t acc = 1;
  for (double m : half_range) {
    const auto f = static_cast<std::uint64_t>(2.0 * m + 1.0);
    if (!mul_capped(acc, f) || !mul_capped(acc, f)) return std::nullopt;
  }
  return acc;
}

HoloIndex HoloNet::quantize(std::span<const double> s_nodes, std::span<const cplx> values) const {
  if (s_nodes.size() != values.size() || values.empty())
    throw std::invalid_argument("quantize needs matching nonempty samples");
  for (const cplx& z : values)
    if (std::abs(z) > bound_C * (1.0 + 1e-9)) throw std::domain_error("value exceeds the net bound C");
  for (double m : half_range)
    if (m > kExactIntegerLimit) throw std::out_of_range("net too fine for integer coordinates");
  HoloIndex idx(2 * static_cast<std::size_t>(degree + 1), 0);
  if (fixed_energy) {
    idx[0] = quantize_part(values[0].real(), step, half_range[0]);
    idx[1] = quantize_part(values[0].imag(), step, half_range[0]);
    return idx;
  }
  const int n = static_cast<int>(s_nodes.size());
  const int deg = std::min(n - 1, degree);
  Eigen::MatrixXd V(n, deg + 1);
  Eigen::MatrixXd rhs(n, 2);
  for (int i = 0; i < n; ++i) {
    const double x = std::clamp(chebyshev_x(domain, s_nodes[i]), -1.0, 1.0);
    double t0 = 1.0, t1 = x;
    for (int k = 0; k <= deg; ++k) {
      V(i, k) = k == 0 ? 1.0 : (k == 1 ? x : 2.0 * x * t1 - t0);
      if (k >= 2) {
        t0 = t1;
        t1 = V(i, k);
      }
    }
    rhs(i, 0) = values[i].real();
    rhs(i, 1) = values[i].imag();
  }
  const Eigen::MatrixXd c = V.colPivHouseholderQr().solve(rhs);
  for (int k = 0; k <= deg; ++k) {
    idx[2 * k] = quantize_part(c(k, 0), step, half_range[k]);
    idx[2 * k + 1] = quantize_part(c(k, 1), step, half_range[k]);
  }
  return idx;
}

cplx HoloNet::evaluate(const HoloIndex& idx, double s) const {
  if (idx.size() != 2 * static_cast<std::size_t>(degree + 1))
    throw std::invalid_argument("index does not belong to this net");
  if (fixed_energy) return step * cplx(static_cast<double>(idx[0]), static_cast<double>(idx[1]));
  const double x = chebyshev_x(domain, s);
  cplx acc = 0.0;
  double t0 = 1.0, t1 = x;
  for (int k = 0; k <= degree; ++k) {
    double t = 1.0;
    if (k == 1) t = x;
    if (k >= 2) {
      t = 2.0 * x * t1 - t0;
      t0 = t1;
      t1 = t;
    }
    acc += t * cplx(static_cast<double>(idx[2 * k]), static_cast<double>(idx[2 * k + 1]));
  }
  return step * acc;
}

HoloNet fixed_energy_grid_net(double C, double delta) {
  if (!(C > 0.0) || !(delta > 0.0)) throw std::invalid_argument("C and delta must be positive");
  HoloNet net;
  net.fixed_energy = true;
  net.bound_C = C;
  net.delta = delta;
  net.degree = 0;
  net.step = 0.5 * delta;
  net.half_range = {std::floor(2.0 * C / delta)};
  return net;
}

HoloNet holo_net(const EllipseDomain& domain, double C, double delta) {
  if (!(C > 0.0) || !(delta > 0.0)) throw std::invalid_argument("C and delta must be positive");
  if (!(domain.a < domain.b) || !(domain.gamma > 0.0))
    throw std::invalid_argument("ellipse needs a < b and gamma > 0");
  const double g = domain.gamma;
  const double q = std::exp(-g);
  auto tail = [&](int D) { return 2.0 * C * std::exp(-g * (D + 1)) / (1.0 - q); };
  const double guess = std::log(4.0 * C / (delta * (1.0 - q))) / g - 1.0;
  if (guess > 1e6) throw std::out_of_range("Chebyshev degree too large for this ellipse");
  int D = std::max(0, static_cast<int>(std::ceil(guess)));
  while (D > 0 && tail(D - 1) <= 0.5 * delta) --D;
  while (tail(D) > 0.5 * delta) ++D;

  HoloNet net;
  net.domain = domain;
  net.bound_C = C;
  net.delta = delta;
  net.degree = D;
  net.step = delta / (std::sqrt(2.0) * (D + 1));
  net.half_range.resize(D + 1);
  // sampled fits alias the tail into the kept coefficients, hence the δ/2 margin
  for (int n = 0; n <= D; ++n) {
    const double R = n == 0 ? C : 2.0 * C * std::exp(-g * n);
    net.half_range[n] = std::ceil((R + 0.5 * delta) / net.step);
  }
  return net;
}

// --------------------------------------------------------- amplitude nets

int truncation_degree(double delta, const NormWeights& w, double c4) {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (!(c4 > 0.0)) throw std::invalid_argument("c4 must be positive");
  const double sigma = w.sigma1 + w.sigma2;
  const double log_delta = std::log(delta);
  auto below = [&](int l) {
    const double direct = c4 * std::pow(2.0 * l + 1.0, sigma) * std::ldexp(1.0, -l);
    if (std::isfinite(direct) && direct > 0.0) return direct < delta;
    return std::log(c4) + sigma * std::log(2.0 * l + 1.0) - l * std::log(2.0) < log_delta;
  };
  // c4 (2l+1)^σ 2^{-l} decreases once 2l+1 >= 2σ/ln 2
  const int l_dec = std::max(0, static_cast<int>(std::ceil(sigma / std::log(2.0) - 0.5)));
  int l = 0;
  while (l < l_dec || !below(l)) {
    ++l;
    if (l > 100000) throw std::out_of_range("truncation degree too large");
  }
  int last_fail = -1;
  for (int k = 0; k < l; ++k)
    if (!below(k)) last_fail = k;
  return last_fail + 1;
}

double coefficient_tolerance(int j1, int j2, const NormWeights& w, double s1, double delta) {
  if (!(s1 > 0.0)) throw std::invalid_argument("s1 must be positive");
  return delta * std::exp(-(log_norm_weight(j1, w.sigma1, s1) + log_norm_weight(j2, w.sigma2, s1)));
}

double interval_tolerance(int j1, int j2, const NormWeights& w, const EnergyInterval& I,
                          double delta) {
  I.validate();
  auto lw = [&](double s) {
    return log_norm_weight(j1, w.sigma1, s) + log_norm_weight(j2, w.sigma2, s);
  };
  return delta * std::exp(-std::max(lw(I.s1), lw(I.s2)));
}

const HoloNet& AmplitudeNet::net_for(int j1, int j2) const {
  if (j1 < 0 || j2 < 0 || j1 > l_max || j2 > l_max)
    throw std::out_of_range("degree pair beyond l_max");
  return pair_nets[static_cast<std::size_t>(j1) * (l_max + 1) + j2];
}

double AmplitudeNet::log_cardinality() const {
  double acc = 0.0;
  for (int j1 = 0; j1 <= l_max; ++j1)
    for (int j2 = 0; j2 <= l_max; ++j2)
      acc += (2.0 * j1 + 1.0) * (2.0 * j2 + 1.0) * net_for(j1, j2).log_cardinality();
  return acc;
}

std::optional<std::uint64_t> AmplitudeNet::cardinality() const {
  if (log_cardinality() >= kLog2To63) return std::nullopt;
  std::uint64_t acc = 1;
  for (int j1 = 0; j1 <= l_max; ++j1)
    for (int j2 = 0; j2 <= l_max; ++j2) {
      const auto c = net_for(j1, j2).cardinality();
      if (!c) return std::nullopt;
      for (int r = 0; r < (2 * j1 + 1) * (2 * j2 + 1); ++r)
        if (!mul_capped(acc, *c)) return std::nullopt;
    }
  return acc;
}

AmplitudeNet build_amplitude_net(double delta, const NormWeights& w, const EnergyInterval& I,
                                 double h, double c2, double c4) {
  if (!(delta > 0.0 && delta < std::exp(-1.0)))
    throw std::invalid_argument("delta must lie in (0, 1/e)");
  if (!(c2 > 0.0) || !(c4 > 0.0)) throw std::invalid_argument("c2 and c4 must be positive");
  if (!(h >= 0.0)) throw std::invalid_argument("strip half-width must be nonnegative");
  I.validate();
  AmplitudeNet net;
  net.delta = delta;
  net.weights = w;
  net.interval = I;
  net.strip_h = h;
  net.c2 = c2;
  net.c4 = c4;
  net.fixed_energy = I.s1 == I.s2;
  if (!net.fixed_energy) {
    net.domain = {I.s1, I.s2, strip_gamma(I.s1, I.s2, h)};
    net.domain.validate(h);
  }
  net.l_max = truncation_degree(delta, w, c4);
  const int D = net.l_max + 1;
  net.pair_nets.resize(static_cast<std::size_t>(D) * D);
  parallel_for(net.pair_nets.size(), [&](std::size_t k) {
    const int j1 = static_cast<int>(k) / D, j2 = static_cast<int>(k) % D;
    const double tol = interval_tolerance(j1, j2, w, I, delta);
    net.pair_nets[k] =
        net.fixed_energy ? fixed_energy_grid_net(c2, tol) : holo_net(net.domain, c2, tol);
  });
  return net;
}

std::uint64_t NetIndex::hash() const {
  std::uint64_t hsh = 1469598103934665603ull;
  for (std::int64_t c : coords) {
    auto u = static_cast<std::uint64_t>(c);
    for (int b = 0; b < 8; ++b) {
      hsh ^= (u >> (8 * b)) & 0xff;
      hsh *= 1099511628211ull;
    }
  }
  return hsh;
}

NetIndex quantize_to_net(const AmplitudeMatrix& A, const AmplitudeNet& net) {
  if (A.samples() != net.interval.samples)
    throw std::invalid_argument("matrix samples differ from the net's interval");
  if (A.L() < net.l_max) throw std::invalid_argument("matrix degree below the net's l_max");
  const auto& samples = A.samples();
  const int H = A.harmonics();
  NetIndex out;
  std::vector<cplx> vals(samples.size());
  for (int k1 = 0; k1 < H; ++k1) {
    const auto a = HarmonicIndex::from_flat(k1);
    for (int k2 = 0; k2 < H; ++k2) {
      const auto b = HarmonicIndex::from_flat(k2);
      for (std::size_t i = 0; i < samples.size(); ++i) vals[i] = A.at(a, b, i);
      if (a.j <= net.l_max && b.j <= net.l_max) {
        const auto idx = net.net_for(a.j, b.j).quantize(samples, vals);
        out.coords.insert(out.coords.end(), idx.begin(), idx.end());
      } else {
        for (std::size_t i = 0; i < samples.size(); ++i) {
          const double lw = log_norm_weight(a.j, net.weights.sigma1, samples[i]) +
                            log_norm_weight(b.j, net.weights.sigma2, samples[i]);
          out.tail = std::max(out.tail, std::exp(lw) * std::abs(vals[i]));
        }
      }
    }
  }
  return out;
}

AmplitudeMatrix net_point(const NetIndex& idx, const AmplitudeNet& net, int L) {
  if (L < 0) throw std::invalid_argument("degree must be nonnegative");
  const auto& samples = net.interval.samples;
  const int H = harmonic_count(L);
  const int Hn = harmonic_count(net.l_max);
  std::vector<std::vector<cplx>> slices(samples.size(),
                                        std::vector<cplx>(static_cast<std::size_t>(H) * H));
  std::size_t pos = 0;
  HoloIndex local;
  for (int k1 = 0; k1 < Hn; ++k1) {
    const auto a = HarmonicIndex::from_flat(k1);
    for (int k2 = 0; k2 < Hn; ++k2) {
      const auto b = HarmonicIndex::from_flat(k2);
      const HoloNet& hn = net.net_for(a.j, b.j);
      const std::size_t len = 2 * static_cast<std::size_t>(hn.degree + 1);
      if (pos + len > idx.coords.size()) throw std::invalid_argument("index too short for this net");
      if (k1 < H && k2 < H) {
        local.assign(idx.coords.begin() + pos, idx.coords.begin() + pos + len);
        for (std::size_t i = 0; i < samples.size(); ++i)
          slices[i][static_cast<std::size_t>(k1) * H + k2] = hn.evaluate(local, samples[i]);
      }
      pos += len;
    }
  }
  if (pos != idx.coords.size()) throw std::invalid_argument("index length does not match the net");
  return AmplitudeMatrix(L, samples, std::move(slices));
}

std::string net_manifest(const AmplitudeNet& net) {
  nlohmann::ordered_json j;
  j["delta"] = net.delta;
  j["sigma1"] = net.weights.sigma1;
  j["sigma2"] = net.weights.sigma2;
  j["s1"] = net.interval.s1;
  j["s2"] = net.interval.s2;
  j["samples"] = net.interval.samples;
  j["strip_h"] = net.strip_h;
  j["c2"] = net.c2;
  j["c4"] = net.c4;
  j["l_max"] = net.l_max;
  j["fixed_energy"] = net.fixed_energy;
  if (!net.fixed_energy) j["gamma"] = net.domain.gamma;
  j["log_cardinality"] = net.log_cardinality();
  if (auto c = net.cardinality()) j["cardinality"] = *c;
  auto pairs = nlohmann::ordered_json::array();
  for (int j1 = 0; j1 <= net.l_max; ++j1)
    for (int j2 = 0; j2 <= net.l_max; ++j2) {
      const HoloNet& hn = net.net_for(j1, j2);
      nlohmann::ordered_json p;
      p["j1"] = j1;
      p["j2"] = j2;
      p["multiplicity"] = (2 * j1 + 1) * (2 * j2 + 1);
      p["tolerance"] = hn.delta;
      p["degree"] = hn.degree;
      p["step"] = hn.step;
      p["half_range"] = hn.half_range;
      p["log_cardinality"] = hn.log_cardinality();
      pairs.push_back(std::move(p));
    }
  j["pairs"] = std::move(pairs);
  return j.dump(2);
}

}  // namespace scatlab
