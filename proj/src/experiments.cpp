#include <scatlab/experiments.hpp>

#include "binary_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

namespace scatlab {

using json = nlohmann::ordered_json;

namespace {

const char* sweep_name(SweepParameter p) { return p == SweepParameter::degree ? "degree" : "epsilon"; }

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json bump_json(const Bump& b) {
  return {{"center", {b.center.x, b.center.y, b.center.z}}, {"scale", b.scale},
          {"amplitude", b.amplitude}};
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["grid_n"] = c.grid_n;
  j["h"] = c.h;
  j["s1"] = c.s1;
  j["s2"] = c.s2;
  j["s_samples"] = c.s_samples;
  j["sigma1"] = c.sigma1;
  j["sigma2"] = c.sigma2;
  j["m"] = c.m;
  j["beta"] = c.beta;
  j["epsilon"] = c.epsilon;
  j["epsilon_list"] = c.epsilon_list;
  j["delta"] = c.delta ? json(*c.delta) : json(nullptr);
  j["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
  j["coupling_c"] = c.coupling_c;
  j["delta_list"] = c.delta_list;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["L"] = c.L;
  j["rho"] = c.rho;
  j["bumps"] = json::array();
  for (const Bump& b : c.bumps) j["bumps"].push_back(bump_json(b));
  j["far_field_radii"] = c.far_field_radii;
  j["sweep_parameter"] = sweep_name(c.sweep_parameter);
  j["sweep_degrees"] = c.sweep_degrees;
  j["sweep_amplitude"] = c.sweep_amplitude;
  j["max_members"] = c.max_members;
  j["c2"] = c.c2;
  j["c4"] = c.c4;
  j["calibration_margin"] = c.calibration_margin;
  j["delta_exponent"] = c.delta_exponent;
  return j;
}

template <class T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

template <class T>
void take_optional(const json& j, const char* key, std::optional<T>& field) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null())
    field.reset();
  else
    field = j.at(key).get<T>();
}

void write_text(const std::string& path, const std::string& text) {
  detail::write_file_atomically(path, [&](std::ostream& out) { out << text; });
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out + ": " + ec.message());
  return (std::filesystem::path(cfg.out) / name).string();
}

// Largest weighted |a| · 2^d / (2d+1)^{σ1+σ2} with d = max(j1, j2): the c4 of the
// tail bound c4 (2l+1)^{σ1+σ2} 2^{-l}.
double tail_constant(const AmplitudeMatrix& A, const NormWeights& w) {
  const int H = A.harmonics();
  const double sigma = w.sigma1 + w.sigma2;
  double best = 0.0;
  for (std::size_t si = 0; si < A.samples().size(); ++si) {
    const double s = A.samples()[si];
    const auto& a = A.slice(si);
    for (int k1 = 0; k1 < H; ++k1) {
      const int j1 = HarmonicIndex::from_flat(k1).j;
      for (int k2 = 0; k2 < H; ++k2) {
        const int j2 = HarmonicIndex::from_flat(k2).j;
        const double m = std::abs(a[static_cast<std::size_t>(k1) * H + k2]);
        if (m == 0.0) continue;
        const int d = std::max(j1, j2);
        const double lw = log_norm_weight(j1, w.sigma1, s) + log_norm_weight(j2, w.sigma2, s);
        best = std::max(best, std::exp(lw + std::log(m) + d * std::log(2.0) -
                                       sigma * std::log(2.0 * d + 1.0)));
      }
    }
  }
  return best;
}

double max_abs_entry(const std::vector<cplx>& v) {
  double m = 0.0;
  for (const cplx& z : v) m = std::max(m, std::abs(z));
  return m;
}

double sup_stefanov_distance(const AmplitudeMatrix& A, const AmplitudeMatrix& B,
                             const NormWeights& w) {
  double best = 0.0;
  for (double s : A.samples()) best = std::max(best, stefanov_distance(A, B, s, w));
  return best;
}

}  // namespace

// ------------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  if (grid_n < 8 || grid_n % 2) throw std::invalid_argument("grid_n must be even and >= 8");
  if (!(h >= 0.0)) throw std::invalid_argument("h must be nonnegative");
  interval().validate();
  if (s_samples < 1) throw std::invalid_argument("s_samples must be positive");
  if (m < 0) throw std::invalid_argument("m must be nonnegative");
  if (!(beta > 0.0) || !(epsilon > 0.0)) throw std::invalid_argument("beta and epsilon must be positive");
  for (double e : epsilon_list)
    if (!(e > 0.0)) throw std::invalid_argument("epsilon_list entries must be positive");
  if (delta && !(*delta > 0.0 && *delta < std::exp(-1.0)))
    throw std::invalid_argument("delta must lie in (0, 1/e)");
  for (double d : delta_list)
    if (!(d > 0.0 && d < std::exp(-1.0))) throw std::invalid_argument("delta_list entries must lie in (0, 1/e)");
  if (alpha && !(*alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(coupling_c > 0.0)) throw std::invalid_argument("coupling_c must be positive");
  if (L < 0) throw std::invalid_argument("L must be nonnegative");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (!(sweep_amplitude >= 0.0)) throw std::invalid_argument("sweep_amplitude must be nonnegative");
  for (int n : sweep_degrees)
    if (n < 0) throw std::invalid_argument("sweep degrees must be nonnegative");
  if (max_members < 2) throw std::invalid_argument("max_members must be at least 2");
  if (!(c2 > 0.0) || !(c4 > 0.0)) throw std::invalid_argument("c2 and c4 must be positive");
  if (!(calibration_margin >= 1.0)) throw std::invalid_argument("calibration_margin must be >= 1");
  if (!(delta_exponent > 0.0 && delta_exponent < 1.0))
    throw std::invalid_argument("delta_exponent must lie in (0, 1)");
  for (double r : far_field_radii)
    if (!(r > 0.0)) throw std::invalid_argument("far-field radii must be positive");
}

EnergyInterval ExperimentConfig::interval() const {
  if (s1 == s2) return EnergyInterval::uniform(s1, s2, 1);
  if (s_samples < 2) return {s1, s2, {s1}};
  return EnergyInterval::uniform(s1, s2, s_samples);
}

Potential ExperimentConfig::background() const {
  const VoxelGrid g = grid();
  Potential v = Potential::zero(g);
  for (const Bump& b : bumps) v = v.plus(make_bump(g, b.center, b.scale, b.amplitude, m));
  return v;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ExperimentConfig c;
  const json known = config_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("unknown config key: " + key);
  try {
    take(j, "grid_n", c.grid_n);
    take(j, "h", c.h);
    take(j, "s1", c.s1);
    take(j, "s2", c.s2);
    take(j, "s_samples", c.s_samples);
    take(j, "sigma1", c.sigma1);
    take(j, "sigma2", c.sigma2);
    take(j, "m", c.m);
    take(j, "beta", c.beta);
    take(j, "epsilon", c.epsilon);
    take(j, "epsilon_list", c.epsilon_list);
    take_optional(j, "delta", c.delta);
    take_optional(j, "alpha", c.alpha);
    take(j, "coupling_c", c.coupling_c);
    take(j, "delta_list", c.delta_list);
    take(j, "seed", c.seed);
    take(j, "out", c.out);
    take(j, "L", c.L);
    take(j, "rho", c.rho);
    if (j.contains("bumps")) {
      c.bumps.clear();
      for (const auto& b : j.at("bumps")) {
        const auto ctr = b.at("center").get<std::vector<double>>();
        if (ctr.size() != 3) throw std::invalid_argument("bump center needs 3 coordinates");
        c.bumps.push_back({{ctr[0], ctr[1], ctr[2]}, b.at("scale").get<double>(),
                           b.at("amplitude").get<double>()});
      }
    }
    take(j, "far_field_radii", c.far_field_radii);
    if (j.contains("sweep_parameter")) {
      const auto p = j.at("sweep_parameter").get<std::string>();
      if (p == "degree")
        c.sweep_parameter = SweepParameter::degree;
      else if (p == "epsilon")
        c.sweep_parameter = SweepParameter::epsilon;
      else
        throw std::invalid_argument("sweep_parameter must be \"degree\" or \"epsilon\"");
    }
    take(j, "sweep_degrees", c.sweep_degrees);
    take(j, "sweep_amplitude", c.sweep_amplitude);
    take(j, "max_members", c.max_members);
    take(j, "c2", c.c2);
    take(j, "c4", c.c4);
    take(j, "calibration_margin", c.calibration_margin);
    take(j, "delta_exponent", c.delta_exponent);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2); }

double default_alpha(int m, bool fixed_energy) {
  return fixed_energy ? 5.0 * m / 3.0 + 1.0 : 2.0 * m + 1.0;
}

double coupled_delta(double epsilon, double alpha, double c3, double c) {
  if (!(epsilon > 0.0) || !(alpha > 0.0) || !(c3 > 0.0) || !(c > 0.0))
    throw std::invalid_argument("coupling needs positive epsilon, alpha, c3 and c");
  return std::exp(-c * std::pow(epsilon, -1.0 / alpha)) / (2.0 * c3);
}

double StabilityModulus::operator()(double t) const {
  if (!(t > 0.0 && t < std::exp(-1.0)))
    throw std::domain_error("modulus undefined: t must lie in (0, 1/e)");
  return std::pow(-std::log(t), -delta_exponent);
}

double stability_ratio(double linf_distance, double t, const StabilityModulus& phi) {
  return linf_distance / phi(t);
}

Potential angular_perturbation(const VoxelGrid& grid, int degree, double amplitude) {
  if (degree < 0) throw std::invalid_argument("angular degree must be nonnegative");
  const HarmonicIndex idx{degree, 1};
  const Potential raw = sample_potential(grid, kSupportLimit, [&](const Vec3& x) {
    const double r = norm(x);
    if (r == 0.0) return 0.0;
    const double t = (r - 0.25) / 0.2;
    return mollifier(t * t) * eval_harmonic(idx, x * (1.0 / r));
  });
  const double peak = raw.linf_norm();
  if (peak == 0.0 || amplitude == 0.0) return Potential::zero(grid);
  return raw.scaled(amplitude / peak);
}

// ------------------------------------------------------------------ forward

ForwardReport run_forward(const ExperimentConfig& cfg) {
  cfg.validate();
  const Potential v = cfg.background();
  const EnergyInterval I = cfg.interval();
  ForwardReport r;
  r.contraction = check_contraction(v, cfg.h);
  if (r.contraction > 0.5)
    throw PreconditionError("contraction condition violated: c1(h) ||v|| = " + fmt(r.contraction));
  r.amplitude = compute_amplitude_matrix(v, I, cfg.h, cfg.L);
  for (double s : I.samples) {
    DecayFit fit = decay_bound_check(*r.amplitude, s, cfg.rho);
    r.rows.push_back({s, stefanov_norm(*r.amplitude, s, cfg.weights()), fit.C, fit.pass});
    r.decay.push_back(std::move(fit));
  }
  const auto dirs = far_field_directions();
  r.samples.resize(I.samples.size());
  parallel_for(I.samples.size(), [&](std::size_t si) {
    const auto mus = solve_mu_batch(v, I.samples[si], cfg.h, dirs);
    for (std::size_t a = 0; a < dirs.size(); ++a)
      for (const Vec3& w : dirs) r.samples[si].push_back(scattering_amplitude(v, mus[a], w));
  });
  if (!cfg.far_field_radii.empty())
    r.far_field = far_field_report(v, IncidentWave{{0.0, 0.0, 1.0}, I.s1, cfg.h},
                                   cfg.far_field_radii);
  return r;
}

// --------------------------------------------------------------- pigeonhole

double resolve_delta(const ExperimentConfig& cfg, double c3) {
  if (cfg.delta) return *cfg.delta;
  if (cfg.alpha) return coupled_delta(cfg.epsilon, *cfg.alpha, c3, cfg.coupling_c);
  return kCoarseDelta;
}

PigeonholeReport run_pigeonhole(const ExperimentConfig& cfg) {
  cfg.validate();
  const VoxelGrid grid = cfg.grid();
  const EnergyInterval I = cfg.interval();
  const NormWeights w = cfg.weights();
  const NormWeights w_net{w.sigma1 + 3.0, w.sigma2 + 3.0};
  const Potential v0 = cfg.background();
  const PackingFamily fam = build_packing(cfg.budget(), &grid);

  PigeonholeReport r;
  r.packing_k = fam.k;
  std::vector<std::uint64_t> members;
  if (fam.bump_count() < 63 && (std::uint64_t{1} << fam.bump_count()) <= cfg.max_members) {
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << fam.bump_count()); ++i) members.push_back(i);
  } else {
    if (fam.bump_count() > 64) throw PreconditionError("packing too large to index members");
    std::mt19937_64 rng(cfg.seed);
    std::unordered_map<std::uint64_t, bool> taken;
    const std::uint64_t mask =
        fam.bump_count() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << fam.bump_count()) - 1;
    while (members.size() < cfg.max_members) {
      const std::uint64_t idx = rng() & mask;
      if (taken.emplace(idx, true).second) members.push_back(idx);
    }
    std::sort(members.begin(), members.end());
  }
  r.member_count = members.size();

  std::vector<Potential> potentials;
  potentials.reserve(members.size());
  for (std::uint64_t idx : members) potentials.push_back(v0.plus(fam.member(grid, idx)));
  for (const Potential& v : potentials)
    if (check_contraction(v, cfg.h) > 0.5)
      throw PreconditionError("packing member violates the contraction condition");

  std::vector<std::optional<AmplitudeMatrix>> mats(potentials.size());
  parallel_for(potentials.size(), [&](std::size_t i) {
    mats[i] = compute_amplitude_matrix(potentials[i], I, cfg.h, cfg.L);
  });

  // c2 bounds |a| on the strip; sample the far edge Im s = h as well
  double c2 = 0.0, c4 = 0.0;
  for (const auto& A : mats) {
    for (std::size_t si = 0; si < A->samples().size(); ++si)
      c2 = std::max(c2, max_abs_entry(A->slice(si)));
    c4 = std::max(c4, tail_constant(*A, w_net));
  }
  if (cfg.h > 0.0) {
    const std::size_t probes = std::min<std::size_t>(4, potentials.size());
    std::vector<double> edge(probes);
    parallel_for(probes, [&](std::size_t i) {
      const cplx s{0.5 * (I.s1 + I.s2), cfg.h};
      edge[i] = max_abs_entry(compute_amplitude_slice(potentials[i], s, cfg.h, cfg.L).coeffs);
    });
    for (double e : edge) c2 = std::max(c2, e);
  }
  if (!(c2 > 0.0)) throw PreconditionError("all packing amplitudes vanish; nothing to calibrate");
  r.c2 = cfg.calibration_margin * c2;
  r.c4 = cfg.calibration_margin * c4;
  r.c3 = c3_constant(I);
  r.delta = resolve_delta(cfg, r.c3);

  const AmplitudeNet net = build_amplitude_net(r.delta, w_net, I, cfg.h, r.c2, r.c4);
  if (net.l_max > cfg.L)
    throw std::invalid_argument("net truncation degree " + std::to_string(net.l_max) +
                                " exceeds L = " + std::to_string(cfg.L));
  r.l_max = net.l_max;
  r.net_log_cardinality = net.log_cardinality();
  r.net_cardinality = net.cardinality();

  std::vector<NetIndex> cells(mats.size());
  parallel_for(mats.size(), [&](std::size_t i) { cells[i] = quantize_to_net(*mats[i], net); });
  std::unordered_map<NetIndex, std::size_t, NetIndexHash> first;
  std::optional<std::pair<std::size_t, std::size_t>> pair;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    r.max_tail = std::max(r.max_tail, cells[i].tail);
    r.cells.emplace_back(members[i], cells[i].hash());
    auto [it, inserted] = first.emplace(cells[i], i);
    if (!inserted && !pair) pair = {it->second, i};
  }
  r.collision = pair.has_value();
  if (!pair) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < mats.size(); ++a)
      for (std::size_t b = a + 1; b < mats.size(); ++b) {
        const double d = interval_distance(*mats[a], *mats[b], I, w_net);
        if (d < best) {
          best = d;
          pair = {a, b};
        }
      }
  }
  const auto [a, b] = *pair;
  const AmplitudeMatrix& A = *mats[a];
  const AmplitudeMatrix& B = *mats[b];
  r.member_a = members[a];
  r.member_b = members[b];
  r.net_distance = interval_distance(A, B, I, w_net);
  r.stefanov_sup = sup_stefanov_distance(A, B, w);
  r.stefanov_bound = 2.0 * r.c3 * r.delta;
  r.diagnostic_t = sup_stefanov_distance(A, B, {1.5, -0.5});
  r.linf_pair = linf_distance(potentials[a], potentials[b]);
  r.linf_to_background =
      std::max(linf_distance(potentials[a], v0), linf_distance(potentials[b], v0));
  const int m_est = cfg.m;
  r.cm_estimate = std::max(cm_norm_estimate(fam.member(grid, members[a]), m_est),
                           cm_norm_estimate(fam.member(grid, members[b]), m_est));

  constexpr double rel = 1e-12;
  r.check_stefanov = r.stefanov_sup <= r.stefanov_bound;
  r.check_separation = r.linf_pair >= cfg.epsilon * (1.0 - rel);
  r.check_closeness = r.linf_to_background <= cfg.epsilon * (1.0 + rel);
  r.check_smoothness = r.cm_estimate <= cfg.beta * (1.0 + rel);
  r.pass = r.net_distance <= 2.0 * r.delta && r.check_stefanov && r.check_separation &&
           r.check_closeness && r.check_smoothness;
  return r;
}

// -------------------------------------------------------------------- sweep

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.m > kMaxFiniteDifferenceOrder)
    throw std::invalid_argument("sweep C^m estimates need m <= 4");
  if (cfg.sweep_degrees.empty()) throw std::invalid_argument("sweep needs at least one degree");
  const VoxelGrid grid = cfg.grid();
  const EnergyInterval I = cfg.interval();
  const Potential v0 = cfg.background();

  std::vector<std::pair<int, double>> params;
  if (cfg.sweep_parameter == SweepParameter::degree) {
    for (int n : cfg.sweep_degrees) params.emplace_back(n, cfg.sweep_amplitude);
  } else {
    if (cfg.epsilon_list.empty()) throw std::invalid_argument("epsilon sweep needs epsilon_list");
    for (double e : cfg.epsilon_list) params.emplace_back(cfg.sweep_degrees.front(), e);
  }

  std::vector<SweepRow> rows;
  for (const auto& [n, eps] : params) {
    const Potential wn = angular_perturbation(grid, n, eps);
    const Potential v1 = v0.plus(wn);
    const Potential v2 = v0.plus(wn.scaled(-1.0));
    if (check_contraction(v1, cfg.h) > 0.5 || check_contraction(v2, cfg.h) > 0.5)
      throw PreconditionError("sweep potential violates the contraction condition");
    std::optional<AmplitudeMatrix> A1, A2;
    parallel_for(2, [&](std::size_t k) {
      (k == 0 ? A1 : A2) = compute_amplitude_matrix(k == 0 ? v1 : v2, I, cfg.h, cfg.L);
    });
    SweepRow row;
    row.degree = n;
    row.epsilon = eps;
    row.linf_distance = linf_distance(v1, v2);
    row.cm_estimate = cm_norm_estimate(wn, cfg.m);
    for (double s : I.samples) {
      row.per_sample.push_back(stefanov_distance(*A1, *A2, s, cfg.weights()));
      row.stefanov_sup = std::max(row.stefanov_sup, row.per_sample.back());
    }
    row.floor_limited = row.stefanov_sup < kNumericFloor;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------- net count

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope fit needs two points");
  const double n = static_cast<double>(x.size());
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm += x[i] / n;
    ym += y[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - xm) * (y[i] - ym);
    sxx += (x[i] - xm) * (x[i] - xm);
  }
  if (sxx == 0.0) throw std::invalid_argument("slope fit needs distinct abscissae");
  return sxy / sxx;
}

CountReport run_net_count(const ExperimentConfig& cfg) {
  cfg.validate();
  CountReport r;
  const EnergyInterval I = cfg.interval();
  const EnergyInterval fixed = EnergyInterval::uniform(cfg.s1, cfg.s1, 1);
  const std::vector<double> deltas =
      cfg.delta_list.empty() ? std::vector<double>{1e-1, 1e-2, 1e-3, 1e-4} : cfg.delta_list;
  const double h = cfg.h > 0.0 ? cfg.h : 0.2;
  r.nets.resize(deltas.size());
  parallel_for(deltas.size(), [&](std::size_t i) {
    NetCountRow& row = r.nets[i];
    row.delta = deltas[i];
    const auto fixed_net = build_amplitude_net(deltas[i], cfg.weights(), fixed, h, cfg.c2, cfg.c4);
    row.l_max = fixed_net.l_max;
    row.log_cardinality_fixed = fixed_net.log_cardinality();
    row.log_cardinality = I.s1 == I.s2
                              ? row.log_cardinality_fixed
                              : build_amplitude_net(deltas[i], cfg.weights(), I, h, cfg.c2, cfg.c4)
                                    .log_cardinality();
  });
  std::vector<double> lx, ly, lyf;
  for (const auto& row : r.nets) {
    const double L = std::log(1.0 / row.delta);
    const double ll = 1.0 + std::log(L);
    r.eta = std::max(r.eta, row.log_cardinality / (std::pow(L, 6) * ll * ll));
    r.eta_fixed = std::max(r.eta_fixed, row.log_cardinality_fixed / (std::pow(L, 5) * ll));
    lx.push_back(std::log(L));
    ly.push_back(std::log(row.log_cardinality));
    lyf.push_back(std::log(row.log_cardinality_fixed));
  }
  if (lx.size() >= 2) {
    r.net_exponent = fit_slope(lx, ly);
    r.net_exponent_fixed = fit_slope(lx, lyf);
  }

  std::vector<double> eps = cfg.epsilon_list;
  if (eps.empty())
    for (int j = 0; j < 5; ++j) eps.push_back(cfg.epsilon * std::pow(10.0, -j));
  std::vector<double> px, py;
  for (double e : eps) {
    const SmoothnessBudget b{cfg.m, cfg.beta, e};
    const int k = packing_lattice_k(b);
    const double count = std::pow(static_cast<double>(k), 3) * std::log(2.0);
    r.packings.push_back({e, k, count});
    if (k > 0) {
      px.push_back(std::log(cfg.beta / e));
      py.push_back(std::log(count));
    }
  }
  if (px.size() >= 2) r.packing_slope = fit_slope(px, py);
  return r;
}

// ------------------------------------------------------------------ reports

void write_forward_report(const ExperimentConfig& cfg, const ForwardReport& r) {
  std::ostringstream csv;
  csv << "s,stefanov_norm,decay_C,decay_pass\n";
  for (const auto& row : r.rows)
    csv << fmt(row.s) << ',' << fmt(row.stefanov_norm) << ',' << fmt(row.decay_C) << ','
        << (row.decay_pass ? 1 : 0) << '\n';
  write_text(out_path(cfg, "forward.csv"), csv.str());

  std::ostringstream decay;
  decay << "s,degree,max_abs,envelope\n";
  for (std::size_t i = 0; i < r.decay.size(); ++i)
    for (std::size_t d = 0; d < r.decay[i].degree_max.size(); ++d)
      decay << fmt(r.rows[i].s) << ',' << d << ',' << fmt(r.decay[i].degree_max[d]) << ','
            << fmt(r.decay[i].degree_envelope[d]) << '\n';
  write_text(out_path(cfg, "decay.csv"), decay.str());

  const auto dirs = far_field_directions();
  std::ostringstream amp;
  amp << "s,theta,omega,re,im\n";
  for (std::size_t si = 0; si < r.samples.size(); ++si)
    for (std::size_t a = 0; a < dirs.size(); ++a)
      for (std::size_t b = 0; b < dirs.size(); ++b) {
        const cplx f = r.samples[si][a * dirs.size() + b];
        amp << fmt(r.rows[si].s) << ',' << a << ',' << b << ',' << fmt(f.real()) << ','
            << fmt(f.imag()) << '\n';
      }
  write_text(out_path(cfg, "amplitude_samples.csv"), amp.str());

  if (r.amplitude) save_amplitude_matrix(out_path(cfg, "amplitude.bin"), *r.amplitude, cfg.weights());

  json j;
  j["command"] = "forward";
  j["config"] = config_json(cfg);
  j["contraction"] = r.contraction;
  j["L"] = r.amplitude ? r.amplitude->L() : 0;
  j["rows"] = json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"s", row.s},
                         {"stefanov_norm", row.stefanov_norm},
                         {"decay_C", row.decay_C},
                         {"decay_pass", row.decay_pass}});
  j["far_field"] = {{"radii", r.far_field.radii},
                    {"discrepancy", r.far_field.discrepancy},
                    {"relative_amplitude_error", r.far_field.relative_amplitude_error}};
  write_text(out_path(cfg, "manifest.json"), j.dump(2) + "\n");
}

std::string pigeonhole_manifest(const ExperimentConfig& cfg, const PigeonholeReport& r) {
  json j;
  j["command"] = "pigeonhole";
  j["config"] = config_json(cfg);
  j["member_count"] = r.member_count;
  j["packing_k"] = r.packing_k;
  j["delta"] = r.delta;
  j["c2"] = r.c2;
  j["c3"] = r.c3;
  j["c4"] = r.c4;
  j["l_max"] = r.l_max;
  j["net_log_cardinality"] = r.net_log_cardinality;
  j["net_cardinality"] = r.net_cardinality ? json(*r.net_cardinality) : json(nullptr);
  j["collision"] = r.collision;
  j["member_a"] = r.member_a;
  j["member_b"] = r.member_b;
  j["net_distance"] = r.net_distance;
  j["stefanov_sup"] = r.stefanov_sup;
  j["stefanov_bound"] = r.stefanov_bound;
  j["diagnostic_t"] = r.diagnostic_t;
  j["linf_pair"] = r.linf_pair;
  j["linf_to_background"] = r.linf_to_background;
  j["cm_estimate"] = r.cm_estimate;
  j["max_tail"] = r.max_tail;
  j["checks"] = {{"stefanov", r.check_stefanov},
                 {"separation", r.check_separation},
                 {"closeness", r.check_closeness},
                 {"smoothness", r.check_smoothness}};
  j["pass"] = r.pass;
  return j.dump(2) + "\n";
}

void write_pigeonhole_report(const ExperimentConfig& cfg, const PigeonholeReport& r) {
  std::ostringstream csv;
  csv << "member,cell_hash\n";
  for (const auto& [member, hash] : r.cells) csv << member << ',' << hash << '\n';
  write_text(out_path(cfg, "pigeonhole.csv"), csv.str());
  write_text(out_path(cfg, "manifest.json"), pigeonhole_manifest(cfg, r));
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream csv;
  csv << "degree,epsilon,linf_distance,cm_estimate,stefanov_sup,floor_limited";
  const std::size_t samples = rows.empty() ? 0 : rows.front().per_sample.size();
  for (std::size_t i = 0; i < samples; ++i) csv << ",stefanov_s" << i;
  csv << '\n';
  for (const auto& row : rows) {
    csv << row.degree << ',' << fmt(row.epsilon) << ',' << fmt(row.linf_distance) << ','
        << fmt(row.cm_estimate) << ',';
    if (row.floor_limited)
      csv << "<=" << fmt(kNumericFloor) << ",1";
    else
      csv << fmt(row.stefanov_sup) << ",0";
    for (double d : row.per_sample) csv << ',' << (d < kNumericFloor ? "<=" + fmt(kNumericFloor) : fmt(d));
    csv << '\n';
  }
  return csv.str();
}

void write_sweep_report(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows) {
  write_text(out_path(cfg, "sweep.csv"), sweep_csv(rows));
  json j;
  j["command"] = "sweep";
  j["config"] = config_json(cfg);
  j["numeric_floor"] = kNumericFloor;
  j["rows"] = json::array();
  for (const auto& row : rows)
    j["rows"].push_back({{"degree", row.degree},
                         {"epsilon", row.epsilon},
                         {"linf_distance", row.linf_distance},
                         {"cm_estimate", row.cm_estimate},
                         {"stefanov_sup", row.stefanov_sup},
                         {"per_sample", row.per_sample},
                         {"floor_limited", row.floor_limited}});
  write_text(out_path(cfg, "manifest.json"), j.dump(2) + "\n");
}

void write_count_report(const ExperimentConfig& cfg, const CountReport& r) {
  std::ostringstream nets;
  nets << "delta,l_max,log_cardinality,log_cardinality_fixed\n";
  for (const auto& row : r.nets)
    nets << fmt(row.delta) << ',' << row.l_max << ',' << fmt(row.log_cardinality) << ','
         << fmt(row.log_cardinality_fixed) << '\n';
  write_text(out_path(cfg, "net_count.csv"), nets.str());
  std::ostringstream packs;
  packs << "epsilon,k,log_member_count\n";
  for (const auto& row : r.packings)
    packs << fmt(row.epsilon) << ',' << row.k << ',' << fmt(row.log_member_count) << '\n';
  write_text(out_path(cfg, "packing_count.csv"), packs.str());
  json j;
  j["command"] = "net-count";
  j["config"] = config_json(cfg);
  j["packing_slope"] = r.packing_slope;
  j["packing_slope_expected"] = cfg.m > 0 ? 3.0 / cfg.m : 0.0;
  j["net_exponent"] = r.net_exponent;
  j["net_exponent_fixed"] = r.net_exponent_fixed;
  j["eta"] = r.eta;
  j["eta_fixed"] = r.eta_fixed;
  write_text(out_path(cfg, "manifest.json"), j.dump(2) + "\n");
}

void write_timings(const ExperimentConfig& cfg, const std::string& command, double seconds) {
  json j;
  j["command"] = command;
  j["seconds"] = seconds;
  j["workers"] = worker_count();
  write_text(out_path(cfg, "timings.json"), j.dump(2) + "\n");
}

}  // namespace scatlab
