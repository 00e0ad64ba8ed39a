#include <scatlab/experiments.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace scatlab;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> grid_n;
  std::optional<double> h, s1, s2;
  std::optional<int> s_samples;
  std::optional<double> sigma1, sigma2;
  std::optional<int> m;
  std::optional<double> beta, epsilon, alpha, delta;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> L;
};

void add_common(CLI::App* cmd, Overrides& o) {
  // --h is the strip half-width
  cmd->set_help_flag("--help", "Print this help message and exit");
  cmd->add_option("-c,--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--grid-n", o.grid_n, "voxels per axis");
  cmd->add_option("--h", o.h, "strip half-width");
  cmd->add_option("--s1", o.s1, "lower wavenumber");
  cmd->add_option("--s2", o.s2, "upper wavenumber");
  cmd->add_option("--s-samples", o.s_samples, "wavenumber samples");
  cmd->add_option("--sigma1", o.sigma1);
  cmd->add_option("--sigma2", o.sigma2);
  cmd->add_option("--m", o.m, "smoothness order");
  cmd->add_option("--beta", o.beta, "C^m budget");
  cmd->add_option("--epsilon", o.epsilon, "L-infinity amplitude");
  cmd->add_option("--alpha", o.alpha, "coupling exponent");
  cmd->add_option("--delta", o.delta, "net radius");
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--L", o.L, "truncation degree");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.grid_n) c.grid_n = *o.grid_n;
  if (o.h) c.h = *o.h;
  if (o.s1) c.s1 = *o.s1;
  if (o.s2) c.s2 = *o.s2;
  if (o.s_samples) c.s_samples = *o.s_samples;
  if (o.sigma1) c.sigma1 = *o.sigma1;
  if (o.sigma2) c.sigma2 = *o.sigma2;
  if (o.m) c.m = *o.m;
  if (o.beta) c.beta = *o.beta;
  if (o.epsilon) c.epsilon = *o.epsilon;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.delta) c.delta = *o.delta;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.L) c.L = *o.L;
  c.validate();
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_forward(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_forward(cfg);
  write_forward_report(cfg, r);
  write_timings(cfg, "forward", seconds_since(t0));
  for (const auto& row : r.rows)
    std::printf("s=%.6g  stefanov=%.6e  decay C=%.4e %s\n", row.s, row.stefanov_norm, row.decay_C,
                row.decay_pass ? "pass" : "FAIL");
  if (!r.far_field.discrepancy.empty())
    std::printf("far field: relative amplitude error %.3e at R=%g\n",
                r.far_field.relative_amplitude_error.back(), r.far_field.radii.back());
  return 0;
}

int cmd_pigeonhole(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_pigeonhole(cfg);
  write_pigeonhole_report(cfg, r);
  write_timings(cfg, "pigeonhole", seconds_since(t0));
  std::printf("members %zu  net log-cardinality %.4g  delta %.4g\n", r.member_count,
              r.net_log_cardinality, r.delta);
  std::printf("%s pair (%llu, %llu): net distance %.3e (2 delta %.3e), Linf %.4g\n",
              r.collision ? "collision" : "nearest", static_cast<unsigned long long>(r.member_a),
              static_cast<unsigned long long>(r.member_b), r.net_distance, 2 * r.delta,
              r.linf_pair);
  std::printf("checks: stefanov %d separation %d closeness %d smoothness %d -> %s\n",
              r.check_stefanov, r.check_separation, r.check_closeness, r.check_smoothness,
              r.pass ? "pass" : "FAIL");
  if (!r.pass) throw ExperimentFailure("pigeonhole pair fails the distance or inequality checks");
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_sweep(cfg);
  write_sweep_report(cfg, rows);
  write_timings(cfg, "sweep", seconds_since(t0));
  std::fputs(sweep_csv(rows).c_str(), stdout);
  return 0;
}

int cmd_net_count(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_net_count(cfg);
  write_count_report(cfg, r);
  write_timings(cfg, "net-count", seconds_since(t0));
  for (const auto& row : r.nets)
    std::printf("delta=%.3g  l_max=%d  log|Y|=%.6g  fixed=%.6g\n", row.delta, row.l_max,
                row.log_cardinality, row.log_cardinality_fixed);
  for (const auto& row : r.packings)
    std::printf("epsilon=%.3g  k=%d  log|Z|=%.6g\n", row.epsilon, row.k, row.log_member_count);
  std::printf("packing slope %.4f (expected %.4f)  net exponents %.3f / %.3f\n", r.packing_slope,
              cfg.m > 0 ? 3.0 / cfg.m : 0.0, r.net_exponent, r.net_exponent_fixed);
  return 0;
}

int cmd_stability(const ExperimentConfig& cfg, const std::string& pair, std::optional<double> t,
                  std::optional<double> vdist) {
  if (!pair.empty()) {
    std::ifstream in(pair);
    if (!in) throw IoError("cannot open pair report " + pair);
    nlohmann::json j;
    try {
      in >> j;
      if (!t) t = j.at("diagnostic_t").get<double>();
      if (!vdist) vdist = j.at("linf_pair").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("pair report " + pair + " is malformed: " + e.what());
    }
  }
  if (!t || !vdist) throw std::invalid_argument("stability-diag needs --pair or both --t and --vdist");
  const StabilityModulus phi{cfg.delta_exponent};
  const double ratio = stability_ratio(*vdist, *t, phi);
  nlohmann::ordered_json j;
  j["command"] = "stability-diag";
  j["delta_exponent"] = cfg.delta_exponent;
  j["t"] = *t;
  j["linf_distance"] = *vdist;
  j["phi"] = phi(*t);
  j["ratio"] = ratio;
  std::filesystem::create_directories(cfg.out);
  const auto path = (std::filesystem::path(cfg.out) / "stability.json").string();
  {
    std::ofstream out(path + ".tmp");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + path);
  }
  std::filesystem::rename(path + ".tmp", path);
  std::printf("phi(t)=%.6e  ratio=%.6e\n", phi(*t), ratio);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scattering-amplitude stability experiments"};
  app.require_subcommand(1);
  app.set_help_flag("-h,--help", "Print this help message and exit");
  Overrides o;
  auto* forward = app.add_subcommand("forward", "amplitudes, norms, decay fit, far-field check");
  auto* pigeon = app.add_subcommand("pigeonhole", "packing vs amplitude net collision search");
  auto* sweep = app.add_subcommand("sweep", "amplitude distance of angular perturbations");
  auto* stab = app.add_subcommand("stability-diag", "ratio against the logarithmic modulus");
  auto* count = app.add_subcommand("net-count", "packing and net cardinalities");
  for (auto* cmd : {forward, pigeon, sweep, stab, count}) add_common(cmd, o);
  std::string pair;
  std::optional<double> t, vdist, delta_exponent;
  stab->add_option("--pair", pair, "pigeonhole manifest.json");
  stab->add_option("--t", t, "amplitude distance at weights (3/2, -1/2)");
  stab->add_option("--vdist", vdist, "L-infinity distance of the potentials");
  stab->add_option("--delta-exponent", delta_exponent, "exponent of the modulus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = resolve(o);
    if (delta_exponent) {
      cfg.delta_exponent = *delta_exponent;
      cfg.validate();
    }
    if (*forward) return cmd_forward(cfg);
    if (*pigeon) return cmd_pigeonhole(cfg);
    if (*sweep) return cmd_sweep(cfg);
    if (*count) return cmd_net_count(cfg);
    if (*stab) return cmd_stability(cfg, pair, t, vdist);
  } catch (const PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return 2;
  } catch (const ExperimentFailure& e) {
    std::cerr << "experiment failed: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const ConvergenceError& e) {
    std::cerr << "solver did not converge: " << e.what() << " (residual " << e.last_residual()
              << ")\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
