#pragma once

#include <scatlab/amplitude_space.hpp>
#include <scatlab/common.hpp>
#include <scatlab/metric_nets.hpp>
#include <scatlab/potential.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scatlab {

/// Experiment failed its own success criterion (no collision within 2δ).
/// The CLI maps this to exit code 3.
class ExperimentFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SweepParameter { degree, epsilon };

/// All experiment knobs. JSON keys match the field names.
struct ExperimentConfig {
  int grid_n = 24;
  double h = 0.2;
  double s1 = 1.0;
  double s2 = 1.5;
  int s_samples = 3;
  double sigma1 = 0.0;
  double sigma2 = 0.0;

  int m = 2;
  double beta = 60.0;
  double epsilon = 0.05;
  /// net-count packing ladder; empty means epsilon times 10^0 .. 10^-4.
  std::vector<double> epsilon_list;

  /// δ given directly wins over the coupling rule 2 c3 δ = exp(−c ε^{−1/α}).
  std::optional<double> delta;
  std::optional<double> alpha;
  double coupling_c = 1.0;
  std::vector<double> delta_list;

  std::uint64_t seed = 1;
  std::string out = "scatlab_out";

  /// Truncation degree of computed amplitude matrices.
  int L = 6;
  /// Support radius used by the decay envelope.
  double rho = 0.5;
  /// Background potential v0 (forward target, pigeonhole and sweep centre).
  std::vector<Bump> bumps;

  std::vector<double> far_field_radii{4.0, 8.0};

  SweepParameter sweep_parameter = SweepParameter::degree;
  std::vector<int> sweep_degrees{2, 4, 6, 8};
  double sweep_amplitude = 0.05;

  /// Packing members enumerated by pigeonhole; larger families are subsampled.
  std::size_t max_members = 4096;
  /// Constants of the amplitude net used by net-count; pigeonhole calibrates its own.
  double c2 = 1.0;
  double c4 = 1.0;
  double calibration_margin = 1.25;

  double delta_exponent = 0.5;

  void validate() const;
  VoxelGrid grid() const { return VoxelGrid(grid_n); }
  EnergyInterval interval() const;
  NormWeights weights() const { return {sigma1, sigma2}; }
  SmoothnessBudget budget() const { return {m, beta, epsilon}; }
  bool fixed_energy() const { return s1 == s2; }
  Potential background() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

/// 2m + 1 on an interval, 5m/3 + 1 at fixed energy.
double default_alpha(int m, bool fixed_energy);

/// δ with 2 c3 δ = exp(−c ε^{−1/α}).
double coupled_delta(double epsilon, double alpha, double c3, double c = 1.0);

/// φ_δ(t) = (−ln t)^{−δ} on (0, 1/e).
struct StabilityModulus {
  double delta_exponent = 0.5;
  /// Throws std::domain_error ("modulus undefined") outside (0, 1/e).
  double operator()(double t) const;
};

/// ‖v1 − v2‖∞ / φ_δ(t): empirical lower estimate of the stability constant.
double stability_ratio(double linf_distance, double t, const StabilityModulus& phi);

/// ε g(|x|) Y_n^1(x/|x|) / max, g a mollifier bump on the shell 0.05 < |x| < 0.45.
Potential angular_perturbation(const VoxelGrid& grid, int degree, double amplitude);

// ------------------------------------------------------------------ forward

struct ForwardSampleRow {
  double s = 0.0;
  double stefanov_norm = 0.0;
  double decay_C = 0.0;
  bool decay_pass = false;
};

struct ForwardReport {
  double contraction = 0.0;
  std::vector<ForwardSampleRow> rows;
  std::optional<AmplitudeMatrix> amplitude;
  std::vector<DecayFit> decay;
  /// f(θ, ω, s) over far_field_directions() pairs: [sample][θ * 14 + ω].
  std::vector<std::vector<cplx>> samples;
  FarFieldReport far_field;
};

ForwardReport run_forward(const ExperimentConfig& cfg);

// --------------------------------------------------------------- pigeonhole

struct PigeonholeReport {
  std::size_t member_count = 0;
  int packing_k = 0;
  double delta = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  int l_max = 0;
  double net_log_cardinality = 0.0;
  std::optional<std::uint64_t> net_cardinality;
  bool collision = false;
  std::uint64_t member_a = 0;
  std::uint64_t member_b = 0;
  /// Interval norm at (σ1+3, σ2+3), the metric of the net.
  double net_distance = 0.0;
  /// sup over samples of the Stefanov distance at (σ1, σ2) and its bound 2 c3 δ.
  double stefanov_sup = 0.0;
  double stefanov_bound = 0.0;
  double linf_pair = 0.0;
  double linf_to_background = 0.0;
  double cm_estimate = 0.0;
  /// Stefanov sup distance at weights (3/2, −1/2).
  double diagnostic_t = 0.0;
  double max_tail = 0.0;
  bool check_stefanov = false;
  bool check_separation = false;
  bool check_closeness = false;
  bool check_smoothness = false;
  bool pass = false;
  /// One row per enumerated member: member index and net cell hash.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> cells;
};

/// Resolves δ: explicit, coupled (α set), or the coarsest admissible value.
double resolve_delta(const ExperimentConfig& cfg, double c3);
inline constexpr double kCoarseDelta = 0.35;

PigeonholeReport run_pigeonhole(const ExperimentConfig& cfg);

// -------------------------------------------------------------------- sweep

struct SweepRow {
  /// Angular degree (or the fixed degree for an ε sweep).
  int degree = 0;
  double epsilon = 0.0;
  double linf_distance = 0.0;
  double cm_estimate = 0.0;
  double stefanov_sup = 0.0;
  std::vector<double> per_sample;
  bool floor_limited = false;
};

inline constexpr double kNumericFloor = 1e-14;

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg);

// ---------------------------------------------------------------- net count

struct NetCountRow {
  double delta = 0.0;
  int l_max = 0;
  double log_cardinality = 0.0;
  double log_cardinality_fixed = 0.0;
};

struct PackingCountRow {
  double epsilon = 0.0;
  int k = 0;
  double log_member_count = 0.0;
};

struct CountReport {
  std::vector<NetCountRow> nets;
  std::vector<PackingCountRow> packings;
  /// Least-squares slope of ln log|Z| against ln(β/ε); 3/m in theory.
  double packing_slope = 0.0;
  /// Slope of ln log|Y| against ln ln δ^{-1}, interval and fixed energy.
  double net_exponent = 0.0;
  double net_exponent_fixed = 0.0;
  /// max over δ of log|Y| / ((ln δ^{-1})^6 (1 + ln ln δ^{-1})²), and the
  /// fixed-energy analogue with exponent 5 and a single log factor.
  double eta = 0.0;
  double eta_fixed = 0.0;
};

CountReport run_net_count(const ExperimentConfig& cfg);

/// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

// ------------------------------------------------------------------ reports

/// Report files are written atomically under cfg.out: a CSV table, a JSON
/// manifest carrying the config and the numeric results, and timings.json.
void write_forward_report(const ExperimentConfig& cfg, const ForwardReport& r);
void write_pigeonhole_report(const ExperimentConfig& cfg, const PigeonholeReport& r);
void write_sweep_report(const ExperimentConfig& cfg, const std::vector<SweepRow>& rows);
void write_count_report(const ExperimentConfig& cfg, const CountReport& r);
void write_timings(const ExperimentConfig& cfg, const std::string& command, double seconds);

std::string pigeonhole_manifest(const ExperimentConfig& cfg, const PigeonholeReport& r);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace scatlab
