#include <doctest.h>

#include <scatlab/experiments.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace scatlab;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.grid_n = 16;
  c.L = 3;
  c.s_samples = 2;
  c.far_field_radii.clear();
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scatlab_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing and round trip") {
  const auto c = parse_config(R"({"grid_n": 32, "s1": 2, "s2": 2, "delta": 0.01,
      "bumps": [{"center": [0.1, 0, 0], "scale": 0.2, "amplitude": 0.3}],
      "sweep_parameter": "epsilon", "epsilon_list": [0.1, 0.01]})");
  CHECK(c.grid_n == 32);
  CHECK(c.fixed_energy());
  REQUIRE(c.delta);
  CHECK(*c.delta == 0.01);
  CHECK_FALSE(c.alpha);
  REQUIRE(c.bumps.size() == 1);
  CHECK(c.bumps[0].amplitude == 0.3);
  CHECK(c.sweep_parameter == SweepParameter::epsilon);

  const auto again = parse_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));

  CHECK_THROWS_AS(parse_config(R"({"gridn": 16})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("[1, 2]"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("{"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"grid_n": "big"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"sweep_parameter": "phase"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"bumps": [{"center": [0, 0], "scale": 0.1, "amplitude": 1}]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(load_config("/nonexistent/scatlab.json"), IoError);
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS(bad([](auto& c) { c.grid_n = 15; }).validate());
  CHECK_THROWS(bad([](auto& c) { c.h = -0.1; }).validate());
  CHECK_THROWS(bad([](auto& c) { c.s1 = 2.0; }).validate());
  CHECK_THROWS(bad([](auto& c) { c.epsilon = 0.0; }).validate());
  CHECK_THROWS(bad([](auto& c) { c.delta = 0.5; }).validate());
  CHECK_THROWS(bad([](auto& c) { c.delta_exponent = 1.0; }).validate());
  CHECK_THROWS(bad([](auto& c) { c.max_members = 1; }).validate());
  CHECK_NOTHROW(bad([](auto& c) { c.h = 0.0; }).validate());
}

TEST_CASE("default alpha and the delta coupling") {
  CHECK(default_alpha(2, false) == doctest::Approx(5.0));
  CHECK(default_alpha(3, true) == doctest::Approx(6.0));
  for (double eps : {0.5, 0.1, 0.02}) {
    const double alpha = 5.0, c3 = 1.7, c = 0.8;
    const double d = coupled_delta(eps, alpha, c3, c);
    CHECK(std::abs(2.0 * c3 * d - std::exp(-c * std::pow(eps, -1.0 / alpha))) <= 1e-12);
  }
  CHECK(coupled_delta(0.01, 5.0, 1.0) < coupled_delta(0.1, 5.0, 1.0));
  CHECK_THROWS_AS(coupled_delta(0.0, 5.0, 1.0), std::invalid_argument);

  ExperimentConfig c;
  CHECK(resolve_delta(c, 2.0) == kCoarseDelta);
  c.alpha = 5.0;
  CHECK(resolve_delta(c, 2.0) == doctest::Approx(coupled_delta(c.epsilon, 5.0, 2.0)));
  c.delta = 0.01;
  CHECK(resolve_delta(c, 2.0) == 0.01);
}

TEST_CASE("stability modulus") {
  const StabilityModulus phi{0.5};
  CHECK(phi(std::exp(-4.0)) == doctest::Approx(0.5));
  // φ → 1 as t → 1/e from below
  CHECK(phi(std::exp(-1.0) * (1.0 - 1e-9)) == doctest::Approx(1.0).epsilon(1e-6));
  double prev = 0.0;
  for (double t : {1e-30, 1e-10, 1e-4, 1e-2, 0.3}) {
    CHECK(phi(t) > prev);
    prev = phi(t);
  }
  CHECK(StabilityModulus{0.25}(1e-8) > StabilityModulus{0.75}(1e-8));
  CHECK_THROWS_AS(phi(0.0), std::domain_error);
  CHECK_THROWS_AS(phi(0.5), std::domain_error);
  CHECK_THROWS_AS(phi(-1.0), std::domain_error);
  CHECK(stability_ratio(0.1, std::exp(-4.0), phi) == doctest::Approx(0.2));
}

TEST_CASE("angular perturbation") {
  const VoxelGrid g(16);
  for (int n : {0, 1, 3}) {
    const auto w = angular_perturbation(g, n, 0.05);
    CHECK(w.linf_norm() == doctest::Approx(0.05).epsilon(1e-12));
  }
  CHECK(angular_perturbation(g, 2, 0.0).linf_norm() == 0.0);
  CHECK_THROWS_AS(angular_perturbation(g, -1, 0.1), std::invalid_argument);
}

TEST_CASE("fit slope") {
  CHECK(fit_slope({0, 1, 2, 3}, {1, 3, 5, 7}) == doctest::Approx(2.0));
  CHECK(fit_slope({1, 2}, {5, 5}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(fit_slope({1}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(fit_slope({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("forward with zero potential") {
  auto c = small_config();
  const auto r = run_forward(c);
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) {
    CHECK(row.stefanov_norm == 0.0);
    CHECK(row.decay_pass);
  }
  for (const auto& s : r.samples)
    for (cplx f : s) CHECK(std::abs(f) == 0.0);
}

TEST_CASE("forward report is deterministic") {
  auto c = small_config();
  c.bumps = {{{0.1, 0.0, 0.0}, 0.25, 0.4}};
  c.far_field_radii = {4.0};
  const auto a = scratch("fwd_a"), b = scratch("fwd_b");
  c.out = a.string();
  write_forward_report(c, run_forward(c));
  c.out = b.string();
  write_forward_report(c, run_forward(c));
  for (const char* f : {"forward.csv", "decay.csv", "amplitude_samples.csv", "amplitude.bin"})
    CHECK(slurp(a / f) == slurp(b / f));
  const auto j = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(j.contains("config"));
  std::ifstream bin(a / "amplitude.bin", std::ios::binary);
  const auto back = read_amplitude_matrix(bin);
  CHECK(back.L() == 3);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("pigeonhole finds a collision with all checks") {
  auto c = small_config();
  const auto r = run_pigeonhole(c);
  CHECK(r.packing_k >= 1);
  CHECK(r.member_count == (std::size_t{1} << (r.packing_k * r.packing_k * r.packing_k)));
  CHECK(r.collision);
  CHECK(r.net_distance <= 2.0 * r.delta);
  CHECK(r.check_stefanov);
  CHECK(r.check_separation);
  CHECK(r.check_closeness);
  CHECK(r.check_smoothness);
  CHECK(r.pass);
  CHECK(r.stefanov_sup <= r.stefanov_bound);
  CHECK(r.linf_pair >= c.epsilon * (1 - 1e-12));
  CHECK(r.cells.size() == r.member_count);
  CHECK(r.member_a != r.member_b);

  // colliding members share the recorded cell hash
  std::uint64_t ha = 0, hb = 1;
  for (const auto& [idx, h] : r.cells) {
    if (idx == r.member_a) ha = h;
    if (idx == r.member_b) hb = h;
  }
  CHECK(ha == hb);

  const auto j = nlohmann::json::parse(pigeonhole_manifest(c, r));
  CHECK(j.at("diagnostic_t").get<double>() == r.diagnostic_t);
  CHECK(j.at("linf_pair").get<double>() == r.linf_pair);
  CHECK(pigeonhole_manifest(c, run_pigeonhole(c)) == pigeonhole_manifest(c, r));
}

TEST_CASE("pigeonhole rejects a net finer than L") {
  auto c = small_config();
  c.delta = 1e-3;
  CHECK_THROWS_AS(run_pigeonhole(c), std::invalid_argument);
}

TEST_CASE("sweep") {
  auto c = small_config();
  c.sweep_degrees = {1, 3};
  c.sweep_amplitude = 0.0;
  auto rows = run_sweep(c);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.stefanov_sup == 0.0);
    CHECK(r.linf_distance == 0.0);
    CHECK(r.floor_limited);
  }

  c.sweep_amplitude = 0.05;
  rows = run_sweep(c);
  for (const auto& r : rows) {
    CHECK(r.linf_distance == doctest::Approx(0.1));
    CHECK(r.per_sample.size() == 2);
    for (double d : r.per_sample) CHECK(r.stefanov_sup >= d);
    CHECK(r.stefanov_sup > 0.0);
  }
  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("degree,epsilon,", 0) == 0);

  c.sweep_parameter = SweepParameter::epsilon;
  c.epsilon_list = {0.04, 0.02};
  rows = run_sweep(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].degree == 1);
  CHECK(rows[1].stefanov_sup < rows[0].stefanov_sup);

  c.m = 5;
  CHECK_THROWS_AS(run_sweep(c), std::invalid_argument);
}

TEST_CASE("net count") {
  ExperimentConfig c;
  c.epsilon_list = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  const auto r = run_net_count(c);
  REQUIRE(r.nets.size() == 4);
  for (std::size_t i = 1; i < r.nets.size(); ++i) {
    CHECK(r.nets[i].log_cardinality > r.nets[i - 1].log_cardinality);
    CHECK(r.nets[i].l_max >= r.nets[i - 1].l_max);
    CHECK(r.nets[i].log_cardinality_fixed < r.nets[i].log_cardinality);
  }
  CHECK(r.packing_slope == doctest::Approx(1.5).epsilon(0.1));
  CHECK(std::isfinite(r.eta));
  CHECK(std::isfinite(r.eta_fixed));

  const auto dir = scratch("count");
  c.out = dir.string();
  write_count_report(c, r);
  write_timings(c, "net-count", 0.25);
  CHECK(std::filesystem::exists(dir / "net_count.csv"));
  CHECK(std::filesystem::exists(dir / "packing_count.csv"));
  CHECK(nlohmann::json::parse(slurp(dir / "timings.json")).at("seconds").get<double>() == 0.25);
  std::filesystem::remove_all(dir);
}
