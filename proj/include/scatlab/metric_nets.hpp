#pragma once

#include <scatlab/amplitude_space.hpp>
#include <scatlab/common.hpp>
#include <scatlab/potential.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scatlab {

// ---------------------------------------------------------------- packings

/// Half-side of the cube holding the packing lattice; the cube fits in B(0,1/2).
inline constexpr double kPackingHalfSide = 0.28867513459481287;  // 0.5/√3

/// k³ balls of radius a/k centered on a k×k×k lattice filling the cube of half-side a.
std::vector<BallSlot> lattice_layout(int k);

/// Centers moved to the nearest grid nodes; radii shrunk uniformly so the balls
/// stay pairwise disjoint and inside B(0,1/2).
std::vector<BallSlot> snap_layout(std::span<const BallSlot> layout, const VoxelGrid& grid);

/// 2^{|layout|} potentials Σ ±ε φ((x − c_i)/r_i), ε-discrete by construction.
struct PackingFamily {
  SmoothnessBudget budget;
  int k = 0;
  std::vector<BallSlot> layout;
  /// Calibrated constant with k = floor((μ_eff β/ε)^{1/m}).
  double mu_eff = 0.0;

  std::size_t bump_count() const { return layout.size(); }
  double log_member_count() const;
  /// Exact count when below 2^63.
  std::optional<std::uint64_t> member_count() const;
  /// Sign pattern of member `index`: bit b set gives +1 on bump b.
  std::vector<int> signs(std::uint64_t index) const;
  Potential member(const VoxelGrid& grid, std::uint64_t index) const;
  Potential member(const VoxelGrid& grid, std::span<const int> signs) const;
};

/// Lattice size k = floor(a (β/(ε K_φ(m)))^{1/m}) before any grid snapping.
int packing_lattice_k(const SmoothnessBudget& budget);

/// Largest lattice packing whose members satisfy the C^m budget. With a grid,
/// the layout is snapped to nodes and k is reduced until the snapped members
/// still satisfy the budget. Throws PreconditionError when k would be 0.
PackingFamily build_packing(const SmoothnessBudget& budget, const VoxelGrid* grid = nullptr);

// ------------------------------------------------------ holomorphic nets

/// W_{I,γ} = { (a+b)/2 + (a−b)/2 cos z : |Im z| <= γ }.
struct EllipseDomain {
  double a = 1.0;
  double b = 2.0;
  double gamma = 0.1;

  double max_imag() const;
  /// Throws std::invalid_argument unless a < b, γ > 0 and max_imag() <= h.
  void validate(double h) const;
};

/// Largest γ keeping the ellipse inside |Im s| <= h: asinh(2h/(b − a)).
double strip_gamma(double a, double b, double h);

/// Integer coordinates of one function in a HoloNet: (re, im) per coefficient.
using HoloIndex = std::vector<std::int64_t>;

/// δ-net for functions on I holomorphic and bounded by C on the ellipse (or a
/// single complex value when the interval degenerates to a point).
struct HoloNet {
  bool fixed_energy = false;
  EllipseDomain domain;
  double bound_C = 1.0;
  double delta = 0.1;
  /// Chebyshev truncation degree D (0 for fixed energy).
  int degree = 0;
  /// Quantization step for the real and imaginary part of each coefficient.
  double step = 0.0;
  /// Coefficient n takes integer coordinates in [-half_range[n], half_range[n]].
  /// Stored as whole doubles: counts for fine tolerances exceed 64 bits, and
  /// quantize() refuses nets whose ranges are not exactly representable.
  std::vector<double> half_range;

  double log_cardinality() const;
  std::optional<std::uint64_t> cardinality() const;

  /// Nearest net member to the function sampled at s_nodes. Throws
  /// std::domain_error when the function exceeds the bound C and
  /// std::out_of_range when a half range exceeds 2^53.
  HoloIndex quantize(std::span<const double> s_nodes, std::span<const cplx> values) const;
  cplx evaluate(const HoloIndex& idx, double s) const;
};

/// Grid (δ/2)Z ∩ [−C, C] in the real and imaginary parts.
HoloNet fixed_energy_grid_net(double C, double delta);

/// Chebyshev truncation at the smallest D with tail <= δ/2, coefficients
/// quantized so the total rounding error is <= δ/2.
HoloNet holo_net(const EllipseDomain& domain, double C, double delta);

// --------------------------------------------------------- amplitude nets

/// Smallest l >= 0 with c4 (2l'+1)^{σ1+σ2} 2^{−l'} < δ for every l' >= l.
int truncation_degree(double delta, const NormWeights& w, double c4);

/// δ (e s1/(2j1+1))^{j1+σ1} (e s1/(2j2+1))^{j2+σ2}.
double coefficient_tolerance(int j1, int j2, const NormWeights& w, double s1, double delta);

/// δ divided by the largest weight over [s1, s2]; equals coefficient_tolerance
/// whenever j1+σ1+j2+σ2 >= 0.
double interval_tolerance(int j1, int j2, const NormWeights& w, const EnergyInterval& I,
                          double delta);

struct AmplitudeNet {
  double delta = 0.1;
  NormWeights weights;
  EnergyInterval interval;
  double strip_h = 0.2;
  double c2 = 1.0;
  double c4 = 1.0;
  int l_max = 0;
  bool fixed_energy = false;
  EllipseDomain domain;
  /// One net per degree pair (j1, j2), shared by all orders p1, p2.
  std::vector<HoloNet> pair_nets;

  const HoloNet& net_for(int j1, int j2) const;
  double log_cardinality() const;
  std::optional<std::uint64_t> cardinality() const;
};

AmplitudeNet build_amplitude_net(double delta, const NormWeights& w, const EnergyInterval& I,
                                 double h, double c2, double c4);

/// Composite net coordinates; usable as a hash key.
struct NetIndex {
  std::vector<std::int64_t> coords;
  /// Largest weighted entry beyond l_max (those entries map to 0).
  double tail = 0.0;

  bool operator==(const NetIndex& o) const { return coords == o.coords; }
  std::uint64_t hash() const;
};

struct NetIndexHash {
  std::size_t operator()(const NetIndex& n) const { return static_cast<std::size_t>(n.hash()); }
};

/// Per-index nearest net member. Requires A.L() >= l_max and A sampled on the
/// net's interval; throws std::domain_error for entries above c2.
NetIndex quantize_to_net(const AmplitudeMatrix& A, const AmplitudeNet& net);

/// The net member as a matrix of degree L on the net's samples.
AmplitudeMatrix net_point(const NetIndex& idx, const AmplitudeNet& net, int L);

/// Text manifest {delta, weights, l_max, per-pair grid parameters, log cardinality}.
std::string net_manifest(const AmplitudeNet& net);

}  // namespace scatlab
