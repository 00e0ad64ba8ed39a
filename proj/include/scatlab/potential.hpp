#pragma once

#include <scatlab/common.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scatlab {

/// Regular lattice of n^3 sample points over [-1, 1)^3 with spacing 2/n.
/// Node i sits at (i - n/2) * cell_size, so the origin is a node and the
/// lattice is symmetric about it inside B(0, 1 - cell_size).
class VoxelGrid {
 public:
  explicit VoxelGrid(int n);

  int n() const { return n_; }
  double cell_size() const { return h_; }
  double cell_volume() const { return h_ * h_ * h_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_ * n_; }

  double coord(int i) const { return (i - n_ / 2) * h_; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  Vec3 node(std::size_t linear) const;
  Vec3 node(int i, int j, int k) const { return {coord(i), coord(j), coord(k)}; }
  /// Lattice index nearest to a coordinate, clamped to the grid.
  int nearest(double x) const;

  bool operator==(const VoxelGrid& o) const { return n_ == o.n_; }

 private:
  int n_;
  double h_;
};

/// One smooth bump amplitude * φ((x - center) / scale), with the mollifier
/// φ(x) = exp(1 - 1/(1 - |x|²)) on the unit ball (peak value 1).
struct Bump {
  Vec3 center;
  double scale = 0.0;
  double amplitude = 0.0;
};

/// Closed-form description of a potential built from bumps of class C^m.
struct AnalyticSpec {
  std::vector<Bump> bumps;
  int m = 0;
};

/// A ball reserved for one bump in a packing layout.
struct BallSlot {
  Vec3 center;
  double scale = 0.0;
};

/// Real potential sampled on a voxel grid. Immutable value type; values vanish
/// at nodes farther than support_radius from the origin.
class Potential {
 public:
  Potential(VoxelGrid grid, std::vector<double> values, double support_radius,
            std::optional<AnalyticSpec> analytic = std::nullopt);

  static Potential zero(const VoxelGrid& grid);

  const VoxelGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double support_radius() const { return support_radius_; }
  const std::optional<AnalyticSpec>& analytic_spec() const { return analytic_; }

  /// Max over voxels of |v|.
  double linf_norm() const;
  /// Voxel-sum proxy for the L1 norm.
  double l1_norm() const;
  /// Linear indices of voxels where v != 0.
  std::vector<std::size_t> support() const;

  Potential scaled(double factor) const;
  /// Pointwise sum; analytic specs merge when both sides carry one.
  Potential plus(const Potential& other) const;

 private:
  VoxelGrid grid_;
  std::vector<double> values_;
  double support_radius_;
  std::optional<AnalyticSpec> analytic_;
};

/// Budget of the fat space: C^m order, C^m norm cap beta, L∞ amplitude epsilon.
struct SmoothnessBudget {
  int m = 2;
  double beta = 1.0;
  double epsilon = 0.1;
};

/// Mollifier exp(1 - 1/(1 - r²)) for r² < 1, zero otherwise.
double mollifier(double r2);

/// sup over R^3 of |∂^k φ / ∂x^k| maximized over k <= m, tabulated for m <= 8.
double mollifier_derivative_bound(int m);
inline constexpr int kMaxAnalyticOrder = 8;
inline constexpr int kMaxFiniteDifferenceOrder = 4;

/// Largest radius any constructed potential may occupy.
inline constexpr double kSupportLimit = 0.5;

Potential make_bump(const VoxelGrid& grid, const Vec3& center, double scale, double amplitude,
                    int m);

/// Sum of bumps signs[i] * epsilon on a pairwise-disjoint layout.
Potential assemble_from_signs(const VoxelGrid& grid, std::span<const BallSlot> layout,
                              std::span<const int> signs, double epsilon, int m);

/// Potential sampled from a callable, zeroed beyond support_radius.
template <class F>
Potential sample_potential(const VoxelGrid& grid, double support_radius, F&& fn);

double linf_distance(const Potential& a, const Potential& b);

/// Upper estimate of the C^m norm. Bump potentials use the analytic scaling
/// law |a| scale^{-m} K_φ(m); other potentials use central differences along
/// the axes (m <= 4).
double cm_norm_estimate(const Potential& v, int m);

/// Finite-difference C^m proxy regardless of any analytic description.
double cm_norm_finite_difference(const Potential& v, int m);

/// (2π)^{-3} h³ Σ_a e^{ip·x_a} w_a over the listed lattice nodes.
cplx fourier_sum(const VoxelGrid& g, std::span<const std::size_t> nodes,
                 std::span<const cplx> weights, const Vec3& p);
cplx fourier_sum(const VoxelGrid& g, std::span<const std::size_t> nodes,
                 std::span<const cplx> weights, const CVec3& p);

/// (2π)^{-3} Σ_x e^{ip·x} v(x) h³ over the voxels.
cplx potential_fourier(const Potential& v, const Vec3& p);
/// Same sum for a complex momentum (complex wavenumber times real direction).
cplx potential_fourier(const Potential& v, const CVec3& p);

/// Binary container: magic, JSON header {n, support_radius, analytic_spec,
/// value_count}, then little-endian IEEE doubles. Values round-trip bit-exactly.
void write_potential(std::ostream& out, const Potential& v);
Potential read_potential(std::istream& in);
void save_potential(const std::string& path, const Potential& v);
Potential load_potential(const std::string& path);

template <class F>
Potential sample_potential(const VoxelGrid& grid, double support_radius, F&& fn) {
  std::vector<double> values(grid.size(), 0.0);
  const double r2max = support_radius * support_radius;
  for (int i = 0; i < grid.n(); ++i)
    for (int j = 0; j < grid.n(); ++j)
      for (int k = 0; k < grid.n(); ++k) {
        const Vec3 x = grid.node(i, j, k);
        if (dot(x, x) <= r2max) values[grid.index(i, j, k)] = fn(x);
      }
  return Potential(grid, std::move(values), support_radius);
}

}  // namespace scatlab
