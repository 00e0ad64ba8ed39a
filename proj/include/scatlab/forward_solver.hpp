#pragma once

#include <scatlab/common.hpp>
#include <scatlab/potential.hpp>

#include <memory>
#include <span>
#include <vector>

namespace scatlab {

/// Plane wave e^{isθ·x} with complex wavenumber s in the strip |Im s| <= h.
struct IncidentWave {
  Vec3 theta{0.0, 0.0, 1.0};
  cplx s{1.0, 0.0};
  double h = 0.2;

  /// Throws std::invalid_argument unless |θ| = 1, h >= 0 and |Im s| <= h.
  void validate() const;
};

enum class SingularCellRule { analytic_ball, zero_skip };

/// direct: dense kernel matrix on the support. fft: padded cyclic convolution.
enum class OperatorPath { automatic, direct, fft };

struct SolverConfig {
  double tol = 1e-12;
  int max_iter = 500;
  SingularCellRule singular_cell_rule = SingularCellRule::analytic_ball;
  OperatorPath path = OperatorPath::automatic;

  void validate() const;
};

/// Supports larger than this use the FFT path under OperatorPath::automatic.
inline constexpr std::size_t kDirectPathLimit = 3000;

/// Modulated wave μ⁺ = ψ⁺ e^{-isθ·x}. Stored on the potential's support; off
/// the support μ⁺ is not needed by any downstream quantity.
struct MuField {
  VoxelGrid grid{8};
  std::shared_ptr<const std::vector<std::size_t>> support;
  std::vector<cplx> values;
  IncidentWave wave;
  double residual = 0.0;
  int iterations = 0;
  std::vector<double> residual_history;
  double contraction = 0.0;

  double max_abs() const;
  /// Ratios of successive residuals.
  std::vector<double> residual_ratios() const;
};

cplx green_kernel(const Vec3& r, cplx s);

/// ∫_0^a r e^{κ r} dr: the Green kernel e^{κr}/(4πr) integrated over a ball of radius a.
cplx ball_kernel_integral(double a, cplx kappa);

/// Numeric sup over x in the unit ball of ∫_{B(0,1)} e^{2h|x-y|}/(4π|x-y|) dy,
/// on a lattice with `resolution` cells across the diameter. Cached per (h, resolution).
double c1_constant(double h, int resolution);
double c1_constant(double h);
inline constexpr int kC1Resolution = 64;

/// The inner integral at a single point x, same quadrature as c1_constant.
double c1_integral_at(const Vec3& x, double h, int resolution);

/// q = c1(h) ‖v‖∞.
double check_contraction(const Potential& v, double h);

/// Lattice integral operator (Kx)_a = Σ_b G⁺(x_a − x_b) x_b h³ on the support,
/// with the singular cell handled by the configured rule.
class GreenOperator {
 public:
  GreenOperator(const VoxelGrid& grid, std::shared_ptr<const std::vector<std::size_t>> support,
                cplx s, SingularCellRule rule, OperatorPath path);
  ~GreenOperator();
  GreenOperator(GreenOperator&&) noexcept;
  GreenOperator& operator=(GreenOperator&&) noexcept;

  OperatorPath path() const { return path_; }
  std::size_t size() const { return support_->size(); }
  cplx diagonal() const { return diagonal_; }

  /// Column-major batch: in and out hold `columns` vectors of length size().
  void apply(std::span<const cplx> in, std::span<cplx> out, std::size_t columns = 1) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::shared_ptr<const std::vector<std::size_t>> support_;
  OperatorPath path_;
  cplx diagonal_;
};

/// Successive approximations for μ⁺ = 1 − ∫ G⁺ e^{-isθ(x−y)} v μ⁺ dy.
MuField solve_mu(const Potential& v, const IncidentWave& wave, const SolverConfig& cfg = {});

/// Solves for several incident directions sharing one wavenumber; the kernel
/// is assembled once.
std::vector<MuField> solve_mu_batch(const Potential& v, cplx s, double h,
                                    std::span<const Vec3> thetas, const SolverConfig& cfg = {});

/// μ ≡ 1, the first Born iterate.
MuField born_field(const Potential& v, const IncidentWave& wave);

/// (2π)^{-3} Σ e^{is(θ−ω)·x} v μ h³.
cplx scattering_amplitude(const Potential& v, const MuField& mu, const Vec3& omega);

/// ψ⁺(x) − e^{isθ·x} = −Σ_y G⁺(x − y) e^{isθ·y} v(y) μ(y) h³ for x off the support.
cplx scattered_field(const Potential& v, const MuField& mu, const Vec3& x);

struct FarFieldReport {
  std::vector<double> radii;
  /// max over directions of | |x|(ψ⁺ − e^{ikx}) + 2π² e^{is|x|} f |
  std::vector<double> discrepancy;
  /// max over directions of |f_extracted − f| / max|f|
  std::vector<double> relative_amplitude_error;
};

/// 14 fixed sample directions (axes and cube diagonals).
std::vector<Vec3> far_field_directions();

FarFieldReport far_field_report(const Potential& v, const IncidentWave& wave,
                                std::span<const double> radii, const SolverConfig& cfg = {});

/// Discrepancy at the largest radius.
double far_field_check(const Potential& v, const IncidentWave& wave,
                       std::span<const double> radii, const SolverConfig& cfg = {});

}  // namespace scatlab
