#pragma once

#include <scatlab/common.hpp>
#include <scatlab/forward_solver.hpp>
#include <scatlab/potential.hpp>
#include <scatlab/sphere_basis.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scatlab {

/// Energy interval I = [s1, s2] with s1 > 0 and the sampled wavenumbers.
struct EnergyInterval {
  double s1 = 1.0;
  double s2 = 1.0;
  std::vector<double> samples;

  void validate() const;
  /// count equally spaced samples including both endpoints.
  static EnergyInterval uniform(double s1, double s2, int count);
};

struct NormWeights {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

/// ln of ((2j+1)/(e s))^{j+σ}.
double log_norm_weight(int j, double sigma, double s);

/// Coefficients a_{j1p1j2p2}(s) for one wavenumber, row-major over the flat
/// harmonic indices: coeffs[k1 * H + k2], H = (L+1)².
struct AmplitudeSlice {
  int L = 0;
  cplx s{1.0, 0.0};
  std::vector<cplx> coeffs;

  int harmonics() const { return harmonic_count(L); }
  cplx at(HarmonicIndex a, HarmonicIndex b) const;
  /// Σ a Y(θ) Y(ω).
  cplx reconstruct(const Vec3& theta, const Vec3& omega) const;
};

/// Coefficients for every sampled wavenumber of an interval. Immutable.
class AmplitudeMatrix {
 public:
  AmplitudeMatrix(int L, std::vector<double> samples, std::vector<std::vector<cplx>> slices);
  static AmplitudeMatrix from_slices(std::span<const AmplitudeSlice> slices);

  int L() const { return L_; }
  int harmonics() const { return harmonic_count(L_); }
  const std::vector<double>& samples() const { return samples_; }
  std::size_t entry_count() const;

  cplx at(HarmonicIndex a, HarmonicIndex b, std::size_t sample) const;
  const std::vector<cplx>& slice(std::size_t sample) const { return slices_[sample]; }
  /// Index of a sampled wavenumber; throws std::invalid_argument if s is not sampled.
  std::size_t sample_index(double s) const;

  /// Entries in (j1, p1, j2, p2, s) order with s fastest.
  std::vector<cplx> flat_entries() const;

 private:
  int L_;
  std::vector<double> samples_;
  std::vector<std::vector<cplx>> slices_;
};

/// f_samples[a * N + b] = f(θ_a, ω_b) over the quadrature nodes. Requires
/// exactness >= 2L; throws std::invalid_argument otherwise.
AmplitudeSlice expand_coefficients(std::span<const cplx> f_samples, const SphereQuadrature& quad,
                                   int L, cplx s);

/// f(θ_a, ω_b) at all node pairs from one batched solve.
std::vector<cplx> amplitude_on_nodes(const Potential& v, cplx s, double h,
                                     const SphereQuadrature& quad, const SolverConfig& cfg = {});

/// Exactness margin above 2L used when no quadrature is supplied.
inline constexpr int kExpansionMargin = 6;

AmplitudeSlice compute_amplitude_slice(const Potential& v, cplx s, double h, int L,
                                       const SolverConfig& cfg = {});
AmplitudeMatrix compute_amplitude_matrix(const Potential& v, const EnergyInterval& I, double h,
                                         int L, const SolverConfig& cfg = {});

/// Weighted ℓ² norm over the truncated index set at a sampled s.
double stefanov_norm(const AmplitudeMatrix& A, double s, const NormWeights& w);
double stefanov_norm(const AmplitudeSlice& a, const NormWeights& w);
/// Same norm of A − B at one sample.
double stefanov_distance(const AmplitudeMatrix& A, const AmplitudeMatrix& B, double s,
                         const NormWeights& w);

/// sup over samples and indices of the weighted |a(s)|.
double interval_sup_norm(const AmplitudeMatrix& A, const EnergyInterval& I, const NormWeights& w);
double interval_distance(const AmplitudeMatrix& A, const AmplitudeMatrix& B,
                         const EnergyInterval& I, const NormWeights& w);

/// Σ_{j≥0} (2j+1)^{-2} summed numerically with an Euler-Maclaurin tail.
double odd_inverse_square_sum();
/// 1 + (e s2)^6 (Σ_j (2j+1)^{-2})².
double c3_constant(const EnergyInterval& I);

struct DecayFit {
  double C = 0.0;
  bool pass = false;
  /// Per degree d = max(j1, j2): max |a| and the envelope at the fitted C.
  std::vector<double> degree_max;
  std::vector<double> degree_envelope;
};

/// ln of (e s ρ/(2j1+1))^{j1+3/2} (e s ρ/(2j2+1))^{j2+3/2}.
double log_decay_envelope(int j1, int j2, double s, double rho);

/// Smallest C with |a| <= C · envelope over entries above the noise floor.
DecayFit decay_bound_check(const AmplitudeSlice& a, double rho, double cap = 1e12,
                           double noise_floor = 1e-14);
DecayFit decay_bound_check(const AmplitudeMatrix& A, double s, double rho, double cap = 1e12,
                           double noise_floor = 1e-14);

/// |a(s0) − (2πi)^{-1} ∮ a(s)/(s − s0) ds| by the trapezoidal rule on the circle.
/// Throws std::invalid_argument when the circle leaves the strip |Im s| <= h.
double analyticity_check(const std::function<cplx(cplx)>& coeff_fn, cplx s0, double r, double h,
                         int nodes = 64);

/// a_{j1p1j2p2}(s) for complex s, solved on a quadrature of the given exactness.
cplx amplitude_coefficient(const Potential& v, HarmonicIndex a, HarmonicIndex b, cplx s,
                           double h, int exactness, const SolverConfig& cfg = {});

/// Binary container: magic, JSON header {L, samples, order, sigma1?, sigma2?,
/// entry_count}, then (re, im) doubles in flat_entries() order.
void write_amplitude_matrix(std::ostream& out, const AmplitudeMatrix& A,
                            std::optional<NormWeights> weights = std::nullopt);
AmplitudeMatrix read_amplitude_matrix(std::istream& in);
void save_amplitude_matrix(const std::string& path, const AmplitudeMatrix& A,
                           std::optional<NormWeights> weights = std::nullopt);
AmplitudeMatrix load_amplitude_matrix(const std::string& path);

}  // namespace scatlab
