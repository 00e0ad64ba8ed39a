#pragma once

#include <scatlab/common.hpp>

#include <span>
#include <vector>

namespace scatlab {

/// Largest polynomial exactness build_quadrature() can deliver.
inline constexpr int kMaxQuadratureDegree = 160;

/// Degree j >= 0 and order slot 1 <= p <= 2j+1 of a real spherical harmonic.
/// Slot p corresponds to the signed order m = p - j - 1, so p = 1 is m = -j.
struct HarmonicIndex {
  int j = 0;
  int p = 1;

  bool valid() const { return j >= 0 && p >= 1 && p <= 2 * j + 1; }
  int order() const { return p - j - 1; }
  /// Position in the flat (j, p) enumeration: j^2 + p - 1.
  int flat() const { return j * j + p - 1; }
  static HarmonicIndex from_flat(int k);
};

/// Number of real harmonics with degree <= L.
inline constexpr int harmonic_count(int L) { return (L + 1) * (L + 1); }

/// Real orthonormal spherical harmonic Y_j^p at a unit direction.
/// Orders m > 0 carry cos(mφ), m < 0 carry sin(|m|φ); no Condon-Shortley phase.
double eval_harmonic(HarmonicIndex idx, const Vec3& dir);

/// All harmonics of degree <= L at dir, written to out[flat index].
/// out.size() must be at least harmonic_count(L).
void eval_harmonics(int L, const Vec3& dir, std::span<double> out);

/// Product rule on S²: Gauss-Legendre in cos(polar angle) times a uniform
/// azimuthal rule. Immutable once built.
class SphereQuadrature {
 public:
  SphereQuadrature(std::vector<Vec3> nodes, std::vector<double> weights, int exactness_degree);

  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  int exactness_degree() const { return exactness_; }
  std::size_t size() const { return nodes_.size(); }

  /// Row-major table Y[node * harmonic_count(L) + flat] for degrees <= L.
  std::vector<double> harmonic_table(int L) const;

 private:
  std::vector<Vec3> nodes_;
  std::vector<double> weights_;
  int exactness_;
};

/// Smallest product rule integrating every spherical polynomial of degree
/// <= min_exactness_degree exactly. Throws std::out_of_range past the table.
SphereQuadrature build_quadrature(int min_exactness_degree);

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace scatlab
