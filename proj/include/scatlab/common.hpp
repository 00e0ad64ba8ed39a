#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace scatlab {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kE = std::numbers::e;
inline constexpr double kFourPi = 4.0 * std::numbers::pi;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double a) const { return {a * x, a * y, a * z}; }
  constexpr bool operator==(const Vec3&) const = default;
};

inline constexpr Vec3 operator*(double a, const Vec3& v) { return v * a; }
inline constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }

/// Complex momentum vector, e.g. s(θ−ω) for complex wavenumber s.
struct CVec3 {
  cplx x, y, z;
};

inline CVec3 scaled(cplx s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline cplx dot(const CVec3& p, const Vec3& x) { return p.x * x.x + p.y * x.y + p.z * x.z; }

/// A violated precondition of the scattering model (contraction, support).
/// The CLI maps this to exit code 2.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solve did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// File or stream failure. The CLI maps this to exit code 4.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of workers used by parallel loops. Reads SCATLAB_WORKERS,
/// defaulting to the hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads.
/// The first exception thrown by any task is rethrown on the caller. Calls
/// made from inside a running loop execute serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace scatlab
