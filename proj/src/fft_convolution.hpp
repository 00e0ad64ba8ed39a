#pragma once

#include <scatlab/common.hpp>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace scatlab::detail {

/// Aperiodic convolution on an n^3 lattice, y_i = Σ_j k(i - j) x_j, evaluated
/// as a cyclic convolution on a zero-padded (2n)^3 grid with FFTW.
class LatticeConvolver {
 public:
  /// kernel(di, dj, dk) for offsets in [-(n-1), n-1]^3.
  LatticeConvolver(int n, const std::function<cplx(int, int, int)>& kernel);
  ~LatticeConvolver();
  LatticeConvolver(const LatticeConvolver&) = delete;
  LatticeConvolver& operator=(const LatticeConvolver&) = delete;

  int n() const { return n_; }

  /// Sources scattered at linear n^3 indices; outputs gathered at the same
  /// index list. Thread-safe for concurrent calls.
  void apply(std::span<const std::size_t> nodes, std::span<const cplx> in,
             std::span<cplx> out) const;

  /// Dense variant over the full n^3 lattice.
  void apply_dense(std::span<const cplx> in, std::span<cplx> out) const;

 private:
  struct Plans;
  void convolve(cplx* work) const;
  std::size_t padded_index(int i, int j, int k) const;

  int n_;
  int m_;
  std::size_t total_;
  cplx* kernel_hat_ = nullptr;
  Plans* plans_ = nullptr;
};

}  // namespace scatlab::detail
