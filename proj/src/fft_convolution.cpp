#include "fft_convolution.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace scatlab::detail {

namespace {
// FFTW's planner is not thread-safe; execution on distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

cplx* alloc_complex(std::size_t count) {
  auto* p = static_cast<cplx*>(fftw_malloc(sizeof(cplx) * count));
  if (!p) throw std::bad_alloc();
  return p;
}

struct WorkBuffer {
  explicit WorkBuffer(std::size_t n) : data(alloc_complex(n)) {}
  ~WorkBuffer() { fftw_free(data); }
  WorkBuffer(const WorkBuffer&) = delete;
  WorkBuffer& operator=(const WorkBuffer&) = delete;
  cplx* data;
};
}  // namespace

struct LatticeConvolver::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

LatticeConvolver::LatticeConvolver(int n, const std::function<cplx(int, int, int)>& kernel)
    : n_(n), m_(2 * n), total_(static_cast<std::size_t>(m_) * m_ * m_) {
  if (n < 1) throw std::invalid_argument("convolution lattice must be nonempty");
  kernel_hat_ = alloc_complex(total_);
  plans_ = new Plans;
  {
    WorkBuffer scratch(total_);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data);
    std::lock_guard lock(planner_mutex());
    plans_->forward = fftw_plan_dft_3d(m_, m_, m_, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    plans_->backward = fftw_plan_dft_3d(m_, m_, m_, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  std::fill(kernel_hat_, kernel_hat_ + total_, cplx(0.0));
  for (int di = -(n - 1); di <= n - 1; ++di)
    for (int dj = -(n - 1); dj <= n - 1; ++dj)
      for (int dk = -(n - 1); dk <= n - 1; ++dk)
        kernel_hat_[padded_index((di + m_) % m_, (dj + m_) % m_, (dk + m_) % m_)] =
            kernel(di, dj, dk);
  auto* kh = reinterpret_cast<fftw_complex*>(kernel_hat_);
  fftw_execute_dft(plans_->forward, kh, kh);
  const double scale = 1.0 / static_cast<double>(total_);
  for (std::size_t i = 0; i < total_; ++i) kernel_hat_[i] *= scale;
}

LatticeConvolver::~LatticeConvolver() {
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plans_->forward);
    fftw_destroy_plan(plans_->backward);
  }
  delete plans_;
  fftw_free(kernel_hat_);
}

std::size_t LatticeConvolver::padded_index(int i, int j, int k) const {
  return (static_cast<std::size_t>(i) * m_ + j) * m_ + k;
}

void LatticeConvolver::convolve(cplx* work) const {
  auto* w = reinterpret_cast<fftw_complex*>(work);
  fftw_execute_dft(plans_->forward, w, w);
  for (std::size_t i = 0; i < total_; ++i) work[i] *= kernel_hat_[i];
  fftw_execute_dft(plans_->backward, w, w);
}

void LatticeConvolver::apply(std::span<const std::size_t> nodes, std::span<const cplx> in,
                             std::span<cplx> out) const {
  if (in.size() != nodes.size() || out.size() != nodes.size())
    throw std::invalid_argument("convolution buffer size mismatch");
  WorkBuffer work(total_);
  std::fill(work.data, work.data + total_, cplx(0.0));
  const auto nn = static_cast<std::size_t>(n_);
  auto padded = [&](std::size_t linear) {
    const int k = static_cast<int>(linear % nn);
    const int j = static_cast<int>((linear / nn) % nn);
    const int i = static_cast<int>(linear / (nn * nn));
    return padded_index(i, j, k);
  };
  for (std::size_t a = 0; a < nodes.size(); ++a) work.data[padded(nodes[a])] = in[a];
  convolve(work.data);
  for (std::size_t a = 0; a < nodes.size(); ++a) out[a] = work.data[padded(nodes[a])];
}

void LatticeConvolver::apply_dense(std::span<const cplx> in, std::span<cplx> out) const {
  const std::size_t count = static_cast<std::size_t>(n_) * n_ * n_;
  if (in.size() != count || out.size() != count)
    throw std::invalid_argument("convolution buffer size mismatch");
  WorkBuffer work(total_);
  std::fill(work.data, work.data + total_, cplx(0.0));
  std::size_t a = 0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) work.data[padded_index(i, j, k)] = in[a++];
  convolve(work.data);
  a = 0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) out[a++] = work.data[padded_index(i, j, k)];
}

}  // namespace scatlab::detail
