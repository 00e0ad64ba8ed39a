#include <scatlab/amplitude_space.hpp>

#include "binary_io.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace scatlab {

namespace {
constexpr char kAmplitudeMagic[] = "SCATAMP1";
using RowMatrixXcd = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<int> degree_of_flat(int L) {
  std::vector<int> deg(harmonic_count(L));
  for (int j = 0; j <= L; ++j)
    for (int p = 1; p <= 2 * j + 1; ++p) deg[HarmonicIndex{j, p}.flat()] = j;
  return deg;
}

void check_index(HarmonicIndex a, int L) {
  if (!a.valid() || a.j > L) throw std::out_of_range("harmonic index outside the truncation");
}
}  // namespace

void EnergyInterval::validate() const {
  if (!(s1 > 0.0)) throw std::invalid_argument("energy interval needs s1 > 0");
  if (!(s2 >= s1)) throw std::invalid_argument("energy interval needs s2 >= s1");
  if (samples.empty()) throw std::invalid_argument("energy interval needs at least one sample");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] < s1 || samples[i] > s2)
      throw std::invalid_argument("energy sample outside [s1, s2]");
    if (i > 0 && !(samples[i] > samples[i - 1]))
      throw std::invalid_argument("energy samples must be strictly increasing");
  }
}

EnergyInterval EnergyInterval::uniform(double s1, double s2, int count) {
  if (count < 1) throw std::invalid_argument("need at least one energy sample");
  EnergyInterval I{s1, s2, {}};
  if (count == 1 || s1 == s2) {
    I.samples = {s1};
  } else {
    for (int i = 0; i < count; ++i)
      I.samples.push_back(i == count - 1 ? s2 : s1 + (s2 - s1) * i / (count - 1));
  }
  I.validate();
  return I;
}

double log_norm_weight(int j, double sigma, double s) {
  return (j + sigma) * std::log((2.0 * j + 1.0) / (kE * s));
}

cplx AmplitudeSlice::at(HarmonicIndex a, HarmonicIndex b) const {
  check_index(a, L);
  check_index(b, L);
  return coeffs[static_cast<std::size_t>(a.flat()) * harmonics() + b.flat()];
}

cplx AmplitudeSlice::reconstruct(const Vec3& theta, const Vec3& omega) const {
  const int H = harmonics();
  std::vector<double> yt(H), yo(H);
  eval_harmonics(L, theta, yt);
  eval_harmonics(L, omega, yo);
  cplx f = 0.0;
  for (int a = 0; a < H; ++a)
    for (int b = 0; b < H; ++b) f += coeffs[static_cast<std::size_t>(a) * H + b] * yt[a] * yo[b];
  return f;
}

AmplitudeMatrix::AmplitudeMatrix(int L, std::vector<double> samples,
                                 std::vector<std::vector<cplx>> slices)
    : L_(L), samples_(std::move(samples)), slices_(std::move(slices)) {
  if (L_ < 0) throw std::invalid_argument("negative truncation degree");
  if (samples_.size() != slices_.size()) throw std::invalid_argument("sample/slice count mismatch");
  const std::size_t H = harmonic_count(L_);
  for (const auto& s : slices_) {
    if (s.size() != H * H) throw std::invalid_argument("amplitude slice has the wrong size");
    for (const cplx& z : s)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw std::invalid_argument("amplitude entries must be finite");
  }
}

AmplitudeMatrix AmplitudeMatrix::from_slices(std::span<const AmplitudeSlice> slices) {
  if (slices.empty()) throw std::invalid_argument("no amplitude slices");
  std::vector<double> samples;
  std::vector<std::vector<cplx>> data;
  for (const auto& s : slices) {
    if (s.L != slices.front().L) throw std::invalid_argument("slices disagree on L");
    if (s.s.imag() != 0.0) throw std::invalid_argument("matrix samples must be real wavenumbers");
    samples.push_back(s.s.real());
    data.push_back(s.coeffs);
  }
  return AmplitudeMatrix(slices.front().L, std::move(samples), std::move(data));
}

std::size_t AmplitudeMatrix::entry_count() const {
  const std::size_t H = harmonic_count(L_);
  return H * H * samples_.size();
}

cplx AmplitudeMatrix::at(HarmonicIndex a, HarmonicIndex b, std::size_t sample) const {
  check_index(a, L_);
  check_index(b, L_);
  return slices_.at(sample)[static_cast<std::size_t>(a.flat()) * harmonics() + b.flat()];
}

std::size_t AmplitudeMatrix::sample_index(double s) const {
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (std::abs(samples_[i] - s) <= 1e-12 * std::max(1.0, std::abs(s))) return i;
  std::ostringstream msg;
  msg << "wavenumber " << s << " is not among the sampled values";
  throw std::invalid_argument(msg.str());
}

std::vector<cplx> AmplitudeMatrix::flat_entries() const {
  std::vector<cplx> out;
  out.reserve(entry_count());
  const std::size_t HH = static_cast<std::size_t>(harmonics()) * harmonics();
  for (std::size_t k = 0; k < HH; ++k)
    for (const auto& slice : slices_) out.push_back(slice[k]);
  return out;
}

AmplitudeSlice expand_coefficients(std::span<const cplx> f_samples, const SphereQuadrature& quad,
                                   int L, cplx s) {
  if (L < 0) throw std::invalid_argument("negative truncation degree");
  if (quad.exactness_degree() < 2 * L) {
    std::ostringstream msg;
    msg << "insufficient quadrature exactness " << quad.exactness_degree() << " for L = " << L
        << " (needs >= " << 2 * L << ")";
    throw std::invalid_argument(msg.str());
  }
  const auto N = static_cast<Eigen::Index>(quad.size());
  if (f_samples.size() != quad.size() * quad.size())
    throw std::invalid_argument("f_samples must hold one value per node pair");
  const int H = harmonic_count(L);
  const auto table = quad.harmonic_table(L);
  Eigen::MatrixXcd Yw(N, H);
  for (Eigen::Index a = 0; a < N; ++a)
    for (int k = 0; k < H; ++k) Yw(a, k) = quad.weights()[a] * table[a * H + k];
  Eigen::Map<const RowMatrixXcd> F(f_samples.data(), N, N);
  const RowMatrixXcd A = Yw.transpose() * F * Yw;
  AmplitudeSlice out;
  out.L = L;
  out.s = s;
  out.coeffs.assign(A.data(), A.data() + A.size());
  return out;
}

std::vector<cplx> amplitude_on_nodes(const Potential& v, cplx s, double h,
                                     const SphereQuadrature& quad, const SolverConfig& cfg) {
  const auto& dirs = quad.nodes();
  const auto mus = solve_mu_batch(v, s, h, dirs, cfg);
  const VoxelGrid& g = v.grid();
  const auto support = v.support();
  const auto X = static_cast<Eigen::Index>(support.size());
  const auto N = static_cast<Eigen::Index>(dirs.size());
  const double scale = g.cell_volume() / std::pow(2.0 * kPi, 3);
  const cplx is = cplx(0.0, 1.0) * s;
  Eigen::MatrixXcd U(X, N), W(X, N);
  for (Eigen::Index x = 0; x < X; ++x) {
    const Vec3 pos = g.node(support[x]);
    const double vx = v.values()[support[x]];
    for (Eigen::Index a = 0; a < N; ++a) {
      const cplx phase = is * dot(dirs[a], pos);
      U(x, a) = std::exp(phase) * vx * mus[a].values[x] * scale;
      W(x, a) = std::exp(-phase);
    }
  }
  const RowMatrixXcd F = U.transpose() * W;
  return std::vector<cplx>(F.data(), F.data() + F.size());
}

AmplitudeSlice compute_amplitude_slice(const Potential& v, cplx s, double h, int L,
                                       const SolverConfig& cfg) {
  const auto quad = build_quadrature(2 * L + kExpansionMargin);
  return expand_coefficients(amplitude_on_nodes(v, s, h, quad, cfg), quad, L, s);
}

AmplitudeMatrix compute_amplitude_matrix(const Potential& v, const EnergyInterval& I, double h,
                                         int L, const SolverConfig& cfg) {
  I.validate();
  std::vector<AmplitudeSlice> slices(I.samples.size());
  parallel_for(slices.size(), [&](std::size_t i) {
    slices[i] = compute_amplitude_slice(v, I.samples[i], h, L, cfg);
  });
  return AmplitudeMatrix::from_slices(slices);
}

namespace {

double weighted_l2(std::span<const cplx> a, std::span<const cplx> b, int L, double s,
                   const NormWeights& w) {
  if (!(s > 0.0)) throw std::invalid_argument("Stefanov norm needs s > 0");
  const int H = harmonic_count(L);
  const auto deg = degree_of_flat(L);
  std::vector<double> l1(H), l2(H);
  for (int k = 0; k < H; ++k) {
    l1[k] = log_norm_weight(deg[k], w.sigma1, s);
    l2[k] = log_norm_weight(deg[k], w.sigma2, s);
  }
  double sum = 0.0;
  for (int k1 = 0; k1 < H; ++k1)
    for (int k2 = 0; k2 < H; ++k2) {
      const std::size_t i = static_cast<std::size_t>(k1) * H + k2;
      const double m = std::abs(b.empty() ? a[i] : a[i] - b[i]);
      if (m == 0.0) continue;
      const double t = std::exp(l1[k1] + l2[k2] + std::log(m));
      sum += t * t;
    }
  return std::sqrt(sum);
}

double weighted_sup(const AmplitudeMatrix& A, const AmplitudeMatrix* B, const EnergyInterval& I,
                    const NormWeights& w) {
  I.validate();
  if (A.samples() != I.samples)
    throw std::invalid_argument("amplitude matrix is not sampled on the interval");
  if (B && (B->L() != A.L() || B->samples() != A.samples()))
    throw std::invalid_argument("amplitude matrices have different shapes");
  const int H = A.harmonics();
  const auto deg = degree_of_flat(A.L());
  double best = 0.0;
  for (std::size_t si = 0; si < I.samples.size(); ++si) {
    const double s = I.samples[si];
    std::vector<double> l1(H), l2(H);
    for (int k = 0; k < H; ++k) {
      l1[k] = log_norm_weight(deg[k], w.sigma1, s);
      l2[k] = log_norm_weight(deg[k], w.sigma2, s);
    }
    const auto& a = A.slice(si);
    for (int k1 = 0; k1 < H; ++k1)
      for (int k2 = 0; k2 < H; ++k2) {
        const std::size_t i = static_cast<std::size_t>(k1) * H + k2;
        const double m = std::abs(B ? a[i] - B->slice(si)[i] : a[i]);
        if (m == 0.0) continue;
        best = std::max(best, std::exp(l1[k1] + l2[k2] + std::log(m)));
      }
  }
  return best;
}

}  // namespace

double stefanov_norm(const AmplitudeMatrix& A, double s, const NormWeights& w) {
  return weighted_l2(A.slice(A.sample_index(s)), {}, A.L(), s, w);
}

double stefanov_norm(const AmplitudeSlice& a, const NormWeights& w) {
  if (a.s.imag() != 0.0) throw std::invalid_argument("Stefanov norm needs a real wavenumber");
  return weighted_l2(a.coeffs, {}, a.L, a.s.real(), w);
}

double stefanov_distance(const AmplitudeMatrix& A, const AmplitudeMatrix& B, double s,
                         const NormWeights& w) {
  if (A.L() != B.L()) throw std::invalid_argument("amplitude matrices have different L");
  return weighted_l2(A.slice(A.sample_index(s)), B.slice(B.sample_index(s)), A.L(), s, w);
}

double interval_sup_norm(const AmplitudeMatrix& A, const EnergyInterval& I, const NormWeights& w) {
  return weighted_sup(A, nullptr, I, w);
}

double interval_distance(const AmplitudeMatrix& A, const AmplitudeMatrix& B,
                         const EnergyInterval& I, const NormWeights& w) {
  return weighted_sup(A, &B, I, w);
}

double odd_inverse_square_sum() {
  constexpr int terms = 2000;
  double sum = 0.0;
  for (int j = terms - 1; j >= 0; --j) sum += 1.0 / ((2.0 * j + 1.0) * (2.0 * j + 1.0));
  // Euler-Maclaurin tail Σ_{j >= terms} (2j+1)^{-2}
  const double x = 2.0 * terms + 1.0;
  sum += 1.0 / (2.0 * x) + 1.0 / (2.0 * x * x) + 1.0 / (3.0 * x * x * x);
  return sum;
}

double c3_constant(const EnergyInterval& I) {
  I.validate();
  const double es = kE * I.s2;
  const double series = odd_inverse_square_sum();
  return 1.0 + std::pow(es, 6) * series * series;
}

double log_decay_envelope(int j1, int j2, double s, double rho) {
  const double esr = kE * s * rho;
  return (j1 + 1.5) * std::log(esr / (2.0 * j1 + 1.0)) + (j2 + 1.5) * std::log(esr / (2.0 * j2 + 1.0));
}

DecayFit decay_bound_check(const AmplitudeSlice& a, double rho, double cap, double noise_floor) {
  if (a.s.imag() != 0.0 || !(a.s.real() > 0.0))
    throw std::invalid_argument("decay check needs a real positive wavenumber");
  if (!(rho > 0.0)) throw std::invalid_argument("decay check needs rho > 0");
  const double s = a.s.real();
  const int H = a.harmonics();
  const auto deg = degree_of_flat(a.L);
  DecayFit fit;
  fit.degree_max.assign(a.L + 1, 0.0);
  std::vector<double> log_env_max(a.L + 1, -std::numeric_limits<double>::infinity());
  double log_c = -std::numeric_limits<double>::infinity();
  for (int k1 = 0; k1 < H; ++k1)
    for (int k2 = 0; k2 < H; ++k2) {
      const int d = std::max(deg[k1], deg[k2]);
      const double env = log_decay_envelope(deg[k1], deg[k2], s, rho);
      log_env_max[d] = std::max(log_env_max[d], env);
      const double m = std::abs(a.coeffs[static_cast<std::size_t>(k1) * H + k2]);
      fit.degree_max[d] = std::max(fit.degree_max[d], m);
      if (m > noise_floor) log_c = std::max(log_c, std::log(m) - env);
    }
  fit.C = std::exp(log_c);
  fit.pass = std::isfinite(fit.C) && fit.C <= cap;
  fit.degree_envelope.resize(a.L + 1);
  for (int d = 0; d <= a.L; ++d) fit.degree_envelope[d] = std::exp(log_c + log_env_max[d]);
  return fit;
}

DecayFit decay_bound_check(const AmplitudeMatrix& A, double s, double rho, double cap,
                           double noise_floor) {
  AmplitudeSlice slice{A.L(), s, A.slice(A.sample_index(s))};
  return decay_bound_check(slice, rho, cap, noise_floor);
}

double analyticity_check(const std::function<cplx(cplx)>& coeff_fn, cplx s0, double r, double h,
                         int nodes) {
  if (!(r > 0.0)) throw std::invalid_argument("contour radius must be positive");
  if (nodes < 1) throw std::invalid_argument("contour needs at least one node");
  if (std::abs(s0.imag()) + r > h) {
    std::ostringstream msg;
    msg << "contour |s - s0| = " << r << " leaves the strip |Im s| <= " << h;
    throw std::invalid_argument(msg.str());
  }
  std::vector<cplx> values(nodes);
  parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t k) {
    values[k] = coeff_fn(s0 + r * std::exp(cplx(0.0, 2.0 * kPi * k / nodes)));
  });
  cplx mean = 0.0;
  for (const cplx& z : values) mean += z;
  mean /= static_cast<double>(nodes);
  return std::abs(coeff_fn(s0) - mean);
}

cplx amplitude_coefficient(const Potential& v, HarmonicIndex a, HarmonicIndex b, cplx s,
                           double h, int exactness, const SolverConfig& cfg) {
  const int L = std::max(a.j, b.j);
  check_index(a, L);
  check_index(b, L);
  const auto quad = build_quadrature(std::max(exactness, 2 * L));
  return expand_coefficients(amplitude_on_nodes(v, s, h, quad, cfg), quad, L, s).at(a, b);
}

void write_amplitude_matrix(std::ostream& out, const AmplitudeMatrix& A,
                            std::optional<NormWeights> weights) {
  nlohmann::json header;
  header["L"] = A.L();
  header["samples"] = A.samples();
  header["order"] = "j1,p1,j2,p2,s";
  header["entry_count"] = A.entry_count();
  if (weights) {
    header["sigma1"] = weights->sigma1;
    header["sigma2"] = weights->sigma2;
  }
  const auto entries = A.flat_entries();
  std::vector<double> raw;
  raw.reserve(entries.size() * 2);
  for (const cplx& z : entries) {
    raw.push_back(z.real());
    raw.push_back(z.imag());
  }
  detail::write_container(out, kAmplitudeMagic, header.dump(), raw);
}

AmplitudeMatrix read_amplitude_matrix(std::istream& in) {
  std::string text;
  std::vector<double> raw;
  detail::read_container(in, kAmplitudeMagic, text, raw);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad amplitude header: ") + e.what());
  }
  const int L = header.at("L").get<int>();
  const auto samples = header.at("samples").get<std::vector<double>>();
  if (L < 0 || L > 200) throw IoError("amplitude header has an invalid L");
  const std::size_t H = harmonic_count(L);
  const std::size_t count = H * H * samples.size();
  if (header.at("entry_count").get<std::size_t>() != count || raw.size() != 2 * count)
    throw IoError("amplitude container entry count mismatch");
  std::vector<std::vector<cplx>> slices(samples.size(), std::vector<cplx>(H * H));
  std::size_t pos = 0;
  for (std::size_t k = 0; k < H * H; ++k)
    for (auto& slice : slices) {
      slice[k] = {raw[pos], raw[pos + 1]};
      pos += 2;
    }
  return AmplitudeMatrix(L, samples, std::move(slices));
}

void save_amplitude_matrix(const std::string& path, const AmplitudeMatrix& A,
                           std::optional<NormWeights> weights) {
  detail::write_file_atomically(path,
                                [&](std::ostream& out) { write_amplitude_matrix(out, A, weights); });
}

AmplitudeMatrix load_amplitude_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_amplitude_matrix(in);
}

}  // namespace scatlab
