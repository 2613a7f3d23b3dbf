#pragma once

// Near-field operators built from scattered data, filter-factor Tikhonov
// solvers with discrepancy-principle parameter choice, and the sampling
// indicators.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tlsm/dataops.hpp"
#include "tlsm/triallib.hpp"

namespace tlsm::inversion {

using triallib::SamplingGrid;

/// Lower-block-triangular block-Toeplitz map of the scattered block:
/// [N g](m, k) = sum_i sum_{j<k} v(m, i, k - j) g(i, j), with t_k = k dt.
/// Norms carry dt * receiver spacing on the data side and dt * source spacing
/// on the density side.
class NearFieldOperatorTime {
 public:
  /// Uses the first `samples` samples of `scattered` (0 = all).
  explicit NearFieldOperatorTime(const dataops::WaveformBlock& scattered, std::size_t samples = 0);
  ~NearFieldOperatorTime();
  NearFieldOperatorTime(NearFieldOperatorTime&&) noexcept;
  NearFieldOperatorTime& operator=(NearFieldOperatorTime&&) noexcept;

  std::size_t n_m() const { return n_m_; }
  std::size_t n_i() const { return n_i_; }
  std::size_t n_t() const { return n_t_; }
  double dt() const { return dt_; }
  std::size_t rows() const { return n_m_ * n_t_; }
  std::size_t cols() const { return n_i_ * n_t_; }
  double row_weight() const { return row_weight_; }
  double col_weight() const { return col_weight_; }
  const dataops::ArrayGeometry& array() const { return array_; }

  /// g is [i][j], out is [m][k].
  void apply(std::span<const double> g, std::span<double> out) const;
  /// Plain transpose: r is [m][k], out is [i][j].
  void apply_transpose(std::span<const double> r, std::span<double> out) const;
  /// Adjoint under the weighted inner products.
  void apply_adjoint(std::span<const double> r, std::span<double> out) const;

  /// Explicit matrix with rows (m, k) and columns (i, j).
  Eigen::MatrixXd dense() const;

 private:
  struct Plans;
  std::size_t n_m_ = 0, n_i_ = 0, n_t_ = 0, fft_len_ = 0;
  double dt_ = 0.0, row_weight_ = 1.0, col_weight_ = 1.0;
  dataops::ArrayGeometry array_;
  std::vector<double> kernel_time_;                  // [m][i][a], a = 0..N_t-1
  std::vector<std::complex<double>> kernel_freq_;    // [m][i][bin]
  std::unique_ptr<Plans> plans_;
};

/// Block-diagonal frequency operator: one N_m x N_i block per band frequency.
class NearFieldOperatorFreq {
 public:
  explicit NearFieldOperatorFreq(const dataops::SpectrumBlock& spectra,
                                 const dataops::ArrayGeometry& array);

  std::size_t n_m() const { return n_m_; }
  std::size_t n_i() const { return n_i_; }
  std::size_t n_omega() const { return blocks_.size(); }
  const std::vector<double>& frequencies() const { return frequencies_; }
  double tukey() const { return tukey_; }
  const Eigen::MatrixXcd& block(std::size_t kappa) const { return blocks_[kappa]; }
  double row_weight() const { return row_weight_; }
  double col_weight() const { return col_weight_; }

  /// Full matrix in the stacked layout: row N_m kappa + m, column N_i kappa + i.
  Eigen::MatrixXcd matrix() const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& g) const;

 private:
  std::size_t n_m_ = 0, n_i_ = 0;
  double row_weight_ = 1.0, col_weight_ = 1.0, tukey_ = 0.0;
  std::vector<double> frequencies_;
  std::vector<Eigen::MatrixXcd> blocks_;
};

enum class SolverMode { automatic, dense_svd, projected };

struct RegularizationConfig {
  double delta = 1e-3;
  /// Search range for eta, relative to the squared operator norm.
  double eta_min = 1e-14;
  double eta_max = 1e2;
  SolverMode mode = SolverMode::automatic;
  std::size_t projection_cap = 40;
  /// Largest operator dimension handled by the dense factorization.
  std::size_t dense_limit = 4096;

  void validate() const;
};

/// Spectral data of one right-hand side against a (possibly projected)
/// operator: singular values, squared coefficients |u_j^H b|^2 and the squared
/// norm of the part of b outside the range of the factor.
struct Spectral {
  Eigen::VectorXd sigma;
  Eigen::VectorXd coef2;
  double tail2 = 0.0;
  double rhs_norm = 0.0;

  double residual(double eta) const;
  double solution_norm(double eta) const;
};

struct TikhonovResult {
  double eta = 0.0;
  double residual = 0.0;
  double norm = 0.0;
  bool saturated = false;  ///< residual at eta_min already above target
  bool capped = false;     ///< residual at eta_max still below target
};

/// Residual and solution norm at a fixed eta.
TikhonovResult tikhonov_at(const Spectral& spec, double eta);

/// Discrepancy principle: residual(eta) = delta ||b|| by bisection on log eta.
/// `scale2` is the squared operator norm the relative search range refers to.
TikhonovResult morozov_select(const Spectral& spec, double delta, double scale2,
                              const RegularizationConfig& reg);

/// Thin SVD of a dense operator, reused across right-hand sides.
template <class Scalar>
class DenseTikhonov {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Without `keep_v` only spectral data is available, not solutions.
  explicit DenseTikhonov(const Matrix& a, bool keep_v = true);

  Spectral spectral(const Vector& b) const;
  /// One Spectral per column of `b`, sharing a single product with U.
  std::vector<Spectral> spectra(const Matrix& b) const;
  Vector solve(const Vector& b, double eta) const;
  double norm() const { return sigma_.size() ? sigma_(0) : 0.0; }

 private:
  Matrix u_, v_;
  Eigen::VectorXd sigma_;
};

/// Real operator given by its action and transpose.
struct LinearMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::function<void(std::span<const double>, std::span<double>)> apply;
  std::function<void(std::span<const double>, std::span<double>)> transpose;
};

LinearMap as_map(const Eigen::MatrixXd& a);
/// The operator in weighted coordinates (orthonormal with respect to the
/// quadrature weights).
LinearMap scaled_map(const NearFieldOperatorTime& op);

/// Golub-Kahan bidiagonalization started from b, full reorthogonalization.
class ProjectedTikhonov {
 public:
  ProjectedTikhonov(const LinearMap& a, const Eigen::VectorXd& b, std::size_t cap);

  std::size_t dimension() const { return static_cast<std::size_t>(bidiag_.cols()); }
  const Spectral& spectral() const { return spectral_; }
  Eigen::VectorXd solve(double eta) const;

 private:
  Eigen::MatrixXd v_;       // cols x k
  Eigen::MatrixXd bidiag_;  // (k+1) x k
  Eigen::MatrixXd ub_, vb_;
  Spectral spectral_;
};

/// Largest singular value by power iteration on A^T A from a fixed start.
double estimate_norm(const LinearMap& a, std::size_t iterations = 60);

struct SolveRecord {
  std::size_t s = 0;
  std::size_t n = 0;
  std::size_t r = 0;
  double eta = 0.0;
  double residual = 0.0;
  double norm = 0.0;  ///< weighted density norm; +inf for a zero pattern
  double rhs_norm = 0.0;  ///< weighted norm of the trial pattern
  bool saturated = false;
  bool capped = false;
  double time_weight = 1.0;   ///< sqrt(dt), or 1 in the frequency domain
  double space_weight = 1.0;  ///< sqrt(source spacing)
  std::size_t dimension = 0;  ///< singular values used
};

enum class MapDomain : std::uint32_t { time = 0, frequency = 1 };

struct IndicatorMap {
  SamplingGrid grid;
  MapDomain domain = MapDomain::time;
  std::vector<double> values;  ///< 1 / min norm, row-major over the grid
  std::vector<std::size_t> best_n;
  std::vector<std::size_t> best_r;
  bool degenerate = false;
  std::uint64_t config_hash = 0;

  double max() const;
  /// Values divided by the map maximum (all zero for a degenerate map).
  std::vector<double> normalized() const;
  std::size_t argmax() const;
};

struct MapResult {
  IndicatorMap map;
  std::vector<SolveRecord> records;
};

/// Time-domain indicator; the library record is cut to the operator length
/// and the minimum runs over every polarization and outset in the library.
MapResult tlsm_map(const NearFieldOperatorTime& op, const triallib::SignatureLibrary& lib,
                   const RegularizationConfig& reg);

/// Multifrequency indicator with a single eta per trial column.
MapResult lsm_map(const NearFieldOperatorFreq& op, const triallib::SignatureLibrary& lib,
                  const RegularizationConfig& reg);

// Map container: magic "LUMP0001", u32 domain, u64 config hash, f64 x0 x1 z0
// z1, u64 nx nz, u32 degenerate flag, then f64 values in row-major grid order.
void write_map(const std::filesystem::path& path, const IndicatorMap& map);
IndicatorMap read_map(const std::filesystem::path& path);
void write_map_csv(const std::filesystem::path& path, const IndicatorMap& map);
void write_records_csv(const std::filesystem::path& path, const std::vector<SolveRecord>& records);

}  // namespace tlsm::inversion
