#include <cmath>
#include <limits>
#include <random>

#include <Eigen/SVD>

#include "tlsm/inversion.hpp"

namespace tlsm::inversion {

void RegularizationConfig::validate() const {
  require(delta >= 0.0 && delta < 1.0, ErrorKind::parameter, "delta must lie in [0, 1)");
  require(eta_min > 0.0 && eta_max > eta_min, ErrorKind::parameter,
          "eta range must satisfy 0 < eta_min < eta_max");
  require(projection_cap >= 1, ErrorKind::parameter, "projection cap must be at least 1");
}

double Spectral::residual(double eta) const {
  double r2 = tail2;
  for (Eigen::Index j = 0; j < sigma.size(); ++j) {
    const double f = eta / (sigma(j) * sigma(j) + eta);
    r2 += f * f * coef2(j);
  }
  return std::sqrt(r2);
}

double Spectral::solution_norm(double eta) const {
  double n2 = 0.0;
  for (Eigen::Index j = 0; j < sigma.size(); ++j) {
    const double f = sigma(j) / (sigma(j) * sigma(j) + eta);
    n2 += f * f * coef2(j);
  }
  return std::sqrt(n2);
}

TikhonovResult tikhonov_at(const Spectral& spec, double eta) {
  require(eta > 0.0, ErrorKind::parameter, "eta must be positive");
  return {eta, spec.residual(eta), spec.solution_norm(eta), false, false};
}

TikhonovResult morozov_select(const Spectral& spec, double delta, double scale2,
                              const RegularizationConfig& reg) {
  reg.validate();
  if (!(spec.rhs_norm > 0.0)) fail(ErrorKind::degenerate, "zero right-hand side");
  if (!(scale2 > 0.0)) fail(ErrorKind::degenerate, "zero operator");
  const double target = delta * spec.rhs_norm;
  double lo = std::log(reg.eta_min * scale2);
  double hi = std::log(reg.eta_max * scale2);

  TikhonovResult at_lo = tikhonov_at(spec, std::exp(lo));
  if (at_lo.residual > target) {
    at_lo.saturated = true;
    return at_lo;
  }
  TikhonovResult at_hi = tikhonov_at(spec, std::exp(hi));
  if (at_hi.residual < target) {
    at_hi.capped = true;
    return at_hi;
  }
  // The residual is nondecreasing in eta.
  TikhonovResult best = at_hi;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    best = tikhonov_at(spec, std::exp(mid));
    if (std::abs(best.residual - target) <= 1e-6 * target) break;
    if (best.residual > target)
      hi = mid;
    else
      lo = mid;
  }
  return best;
}

template <class Scalar>
DenseTikhonov<Scalar>::DenseTikhonov(const Matrix& a, bool keep_v) {
  Eigen::BDCSVD<Matrix> svd(a, keep_v ? Eigen::ComputeThinU | Eigen::ComputeThinV
                                      : static_cast<int>(Eigen::ComputeThinU));
  u_ = svd.matrixU();
  if (keep_v) v_ = svd.matrixV();
  sigma_ = svd.singularValues();
}

template <class Scalar>
Spectral DenseTikhonov<Scalar>::spectral(const Vector& b) const {
  require(b.size() == u_.rows(), ErrorKind::dimension, "right-hand side size mismatch");
  Spectral out;
  out.sigma = sigma_;
  const Vector beta = u_.adjoint() * b;
  out.coef2 = beta.cwiseAbs2();
  out.rhs_norm = b.norm();
  out.tail2 = std::max(0.0, out.rhs_norm * out.rhs_norm - out.coef2.sum());
  return out;
}

template <class Scalar>
std::vector<Spectral> DenseTikhonov<Scalar>::spectra(const Matrix& b) const {
  require(b.rows() == u_.rows(), ErrorKind::dimension, "right-hand side size mismatch");
  const Matrix beta = u_.adjoint() * b;
  std::vector<Spectral> out(static_cast<std::size_t>(b.cols()));
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    auto& o = out[static_cast<std::size_t>(c)];
    o.sigma = sigma_;
    o.coef2 = beta.col(c).cwiseAbs2();
    o.rhs_norm = b.col(c).norm();
    o.tail2 = std::max(0.0, o.rhs_norm * o.rhs_norm - o.coef2.sum());
  }
  return out;
}

template <class Scalar>
typename DenseTikhonov<Scalar>::Vector DenseTikhonov<Scalar>::solve(const Vector& b,
                                                                    double eta) const {
  require(eta > 0.0, ErrorKind::parameter, "eta must be positive");
  require(v_.size() > 0, ErrorKind::config, "factorization kept no right singular vectors");
  Vector beta = u_.adjoint() * b;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    beta(j) *= sigma_(j) / (sigma_(j) * sigma_(j) + eta);
  return v_ * beta;
}

template class DenseTikhonov<double>;
template class DenseTikhonov<std::complex<double>>;

LinearMap as_map(const Eigen::MatrixXd& a) {
  LinearMap m;
  m.rows = static_cast<std::size_t>(a.rows());
  m.cols = static_cast<std::size_t>(a.cols());
  m.apply = [&a](std::span<const double> x, std::span<double> y) {
    Eigen::Map<Eigen::VectorXd>(y.data(), a.rows()) =
        a * Eigen::Map<const Eigen::VectorXd>(x.data(), a.cols());
  };
  m.transpose = [&a](std::span<const double> x, std::span<double> y) {
    Eigen::Map<Eigen::VectorXd>(y.data(), a.cols()) =
        a.transpose() * Eigen::Map<const Eigen::VectorXd>(x.data(), a.rows());
  };
  return m;
}

LinearMap scaled_map(const NearFieldOperatorTime& op) {
  const double s = std::sqrt(op.row_weight() / op.col_weight());
  LinearMap m;
  m.rows = op.rows();
  m.cols = op.cols();
  m.apply = [&op, s](std::span<const double> x, std::span<double> y) {
    op.apply(x, y);
    for (auto& v : y) v *= s;
  };
  m.transpose = [&op, s](std::span<const double> x, std::span<double> y) {
    op.apply_transpose(x, y);
    for (auto& v : y) v *= s;
  };
  return m;
}

namespace {

// Two passes of classical Gram-Schmidt against the first `count` columns.
void reorthogonalize(const Eigen::MatrixXd& basis, Eigen::Index count, Eigen::VectorXd& w) {
  if (count == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd c = basis.leftCols(count).transpose() * w;
    w.noalias() -= basis.leftCols(count) * c;
  }
}

}  // namespace

ProjectedTikhonov::ProjectedTikhonov(const LinearMap& a, const Eigen::VectorXd& b,
                                     std::size_t cap) {
  require(cap >= 1, ErrorKind::parameter, "projection cap must be at least 1");
  require(static_cast<std::size_t>(b.size()) == a.rows, ErrorKind::dimension,
          "right-hand side size mismatch");
  const auto rows = static_cast<Eigen::Index>(a.rows);
  const auto cols = static_cast<Eigen::Index>(a.cols);
  const auto kmax = static_cast<Eigen::Index>(std::min<std::size_t>(cap, a.cols));
  const double beta1 = b.norm();
  spectral_.rhs_norm = beta1;
  spectral_.tail2 = beta1 * beta1;
  bidiag_.resize(1, 0);
  v_.resize(cols, 0);
  if (!(beta1 > 0.0)) return;

  Eigen::MatrixXd u(rows, kmax + 1);
  Eigen::MatrixXd v(cols, kmax);
  Eigen::MatrixXd bd = Eigen::MatrixXd::Zero(kmax + 1, kmax);
  u.col(0) = b / beta1;
  Eigen::VectorXd w(cols), p(rows);
  double scale = 0.0;
  Eigen::Index k = 0;
  double beta = 0.0;
  for (; k < kmax; ++k) {
    a.transpose(std::span<const double>(u.col(k).data(), static_cast<std::size_t>(rows)),
                std::span<double>(w.data(), static_cast<std::size_t>(cols)));
    if (k > 0) w -= beta * v.col(k - 1);
    reorthogonalize(v, k, w);
    const double alpha = w.norm();
    scale = std::max(scale, alpha);
    if (!(alpha > 1e-13 * scale)) break;
    v.col(k) = w / alpha;
    bd(k, k) = alpha;

    a.apply(std::span<const double>(v.col(k).data(), static_cast<std::size_t>(cols)),
            std::span<double>(p.data(), static_cast<std::size_t>(rows)));
    p -= alpha * u.col(k);
    reorthogonalize(u, k + 1, p);
    beta = p.norm();
    scale = std::max(scale, beta);
    bd(k + 1, k) = beta;
    if (!(beta > 1e-13 * scale)) {
      bd(k + 1, k) = 0.0;
      ++k;
      break;
    }
    u.col(k + 1) = p / beta;
  }

  v_ = v.leftCols(k);
  bidiag_ = bd.topLeftCorner(k + 1, k);
  if (k == 0) return;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(bidiag_, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ub_ = svd.matrixU();
  vb_ = svd.matrixV();
  spectral_.sigma = svd.singularValues();
  // The projected right-hand side is beta1 e_1.
  const Eigen::VectorXd coef = beta1 * ub_.row(0).transpose();
  spectral_.coef2 = coef.cwiseAbs2();
  spectral_.tail2 = std::max(0.0, beta1 * beta1 - spectral_.coef2.sum());
}

Eigen::VectorXd ProjectedTikhonov::solve(double eta) const {
  require(eta > 0.0, ErrorKind::parameter, "eta must be positive");
  if (bidiag_.cols() == 0) return Eigen::VectorXd::Zero(v_.rows());
  Eigen::VectorXd y = spectral_.rhs_norm * ub_.row(0).transpose();
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const double s = spectral_.sigma(j);
    y(j) *= s / (s * s + eta);
  }
  return v_ * (vb_ * y);
}

double estimate_norm(const LinearMap& a, std::size_t iterations) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(static_cast<Eigen::Index>(a.cols));
  for (auto& v : x) v = normal(rng);
  x.normalize();
  Eigen::VectorXd y(static_cast<Eigen::Index>(a.rows));
  double sigma = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    a.apply(std::span<const double>(x.data(), a.cols), std::span<double>(y.data(), a.rows));
    a.transpose(std::span<const double>(y.data(), a.rows), std::span<double>(x.data(), a.cols));
    const double n = x.norm();
    if (!(n > 0.0)) return 0.0;
    sigma = std::sqrt(n);
    x /= n;
  }
  return sigma;
}

}  // namespace tlsm::inversion
