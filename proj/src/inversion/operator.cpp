#include <cmath>

#include <fftw3.h>

#include "tlsm/inversion.hpp"

namespace tlsm::inversion {

namespace {

// Smallest 2^a 3^b 5^c not below n.
std::size_t smooth_length(std::size_t n) {
  for (std::size_t len = std::max<std::size_t>(n, 2);; ++len) {
    std::size_t r = len;
    for (std::size_t p : {2u, 3u, 5u})
      while (r % p == 0) r /= p;
    if (r == 1) return len;
  }
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

// Plans are made once; execution goes through the new-array interface, which
// is safe to call concurrently.
struct NearFieldOperatorTime::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  explicit Plans(std::size_t len) {
    std::vector<double> real(len);
    std::vector<std::complex<double>> spec(len / 2 + 1);
    const int n = static_cast<int>(len);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward = fftw_plan_dft_r2c_1d(n, real.data(), as_fftw(spec.data()), flags);
    backward = fftw_plan_dft_c2r_1d(n, as_fftw(spec.data()), real.data(), flags);
    if (!forward || !backward) fail(ErrorKind::numerical, "FFT planning failed");
  }
  ~Plans() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

NearFieldOperatorTime::NearFieldOperatorTime(const dataops::WaveformBlock& scattered,
                                             std::size_t samples)
    : n_m_(scattered.n_m()),
      n_i_(scattered.n_i()),
      n_t_(samples == 0 ? scattered.n_t() : samples),
      dt_(scattered.grid.dt),
      array_(scattered.array) {
  scattered.validate();
  require(n_t_ >= 1 && n_t_ <= scattered.n_t(), ErrorKind::dimension,
          "operator length exceeds the recorded samples");
  row_weight_ = dt_ * array_.receiver_spacing();
  col_weight_ = dt_ * array_.source_spacing();

  kernel_time_.resize(n_m_ * n_i_ * n_t_);
  for (std::size_t m = 0; m < n_m_; ++m)
    for (std::size_t i = 0; i < n_i_; ++i) {
      const auto tr = scattered.trace(m, i);
      std::copy_n(tr.begin(), n_t_, kernel_time_.begin() +
                                        static_cast<std::ptrdiff_t>((m * n_i_ + i) * n_t_));
    }

  fft_len_ = smooth_length(2 * n_t_);
  plans_ = std::make_unique<Plans>(fft_len_);
  const std::size_t nf = fft_len_ / 2 + 1;
  kernel_freq_.resize(n_m_ * n_i_ * nf);
  std::vector<double> buf(fft_len_);
  for (std::size_t mi = 0; mi < n_m_ * n_i_; ++mi) {
    std::fill(buf.begin(), buf.end(), 0.0);
    // v(t_0) never enters: the sum runs over j < k only.
    for (std::size_t a = 1; a < n_t_; ++a) buf[a] = kernel_time_[mi * n_t_ + a];
    fftw_execute_dft_r2c(plans_->forward, buf.data(), as_fftw(kernel_freq_.data() + mi * nf));
  }
}

NearFieldOperatorTime::~NearFieldOperatorTime() = default;
NearFieldOperatorTime::NearFieldOperatorTime(NearFieldOperatorTime&&) noexcept = default;
NearFieldOperatorTime& NearFieldOperatorTime::operator=(NearFieldOperatorTime&&) noexcept =
    default;

void NearFieldOperatorTime::apply(std::span<const double> g, std::span<double> out) const {
  require(g.size() == cols() && out.size() == rows(), ErrorKind::dimension,
          "operator input/output size mismatch");
  const std::size_t nf = fft_len_ / 2 + 1;
  const double scale = 1.0 / static_cast<double>(fft_len_);
  std::vector<double> buf(fft_len_);
  std::vector<std::complex<double>> spec(n_i_ * nf), acc(nf);
  for (std::size_t i = 0; i < n_i_; ++i) {
    std::fill(buf.begin(), buf.end(), 0.0);
    std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(i * n_t_), n_t_, buf.begin());
    fftw_execute_dft_r2c(plans_->forward, buf.data(), as_fftw(spec.data() + i * nf));
  }
  for (std::size_t m = 0; m < n_m_; ++m) {
    std::fill(acc.begin(), acc.end(), std::complex<double>{});
    for (std::size_t i = 0; i < n_i_; ++i) {
      const auto* h = kernel_freq_.data() + (m * n_i_ + i) * nf;
      const auto* x = spec.data() + i * nf;
      for (std::size_t b = 0; b < nf; ++b) acc[b] += h[b] * x[b];
    }
    fftw_execute_dft_c2r(plans_->backward, as_fftw(acc.data()), buf.data());
    for (std::size_t k = 0; k < n_t_; ++k) out[m * n_t_ + k] = scale * buf[k];
  }
}

void NearFieldOperatorTime::apply_transpose(std::span<const double> r,
                                            std::span<double> out) const {
  require(r.size() == rows() && out.size() == cols(), ErrorKind::dimension,
          "operator input/output size mismatch");
  const std::size_t nf = fft_len_ / 2 + 1;
  const double scale = 1.0 / static_cast<double>(fft_len_);
  std::vector<double> buf(fft_len_);
  std::vector<std::complex<double>> spec(n_m_ * nf), acc(nf);
  for (std::size_t m = 0; m < n_m_; ++m) {
    std::fill(buf.begin(), buf.end(), 0.0);
    std::copy_n(r.begin() + static_cast<std::ptrdiff_t>(m * n_t_), n_t_, buf.begin());
    fftw_execute_dft_r2c(plans_->forward, buf.data(), as_fftw(spec.data() + m * nf));
  }
  // Correlation with each kernel; the padding keeps the wrapped lags at zero.
  for (std::size_t i = 0; i < n_i_; ++i) {
    std::fill(acc.begin(), acc.end(), std::complex<double>{});
    for (std::size_t m = 0; m < n_m_; ++m) {
      const auto* h = kernel_freq_.data() + (m * n_i_ + i) * nf;
      const auto* x = spec.data() + m * nf;
      for (std::size_t b = 0; b < nf; ++b) acc[b] += std::conj(h[b]) * x[b];
    }
    fftw_execute_dft_c2r(plans_->backward, as_fftw(acc.data()), buf.data());
    for (std::size_t j = 0; j < n_t_; ++j) out[i * n_t_ + j] = scale * buf[j];
  }
}

void NearFieldOperatorTime::apply_adjoint(std::span<const double> r, std::span<double> out) const {
  apply_transpose(r, out);
  const double w = row_weight_ / col_weight_;
  for (auto& v : out) v *= w;
}

Eigen::MatrixXd NearFieldOperatorTime::dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                            static_cast<Eigen::Index>(cols()));
  for (std::size_t m = 0; m < n_m_; ++m)
    for (std::size_t i = 0; i < n_i_; ++i) {
      const double* v = kernel_time_.data() + (m * n_i_ + i) * n_t_;
      for (std::size_t k = 1; k < n_t_; ++k)
        for (std::size_t j = 0; j < k; ++j)
          a(static_cast<Eigen::Index>(m * n_t_ + k), static_cast<Eigen::Index>(i * n_t_ + j)) =
              v[k - j];
    }
  return a;
}

NearFieldOperatorFreq::NearFieldOperatorFreq(const dataops::SpectrumBlock& spectra,
                                             const dataops::ArrayGeometry& array)
    : n_m_(spectra.n_m),
      n_i_(spectra.n_i),
      tukey_(spectra.tukey),
      frequencies_(spectra.frequencies) {
  require(array.receivers.size() == n_m_ && array.sources.size() == n_i_, ErrorKind::dimension,
          "spectra do not match the array");
  require(spectra.values.size() == n_m_ * n_i_ * frequencies_.size(), ErrorKind::dimension,
          "spectrum block size mismatch");
  require(!frequencies_.empty(), ErrorKind::parameter, "N_omega must be at least 1");
  row_weight_ = array.receiver_spacing();
  col_weight_ = array.source_spacing();
  blocks_.assign(frequencies_.size(),
                 Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_m_),
                                        static_cast<Eigen::Index>(n_i_)));
  for (std::size_t k = 0; k < frequencies_.size(); ++k)
    for (std::size_t m = 0; m < n_m_; ++m)
      for (std::size_t i = 0; i < n_i_; ++i)
        blocks_[k](static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) =
            spectra.at(m, i, k);
}

Eigen::MatrixXcd NearFieldOperatorFreq::matrix() const {
  const auto bm = static_cast<Eigen::Index>(n_m_), bi = static_cast<Eigen::Index>(n_i_);
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(bm * static_cast<Eigen::Index>(n_omega()),
                                              bi * static_cast<Eigen::Index>(n_omega()));
  for (std::size_t k = 0; k < n_omega(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    a.block(bm * kk, bi * kk, bm, bi) = blocks_[k];
  }
  return a;
}

Eigen::VectorXcd NearFieldOperatorFreq::apply(const Eigen::VectorXcd& g) const {
  const auto bm = static_cast<Eigen::Index>(n_m_), bi = static_cast<Eigen::Index>(n_i_);
  require(g.size() == bi * static_cast<Eigen::Index>(n_omega()), ErrorKind::dimension,
          "density size does not match the operator");
  Eigen::VectorXcd out(bm * static_cast<Eigen::Index>(n_omega()));
  for (std::size_t k = 0; k < n_omega(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.segment(bm * kk, bm) = blocks_[k] * g.segment(bi * kk, bi);
  }
  return out;
}

}  // namespace tlsm::inversion
