#include <cmath>
#include <numbers>

#include "tlsm/dataops.hpp"

namespace tlsm::dataops {

std::vector<double> tukey_window(std::size_t n, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::parameter, "Tukey factor must lie in [0, 1]");
  std::vector<double> w(n, 1.0);
  if (n < 2 || alpha == 0.0) return w;
  const double pi = std::numbers::pi;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(n - 1);
    if (x < 0.5 * alpha)
      w[k] = 0.5 * (1.0 + std::cos(pi * (2.0 * x / alpha - 1.0)));
    else if (x > 1.0 - 0.5 * alpha)
      w[k] = 0.5 * (1.0 + std::cos(pi * (2.0 * x / alpha - 2.0 / alpha + 1.0)));
  }
  return w;
}

std::vector<double> band_frequencies(double f_lo, double f_hi, std::size_t n_omega) {
  require(n_omega >= 1, ErrorKind::parameter, "N_omega must be at least 1");
  require(f_lo > 0.0 && f_hi >= f_lo, ErrorKind::band, "band must satisfy 0 < f_lo <= f_hi");
  if (n_omega == 1) return {f_lo};
  require(f_hi > f_lo, ErrorKind::band, "several frequencies need f_hi > f_lo");
  std::vector<double> f(n_omega);
  const double step = (f_hi - f_lo) / static_cast<double>(n_omega - 1);
  for (std::size_t k = 0; k < n_omega; ++k) f[k] = f_lo + step * static_cast<double>(k);
  f.back() = f_hi;
  return f;
}

BandTransform::BandTransform(std::size_t n_t, double dt, double tukey,
                             std::vector<double> frequencies)
    : n_t_(n_t), frequencies_(std::move(frequencies)) {
  require(!frequencies_.empty(), ErrorKind::parameter, "N_omega must be at least 1");
  const double nyquist = 0.5 / dt;
  for (double f : frequencies_)
    require(f > 0.0 && f < nyquist, ErrorKind::band,
            "frequency " + std::to_string(f) + " Hz outside (0, Nyquist)");
  const auto window = tukey_window(n_t, tukey);
  kernel_.resize(frequencies_.size() * n_t);
  for (std::size_t q = 0; q < frequencies_.size(); ++q)
    for (std::size_t k = 0; k < n_t; ++k) {
      const double phase = -2.0 * std::numbers::pi * frequencies_[q] * dt * static_cast<double>(k);
      kernel_[q * n_t + k] = dt * window[k] * std::polar(1.0, phase);
    }
}

void BandTransform::apply(std::span<const double> trace,
                          std::span<std::complex<double>> out) const {
  require(trace.size() == n_t_ && out.size() == frequencies_.size(), ErrorKind::dimension,
          "band transform size mismatch");
  for (std::size_t q = 0; q < frequencies_.size(); ++q) {
    const auto* row = kernel_.data() + q * n_t_;
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < n_t_; ++k) {
      re += row[k].real() * trace[k];
      im += row[k].imag() * trace[k];
    }
    out[q] = {re, im};
  }
}

SpectrumBlock spectra(const WaveformBlock& block, double tukey, double f_lo, double f_hi,
                      std::size_t n_omega) {
  require(n_omega >= 1, ErrorKind::parameter, "N_omega must be at least 1");
  require(f_hi < 0.5 / block.grid.dt, ErrorKind::band, "band exceeds the Nyquist frequency");
  BandTransform transform(block.n_t(), block.grid.dt, tukey,
                          band_frequencies(f_lo, f_hi, n_omega));
  SpectrumBlock out;
  out.n_m = block.n_m();
  out.n_i = block.n_i();
  out.frequencies = transform.frequencies();
  out.tukey = tukey;
  out.values.resize(out.n_m * out.n_i * n_omega);
  for (std::size_t m = 0; m < out.n_m; ++m)
    for (std::size_t i = 0; i < out.n_i; ++i)
      transform.apply(block.trace(m, i),
                      {out.values.data() + (m * out.n_i + i) * n_omega, n_omega});
  return out;
}

}  // namespace tlsm::dataops
