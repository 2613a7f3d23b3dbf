#pragma once

// Waveform datasets: scattered-field formation, zero-phase band-pass
// filtering, windowed band spectra, synthetic noise and the binary dataset
// container.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tlsm/wavesim.hpp"

namespace tlsm::dataops {

using wavesim::ArrayGeometry;
using wavesim::TimeGrid;

enum class BlockKind : std::uint32_t {
  free = 0,
  total = 1,
  scattered = 2,
  trial_signature = 3,
};

/// u(x_m, t_k; y_i) stored m-major, i-middle, t-minor.
struct WaveformBlock {
  BlockKind kind = BlockKind::free;
  ArrayGeometry array;
  TimeGrid grid;
  std::vector<double> values;
  std::uint64_t provenance = 0;  ///< config hash of the producing run; 0 if unset

  static WaveformBlock zeros(BlockKind kind, ArrayGeometry array, TimeGrid grid);

  std::size_t n_m() const { return array.receivers.size(); }
  std::size_t n_i() const { return array.sources.size(); }
  std::size_t n_t() const { return grid.steps; }

  double& at(std::size_t m, std::size_t i, std::size_t k) {
    return values[(m * n_i() + i) * n_t() + k];
  }
  double at(std::size_t m, std::size_t i, std::size_t k) const {
    return values[(m * n_i() + i) * n_t() + k];
  }
  std::span<double> trace(std::size_t m, std::size_t i) {
    return {values.data() + (m * n_i() + i) * n_t(), n_t()};
  }
  std::span<const double> trace(std::size_t m, std::size_t i) const {
    return {values.data() + (m * n_i() + i) * n_t(), n_t()};
  }

  /// Dimensions consistent with array and grid, all values finite.
  void validate() const;
};

/// v(x_m, w_k; y_i), stored m-major, i-middle, frequency-minor.
struct SpectrumBlock {
  std::size_t n_m = 0;
  std::size_t n_i = 0;
  std::vector<double> frequencies;  ///< Hz, strictly increasing
  double tukey = 0.0;
  std::vector<std::complex<double>> values;

  std::size_t n_omega() const { return frequencies.size(); }
  std::complex<double> at(std::size_t m, std::size_t i, std::size_t k) const {
    return values[(m * n_i + i) * n_omega() + k];
  }
};

WaveformBlock scattered_field(const WaveformBlock& total, const WaveformBlock& free);

/// Second-order Butterworth band-pass as two biquad sections (b0 b1 b2 a1 a2,
/// a0 = 1), matching the classic analog-prototype + bilinear design.
struct BandpassDesign {
  struct Section {
    double b0, b1, b2, a1, a2;
  };
  std::vector<Section> sections;

  std::complex<double> response(double frequency, double dt) const;
};

BandpassDesign design_bandpass(double f_lo, double f_hi, double dt);

/// Forward then backward pass over an odd extension of the trace, each pass
/// started from the steady state for its first sample.
void filtfilt(const BandpassDesign& design, std::span<double> trace);

WaveformBlock bandpass(const WaveformBlock& block, double f_lo, double f_hi);

/// Symmetric Tukey window; `alpha` is the tapered fraction (0 = boxcar,
/// 1 = Hann).
std::vector<double> tukey_window(std::size_t n, double alpha);

/// N_omega uniformly spaced frequencies spanning [f_lo, f_hi].
std::vector<double> band_frequencies(double f_lo, double f_hi, std::size_t n_omega);

/// dt * sum_k w_k x_k exp(-2 pi i f t_k) evaluated directly at each frequency.
class BandTransform {
 public:
  BandTransform(std::size_t n_t, double dt, double tukey, std::vector<double> frequencies);

  void apply(std::span<const double> trace, std::span<std::complex<double>> out) const;
  const std::vector<double>& frequencies() const { return frequencies_; }

 private:
  std::size_t n_t_;
  std::vector<double> frequencies_;
  std::vector<std::complex<double>> kernel_;  // [omega][t], window folded in
};

SpectrumBlock spectra(const WaveformBlock& block, double tukey, double f_lo, double f_hi,
                      std::size_t n_omega);

/// Adds white Gaussian noise with standard deviation relative_level * RMS of
/// the whole block.
WaveformBlock add_noise(const WaveformBlock& block, double relative_level, std::uint64_t seed);

/// Keeps every `stride`-th sample.
WaveformBlock decimate(const WaveformBlock& block, std::size_t stride);

/// Restricts the record to the first round(period / dt) samples.
WaveformBlock truncate(const WaveformBlock& block, double period);
std::size_t samples_for_period(const TimeGrid& grid, double period);

/// Band-pass (optional) followed by decimation; applied identically to data
/// and trial signatures.
struct Conditioning {
  bool filter = false;
  double f_lo = 0.0;
  double f_hi = 0.0;
  std::size_t stride = 1;

  TimeGrid output_grid(const TimeGrid& input) const;
  std::vector<double> apply(std::span<const double> trace, double dt) const;
  WaveformBlock apply(const WaveformBlock& block) const;
};

// Dataset container: magic "LUWF0001", u32 kind, N_m, N_i, N_t, f64 dt,
// f64 receivers, f64 sources, f64 samples (m, i, t order), all little-endian.
// An optional trailer "PROVHASH" + u64 carries the provenance hash.
inline constexpr char kDatasetMagic[] = "LUWF0001";

void write_block(const std::filesystem::path& path, const WaveformBlock& block);
WaveformBlock read_block(const std::filesystem::path& path);
/// One row per (m, i) pair with the samples as columns.
void write_csv(const std::filesystem::path& path, const WaveformBlock& block);

}  // namespace tlsm::dataops
