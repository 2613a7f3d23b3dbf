#include <algorithm>
#include <cmath>
#include <numbers>

#include "tlsm/dataops.hpp"

namespace tlsm::dataops {

using cd = std::complex<double>;

std::complex<double> BandpassDesign::response(double frequency, double dt) const {
  const cd zinv = std::polar(1.0, -2.0 * std::numbers::pi * frequency * dt);
  cd h = 1.0;
  for (const auto& s : sections)
    h *= (s.b0 + zinv * (s.b1 + zinv * s.b2)) / (1.0 + zinv * (s.a1 + zinv * s.a2));
  return h;
}

BandpassDesign design_bandpass(double f_lo, double f_hi, double dt) {
  require(dt > 0.0, ErrorKind::parameter, "sampling step must be positive");
  const double nyquist = 0.5 / dt;
  require(f_lo > 0.0 && f_lo < f_hi && f_hi < nyquist, ErrorKind::band,
          "band [" + std::to_string(f_lo) + ", " + std::to_string(f_hi) +
              "] Hz must satisfy 0 < f_lo < f_hi < Nyquist = " + std::to_string(nyquist) + " Hz");
  const double fs2 = 2.0 / dt;
  // Prewarped analog band edges.
  const double w1 = fs2 * std::tan(std::numbers::pi * f_lo * dt);
  const double w2 = fs2 * std::tan(std::numbers::pi * f_hi * dt);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  // One prototype pole of the order-2 Butterworth lowpass; its conjugate
  // produces the conjugate band-pass poles.
  const cd proto = std::polar(1.0, 0.75 * std::numbers::pi);
  const cd disc = std::sqrt(proto * proto * bw * bw - 4.0 * w0sq);
  const cd analog[2] = {0.5 * (proto * bw + disc), 0.5 * (proto * bw - disc)};

  BandpassDesign d;
  for (const cd& s : analog) {
    const cd z = (fs2 + s) / (fs2 - s);
    d.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  // Unit gain at the digital image of the geometric centre frequency.
  const double centre = std::atan(std::sqrt(w0sq) / fs2) / (std::numbers::pi * dt);
  const double gain = 1.0 / std::abs(d.response(centre, dt));
  d.sections.front().b0 *= gain;
  d.sections.front().b1 *= gain;
  d.sections.front().b2 *= gain;
  return d;
}

namespace {

struct State {
  double z1 = 0.0, z2 = 0.0;
};

// Transposed direct form II, one pass through every section.
void run_sections(const BandpassDesign& d, std::span<double> x, std::vector<State> state) {
  for (std::size_t q = 0; q < d.sections.size(); ++q) {
    const auto& s = d.sections[q];
    double z1 = state[q].z1, z2 = state[q].z2;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

// Section states of the steady response to a unit step, each scaled by the
// DC gain of the sections before it.
std::vector<State> step_states(const BandpassDesign& d) {
  std::vector<State> out;
  double scale = 1.0;
  for (const auto& s : d.sections) {
    const double b1 = s.b1 - s.a1 * s.b0, b2 = s.b2 - s.a2 * s.b0;
    const double z1 = (b1 + b2) / (1.0 + s.a1 + s.a2);
    out.push_back({scale * z1, scale * (b2 - s.a2 * z1)});
    scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  }
  return out;
}

std::vector<State> scaled(std::vector<State> states, double x0) {
  for (auto& st : states) {
    st.z1 *= x0;
    st.z2 *= x0;
  }
  return states;
}

}  // namespace

void filtfilt(const BandpassDesign& design, std::span<double> trace) {
  const std::size_t n = trace.size();
  if (n < 2) return;
  // Odd extension at both ends, 3 (2 N_sections + 1) samples or fewer for
  // short traces.
  const std::size_t pad = std::min<std::size_t>(3 * (2 * design.sections.size() + 1), n - 1);
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t k = 0; k < pad; ++k) {
    ext[k] = 2.0 * trace[0] - trace[pad - k];
    ext[pad + n + k] = 2.0 * trace[n - 1] - trace[n - 2 - k];
  }
  std::copy(trace.begin(), trace.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

  const auto zi = step_states(design);
  run_sections(design, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(design, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  std::copy_n(ext.begin() + static_cast<std::ptrdiff_t>(pad), n, trace.begin());
}

WaveformBlock bandpass(const WaveformBlock& block, double f_lo, double f_hi) {
  const auto design = design_bandpass(f_lo, f_hi, block.grid.dt);
  WaveformBlock out = block;
  for (std::size_t m = 0; m < out.n_m(); ++m)
    for (std::size_t i = 0; i < out.n_i(); ++i) filtfilt(design, out.trace(m, i));
  return out;
}

TimeGrid Conditioning::output_grid(const TimeGrid& input) const {
  require(stride >= 1, ErrorKind::parameter, "decimation stride must be at least 1");
  return {input.dt * static_cast<double>(stride), (input.steps + stride - 1) / stride};
}

std::vector<double> Conditioning::apply(std::span<const double> trace, double dt) const {
  std::vector<double> work(trace.begin(), trace.end());
  if (filter) filtfilt(design_bandpass(f_lo, f_hi, dt), work);
  if (stride == 1) return work;
  std::vector<double> out((work.size() + stride - 1) / stride);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = work[k * stride];
  return out;
}

WaveformBlock Conditioning::apply(const WaveformBlock& block) const {
  WaveformBlock filtered = filter ? bandpass(block, f_lo, f_hi) : block;
  return decimate(filtered, stride);
}

}  // namespace tlsm::dataops
