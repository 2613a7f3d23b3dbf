#include <cmath>
#include <fstream>
#include <random>

#include "tlsm/binary_io.hpp"
#include "tlsm/dataops.hpp"

namespace tlsm::dataops {

WaveformBlock WaveformBlock::zeros(BlockKind kind, ArrayGeometry array, TimeGrid grid) {
  WaveformBlock b;
  b.kind = kind;
  b.array = std::move(array);
  b.grid = grid;
  b.values.assign(b.n_m() * b.n_i() * b.n_t(), 0.0);
  return b;
}

void WaveformBlock::validate() const {
  require(values.size() == n_m() * n_i() * n_t(), ErrorKind::dimension,
          "block holds " + std::to_string(values.size()) + " samples, expected " +
              std::to_string(n_m() * n_i() * n_t()));
  for (double v : values)
    require(std::isfinite(v), ErrorKind::numerical, "block contains non-finite samples");
}

namespace {

void require_same_layout(const WaveformBlock& a, const WaveformBlock& b) {
  const bool same = a.array.receivers == b.array.receivers && a.array.sources == b.array.sources &&
                    a.grid.dt == b.grid.dt && a.grid.steps == b.grid.steps &&
                    a.values.size() == b.values.size();
  require(same, ErrorKind::dimension, "blocks differ in array or time-grid metadata");
}

}  // namespace

WaveformBlock scattered_field(const WaveformBlock& total, const WaveformBlock& free) {
  require_same_layout(total, free);
  WaveformBlock out = total;
  out.kind = BlockKind::scattered;
  for (std::size_t n = 0; n < out.values.size(); ++n) out.values[n] = total.values[n] - free.values[n];
  return out;
}

WaveformBlock add_noise(const WaveformBlock& block, double relative_level, std::uint64_t seed) {
  require(relative_level >= 0.0, ErrorKind::parameter, "noise level must be non-negative");
  WaveformBlock out = block;
  if (relative_level == 0.0 || block.values.empty()) return out;
  double sum2 = 0.0;
  for (double v : block.values) sum2 += v * v;
  const double sigma = relative_level * std::sqrt(sum2 / static_cast<double>(block.values.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.values) v += sigma * normal(rng);
  return out;
}

WaveformBlock decimate(const WaveformBlock& block, std::size_t stride) {
  require(stride >= 1, ErrorKind::parameter, "decimation stride must be at least 1");
  if (stride == 1) return block;
  const std::size_t n_out = (block.n_t() + stride - 1) / stride;
  WaveformBlock out = WaveformBlock::zeros(block.kind, block.array,
                                           TimeGrid{block.grid.dt * static_cast<double>(stride), n_out});
  out.provenance = block.provenance;
  for (std::size_t m = 0; m < block.n_m(); ++m)
    for (std::size_t i = 0; i < block.n_i(); ++i) {
      auto src = block.trace(m, i);
      auto dst = out.trace(m, i);
      for (std::size_t k = 0; k < n_out; ++k) dst[k] = src[k * stride];
    }
  return out;
}

std::size_t samples_for_period(const TimeGrid& grid, double period) {
  require(period > 0.0, ErrorKind::parameter, "period must be positive");
  const auto n = static_cast<std::size_t>(std::llround(period / grid.dt));
  require(n >= 1 && n <= grid.steps, ErrorKind::parameter,
          "period " + std::to_string(period) + " s exceeds the recorded " +
              std::to_string(grid.period()) + " s");
  return n;
}

WaveformBlock truncate(const WaveformBlock& block, double period) {
  const std::size_t n = samples_for_period(block.grid, period);
  WaveformBlock out = WaveformBlock::zeros(block.kind, block.array, TimeGrid{block.grid.dt, n});
  out.provenance = block.provenance;
  for (std::size_t m = 0; m < block.n_m(); ++m)
    for (std::size_t i = 0; i < block.n_i(); ++i) {
      auto src = block.trace(m, i);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n), out.trace(m, i).begin());
    }
  return out;
}

void write_block(const std::filesystem::path& path, const WaveformBlock& block) {
  block.validate();
  io::ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, 8));
  w.u32(static_cast<std::uint32_t>(block.kind));
  w.u32(static_cast<std::uint32_t>(block.n_m()));
  w.u32(static_cast<std::uint32_t>(block.n_i()));
  w.u32(static_cast<std::uint32_t>(block.n_t()));
  w.f64(block.grid.dt);
  for (double x : block.array.receivers) w.f64(x);
  for (double y : block.array.sources) w.f64(y);
  for (double v : block.values) w.f64(v);
  if (block.provenance != 0) {
    w.bytes("PROVHASH");
    w.u64(block.provenance);
  }
  w.save(path);
}

WaveformBlock read_block(const std::filesystem::path& path) {
  auto r = io::ByteReader::load(path);
  r.expect_magic(std::string_view(kDatasetMagic, 8));
  const std::uint32_t kind = r.u32();
  require(kind <= 3, ErrorKind::format, "unknown block kind " + std::to_string(kind));
  const std::uint64_t n_m = r.u32(), n_i = r.u32(), n_t = r.u32();
  const std::uint64_t limit = std::uint64_t{1} << 40;
  require(n_m <= limit / std::max<std::uint64_t>(n_i, 1) &&
              n_m * n_i <= limit / std::max<std::uint64_t>(n_t, 1),
          ErrorKind::format, "dimension overflow in header");
  WaveformBlock b;
  b.kind = static_cast<BlockKind>(kind);
  b.grid.dt = r.f64();
  b.grid.steps = n_t;
  r.require_items(n_m + n_i, 8, "coordinate");
  b.array.receivers.resize(n_m);
  b.array.sources.resize(n_i);
  for (auto& x : b.array.receivers) x = r.f64();
  for (auto& y : b.array.sources) y = r.f64();
  r.require_items(n_m * n_i * n_t, 8, "sample");
  b.values.resize(n_m * n_i * n_t);
  for (auto& v : b.values) v = r.f64();
  if (r.remaining() >= 16 && r.bytes(8) == "PROVHASH") b.provenance = r.u64();
  return b;
}

void write_csv(const std::filesystem::path& path, const WaveformBlock& block) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "m,i";
  for (std::size_t k = 0; k < block.n_t(); ++k) out << ",t" << k;
  out << '\n';
  for (std::size_t m = 0; m < block.n_m(); ++m)
    for (std::size_t i = 0; i < block.n_i(); ++i) {
      out << m << ',' << i;
      for (double v : block.trace(m, i)) out << ',' << v;
      out << '\n';
    }
}

}  // namespace tlsm::dataops
