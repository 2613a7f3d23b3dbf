#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tlsm/binary_io.hpp"
#include "tlsm/inversion.hpp"

namespace tlsm::inversion {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

void check_array(const dataops::ArrayGeometry& a, const dataops::ArrayGeometry& b) {
  bool same = a.receivers.size() == b.receivers.size();
  for (std::size_t m = 0; same && m < a.receivers.size(); ++m)
    same = close(a.receivers[m], b.receivers[m]) || a.receivers[m] == b.receivers[m];
  require(same, ErrorKind::dimension, "library receivers do not match the data");
}

SolveRecord solve_pattern(const Spectral& spec, double scale2, const RegularizationConfig& reg) {
  SolveRecord rec;
  rec.dimension = static_cast<std::size_t>(spec.sigma.size());
  rec.rhs_norm = spec.rhs_norm;
  if (!(spec.rhs_norm > 0.0)) {
    rec.norm = kInf;
    rec.saturated = true;
    return rec;
  }
  const TikhonovResult res = morozov_select(spec, reg.delta, scale2, reg);
  rec.eta = res.eta;
  rec.residual = res.residual;
  rec.norm = res.norm > 0.0 ? res.norm : kInf;
  rec.saturated = res.saturated;
  rec.capped = res.capped;
  return rec;
}

// Picks the smallest norm per sampling point; `records` is ordered
// [s][n][r].
IndicatorMap assemble(const SamplingGrid& grid, MapDomain domain, std::size_t n_p,
                      std::size_t n_r, const std::vector<SolveRecord>& records) {
  IndicatorMap map;
  map.grid = grid;
  map.domain = domain;
  map.values.assign(grid.size(), 0.0);
  map.best_n.assign(grid.size(), 0);
  map.best_r.assign(grid.size(), 0);
  bool all_saturated = true;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    double best = kInf;
    for (std::size_t n = 0; n < n_p; ++n)
      for (std::size_t r = 0; r < n_r; ++r) {
        const auto& rec = records[(s * n_p + n) * n_r + r];
        all_saturated = all_saturated && rec.saturated;
        if (rec.norm < best) {
          best = rec.norm;
          map.best_n[s] = n;
          map.best_r[s] = r;
        }
      }
    map.values[s] = std::isfinite(best) ? 1.0 / best : 0.0;
  }
  map.degenerate = all_saturated || map.max() <= 0.0;
  return map;
}

MapResult zero_operator_map(const SamplingGrid& grid, MapDomain domain, std::size_t n_p,
                            std::size_t n_r) {
  std::vector<SolveRecord> records(grid.size() * n_p * n_r);
  for (std::size_t q = 0; q < records.size(); ++q) {
    records[q].s = q / (n_p * n_r);
    records[q].n = (q / n_r) % n_p;
    records[q].r = q % n_r;
    records[q].norm = kInf;
    records[q].saturated = true;
  }
  MapResult out{assemble(grid, domain, n_p, n_r, records), std::move(records)};
  out.map.degenerate = true;
  return out;
}

}  // namespace

double IndicatorMap::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

std::vector<double> IndicatorMap::normalized() const {
  const double m = max();
  std::vector<double> out(values.size(), 0.0);
  if (m > 0.0)
    for (std::size_t s = 0; s < values.size(); ++s) out[s] = values[s] / m;
  return out;
}

std::size_t IndicatorMap::argmax() const {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

MapResult tlsm_map(const NearFieldOperatorTime& op, const triallib::SignatureLibrary& lib,
                   const RegularizationConfig& reg) {
  reg.validate();
  require(lib.domain == triallib::LibraryDomain::time, ErrorKind::config,
          "time-domain indicator needs a time library");
  require(lib.n_z() >= 1 && lib.n_p() >= 1 && lib.n_outsets() >= 1, ErrorKind::config,
          "empty signature library");
  require(lib.n_m() == op.n_m(), ErrorKind::dimension, "library and data receiver counts differ");
  check_array(lib.array, op.array());
  require(close(lib.time_grid.dt, op.dt()), ErrorKind::dimension,
          "library and data time steps differ");
  require(op.n_t() <= lib.n_t(), ErrorKind::dimension, "library record shorter than the data");

  const std::size_t n_z = lib.n_z(), n_p = lib.n_p(), n_r = lib.n_outsets();
  const std::size_t samples = op.n_t();
  const bool dense = reg.mode == SolverMode::dense_svd ||
                     (reg.mode == SolverMode::automatic &&
                      std::max(op.rows(), op.cols()) <= reg.dense_limit);
  const double rw = std::sqrt(op.row_weight());
  const double scale = std::sqrt(op.row_weight() / op.col_weight());

  std::unique_ptr<DenseTikhonov<double>> factor;
  LinearMap map = scaled_map(op);
  double norm = 0.0;
  if (dense) {
    factor = std::make_unique<DenseTikhonov<double>>(scale * op.dense(), false);
    norm = factor->norm();
  } else {
    norm = estimate_norm(map);
  }
  if (!(norm > 0.0)) return zero_operator_map(lib.grid, MapDomain::time, n_p, n_r);
  const double scale2 = norm * norm;

  std::vector<SolveRecord> records(n_z * n_p * n_r);
  const auto finish = [&](SolveRecord rec, std::size_t s, std::size_t n, std::size_t r) {
    rec.s = s;
    rec.n = n;
    rec.r = r;
    rec.time_weight = std::sqrt(op.dt());
    rec.space_weight = std::sqrt(op.array().source_spacing());
    records[(s * n_p + n) * n_r + r] = rec;
  };
  std::vector<std::string> errors(n_z);
  if (dense) {
    // Patterns of a block of sampling points share one product with U.
    const std::size_t per_point = n_p * n_r, block = 32;
    for (std::size_t s0 = 0; s0 < n_z; s0 += block) {
      const std::size_t s1 = std::min(n_z, s0 + block);
      Eigen::MatrixXd b(static_cast<Eigen::Index>(op.rows()),
                        static_cast<Eigen::Index>((s1 - s0) * per_point));
      for (std::size_t q = 0; q < (s1 - s0) * per_point; ++q) {
        const std::size_t s = s0 + q / per_point, n = (q / n_r) % n_p, r = q % n_r;
        lib.signature(s, n, r, samples,
                      std::span<double>(b.col(static_cast<Eigen::Index>(q)).data(), op.rows()));
      }
      b *= rw;
      const auto specs = factor->spectra(b);
#pragma omp parallel for schedule(dynamic)
      for (std::size_t q = 0; q < specs.size(); ++q) {
        const std::size_t s = s0 + q / per_point;
        try {
          finish(solve_pattern(specs[q], scale2, reg), s, (q / n_r) % n_p, q % n_r);
        } catch (const std::exception& e) {
#pragma omp critical
          errors[s] = e.what();
        }
      }
    }
  } else {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t s = 0; s < n_z; ++s) {
      try {
        Eigen::VectorXd b(static_cast<Eigen::Index>(op.rows()));
        for (std::size_t n = 0; n < n_p; ++n)
          for (std::size_t r = 0; r < n_r; ++r) {
            lib.signature(s, n, r, samples, std::span<double>(b.data(), op.rows()));
            b *= rw;
            finish(solve_pattern(ProjectedTikhonov(map, b, reg.projection_cap).spectral(), scale2,
                                 reg),
                   s, n, r);
          }
      } catch (const std::exception& e) {
        errors[s] = e.what();
      }
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::numerical, "time-domain solve failed: " + e);
  MapResult out{assemble(lib.grid, MapDomain::time, n_p, n_r, records), std::move(records)};
  return out;
}

MapResult lsm_map(const NearFieldOperatorFreq& op, const triallib::SignatureLibrary& lib,
                  const RegularizationConfig& reg) {
  reg.validate();
  require(lib.domain == triallib::LibraryDomain::frequency, ErrorKind::config,
          "multifrequency indicator needs a frequency library");
  require(lib.n_m() == op.n_m(), ErrorKind::band, "library and data receiver counts differ");
  require(lib.frequencies.size() == op.n_omega(), ErrorKind::band,
          "library and data frequency counts differ");
  for (std::size_t k = 0; k < op.n_omega(); ++k)
    require(close(lib.frequencies[k], op.frequencies()[k]), ErrorKind::band,
            "library and data band frequencies differ");
  require(lib.tukey == op.tukey(), ErrorKind::band, "library and data windows differ");

  const std::size_t n_m = op.n_m(), n_w = op.n_omega(), n_p = lib.n_p();
  const double rw = std::sqrt(op.row_weight());
  const double scale = std::sqrt(op.row_weight() / op.col_weight());
  std::vector<DenseTikhonov<std::complex<double>>> factors;
  factors.reserve(n_w);
  double norm = 0.0;
  for (std::size_t k = 0; k < n_w; ++k) {
    factors.emplace_back(Eigen::MatrixXcd(scale * op.block(k)), false);
    norm = std::max(norm, factors.back().norm());
  }
  if (!(norm > 0.0)) return zero_operator_map(lib.grid, MapDomain::frequency, n_p, 1);
  const double scale2 = norm * norm;

  const std::size_t cols = lib.n_z() * n_p;
  std::vector<SolveRecord> records(cols);
  std::vector<std::string> errors(cols);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t col = 0; col < cols; ++col) {
    try {
      // Block-diagonal system: the stacked spectral data is the union of
      // the per-frequency data, solved with one eta.
      Spectral spec;
      std::vector<Spectral> parts;
      Eigen::Index total = 0;
      double rhs2 = 0.0;
      for (std::size_t k = 0; k < n_w; ++k) {
        const Eigen::VectorXcd b =
            rw * lib.phi_hat.block(static_cast<Eigen::Index>(k * n_m),
                                   static_cast<Eigen::Index>(col),
                                   static_cast<Eigen::Index>(n_m), 1);
        parts.push_back(factors[k].spectral(b));
        total += parts.back().sigma.size();
        rhs2 += parts.back().rhs_norm * parts.back().rhs_norm;
      }
      spec.sigma.resize(total);
      spec.coef2.resize(total);
      Eigen::Index at = 0;
      for (const auto& p : parts) {
        spec.sigma.segment(at, p.sigma.size()) = p.sigma;
        spec.coef2.segment(at, p.sigma.size()) = p.coef2;
        spec.tail2 += p.tail2;
        at += p.sigma.size();
      }
      spec.rhs_norm = std::sqrt(rhs2);
      SolveRecord rec = solve_pattern(spec, scale2, reg);
      rec.s = col / n_p;
      rec.n = col % n_p;
      rec.space_weight = std::sqrt(op.col_weight());
      records[col] = rec;
    } catch (const std::exception& e) {
      errors[col] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::numerical, "multifrequency solve failed: " + e);
  MapResult out{assemble(lib.grid, MapDomain::frequency, n_p, 1, records), std::move(records)};
  return out;
}

inline constexpr char kMapMagic[] = "LUMP0001";

void write_map(const std::filesystem::path& path, const IndicatorMap& map) {
  require(map.values.size() == map.grid.size(), ErrorKind::dimension,
          "map values do not match the grid");
  io::ByteWriter w;
  w.bytes(kMapMagic);
  w.u32(static_cast<std::uint32_t>(map.domain));
  w.u64(map.config_hash);
  for (double v : {map.grid.x_min, map.grid.x_max, map.grid.z_min, map.grid.z_max}) w.f64(v);
  w.u64(map.grid.nx);
  w.u64(map.grid.nz);
  w.u32(map.degenerate ? 1 : 0);
  for (double v : map.values) w.f64(v);
  w.save(path);
}

IndicatorMap read_map(const std::filesystem::path& path) {
  auto r = io::ByteReader::load(path);
  r.expect_magic(kMapMagic);
  IndicatorMap map;
  const auto domain = r.u32();
  require(domain <= 1, ErrorKind::format, "unknown map domain");
  map.domain = static_cast<MapDomain>(domain);
  map.config_hash = r.u64();
  map.grid.x_min = r.f64();
  map.grid.x_max = r.f64();
  map.grid.z_min = r.f64();
  map.grid.z_max = r.f64();
  map.grid.nx = r.u64();
  map.grid.nz = r.u64();
  constexpr std::uint64_t limit = std::uint64_t{1} << 32;
  require(map.grid.nx < limit && map.grid.nz < limit, ErrorKind::format, "map dimensions overflow");
  map.degenerate = r.u32() != 0;
  r.require_items(map.grid.size(), 8, "value");
  map.values.resize(map.grid.size());
  for (auto& v : map.values) v = r.f64();
  map.best_n.assign(map.values.size(), 0);
  map.best_r.assign(map.values.size(), 0);
  return map;
}

void write_map_csv(const std::filesystem::path& path, const IndicatorMap& map) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "ix,iz,x,z,value\n";
  for (std::size_t s = 0; s < map.values.size(); ++s) {
    const Point2 p = map.grid.point(s);
    out << s % map.grid.nx << ',' << s / map.grid.nx << ',' << p.x << ',' << p.z << ','
        << map.values[s] << '\n';
  }
  if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

void write_records_csv(const std::filesystem::path& path, const std::vector<SolveRecord>& records) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "s,n,r,eta,residual,norm,saturated,capped,time_weight,space_weight,dimension\n";
  for (const auto& rec : records)
    out << rec.s << ',' << rec.n << ',' << rec.r << ',' << rec.eta << ',' << rec.residual << ','
        << rec.norm << ',' << rec.saturated << ',' << rec.capped << ',' << rec.time_weight << ','
        << rec.space_weight << ',' << rec.dimension << '\n';
  if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

}  // namespace tlsm::inversion
