#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tlsm/binary_io.hpp"
#include "tlsm/triallib.hpp"

namespace tlsm::triallib {

namespace {

double axis_value(double lo, double hi, std::size_t n, std::size_t i) {
  if (n == 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

Point2 SamplingGrid::point(std::size_t s) const {
  return {axis_value(x_min, x_max, nx, s % nx), axis_value(z_min, z_max, nz, s / nx)};
}

double SamplingGrid::dx() const {
  return nx > 1 ? (x_max - x_min) / static_cast<double>(nx - 1) : 0.0;
}
double SamplingGrid::dz() const {
  return nz > 1 ? (z_max - z_min) / static_cast<double>(nz - 1) : 0.0;
}

void SamplingGrid::validate() const {
  require(nx >= 1 && nz >= 1, ErrorKind::parameter, "sampling grid needs n_x, n_z >= 1");
  require(x_max >= x_min && z_max >= z_min, ErrorKind::geometry,
          "sampling rectangle has negative extent");
  require((nx > 1) == (x_max > x_min) && (nz > 1) == (z_max > z_min), ErrorKind::geometry,
          "sampling rectangle extent must be zero exactly when its count is 1");
}

void SamplingGrid::validate_inside(const MaterialModel2D& model) const {
  validate();
  require(x_min > 0.0 && x_max < model.width && z_min > 0.0 && z_max < model.depth,
          ErrorKind::geometry, "sampling rectangle must lie strictly inside the specimen");
}

double TrialConfig::angle(std::size_t n) const {
  return std::numbers::pi * static_cast<double>(n) / static_cast<double>(polarizations);
}

void TrialConfig::validate() const {
  require(polarizations >= 1, ErrorKind::parameter, "need at least one polarization");
  require(!outsets.empty(), ErrorKind::parameter, "need at least one outset");
  for (double t0 : outsets)
    require(t0 >= 0.0, ErrorKind::parameter, "outsets must be nonnegative");
}

std::vector<std::size_t> outset_steps(const std::vector<double>& outsets, const TimeGrid& grid) {
  std::vector<std::size_t> out;
  out.reserve(outsets.size());
  for (double t0 : outsets) {
    require(t0 >= 0.0, ErrorKind::parameter, "outsets must be nonnegative");
    const double k = std::round(t0 / grid.dt);
    if (std::abs(k * grid.dt - t0) > 1e-6 * grid.dt)
      fail(ErrorKind::alignment, "outset " + std::to_string(t0) +
                                     " s is not a multiple of the time step " +
                                     std::to_string(grid.dt) + " s");
    const auto step = static_cast<std::size_t>(k);
    require(step < grid.steps, ErrorKind::alignment,
            "outset " + std::to_string(t0) + " s lies beyond the record period");
    out.push_back(step);
  }
  return out;
}

std::span<const double> SignatureLibrary::base_signature(std::size_t s, std::size_t n) const {
  const std::size_t len = n_m() * n_t();
  return {base.data() + (s * n_p() + n) * len, len};
}

void SignatureLibrary::signature(std::size_t s, std::size_t n, std::size_t r,
                                 std::size_t samples, std::span<double> out) const {
  require(domain == LibraryDomain::time, ErrorKind::config, "library has no time form");
  require(samples <= n_t() && out.size() == n_m() * samples, ErrorKind::dimension,
          "signature buffer does not match the requested record");
  const std::size_t shift = outset_steps.at(r);
  const auto src = base_signature(s, n);
  for (std::size_t m = 0; m < n_m(); ++m) {
    double* dst = out.data() + m * samples;
    const double* row = src.data() + m * n_t();
    const std::size_t lead = std::min(shift, samples);
    std::fill(dst, dst + lead, 0.0);
    for (std::size_t k = lead; k < samples; ++k) dst[k] = row[k - shift];
  }
}

std::vector<double> SignatureLibrary::signature(std::size_t s, std::size_t n, std::size_t r,
                                                std::size_t samples) const {
  std::vector<double> out(n_m() * samples);
  signature(s, n, r, samples, out);
  return out;
}

SignatureLibrary SignatureLibrary::select_points(const std::vector<std::size_t>& points,
                                                 const SamplingGrid& subgrid) const {
  require(points.size() == subgrid.size(), ErrorKind::dimension,
          "point list does not match the sub-grid size");
  SignatureLibrary out = *this;
  out.grid = subgrid;
  const std::size_t cols = n_p();
  if (domain == LibraryDomain::time) {
    const std::size_t len = cols * n_m() * n_t();
    out.base.assign(points.size() * len, 0.0);
    for (std::size_t q = 0; q < points.size(); ++q) {
      require(points[q] < n_z(), ErrorKind::dimension, "sampling index out of range");
      std::copy_n(base.begin() + static_cast<std::ptrdiff_t>(points[q] * len), len,
                  out.base.begin() + static_cast<std::ptrdiff_t>(q * len));
    }
  } else {
    out.phi_hat.resize(phi_hat.rows(), static_cast<Eigen::Index>(points.size() * cols));
    for (std::size_t q = 0; q < points.size(); ++q) {
      require(points[q] < n_z(), ErrorKind::dimension, "sampling index out of range");
      out.phi_hat.middleCols(static_cast<Eigen::Index>(q * cols), static_cast<Eigen::Index>(cols)) =
          phi_hat.middleCols(static_cast<Eigen::Index>(points[q] * cols),
                             static_cast<Eigen::Index>(cols));
    }
  }
  return out;
}

SignatureLibrary SignatureLibrary::select_polarizations(std::size_t count) const {
  require(count >= 1 && n_p() % count == 0, ErrorKind::parameter,
          "polarization count " + std::to_string(count) + " must divide " +
              std::to_string(n_p()));
  const std::size_t step = n_p() / count;
  SignatureLibrary out = *this;
  out.polarizations = count;
  out.angles.clear();
  for (std::size_t n = 0; n < count; ++n) out.angles.push_back(angles[n * step]);
  if (domain == LibraryDomain::time) {
    const std::size_t len = n_m() * n_t();
    out.base.assign(n_z() * count * len, 0.0);
    for (std::size_t s = 0; s < n_z(); ++s)
      for (std::size_t n = 0; n < count; ++n) {
        const auto src = base_signature(s, n * step);
        std::copy(src.begin(), src.end(),
                  out.base.begin() + static_cast<std::ptrdiff_t>((s * count + n) * len));
      }
  } else {
    out.phi_hat.resize(phi_hat.rows(), static_cast<Eigen::Index>(n_z() * count));
    for (std::size_t s = 0; s < n_z(); ++s)
      for (std::size_t n = 0; n < count; ++n)
        out.phi_hat.col(static_cast<Eigen::Index>(s * count + n)) =
            phi_hat.col(static_cast<Eigen::Index>(s * n_p() + n * step));
  }
  return out;
}

SignatureLibrary SignatureLibrary::select_outsets(
    const std::vector<std::size_t>& outset_indices) const {
  require(!outset_indices.empty(), ErrorKind::parameter, "need at least one outset");
  SignatureLibrary out = *this;
  out.outset_steps.clear();
  for (std::size_t r : outset_indices) {
    require(r < n_outsets(), ErrorKind::dimension, "outset index out of range");
    out.outset_steps.push_back(outset_steps[r]);
  }
  return out;
}

namespace {

std::uint64_t library_provenance(const MaterialModel2D& background, Backend backend,
                                 const SamplingGrid& grid, const TrialConfig& config,
                                 const ArrayGeometry& array, const TimeGrid& sim_grid,
                                 const dataops::Conditioning& cond) {
  std::ostringstream os;
  os.precision(17);
  os << background.hash() << ' ' << wavesim::to_string(backend) << " g" << grid.x_min << ','
     << grid.x_max << ',' << grid.z_min << ',' << grid.z_max << ',' << grid.nx << ',' << grid.nz
     << " p" << config.polarizations << " t" << sim_grid.dt << ',' << sim_grid.steps << " c"
     << cond.filter << ',' << cond.f_lo << ',' << cond.f_hi << ',' << cond.stride;
  for (double x : array.sources) os << " s" << x;
  for (double x : array.receivers) os << " r" << x;
  for (double t : config.outsets) os << " o" << t;
  return fnv1a(os.str());
}

SignatureLibrary empty_library(const MaterialModel2D& background, Backend backend,
                               const SamplingGrid& grid, const TrialConfig& config,
                               const ArrayGeometry& array, const TimeGrid& sim_grid,
                               const dataops::Conditioning& cond) {
  background.validate();
  grid.validate_inside(background);
  config.validate();
  array.validate();
  SignatureLibrary lib;
  lib.grid = grid;
  lib.polarizations = config.polarizations;
  for (std::size_t n = 0; n < config.polarizations; ++n) lib.angles.push_back(config.angle(n));
  lib.array = array;
  lib.background_hash = background.hash();
  lib.provenance = library_provenance(background, backend, grid, config, array, sim_grid, cond);
  lib.time_grid = cond.output_grid(sim_grid);
  lib.outset_steps = outset_steps(config.outsets, lib.time_grid);
  lib.base.assign(lib.n_z() * lib.n_p() * lib.n_m() * lib.n_t(), 0.0);
  return lib;
}

}  // namespace

wavesim::TraceSet trial_signature_direct(const MaterialModel2D& background, Backend backend,
                                         Point2 z, double theta, double t0,
                                         const ArrayGeometry& array, const TimeGrid& sim_grid,
                                         const dataops::Conditioning& conditioning) {
  require(z.x > 0.0 && z.x < background.width && z.z > 0.0 && z.z < background.depth,
          ErrorKind::geometry, "sampling point lies outside the background");
  const TimeGrid out_grid = conditioning.output_grid(sim_grid);
  const std::size_t k = outset_steps({t0}, out_grid).front();

  wavesim::SourceSpec src;
  src.profile = wavesim::Dipole{z, theta, k * conditioning.stride};
  const wavesim::TraceSet raw = wavesim::simulate(background.background(), backend, src, array,
                                                  sim_grid);
  if (!conditioning.filter && conditioning.stride == 1) return raw;
  wavesim::TraceSet out(raw.traces, out_grid.steps);
  for (std::size_t m = 0; m < raw.traces; ++m) {
    const auto row = conditioning.apply(raw.row(m), sim_grid.dt);
    std::copy(row.begin(), row.end(), out.row(m).begin());
  }
  out.notes = raw.notes;
  return out;
}

SignatureLibrary build_time_library(const MaterialModel2D& background, Backend backend,
                                    const SamplingGrid& grid, const TrialConfig& config,
                                    const ArrayGeometry& array, const TimeGrid& sim_grid,
                                    const dataops::Conditioning& conditioning) {
  SignatureLibrary lib =
      empty_library(background, backend, grid, config, array, sim_grid, conditioning);
  lib.method = BuildMethod::direct;
  const std::size_t jobs = lib.n_z() * lib.n_p();
  const std::size_t len = lib.n_m() * lib.n_t();
  std::vector<std::string> errors(jobs);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t job = 0; job < jobs; ++job) {
    try {
      const auto sig =
          trial_signature_direct(background, backend, grid.point(job / lib.n_p()),
                                 lib.angles[job % lib.n_p()], 0.0, array, sim_grid, conditioning);
      std::copy(sig.data.begin(), sig.data.end(),
                lib.base.begin() + static_cast<std::ptrdiff_t>(job * len));
    } catch (const std::exception& e) {
      errors[job] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::numerical, "library build failed: " + e);
  return lib;
}

SignatureLibrary build_library_reciprocal(const MaterialModel2D& background, Backend backend,
                                          const SamplingGrid& grid, const TrialConfig& config,
                                          const ArrayGeometry& array, const TimeGrid& sim_grid,
                                          const dataops::Conditioning& conditioning) {
  SignatureLibrary lib =
      empty_library(background, backend, grid, config, array, sim_grid, conditioning);
  lib.method = BuildMethod::reciprocal;
  const MaterialModel2D bg = background.background();
  const std::size_t n_z = lib.n_z(), n_p = lib.n_p(), n_m = lib.n_m(), n_t = lib.n_t();
  for (double x : array.receivers)
    require(x >= 0.0 && x <= bg.width, ErrorKind::geometry, "receiver lies outside the domain");
  std::vector<std::string> errors(n_m);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t m = 0; m < n_m; ++m) {
    try {
      wavesim::Simulation sim(bg, backend, sim_grid.dt);
      std::vector<double> kick(1, 1.0 / sim_grid.dt);
      sim.add_force(sim.stencil(wavesim::Component::vertical, {array.receivers[m], 0.0}), kick);
      // Probe k of (s, n) starts at offset[s * n_p + n]; reading through the
      // source stencils keeps the two paths reciprocal.
      std::vector<std::size_t> offset(n_z * n_p + 1, 0);
      std::size_t probes = 0;
      for (std::size_t s = 0; s < n_z; ++s)
        for (std::size_t n = 0; n < n_p; ++n) {
          offset[s * n_p + n] = probes;
          for (auto& st : wavesim::dipole_stencils(sim, grid.point(s), lib.angles[n], bg.cell)) {
            sim.add_probe(std::move(st));
            ++probes;
          }
        }
      offset[n_z * n_p] = probes;
      const wavesim::TraceSet field = sim.run(sim_grid.steps);

      std::vector<double> trace(sim_grid.steps);
      for (std::size_t s = 0; s < n_z; ++s)
        for (std::size_t n = 0; n < n_p; ++n) {
          std::fill(trace.begin(), trace.end(), 0.0);
          for (std::size_t q = offset[s * n_p + n]; q < offset[s * n_p + n + 1]; ++q) {
            const auto u = field.row(q);
            for (std::size_t k = 0; k < trace.size(); ++k) trace[k] += u[k];
          }
          const auto out = conditioning.apply(trace, sim_grid.dt);
          std::copy(out.begin(), out.end(),
                    lib.base.begin() +
                        static_cast<std::ptrdiff_t>(((s * n_p + n) * n_m + m) * n_t));
        }
    } catch (const std::exception& e) {
      errors[m] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::numerical, "library build failed: " + e);
  return lib;
}

SignatureLibrary build_freq_library(const SignatureLibrary& time_lib, double f_lo, double f_hi,
                                    std::size_t n_omega, double tukey, std::size_t samples) {
  require(time_lib.domain == LibraryDomain::time && !time_lib.base.empty(), ErrorKind::config,
          "frequency library needs a time library with its t0 = 0 slice");
  if (samples == 0) samples = time_lib.n_t();
  require(samples <= time_lib.n_t(), ErrorKind::dimension, "window longer than the library record");
  const std::size_t n_m = time_lib.n_m(), n_p = time_lib.n_p();

  SignatureLibrary out = time_lib;
  out.domain = LibraryDomain::frequency;
  out.method = BuildMethod::transformed;
  out.base.clear();
  out.base.shrink_to_fit();
  out.outset_steps = {0};
  out.time_grid = TimeGrid{time_lib.time_grid.dt, samples};
  out.frequencies = dataops::band_frequencies(f_lo, f_hi, n_omega);
  out.tukey = tukey;
  const dataops::BandTransform xf(samples, time_lib.time_grid.dt, tukey, out.frequencies);
  out.phi_hat.setZero(static_cast<Eigen::Index>(n_omega * n_m),
                      static_cast<Eigen::Index>(time_lib.n_z() * n_p));

  const std::size_t cols = time_lib.n_z() * n_p;
#pragma omp parallel for schedule(static)
  for (std::size_t col = 0; col < cols; ++col) {
    const auto sig = time_lib.base_signature(col / n_p, col % n_p);
    std::vector<std::complex<double>> spec(n_omega);
    for (std::size_t m = 0; m < n_m; ++m) {
      xf.apply(sig.subspan(m * time_lib.n_t(), samples), spec);
      for (std::size_t kappa = 0; kappa < n_omega; ++kappa)
        out.phi_hat(static_cast<Eigen::Index>(n_m * kappa + m), static_cast<Eigen::Index>(col)) =
            spec[kappa];
    }
  }
  std::ostringstream os;
  os.precision(17);
  os << time_lib.provenance << " f" << f_lo << ',' << f_hi << ',' << n_omega << ',' << tukey
     << ',' << samples;
  out.provenance = fnv1a(os.str());
  return out;
}

// Library container: magic "LULB0001", u32 domain, u32 method, u64 background
// hash, u64 provenance, sampling grid (f64 x0 x1 z0 z1, u64 nx nz), u64 N_p +
// f64 angles, u64 N_m + f64 receivers, u64 N_i + f64 sources, f64 dt, u64 N_t,
// then either u64 N_t0 + u64 outset steps + f64 signatures [s][n][m][k], or
// u64 N_omega + f64 frequencies + f64 tukey + c128 Phi column-major.
inline constexpr char kLibraryMagic[] = "LULB0001";

void write_library(const std::filesystem::path& path, const SignatureLibrary& lib) {
  io::ByteWriter w;
  w.bytes(kLibraryMagic);
  w.u32(static_cast<std::uint32_t>(lib.domain));
  w.u32(static_cast<std::uint32_t>(lib.method));
  w.u64(lib.background_hash);
  w.u64(lib.provenance);
  for (double v : {lib.grid.x_min, lib.grid.x_max, lib.grid.z_min, lib.grid.z_max}) w.f64(v);
  w.u64(lib.grid.nx);
  w.u64(lib.grid.nz);
  auto list = [&](const std::vector<double>& xs) {
    w.u64(xs.size());
    for (double x : xs) w.f64(x);
  };
  list(lib.angles);
  list(lib.array.receivers);
  list(lib.array.sources);
  w.f64(lib.time_grid.dt);
  w.u64(lib.time_grid.steps);
  if (lib.domain == LibraryDomain::time) {
    w.u64(lib.outset_steps.size());
    for (auto k : lib.outset_steps) w.u64(k);
    for (double v : lib.base) w.f64(v);
  } else {
    list(lib.frequencies);
    w.f64(lib.tukey);
    for (Eigen::Index j = 0; j < lib.phi_hat.cols(); ++j)
      for (Eigen::Index i = 0; i < lib.phi_hat.rows(); ++i) w.c128(lib.phi_hat(i, j));
  }
  w.save(path);
}

SignatureLibrary read_library(const std::filesystem::path& path) {
  auto r = io::ByteReader::load(path);
  r.expect_magic(kLibraryMagic);
  SignatureLibrary lib;
  const auto domain = r.u32();
  const auto method = r.u32();
  require(domain <= 1 && method <= 2, ErrorKind::format, "unknown library domain or method");
  lib.domain = static_cast<LibraryDomain>(domain);
  lib.method = static_cast<BuildMethod>(method);
  lib.background_hash = r.u64();
  lib.provenance = r.u64();
  lib.grid.x_min = r.f64();
  lib.grid.x_max = r.f64();
  lib.grid.z_min = r.f64();
  lib.grid.z_max = r.f64();
  lib.grid.nx = r.u64();
  lib.grid.nz = r.u64();
  auto list = [&](const char* what) {
    const auto n = r.u64();
    r.require_items(n, 8, what);
    std::vector<double> xs(n);
    for (auto& x : xs) x = r.f64();
    return xs;
  };
  lib.angles = list("angle");
  lib.polarizations = lib.angles.size();
  lib.array.receivers = list("receiver");
  lib.array.sources = list("source");
  lib.time_grid.dt = r.f64();
  lib.time_grid.steps = r.u64();
  constexpr std::uint64_t limit = std::uint64_t{1} << 40;
  require(lib.grid.nx < limit && lib.grid.nz < limit && lib.time_grid.steps < limit,
          ErrorKind::format, "library dimensions overflow");
  if (lib.domain == LibraryDomain::time) {
    const auto n_r = r.u64();
    r.require_items(n_r, 8, "outset");
    for (std::uint64_t i = 0; i < n_r; ++i) lib.outset_steps.push_back(r.u64());
    const std::uint64_t count = lib.n_z() * lib.n_p() * lib.n_m() * lib.n_t();
    r.require_items(count, 8, "sample");
    lib.base.resize(count);
    for (auto& v : lib.base) v = r.f64();
  } else {
    lib.frequencies = list("frequency");
    lib.tukey = r.f64();
    const auto rows = static_cast<Eigen::Index>(lib.frequencies.size() * lib.n_m());
    const auto cols = static_cast<Eigen::Index>(lib.n_z() * lib.n_p());
    r.require_items(static_cast<std::uint64_t>(rows * cols), 16, "coefficient");
    lib.phi_hat.resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) lib.phi_hat(i, j) = r.c128();
  }
  return lib;
}

}  // namespace tlsm::triallib
