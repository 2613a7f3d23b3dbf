#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "tlsm/wavesim.hpp"

namespace tlsm::wavesim {

namespace {

std::atomic<std::size_t> g_runs{0};

// Fourth-order staggered first-derivative weights.
constexpr double kC1 = 9.0 / 8.0;
constexpr double kC2 = -1.0 / 24.0;
constexpr std::size_t kPad = 2;

struct Lattice {
  double ox = 0.0;  // node offset in cells
  double oz = 0.0;
  std::size_t nx = 0;  // node counts
  std::size_t nz = 0;
};

}  // namespace

// All fields share one padded (nx + 1 + 2 pad) x (nz + 1 + 2 pad) layout.
// Elastic: vx at (i, k + 1/2), vz at (i + 1/2, k), normal stresses at cell
// centres, shear stress at cell corners. Scalar: field at centres, fluxes on
// the vx/vz lattices. Coefficients vanish outside the solid, so ghosts, vacuum
// and voids stay at zero without special cases.
struct Simulation::Impl {
  Backend backend;
  double dt;
  double h;
  std::size_t nx, nz, stride, rows;

  std::vector<double> vx, vz, sxx, szz, sxz, field;
  std::vector<double> keep_x, gain_x, keep_z, gain_z, keep_c, gain_c;
  std::vector<double> l2m, lam, mu_c;  // centre moduli
  std::vector<double> mu_xz;           // corner shear modulus
  std::vector<double> mu_fx, mu_fz;    // scalar flux moduli

  struct Force {
    PointStencil stencil;
    std::vector<double> signal;
  };
  std::vector<Force> forces;
  std::vector<PointStencil> probes;

  bool energy_on = false;
  std::vector<double> energy;

  std::size_t at(std::ptrdiff_t i, std::ptrdiff_t k) const {
    return static_cast<std::size_t>(k + static_cast<std::ptrdiff_t>(kPad)) * stride +
           static_cast<std::size_t>(i + static_cast<std::ptrdiff_t>(kPad));
  }

  Lattice lattice(Component c) const {
    if (backend == Backend::scalar) return {0.5, 0.5, nx, nz};
    if (c == Component::horizontal) return {0.0, 0.5, nx + 1, nz};
    return {0.5, 0.0, nx, nz + 1};
  }

  std::vector<double>& velocity(Component c) {
    if (backend == Backend::scalar) return field;
    return c == Component::horizontal ? vx : vz;
  }
  const std::vector<double>& gain(Component c) const {
    if (backend == Backend::scalar) return gain_c;
    return c == Component::horizontal ? gain_x : gain_z;
  }

  void step_elastic();
  void step_scalar();
  double energy_elastic(const std::vector<double>& px, const std::vector<double>& pz) const;
  double energy_scalar(const std::vector<double>& pf) const;
};

namespace {

bool is_solid(const MaterialModel2D& m, std::ptrdiff_t i, std::ptrdiff_t k) {
  if (i < 0 || k < 0 || i >= static_cast<std::ptrdiff_t>(m.nx()) ||
      k >= static_cast<std::ptrdiff_t>(m.nz()))
    return false;
  const double x = (static_cast<double>(i) + 0.5) * m.cell;
  const double z = (static_cast<double>(k) + 0.5) * m.cell;
  for (const auto& v : m.voids) {
    const double dx = x - v.x, dz = z - v.z;
    if (dx * dx + dz * dz < v.radius * v.radius) return false;
  }
  return true;
}

// Quadratic damping profile; zero outside the sponge layers.
double sponge_rate(const MaterialModel2D& m, double x, double z, double c_max) {
  const double layer = m.sponge_cells * m.cell;
  if (layer <= 0.0) return 0.0;
  const double peak = 1.5 * c_max / layer * std::log(1.0e3);
  double depth = 0.0;
  if (m.left == Boundary::sponge) depth = std::max(depth, (layer - x) / layer);
  if (m.right == Boundary::sponge) depth = std::max(depth, (x - (m.width - layer)) / layer);
  if (m.top == Boundary::sponge) depth = std::max(depth, (layer - z) / layer);
  if (m.bottom == Boundary::sponge) depth = std::max(depth, (z - (m.depth - layer)) / layer);
  depth = std::clamp(depth, 0.0, 1.0);
  return peak * depth * depth;
}

}  // namespace

Simulation::Simulation(const MaterialModel2D& model, Backend backend, double dt)
    : impl_(std::make_unique<Impl>()) {
  model.validate();
  require(dt > 0.0, ErrorKind::parameter, "time step must be positive");
  const double limit = stable_dt(model, backend);
  if (dt > limit * (1.0 + 1e-12))
    fail(ErrorKind::stability, "dt = " + std::to_string(dt) + " s exceeds the stable step " +
                                   std::to_string(limit) + " s");

  auto& s = *impl_;
  s.backend = backend;
  s.dt = dt;
  s.h = model.cell;
  s.nx = model.nx();
  s.nz = model.nz();
  s.stride = s.nx + 1 + 2 * kPad;
  s.rows = s.nz + 1 + 2 * kPad;
  const std::size_t n = s.stride * s.rows;
  const double c_max = model.c_long;

  const double rho = model.density;
  const double mu = rho * model.c_shear * model.c_shear;
  const double lambda = rho * model.c_long * model.c_long - 2.0 * mu;
  const auto nxi = static_cast<std::ptrdiff_t>(s.nx);
  const auto nzi = static_cast<std::ptrdiff_t>(s.nz);

  auto cell_rho = [&](std::ptrdiff_t i, std::ptrdiff_t k) {
    return is_solid(model, i, k) ? rho : 0.0;
  };
  auto velocity_coeffs = [&](std::vector<double>& keep, std::vector<double>& gain, double ox,
                             double oz, std::ptrdiff_t ni, std::ptrdiff_t nk, auto rho_at) {
    keep.assign(n, 0.0);
    gain.assign(n, 0.0);
    for (std::ptrdiff_t k = 0; k < nk; ++k)
      for (std::ptrdiff_t i = 0; i < ni; ++i) {
        const double r = rho_at(i, k);
        if (r <= 0.0) continue;
        const double a =
            0.5 * dt * sponge_rate(model, (i + ox) * s.h, (k + oz) * s.h, c_max);
        keep[s.at(i, k)] = (1.0 - a) / (1.0 + a);
        gain[s.at(i, k)] = dt / (r * (1.0 + a));
      }
  };

  if (backend == Backend::elastic) {
    s.vx.assign(n, 0.0);
    s.vz.assign(n, 0.0);
    s.sxx.assign(n, 0.0);
    s.szz.assign(n, 0.0);
    s.sxz.assign(n, 0.0);
    velocity_coeffs(s.keep_x, s.gain_x, 0.0, 0.5, nxi + 1, nzi, [&](auto i, auto k) {
      return 0.5 * (cell_rho(i - 1, k) + cell_rho(i, k));
    });
    velocity_coeffs(s.keep_z, s.gain_z, 0.5, 0.0, nxi, nzi + 1, [&](auto i, auto k) {
      return 0.5 * (cell_rho(i, k - 1) + cell_rho(i, k));
    });
    s.l2m.assign(n, 0.0);
    s.lam.assign(n, 0.0);
    s.mu_c.assign(n, 0.0);
    s.mu_xz.assign(n, 0.0);
    for (std::ptrdiff_t k = 0; k < nzi; ++k)
      for (std::ptrdiff_t i = 0; i < nxi; ++i)
        if (is_solid(model, i, k)) {
          s.l2m[s.at(i, k)] = lambda + 2.0 * mu;
          s.lam[s.at(i, k)] = lambda;
          s.mu_c[s.at(i, k)] = mu;
        }
    for (std::ptrdiff_t k = 0; k <= nzi; ++k)
      for (std::ptrdiff_t i = 0; i <= nxi; ++i) {
        const bool all = is_solid(model, i - 1, k - 1) && is_solid(model, i, k - 1) &&
                         is_solid(model, i - 1, k) && is_solid(model, i, k);
        s.mu_xz[s.at(i, k)] = all ? mu : 0.0;
      }
  } else {
    const double modulus = rho * model.c_long * model.c_long;
    s.field.assign(n, 0.0);
    s.vx.assign(n, 0.0);  // fluxes
    s.vz.assign(n, 0.0);
    velocity_coeffs(s.keep_c, s.gain_c, 0.5, 0.5, nxi, nzi, cell_rho);
    s.mu_fx.assign(n, 0.0);
    s.mu_fz.assign(n, 0.0);
    for (std::ptrdiff_t k = 0; k < nzi; ++k)
      for (std::ptrdiff_t i = 0; i <= nxi; ++i)
        if (is_solid(model, i - 1, k) && is_solid(model, i, k)) s.mu_fx[s.at(i, k)] = modulus;
    for (std::ptrdiff_t k = 0; k <= nzi; ++k)
      for (std::ptrdiff_t i = 0; i < nxi; ++i)
        if (is_solid(model, i, k - 1) && is_solid(model, i, k)) s.mu_fz[s.at(i, k)] = modulus;
  }
}

Simulation::~Simulation() = default;
Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;

Backend Simulation::backend() const { return impl_->backend; }
double Simulation::dt() const { return impl_->dt; }

PointStencil Simulation::stencil(Component component, Point2 point) const {
  const auto& s = *impl_;
  const Lattice lat = s.lattice(component);
  const double last_x = static_cast<double>(lat.nx - 1);
  const double last_z = static_cast<double>(lat.nz - 1);
  const double fx = std::clamp(point.x / s.h - lat.ox, 0.0, last_x);
  const double fz = std::clamp(point.z / s.h - lat.oz, 0.0, last_z);
  const auto i0 = static_cast<std::ptrdiff_t>(std::min(std::floor(fx), std::max(last_x - 1, 0.0)));
  const auto k0 = static_cast<std::ptrdiff_t>(std::min(std::floor(fz), std::max(last_z - 1, 0.0)));
  const double wx = fx - static_cast<double>(i0);
  const double wz = fz - static_cast<double>(k0);

  PointStencil out;
  out.component = s.backend == Backend::scalar ? Component::vertical : component;
  const double w[2][2] = {{(1 - wx) * (1 - wz), wx * (1 - wz)}, {(1 - wx) * wz, wx * wz}};
  for (int dk = 0; dk < 2; ++dk)
    for (int di = 0; di < 2; ++di)
      if (w[dk][di] != 0.0) out.taps.emplace_back(s.at(i0 + di, k0 + dk), w[dk][di]);
  return out;
}

void PointStencil::add(const PointStencil& other, double scale) {
  require(other.component == component || taps.empty(), ErrorKind::parameter,
          "cannot merge stencils on different lattices");
  if (taps.empty()) component = other.component;
  for (const auto& [index, weight] : other.taps) {
    auto it = std::find_if(taps.begin(), taps.end(),
                           [index = index](const auto& t) { return t.first == index; });
    if (it == taps.end())
      taps.emplace_back(index, scale * weight);
    else
      it->second += scale * weight;
  }
}

std::vector<double> Simulation::surface_nodes() const {
  const auto& s = *impl_;
  std::vector<double> xs(s.nx);
  for (std::size_t i = 0; i < s.nx; ++i) xs[i] = (static_cast<double>(i) + 0.5) * s.h;
  return xs;
}

PointStencil Simulation::surface_node(std::size_t index) const {
  require(index < impl_->nx, ErrorKind::geometry, "surface node out of range");
  PointStencil out;
  out.component = Component::vertical;
  out.taps.emplace_back(impl_->at(static_cast<std::ptrdiff_t>(index), 0), 1.0);
  return out;
}

void Simulation::add_force(PointStencil stencil, std::vector<double> signal) {
  impl_->forces.push_back({std::move(stencil), std::move(signal)});
}

std::size_t Simulation::add_probe(PointStencil stencil) {
  impl_->probes.push_back(std::move(stencil));
  return impl_->probes.size() - 1;
}

void Simulation::track_energy(bool on) { impl_->energy_on = on; }
const std::vector<double>& Simulation::energy_history() const { return impl_->energy; }

void Simulation::Impl::step_elastic() {
  const auto nxi = static_cast<std::ptrdiff_t>(nx);
  const auto nzi = static_cast<std::ptrdiff_t>(nz);
  const auto sx = static_cast<std::ptrdiff_t>(stride);
  const double inv_h = 1.0 / h;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k <= nzi; ++k) {
    for (std::ptrdiff_t i = 0; i <= nxi; ++i) {
      const std::size_t p = at(i, k);
      if (gain_x[p] != 0.0) {
        const double dsxx = kC1 * (sxx[p] - sxx[p - 1]) + kC2 * (sxx[p + 1] - sxx[p - 2]);
        const double dsxz = kC1 * (sxz[p + sx] - sxz[p]) + kC2 * (sxz[p + 2 * sx] - sxz[p - sx]);
        vx[p] = keep_x[p] * vx[p] + gain_x[p] * (dsxx + dsxz) * inv_h;
      }
      if (gain_z[p] != 0.0) {
        const double dsxz = kC1 * (sxz[p + 1] - sxz[p]) + kC2 * (sxz[p + 2] - sxz[p - 1]);
        const double dszz = kC1 * (szz[p] - szz[p - sx]) + kC2 * (szz[p + sx] - szz[p - 2 * sx]);
        vz[p] = keep_z[p] * vz[p] + gain_z[p] * (dsxz + dszz) * inv_h;
      }
    }
  }
}

void Simulation::Impl::step_scalar() {
  const auto nxi = static_cast<std::ptrdiff_t>(nx);
  const auto nzi = static_cast<std::ptrdiff_t>(nz);
  const auto sx = static_cast<std::ptrdiff_t>(stride);
  const double inv_h = 1.0 / h;
  // vx / vz hold the fluxes mu grad(u).
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < nzi; ++k)
    for (std::ptrdiff_t i = 0; i < nxi; ++i) {
      const std::size_t p = at(i, k);
      if (gain_c[p] == 0.0) continue;
      const double div = (vx[p + 1] - vx[p]) + (vz[p + sx] - vz[p]);
      field[p] = keep_c[p] * field[p] + gain_c[p] * div * inv_h;
    }
}

double Simulation::Impl::energy_elastic(const std::vector<double>& px,
                                        const std::vector<double>& pz) const {
  double kinetic = 0.0, strain = 0.0;
  for (std::size_t p = 0; p < vx.size(); ++p) {
    if (gain_x[p] != 0.0) kinetic += dt / (gain_x[p]) * px[p] * vx[p];
    if (gain_z[p] != 0.0) kinetic += dt / (gain_z[p]) * pz[p] * vz[p];
    if (mu_c[p] > 0.0) {
      const double a = l2m[p], l = lam[p];
      strain += (a * (sxx[p] * sxx[p] + szz[p] * szz[p]) - 2.0 * l * sxx[p] * szz[p]) /
                ((a - l) * (a + l));
    }
    if (mu_xz[p] > 0.0) strain += sxz[p] * sxz[p] / mu_xz[p];
  }
  return 0.5 * (kinetic + strain) * h * h;
}

double Simulation::Impl::energy_scalar(const std::vector<double>& pf) const {
  double kinetic = 0.0, strain = 0.0;
  for (std::size_t p = 0; p < field.size(); ++p) {
    if (gain_c[p] != 0.0) kinetic += dt / gain_c[p] * pf[p] * field[p];
    if (mu_fx[p] > 0.0) strain += vx[p] * vx[p] / mu_fx[p];
    if (mu_fz[p] > 0.0) strain += vz[p] * vz[p] / mu_fz[p];
  }
  return 0.5 * (kinetic + strain) * h * h;
}

TraceSet Simulation::run(std::size_t samples) {
  require(samples >= 1, ErrorKind::parameter, "sample count must be at least 1");
  auto& s = *impl_;
  ++g_runs;
  TraceSet out(s.probes.size(), samples);
  std::vector<double> prev_probe(s.probes.size(), 0.0);
  s.energy.clear();

  const auto nxi = static_cast<std::ptrdiff_t>(s.nx);
  const auto nzi = static_cast<std::ptrdiff_t>(s.nz);
  const auto sx = static_cast<std::ptrdiff_t>(s.stride);
  const double inv_h = 1.0 / s.h;
  std::vector<double> prev_x, prev_z;

  for (std::size_t n = 0; n + 1 < samples; ++n) {
    if (s.energy_on) {
      if (s.backend == Backend::elastic) {
        prev_x = s.vx;
        prev_z = s.vz;
      } else {
        prev_x = s.field;
      }
    }
    if (s.backend == Backend::elastic)
      s.step_elastic();
    else
      s.step_scalar();

    for (const auto& f : s.forces) {
      if (n >= f.signal.size() || f.signal[n] == 0.0) continue;
      auto& v = s.velocity(f.stencil.component);
      const auto& g = s.gain(f.stencil.component);
      for (const auto& [p, w] : f.stencil.taps) v[p] += g[p] * w * f.signal[n];
    }

    if (s.energy_on) {
      s.energy.push_back(s.backend == Backend::elastic ? s.energy_elastic(prev_x, prev_z)
                                                        : s.energy_scalar(prev_x));
    }

    for (std::size_t q = 0; q < s.probes.size(); ++q) {
      const auto& v = s.velocity(s.probes[q].component);
      double value = 0.0;
      for (const auto& [p, w] : s.probes[q].taps) value += w * v[p];
      out.data[q * samples + n + 1] =
          out.data[q * samples + n] + 0.5 * s.dt * (prev_probe[q] + value);
      prev_probe[q] = value;
    }

    // Stress (or flux) update from the new velocities.
    if (s.backend == Backend::elastic) {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k <= nzi; ++k)
        for (std::ptrdiff_t i = 0; i <= nxi; ++i) {
          const std::size_t p = s.at(i, k);
          if (s.mu_c[p] > 0.0) {
            const double dvx = kC1 * (s.vx[p + 1] - s.vx[p]) + kC2 * (s.vx[p + 2] - s.vx[p - 1]);
            const double dvz =
                kC1 * (s.vz[p + sx] - s.vz[p]) + kC2 * (s.vz[p + 2 * sx] - s.vz[p - sx]);
            s.sxx[p] += s.dt * inv_h * (s.l2m[p] * dvx + s.lam[p] * dvz);
            s.szz[p] += s.dt * inv_h * (s.lam[p] * dvx + s.l2m[p] * dvz);
          }
          if (s.mu_xz[p] > 0.0) {
            const double dvx =
                kC1 * (s.vx[p] - s.vx[p - sx]) + kC2 * (s.vx[p + sx] - s.vx[p - 2 * sx]);
            const double dvz = kC1 * (s.vz[p] - s.vz[p - 1]) + kC2 * (s.vz[p + 1] - s.vz[p - 2]);
            s.sxz[p] += s.dt * inv_h * s.mu_xz[p] * (dvx + dvz);
          }
        }
    } else {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k <= nzi; ++k)
        for (std::ptrdiff_t i = 0; i <= nxi; ++i) {
          const std::size_t p = s.at(i, k);
          if (s.mu_fx[p] > 0.0) s.vx[p] += s.dt * inv_h * s.mu_fx[p] * (s.field[p] - s.field[p - 1]);
          if (s.mu_fz[p] > 0.0) s.vz[p] += s.dt * inv_h * s.mu_fz[p] * (s.field[p] - s.field[p - sx]);
        }
    }
  }
  return out;
}

std::size_t simulation_count() { return g_runs.load(); }

}  // namespace tlsm::wavesim
