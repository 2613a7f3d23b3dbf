#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "tlsm/wavesim.hpp"

namespace tlsm::wavesim {

std::string_view to_string(Backend backend) {
  return backend == Backend::elastic ? "elastic" : "scalar";
}

Backend parse_backend(std::string_view name) {
  if (name == "elastic") return Backend::elastic;
  if (name == "scalar") return Backend::scalar;
  fail(ErrorKind::parameter, "unknown backend '" + std::string(name) + "'");
}

void MaterialModel2D::validate() const {
  require(cell > 0.0, ErrorKind::parameter, "cell size must be positive");
  require(width >= 4 * cell && depth >= 4 * cell, ErrorKind::geometry,
          "domain must span at least 4 cells in each direction");
  require(density > 0.0, ErrorKind::parameter, "density must be positive");
  require(c_shear > 0.0 && c_long > c_shear, ErrorKind::parameter,
          "wave speeds must satisfy c_long > c_shear > 0");
  for (const auto& v : voids) {
    require(v.radius > 0.0, ErrorKind::geometry, "void radius must be positive");
    require(v.x - v.radius > 0.0 && v.x + v.radius < width && v.z - v.radius > 0.0 &&
                v.z + v.radius < depth,
            ErrorKind::geometry, "void must lie strictly inside the domain");
  }
  const bool any_sponge = left == Boundary::sponge || right == Boundary::sponge ||
                          top == Boundary::sponge || bottom == Boundary::sponge;
  if (any_sponge)
    require(sponge_cells >= 10, ErrorKind::parameter, "sponge layers need at least 10 cells");
}

std::size_t MaterialModel2D::nx() const {
  return static_cast<std::size_t>(std::llround(width / cell));
}
std::size_t MaterialModel2D::nz() const {
  return static_cast<std::size_t>(std::llround(depth / cell));
}

MaterialModel2D MaterialModel2D::background() const {
  MaterialModel2D out = *this;
  out.voids.clear();
  return out;
}

std::uint64_t MaterialModel2D::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << width << ' ' << depth << ' ' << cell << ' ' << density << ' ' << c_long << ' '
     << c_shear << ' ' << static_cast<int>(left) << static_cast<int>(right)
     << static_cast<int>(top) << static_cast<int>(bottom) << ' ' << sponge_cells;
  for (const auto& v : voids) os << " v" << v.x << ',' << v.z << ',' << v.radius;
  return fnv1a(os.str());
}

void ArrayGeometry::validate() const {
  require(!sources.empty() && !receivers.empty(), ErrorKind::geometry,
          "array needs at least one source and one receiver");
  auto monotone = [](const std::vector<double>& xs) {
    const auto up = [](double a, double b) { return !(b > a); };
    const auto down = [](double a, double b) { return !(b < a); };
    return std::adjacent_find(xs.begin(), xs.end(), up) == xs.end() ||
           std::adjacent_find(xs.begin(), xs.end(), down) == xs.end();
  };
  require(monotone(sources) && monotone(receivers), ErrorKind::geometry,
          "array positions must be strictly monotone");
}

namespace {
double mean_spacing(const std::vector<double>& xs) {
  if (xs.size() < 2) return 1.0;
  return std::abs(xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
}
}  // namespace

double ArrayGeometry::source_spacing() const { return mean_spacing(sources); }
double ArrayGeometry::receiver_spacing() const { return mean_spacing(receivers); }

double cfl_constant(Backend backend) {
  return backend == Backend::elastic ? 0.9 * 6.0 / 7.0 : 0.9;
}

double stable_dt(const MaterialModel2D& model, Backend backend) {
  return cfl_constant(backend) * model.cell / (model.c_long * std::numbers::sqrt2);
}

SourceProfile laser_source_profile(double center, std::span<const double> node_x, double fwhm,
                                   double pulse_width, double cell, const TimeGrid& grid) {
  require(fwhm > 0.0 && pulse_width > 0.0, ErrorKind::parameter,
          "laser FWHM and pulse width must be positive");
  SourceProfile out;
  if (fwhm < cell)
    out.warnings.push_back("source under-resolved: FWHM " + std::to_string(fwhm) +
                           " m is smaller than the cell size " + std::to_string(cell) + " m");
  const double k = 4.0 * std::numbers::ln2 / (fwhm * fwhm);
  out.spatial.reserve(node_x.size());
  for (double x : node_x) out.spatial.push_back(std::exp(-k * (x - center) * (x - center)));
  out.temporal.resize(grid.steps);
  for (std::size_t n = 0; n < grid.steps; ++n)
    out.temporal[n] = std::min(grid.time(n), pulse_width) / pulse_width;
  return out;
}

std::vector<PointStencil> dipole_stencils(const Simulation& sim, Point2 position, double angle,
                                          double cell) {
  const double c = std::cos(angle), s = std::sin(angle);
  const Point2 plus{position.x + 0.5 * cell * c, position.z + 0.5 * cell * s};
  const Point2 minus{position.x - 0.5 * cell * c, position.z - 0.5 * cell * s};
  std::vector<PointStencil> out;
  if (sim.backend() == Backend::scalar) {
    PointStencil couple;
    couple.add(sim.stencil(Component::vertical, plus), 1.0 / cell);
    couple.add(sim.stencil(Component::vertical, minus), -1.0 / cell);
    out.push_back(std::move(couple));
    return out;
  }
  for (auto [comp, w] : {std::pair{Component::horizontal, c}, std::pair{Component::vertical, s}}) {
    if (w == 0.0) continue;
    PointStencil arm;
    arm.component = comp;
    arm.add(sim.stencil(comp, plus), w / cell);
    arm.add(sim.stencil(comp, minus), -w / cell);
    out.push_back(std::move(arm));
  }
  return out;
}

TraceSet simulate(const MaterialModel2D& model, Backend backend, const SourceSpec& source,
                  const ArrayGeometry& array, const TimeGrid& grid) {
  array.validate();
  require(grid.steps >= 1, ErrorKind::parameter, "time grid needs at least one sample");
  for (double x : array.receivers)
    require(x >= 0.0 && x <= model.width, ErrorKind::geometry,
            "receiver at x = " + std::to_string(x) + " m lies outside the domain");

  Simulation sim(model, backend, grid.dt);
  const double h = model.cell;
  std::vector<std::string> notes;

  auto kick = [&](std::size_t step) {
    std::vector<double> signal(step + 1, 0.0);
    signal[step] = source.amplitude / grid.dt;
    return signal;
  };

  if (const auto* laser = std::get_if<LaserPulse>(&source.profile)) {
    require(source.x >= 0.0 && source.x <= model.width, ErrorKind::geometry,
            "source lies outside the domain");
    const auto nodes = sim.surface_nodes();
    auto profile = laser_source_profile(source.x, nodes, laser->fwhm, laser->pulse_width, h, grid);
    PointStencil footprint;
    for (std::size_t j = 0; j < nodes.size(); ++j)
      if (profile.spatial[j] > 1e-12) footprint.add(sim.surface_node(j), profile.spatial[j]);
    for (auto& v : profile.temporal) v *= source.amplitude;
    sim.add_force(std::move(footprint), std::move(profile.temporal));
    notes = std::move(profile.warnings);
  } else if (std::holds_alternative<SurfaceImpulse>(source.profile)) {
    require(source.x >= 0.0 && source.x <= model.width, ErrorKind::geometry,
            "source lies outside the domain");
    sim.add_force(sim.stencil(Component::vertical, {source.x, 0.0}), kick(0));
  } else {
    const auto& d = std::get<Dipole>(source.profile);
    require(d.position.x > 0.0 && d.position.x < model.width && d.position.z > 0.0 &&
                d.position.z < model.depth,
            ErrorKind::geometry, "dipole lies outside the domain");
    require(d.onset_step < grid.steps, ErrorKind::alignment, "dipole onset beyond the record");
    for (auto& st : dipole_stencils(sim, d.position, d.angle, h))
      sim.add_force(std::move(st), kick(d.onset_step));
  }

  for (double x : array.receivers) sim.add_probe(sim.stencil(Component::vertical, {x, 0.0}));
  TraceSet out = sim.run(grid.steps);
  out.notes = std::move(notes);
  return out;
}

}  // namespace tlsm::wavesim
