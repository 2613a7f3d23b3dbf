#pragma once

// 2D forward solver for plate models: velocity-stress staggered-grid finite
// differences with a P-SV (elastic) backend and a scalar backend behind one
// interface. Voids and free surfaces are realized as vacuum cells.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tlsm/common.hpp"

namespace tlsm::wavesim {

enum class Backend { scalar, elastic };
enum class Boundary { traction_free, sponge };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view name);

struct CircularVoid {
  double x = 0.0;
  double z = 0.0;
  double radius = 0.0;
};

/// Plate model. x runs along the top surface from the left edge, z points
/// down from the top surface. All lengths in metres.
struct MaterialModel2D {
  double width = 0.0;
  double depth = 0.0;
  double cell = 0.0;
  double density = 0.0;
  double c_long = 0.0;
  double c_shear = 0.0;
  std::vector<CircularVoid> voids;
  Boundary left = Boundary::sponge;
  Boundary right = Boundary::sponge;
  Boundary top = Boundary::traction_free;
  Boundary bottom = Boundary::traction_free;
  int sponge_cells = 30;

  void validate() const;
  std::size_t nx() const;
  std::size_t nz() const;
  /// Same plate without defects.
  MaterialModel2D background() const;
  std::uint64_t hash() const;
};

/// Surface line source: Gaussian footprint, ramp-then-hold time history.
struct LaserPulse {
  double fwhm = 0.0;
  double pulse_width = 0.0;
};

/// Vertical point force on the top surface, discrete unit-area kick at t = 0.
struct SurfaceImpulse {};

/// Interior trial source with polarization p = (cos angle, sin angle),
/// one-sample kick at `onset_step`.
struct Dipole {
  Point2 position;
  double angle = 0.0;
  std::size_t onset_step = 0;
};

struct SourceSpec {
  double x = 0.0;  ///< surface position (ignored for Dipole)
  std::variant<LaserPulse, SurfaceImpulse, Dipole> profile = SurfaceImpulse{};
  double amplitude = 1.0;
};

struct ArrayGeometry {
  std::vector<double> sources;
  std::vector<double> receivers;

  void validate() const;
  /// Mean spacing, or 1 for a single element.
  double source_spacing() const;
  double receiver_spacing() const;
};

struct TimeGrid {
  double dt = 0.0;
  std::size_t steps = 0;

  double period() const { return dt * static_cast<double>(steps); }
  double time(std::size_t k) const { return dt * static_cast<double>(k); }
};

/// Row-major [trace][sample] storage.
struct TraceSet {
  std::size_t traces = 0;
  std::size_t samples = 0;
  std::vector<double> data;
  std::vector<std::string> notes;  ///< run metadata such as resolution warnings

  TraceSet() = default;
  TraceSet(std::size_t n_traces, std::size_t n_samples)
      : traces(n_traces), samples(n_samples), data(n_traces * n_samples, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * samples, samples}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * samples, samples};
  }
};

/// Fraction of the theoretical CFL limit used by each backend, expressed on
/// the common scale h / (c_max sqrt 2). The elastic backend's fourth-order
/// stencil lowers its limit by 6/7.
double cfl_constant(Backend backend);

double stable_dt(const MaterialModel2D& model, Backend backend);

struct SourceProfile {
  std::vector<double> spatial;   ///< weight per node in `node_x`
  std::vector<double> temporal;  ///< waveform per time step
  std::vector<std::string> warnings;
};

SourceProfile laser_source_profile(double center, std::span<const double> node_x,
                                   double fwhm, double pulse_width, double cell,
                                   const TimeGrid& grid);

enum class Component { horizontal, vertical };

/// Interpolation taps onto one field lattice. Forces are injected and
/// displacements are read through the same taps, which keeps the discrete
/// problem reciprocal.
struct PointStencil {
  Component component = Component::vertical;
  std::vector<std::pair<std::size_t, double>> taps;

  void add(const PointStencil& other, double scale);
};

class Simulation {
 public:
  Simulation(const MaterialModel2D& model, Backend backend, double dt);
  ~Simulation();
  Simulation(Simulation&&) noexcept;
  Simulation& operator=(Simulation&&) noexcept;

  Backend backend() const;
  double dt() const;

  /// Bilinear taps at `point`, clamped to the lattice of `component`. The
  /// scalar backend has a single lattice and ignores `component`.
  PointStencil stencil(Component component, Point2 point) const;

  /// x coordinates of the top-surface nodes carrying vertical forces.
  std::vector<double> surface_nodes() const;
  PointStencil surface_node(std::size_t index) const;

  /// `signal[n]` is the force applied during step n.
  void add_force(PointStencil stencil, std::vector<double> signal);
  std::size_t add_probe(PointStencil stencil);

  /// Records the per-step conserved discrete energy during run().
  void track_energy(bool on);
  const std::vector<double>& energy_history() const;

  /// Runs `samples - 1` steps; probe k of the result holds displacement at
  /// t = k dt, integrated from velocity with the trapezoidal rule.
  TraceSet run(std::size_t samples);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Trial dipole at `position` with polarization (cos angle, sin angle): a pair
/// of opposed forces along p, h/2 either side of the point, each scaled by
/// 1/h. The elastic backend splits it over the two velocity lattices.
std::vector<PointStencil> dipole_stencils(const Simulation& sim, Point2 position, double angle,
                                          double cell);

/// Forward simulation for one source; traces are the vertical displacement at
/// each receiver on the top surface.
TraceSet simulate(const MaterialModel2D& model, Backend backend, const SourceSpec& source,
                  const ArrayGeometry& array, const TimeGrid& grid);

/// Total number of Simulation::run calls in this process.
std::size_t simulation_count();

}  // namespace tlsm::wavesim
