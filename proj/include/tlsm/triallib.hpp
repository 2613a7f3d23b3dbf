#pragma once

// Dictionary of trial scattering signatures: background responses at the
// receivers to a dipole trial source at every sampling point.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tlsm/dataops.hpp"
#include "tlsm/wavesim.hpp"

namespace tlsm::triallib {

using wavesim::ArrayGeometry;
using wavesim::Backend;
using wavesim::MaterialModel2D;
using wavesim::TimeGrid;

/// Rectangular grid of sampling points; point s = iz * nx + ix (row-major,
/// rows along depth).
struct SamplingGrid {
  double x_min = 0.0;
  double x_max = 0.0;
  double z_min = 0.0;
  double z_max = 0.0;
  std::size_t nx = 1;
  std::size_t nz = 1;

  std::size_t size() const { return nx * nz; }
  Point2 point(std::size_t s) const;
  double dx() const;
  double dz() const;
  void validate() const;
  void validate_inside(const MaterialModel2D& model) const;
  bool operator==(const SamplingGrid&) const = default;
};

struct TrialConfig {
  std::size_t polarizations = 8;
  std::vector<double> outsets{0.0};  ///< seconds

  /// theta_n = n pi / N_p.
  double angle(std::size_t n) const;
  void validate() const;
};

enum class LibraryDomain : std::uint32_t { time = 0, frequency = 1 };
enum class BuildMethod : std::uint32_t { direct = 0, reciprocal = 1, transformed = 2 };

struct SignatureLibrary {
  LibraryDomain domain = LibraryDomain::time;
  BuildMethod method = BuildMethod::direct;
  SamplingGrid grid;
  std::size_t polarizations = 0;
  std::vector<double> angles;
  ArrayGeometry array;
  std::uint64_t background_hash = 0;
  std::uint64_t provenance = 0;

  // Time form: signatures for t0 = 0 stored [s][n][m][k]; the outsets are
  // realized by exact sample shifts on access.
  TimeGrid time_grid;
  std::vector<std::size_t> outset_steps;
  std::vector<double> base;

  // Frequency form: Phi(N_m * kappa + m, N_p * s + n).
  std::vector<double> frequencies;
  double tukey = 0.0;
  Eigen::MatrixXcd phi_hat;

  std::size_t n_z() const { return grid.size(); }
  std::size_t n_p() const { return polarizations; }
  std::size_t n_outsets() const { return outset_steps.size(); }
  std::size_t n_m() const { return array.receivers.size(); }
  std::size_t n_t() const { return time_grid.steps; }

  /// t0 = 0 signature, [m][k].
  std::span<const double> base_signature(std::size_t s, std::size_t n) const;
  /// Signature for outset r restricted to the first `samples` samples, [m][k].
  void signature(std::size_t s, std::size_t n, std::size_t r, std::size_t samples,
                 std::span<double> out) const;
  std::vector<double> signature(std::size_t s, std::size_t n, std::size_t r,
                                std::size_t samples) const;

  /// Keeps the listed sampling points (a sub-grid must be passed alongside).
  SignatureLibrary select_points(const std::vector<std::size_t>& points,
                                 const SamplingGrid& subgrid) const;
  SignatureLibrary select_polarizations(std::size_t count) const;
  SignatureLibrary select_outsets(const std::vector<std::size_t>& outset_indices) const;
};

/// Converts outsets in seconds to steps of `grid`; off-grid outsets are
/// rejected.
std::vector<std::size_t> outset_steps(const std::vector<double>& outsets, const TimeGrid& grid);

/// Background response to the trial source at `z` with polarization angle
/// `theta`, activated at t0, recorded at every receiver. `sim_grid` is the
/// solver grid; the result lives on `conditioning.output_grid(sim_grid)` and
/// t0 must be a multiple of that grid's step.
wavesim::TraceSet trial_signature_direct(const MaterialModel2D& background, Backend backend,
                                         Point2 z, double theta, double t0,
                                         const ArrayGeometry& array, const TimeGrid& sim_grid,
                                         const dataops::Conditioning& conditioning = {});

/// N_z * N_p forward runs, one per trial source.
SignatureLibrary build_time_library(const MaterialModel2D& background, Backend backend,
                                    const SamplingGrid& grid, const TrialConfig& config,
                                    const ArrayGeometry& array, const TimeGrid& sim_grid,
                                    const dataops::Conditioning& conditioning = {});

/// N_m forward runs with sources at the receivers, reading the field at every
/// sampling point; equal to the direct library by discrete reciprocity.
SignatureLibrary build_library_reciprocal(const MaterialModel2D& background, Backend backend,
                                          const SamplingGrid& grid, const TrialConfig& config,
                                          const ArrayGeometry& array, const TimeGrid& sim_grid,
                                          const dataops::Conditioning& conditioning = {});

/// Frequency form from the windowed transforms of the t0 = 0 signatures,
/// restricted to the first `samples` samples (0 = all).
SignatureLibrary build_freq_library(const SignatureLibrary& time_lib, double f_lo, double f_hi,
                                    std::size_t n_omega, double tukey, std::size_t samples = 0);

void write_library(const std::filesystem::path& path, const SignatureLibrary& lib);
SignatureLibrary read_library(const std::filesystem::path& path);

}  // namespace tlsm::triallib
