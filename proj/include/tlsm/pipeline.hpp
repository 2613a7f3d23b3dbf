#pragma once

// Run configuration and the end-to-end stages driven by the command line:
// simulate, scatter, library, invert, metric, sweep, calibrate.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tlsm/calibration.hpp"
#include "tlsm/dataops.hpp"
#include "tlsm/imaging.hpp"
#include "tlsm/inversion.hpp"
#include "tlsm/triallib.hpp"
#include "tlsm/wavesim.hpp"

namespace tlsm::pipeline {

enum class SourceKind { laser, impulse };

struct Paths {
  std::filesystem::path free, total, scattered, library, manifest, maps, picks;
};

struct MetricConfig {
  double dilation = 0.0015;
  double gap = 0.0015;
  double threshold = 0.6;
};

struct RunConfig {
  wavesim::MaterialModel2D model;
  wavesim::Backend backend = wavesim::Backend::elastic;
  wavesim::ArrayGeometry array;
  SourceKind source = SourceKind::laser;
  wavesim::LaserPulse laser;
  wavesim::TimeGrid sim_grid;
  std::vector<double> periods;  ///< T values, seconds; the last is the default
  dataops::Conditioning conditioning;
  std::size_t n_omega = 1;
  double tukey = 0.1;
  triallib::SamplingGrid grid;
  triallib::TrialConfig trial;
  /// Outset indices entering the minimum of the time indicator (empty = all).
  std::vector<std::size_t> active_outsets;
  bool reciprocal = true;
  inversion::RegularizationConfig regularization;
  double noise_level = 0.0;
  MetricConfig metric;
  Paths paths;
  std::uint64_t seed = 0;

  /// Hash of the parts that determine the raw datasets.
  std::uint64_t simulation_hash() const;
  /// Raw datasets plus conditioning and noise.
  std::uint64_t data_hash() const;
  /// Background, array, grids and trial set of the signature library.
  std::uint64_t library_hash() const;

  /// Record period of the conditioned data.
  double record_period() const;
  imaging::RegionMask mask() const;
};

/// Parses a JSON configuration. Relative paths resolve against `base_dir`.
/// Every constraint is checked here; messages name the offending field.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

struct SimulationSummary {
  std::size_t simulations = 0;
  std::vector<std::string> notes;
};

/// 2 N_i runs: defective and intact model for every source. Writes both raw
/// datasets and the manifest.
SimulationSummary run_simulate(const RunConfig& cfg);

/// Scattered field, conditioning and optional noise; writes the scattered set.
dataops::WaveformBlock run_scatter(const RunConfig& cfg);

triallib::SignatureLibrary run_library(const RunConfig& cfg);

/// Frequency form of the stored time library, over the first T seconds.
triallib::SignatureLibrary run_freq_library(const RunConfig& cfg, double period);

struct InvertOptions {
  inversion::MapDomain domain = inversion::MapDomain::time;
  std::optional<double> period;            ///< defaults to the last configured T
  std::optional<std::size_t> polarizations;  ///< subset of the library angles
  std::optional<std::vector<std::size_t>> outsets;
};

struct InvertResult {
  inversion::MapResult result;
  double period = 0.0;
  std::size_t samples = 0;
  double seconds = 0.0;
};

/// Loads the scattered set and library, checks their provenance against the
/// configuration and computes the indicator map.
InvertResult run_invert(const RunConfig& cfg, const InvertOptions& options);

/// Map, solve records (CSV) and a JSON report next to `stem`.
void write_invert_outputs(const std::filesystem::path& stem, const InvertResult& result);

/// Default output stem for a run inside paths.maps.
std::filesystem::path default_stem(const RunConfig& cfg, const InvertOptions& options,
                                   double period);

std::uint64_t invert_hash(const RunConfig& cfg, const InvertOptions& options, double period);

enum class SweepAxis { polarizations, outset, period };
SweepAxis parse_axis(std::string_view name);

struct SweepTable {
  SweepAxis axis = SweepAxis::period;
  std::vector<double> values;
  std::vector<std::string> rows;                  ///< "T" and/or "L"
  std::vector<std::vector<double>> contrast;      ///< [row][value]
  std::vector<std::vector<std::filesystem::path>> maps;
};

/// One inversion per value and domain; maps are written into paths.maps.
SweepTable run_sweep(const RunConfig& cfg, SweepAxis axis, const std::vector<double>& values);
void write_sweep_csv(const std::filesystem::path& path, const SweepTable& table);

calibration::FitResult run_calibrate(const RunConfig& cfg, const std::filesystem::path& picks,
                                     const calibration::FitOptions& options = {});

}  // namespace tlsm::pipeline
