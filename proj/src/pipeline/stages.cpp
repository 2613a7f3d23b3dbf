#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "tlsm/pipeline.hpp"

namespace tlsm::pipeline {

namespace {

using nlohmann::json;

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(bytes);
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_json(const std::filesystem::path& path, const json& j) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void expect_provenance(std::uint64_t found, std::uint64_t expected, const std::filesystem::path& p) {
  if (found != expected)
    fail(ErrorKind::stale_artifact, p.string() + " was produced by a different configuration (hash " +
                                        hex(found) + ", expected " + hex(expected) + ")");
}

wavesim::SourceSpec source_at(const RunConfig& cfg, double x) {
  wavesim::SourceSpec s;
  s.x = x;
  if (cfg.source == SourceKind::laser)
    s.profile = cfg.laser;
  else
    s.profile = wavesim::SurfaceImpulse{};
  return s;
}

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SimulationSummary run_simulate(const RunConfig& cfg) {
  const std::size_t n_i = cfg.array.sources.size();
  auto total = dataops::WaveformBlock::zeros(dataops::BlockKind::total, cfg.array, cfg.sim_grid);
  auto free = dataops::WaveformBlock::zeros(dataops::BlockKind::free, cfg.array, cfg.sim_grid);
  const wavesim::MaterialModel2D background = cfg.model.background();
  const std::size_t before = wavesim::simulation_count();
  std::vector<std::string> errors(n_i);
  std::vector<std::vector<std::string>> notes(n_i);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n_i; ++i) {
    try {
      const auto src = source_at(cfg, cfg.array.sources[i]);
      const auto t = wavesim::simulate(cfg.model, cfg.backend, src, cfg.array, cfg.sim_grid);
      const auto f = wavesim::simulate(background, cfg.backend, src, cfg.array, cfg.sim_grid);
      for (std::size_t m = 0; m < total.n_m(); ++m) {
        std::copy(t.row(m).begin(), t.row(m).end(), total.trace(m, i).begin());
        std::copy(f.row(m).begin(), f.row(m).end(), free.trace(m, i).begin());
      }
      notes[i] = t.notes;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::numerical, "simulation failed: " + e);

  SimulationSummary summary;
  summary.simulations = wavesim::simulation_count() - before;
  for (const auto& list : notes)
    for (const auto& n : list)
      if (std::find(summary.notes.begin(), summary.notes.end(), n) == summary.notes.end())
        summary.notes.push_back(n);

  total.provenance = free.provenance = cfg.simulation_hash();
  ensure_parent(cfg.paths.total);
  ensure_parent(cfg.paths.free);
  dataops::write_block(cfg.paths.total, total);
  dataops::write_block(cfg.paths.free, free);

  json manifest = {
      {"simulation_hash", hex(cfg.simulation_hash())},
      {"model_hash", hex(cfg.model.hash())},
      {"backend", std::string(wavesim::to_string(cfg.backend))},
      {"sources", n_i},
      {"receivers", cfg.array.receivers.size()},
      {"samples", cfg.sim_grid.steps},
      {"dt", cfg.sim_grid.dt},
      {"simulations", summary.simulations},
      {"notes", summary.notes},
      {"files",
       {{"total", {{"path", cfg.paths.total.string()}, {"hash", hex(file_hash(cfg.paths.total))}}},
        {"free", {{"path", cfg.paths.free.string()}, {"hash", hex(file_hash(cfg.paths.free))}}}}}};
  write_json(cfg.paths.manifest, manifest);
  return summary;
}

dataops::WaveformBlock run_scatter(const RunConfig& cfg) {
  const auto total = dataops::read_block(cfg.paths.total);
  const auto free = dataops::read_block(cfg.paths.free);
  expect_provenance(total.provenance, cfg.simulation_hash(), cfg.paths.total);
  expect_provenance(free.provenance, cfg.simulation_hash(), cfg.paths.free);
  auto scattered = cfg.conditioning.apply(dataops::scattered_field(total, free));
  if (cfg.noise_level > 0.0) scattered = dataops::add_noise(scattered, cfg.noise_level, cfg.seed);
  scattered.provenance = cfg.data_hash();
  ensure_parent(cfg.paths.scattered);
  dataops::write_block(cfg.paths.scattered, scattered);
  return scattered;
}

triallib::SignatureLibrary run_library(const RunConfig& cfg) {
  auto lib = cfg.reciprocal
                 ? triallib::build_library_reciprocal(cfg.model, cfg.backend, cfg.grid, cfg.trial,
                                                      cfg.array, cfg.sim_grid, cfg.conditioning)
                 : triallib::build_time_library(cfg.model, cfg.backend, cfg.grid, cfg.trial,
                                                cfg.array, cfg.sim_grid, cfg.conditioning);
  lib.provenance = cfg.library_hash();
  ensure_parent(cfg.paths.library);
  triallib::write_library(cfg.paths.library, lib);
  return lib;
}

namespace {

triallib::SignatureLibrary load_library(const RunConfig& cfg) {
  auto lib = triallib::read_library(cfg.paths.library);
  expect_provenance(lib.provenance, cfg.library_hash(), cfg.paths.library);
  return lib;
}

std::size_t record_samples(const RunConfig& cfg, double period) {
  return dataops::samples_for_period(cfg.conditioning.output_grid(cfg.sim_grid), period);
}

}  // namespace

triallib::SignatureLibrary run_freq_library(const RunConfig& cfg, double period) {
  const auto lib = load_library(cfg);
  return triallib::build_freq_library(lib, cfg.conditioning.f_lo, cfg.conditioning.f_hi,
                                      cfg.n_omega, cfg.tukey, record_samples(cfg, period));
}

std::uint64_t invert_hash(const RunConfig& cfg, const InvertOptions& options, double period) {
  const auto& reg = cfg.regularization;
  json j = {{"data", cfg.data_hash()},
            {"library", cfg.library_hash()},
            {"domain", static_cast<int>(options.domain)},
            {"T", period},
            {"reg",
             {reg.delta, reg.eta_min, reg.eta_max, static_cast<int>(reg.mode), reg.projection_cap,
              reg.dense_limit}},
            {"polarizations", options.polarizations.value_or(cfg.trial.polarizations)},
            {"outsets", options.outsets.value_or(cfg.active_outsets)}};
  if (options.domain == inversion::MapDomain::frequency)
    j["band"] = {cfg.conditioning.f_lo, cfg.conditioning.f_hi, cfg.n_omega, cfg.tukey};
  return fnv1a(j.dump());
}

InvertResult run_invert(const RunConfig& cfg, const InvertOptions& options) {
  const double period = options.period.value_or(cfg.periods.back());
  const double record = cfg.record_period();
  require(period > 0.0 && period <= record * (1.0 + 1e-9), ErrorKind::config,
          "T must lie in (0, " + format_value(record) + "] s");

  // Both artifacts are checked before any computation.
  const auto scattered = dataops::read_block(cfg.paths.scattered);
  expect_provenance(scattered.provenance, cfg.data_hash(), cfg.paths.scattered);
  auto lib = load_library(cfg);

  if (options.polarizations) lib = lib.select_polarizations(*options.polarizations);
  const auto outsets = options.outsets.value_or(cfg.active_outsets);

  const auto t0 = std::chrono::steady_clock::now();
  InvertResult out;
  out.period = period;
  out.samples = dataops::samples_for_period(scattered.grid, period);
  if (options.domain == inversion::MapDomain::time) {
    if (!outsets.empty()) lib = lib.select_outsets(outsets);
    const inversion::NearFieldOperatorTime op(scattered, out.samples);
    out.result = inversion::tlsm_map(op, lib, cfg.regularization);
  } else {
    const auto spectra = dataops::spectra(dataops::truncate(scattered, period), cfg.tukey,
                                          cfg.conditioning.f_lo, cfg.conditioning.f_hi,
                                          cfg.n_omega);
    const inversion::NearFieldOperatorFreq op(spectra, scattered.array);
    const auto flib = triallib::build_freq_library(lib, cfg.conditioning.f_lo,
                                                   cfg.conditioning.f_hi, cfg.n_omega, cfg.tukey,
                                                   out.samples);
    out.result = inversion::lsm_map(op, flib, cfg.regularization);
  }
  out.result.map.config_hash = invert_hash(cfg, options, period);
  out.seconds = seconds_since(t0);
  return out;
}

void write_invert_outputs(const std::filesystem::path& stem, const InvertResult& result) {
  const auto& map = result.result.map;
  const auto& records = result.result.records;
  const auto with = [&](const std::string& suffix) {
    auto p = stem;
    p += suffix;
    return p;
  };
  ensure_parent(stem);
  inversion::write_map(with(".map"), map);
  inversion::write_map_csv(with(".csv"), map);
  inversion::write_records_csv(with(".records.csv"), records);

  std::vector<double> etas;
  std::size_t saturated = 0, capped = 0;
  for (const auto& r : records) {
    saturated += r.saturated;
    capped += r.capped;
    if (r.eta > 0.0) etas.push_back(r.eta);
  }
  std::sort(etas.begin(), etas.end());
  json eta = nullptr;
  if (!etas.empty())
    eta = {{"min", etas.front()}, {"median", etas[etas.size() / 2]}, {"max", etas.back()}};
  const std::size_t am = map.argmax();
  const Point2 p = map.grid.point(am);
  json report = {{"domain", map.domain == inversion::MapDomain::time ? "time" : "freq"},
                 {"config_hash", hex(map.config_hash)},
                 {"T", result.period},
                 {"samples", result.samples},
                 {"seconds", result.seconds},
                 {"solves", records.size()},
                 {"saturated", saturated},
                 {"capped", capped},
                 {"eta", eta},
                 {"degenerate", map.degenerate},
                 {"max", map.max()},
                 {"argmax", {{"index", am}, {"x", p.x}, {"z", p.z}}}};
  write_json(with(".report.json"), report);
}

std::filesystem::path default_stem(const RunConfig& cfg, const InvertOptions& options,
                                   double period) {
  std::ostringstream name;
  name << (options.domain == inversion::MapDomain::time ? "time" : "freq") << "_T"
       << format_value(period * 1e6) << "us";
  if (options.polarizations) name << "_Np" << *options.polarizations;
  if (options.outsets)
    for (auto r : *options.outsets) name << "_r" << r;
  return cfg.paths.maps / name.str();
}

SweepAxis parse_axis(std::string_view name) {
  if (name == "Np") return SweepAxis::polarizations;
  if (name == "t0") return SweepAxis::outset;
  if (name == "T") return SweepAxis::period;
  fail(ErrorKind::config, "unknown sweep axis '" + std::string(name) + "' (expected Np, t0 or T)");
}

SweepTable run_sweep(const RunConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::config, "sweep needs at least one value");
  SweepTable table;
  table.axis = axis;
  table.values = values;
  // The frequency indicator uses t0 = 0 only, so an outset sweep has no L row.
  std::vector<inversion::MapDomain> domains{inversion::MapDomain::time};
  if (axis != SweepAxis::outset) domains.push_back(inversion::MapDomain::frequency);
  for (auto d : domains) table.rows.push_back(d == inversion::MapDomain::time ? "T" : "L");
  table.contrast.assign(domains.size(), std::vector<double>(values.size(), 0.0));
  table.maps.assign(domains.size(), std::vector<std::filesystem::path>(values.size()));

  const auto mask = cfg.mask();
  const auto grid = cfg.conditioning.output_grid(cfg.sim_grid);
  for (std::size_t v = 0; v < values.size(); ++v) {
    InvertOptions opt;
    switch (axis) {
      case SweepAxis::polarizations:
        require(values[v] >= 1.0 && values[v] == std::floor(values[v]), ErrorKind::config,
                "Np values must be positive integers");
        opt.polarizations = static_cast<std::size_t>(values[v]);
        break;
      case SweepAxis::outset: {
        const auto steps = triallib::outset_steps(cfg.trial.outsets, grid);
        const auto want = triallib::outset_steps({values[v]}, grid).front();
        const auto it = std::find(steps.begin(), steps.end(), want);
        require(it != steps.end(), ErrorKind::config,
                "t0 = " + format_value(values[v]) + " s is not in trial.outsets");
        opt.outsets = std::vector<std::size_t>{static_cast<std::size_t>(it - steps.begin())};
        break;
      }
      case SweepAxis::period:
        opt.period = values[v];
        break;
    }
    for (std::size_t row = 0; row < domains.size(); ++row) {
      opt.domain = domains[row];
      const auto result = run_invert(cfg, opt);
      const auto stem = default_stem(cfg, opt, result.period);
      write_invert_outputs(stem, result);
      auto path = stem;
      path += ".map";
      table.maps[row][v] = path;
      const auto& map = result.result.map;
      table.contrast[row][v] = map.degenerate ? 0.0 : imaging::contrast_metric(map.values, mask);
    }
  }
  return table;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepTable& table) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  const char* axis = table.axis == SweepAxis::polarizations ? "Np"
                     : table.axis == SweepAxis::outset      ? "t0"
                                                            : "T";
  out << "indicator";
  for (double v : table.values) out << ',' << axis << '=' << format_value(v);
  out << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << table.rows[r];
    for (double c : table.contrast[r]) out << ',' << c;
    out << '\n';
  }
}

calibration::FitResult run_calibrate(const RunConfig& cfg, const std::filesystem::path& picks,
                                     const calibration::FitOptions& options) {
  calibration::ArrivalPickSet set;
  set.picks = calibration::read_picks(picks);
  set.geometry = cfg.array;
  return calibration::fit_background(set, options);
}

}  // namespace tlsm::pipeline
