// Command-line driver for the imaging pipeline.
//
// Exit codes: 0 success, 2 configuration or input error, 3 stale artifact,
// 4 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "tlsm/pipeline.hpp"

namespace {

using namespace tlsm;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::stale_artifact:
      return 3;
    case ErrorKind::numerical:
    case ErrorKind::degenerate:
    case ErrorKind::stability:
      return 4;
    default:
      return 2;
  }
}

inversion::MapDomain parse_domain(const std::string& s) {
  if (s == "time") return inversion::MapDomain::time;
  if (s == "freq") return inversion::MapDomain::frequency;
  fail(ErrorKind::config, "domain must be time or freq");
}

std::filesystem::path with_suffix(std::filesystem::path p, const std::string& suffix) {
  p += suffix;
  return p;
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) fail(ErrorKind::io, "cannot write " + out);
  f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-domain and multifrequency linear sampling imaging"};
  app.require_subcommand(1);

  std::string config_path, domain = "time", out, axis, map_path, picks_path;
  std::optional<double> period;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::vector<double> values;
  std::optional<double> fraction;
  bool time_offset = false;

  const auto common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) opt->required();
    sub->add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "overrides the configured seed");
    sub->add_option("--out", out, "output path");
  };

  auto* simulate = app.add_subcommand("simulate", "run the forward simulations");
  common(simulate);
  auto* scatter = app.add_subcommand("scatter", "form and condition the scattered field");
  common(scatter);
  auto* library = app.add_subcommand("library", "build the trial-signature library");
  common(library);
  library->add_option("--domain", domain, "time or freq")->check(CLI::IsMember({"time", "freq"}));
  library->add_option("--T", period, "record length for the frequency form (s)");
  auto* invert = app.add_subcommand("invert", "compute an indicator map");
  common(invert);
  invert->add_option("--domain", domain, "time or freq")->check(CLI::IsMember({"time", "freq"}));
  invert->add_option("--T", period, "record length entering the operator (s)");
  auto* metric = app.add_subcommand("metric", "contrast of a stored map");
  common(metric);
  metric->add_option("--map", map_path, "map file")->required();
  auto* threshold = app.add_subcommand("threshold", "relative threshold of a stored map");
  common(threshold);
  threshold->add_option("--map", map_path, "map file")->required();
  threshold->add_option("--fraction", fraction, "fraction of the map maximum");
  auto* render = app.add_subcommand("render", "16-bit graymap of a stored map");
  common(render, false);
  render->add_option("--map", map_path, "map file")->required();
  auto* sweep = app.add_subcommand("sweep", "contrast table over one hyperparameter");
  common(sweep);
  sweep->add_option("--axis", axis, "Np, t0 or T")->required()->check(CLI::IsMember({"Np", "t0", "T"}));
  sweep->add_option("--values", values, "swept values (seconds for t0 and T)")->required();
  auto* calibrate = app.add_subcommand("calibrate", "fit wave speeds and thickness to picks");
  common(calibrate);
  calibrate->add_option("--picks", picks_path, "pick CSV (defaults to paths.picks)");
  calibrate->add_flag("--time-offset", time_offset, "fit a shared trigger delay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (threads) omp_set_num_threads(*threads);
    std::optional<pipeline::RunConfig> cfg;
    if (!config_path.empty()) {
      cfg = pipeline::load_config(config_path);
      if (seed) cfg->seed = *seed;
    }

    if (simulate->parsed()) {
      const auto summary = pipeline::run_simulate(*cfg);
      std::printf("%zu simulations; wrote %s and %s\n", summary.simulations,
                  cfg->paths.total.c_str(), cfg->paths.free.c_str());
      for (const auto& n : summary.notes) std::printf("note: %s\n", n.c_str());
    } else if (scatter->parsed()) {
      pipeline::run_scatter(*cfg);
      std::printf("wrote %s\n", cfg->paths.scattered.c_str());
    } else if (library->parsed()) {
      if (domain == "time") {
        const auto lib = pipeline::run_library(*cfg);
        std::printf("%zu points x %zu polarizations x %zu outsets; wrote %s\n", lib.n_z(),
                    lib.n_p(), lib.n_outsets(), cfg->paths.library.c_str());
      } else {
        const double T = period.value_or(cfg->periods.back());
        const auto flib = pipeline::run_freq_library(*cfg, T);
        const std::filesystem::path dest =
            out.empty() ? with_suffix(cfg->paths.library, ".freq") : std::filesystem::path(out);
        triallib::write_library(dest, flib);
        std::printf("%zu x %zu frequency library; wrote %s\n",
                    static_cast<std::size_t>(flib.phi_hat.rows()),
                    static_cast<std::size_t>(flib.phi_hat.cols()), dest.c_str());
      }
    } else if (invert->parsed()) {
      pipeline::InvertOptions opt;
      opt.domain = parse_domain(domain);
      opt.period = period;
      const auto result = pipeline::run_invert(*cfg, opt);
      const auto stem = out.empty() ? pipeline::default_stem(*cfg, opt, result.period)
                                    : std::filesystem::path(out);
      pipeline::write_invert_outputs(stem, result);
      std::printf("%s map (%zu samples, %.1f s); wrote %s.map\n", domain.c_str(), result.samples,
                  result.seconds, stem.c_str());
      if (result.result.map.degenerate) std::printf("warning: degenerate map\n");
    } else if (metric->parsed()) {
      const auto map = inversion::read_map(map_path);
      if (!(map.grid == cfg->grid))
        fail(ErrorKind::stale_artifact, map_path + " does not use the configured sampling grid");
      const auto mask = cfg->mask();
      json j = {{"map", map_path},
                {"contrast", imaging::contrast_metric(map.values, mask)},
                {"defect_cells", mask.defect.size()},
                {"background_cells", mask.background.size()},
                {"dilation", cfg->metric.dilation},
                {"gap", cfg->metric.gap}};
      emit(j, out);
    } else if (threshold->parsed()) {
      auto map = inversion::read_map(map_path);
      const auto th = imaging::threshold_map(map.values, fraction.value_or(cfg->metric.threshold));
      for (std::size_t s = 0; s < map.values.size(); ++s) map.values[s] = th.keep[s] ? 1.0 : 0.0;
      map.degenerate = th.degenerate;
      const std::filesystem::path dest =
          out.empty() ? std::filesystem::path(map_path).replace_extension(".thr.map")
                      : std::filesystem::path(out);
      if (dest.extension() == ".pgm")
        imaging::render_map(dest, map.values, map.grid.nx, map.grid.nz);
      else
        inversion::write_map(dest, map);
      std::printf("wrote %s%s\n", dest.c_str(), th.degenerate ? " (degenerate map)" : "");
    } else if (render->parsed()) {
      const auto map = inversion::read_map(map_path);
      const std::filesystem::path dest =
          out.empty() ? std::filesystem::path(map_path).replace_extension(".pgm")
                      : std::filesystem::path(out);
      imaging::render_map(dest, map.normalized(), map.grid.nx, map.grid.nz);
      std::printf("wrote %s\n", dest.c_str());
    } else if (sweep->parsed()) {
      const auto table = pipeline::run_sweep(*cfg, pipeline::parse_axis(axis), values);
      const std::filesystem::path dest =
          out.empty() ? cfg->paths.maps / ("sweep_" + axis + ".csv") : std::filesystem::path(out);
      pipeline::write_sweep_csv(dest, table);
      std::printf("wrote %s\n", dest.c_str());
    } else if (calibrate->parsed()) {
      const std::filesystem::path picks =
          picks_path.empty() ? cfg->paths.picks : std::filesystem::path(picks_path);
      if (picks.empty()) fail(ErrorKind::config, "paths.picks: missing (or pass --picks)");
      calibration::FitOptions options;
      options.time_offset = time_offset;
      const auto fit = pipeline::run_calibrate(*cfg, picks, options);
      json rms, counts;
      for (auto m : {calibration::Mode::ssl, calibration::Mode::saw, calibration::Mode::ll,
                     calibration::Mode::ss, calibration::Mode::ls}) {
        const auto k = static_cast<std::size_t>(m);
        rms[std::string(calibration::to_string(m))] = fit.rms[k];
        counts[std::string(calibration::to_string(m))] = fit.counts[k];
      }
      json j = {{"c_long", fit.c_long},         {"c_shear", fit.c_shear},
                {"c_rayleigh", fit.c_rayleigh}, {"thickness", fit.thickness},
                {"thickness_ll", fit.thickness_ll}, {"thickness_ss", fit.thickness_ss},
                {"time_offset", fit.time_offset}, {"rms", rms},
                {"counts", counts}};
      emit(j, out);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
