// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--work DIR] [--report FILE] [--only 1,2,...] [--expect-fail 6,...]
//
// Criteria named by --expect-fail still print FAIL but do not change the exit
// status; every other failure exits 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "support.hpp"
#include "tlsm/calibration.hpp"
#include "tlsm/imaging.hpp"
#include "tlsm/inversion.hpp"
#include "tlsm/pipeline.hpp"
#include "tlsm/triallib.hpp"

using namespace tlsm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = n(rng);
  return a;
}

// --- 1 -------------------------------------------------------------------

Outcome operator_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int q = 0; q < 100; ++q) {
    const auto v = testing::random_block(4, 4, 32, rng);
    const inversion::NearFieldOperatorTime op(v);
    const auto g = testing::random_vector(op.cols(), rng);
    std::vector<double> fast(op.rows());
    op.apply(g, fast);
    std::vector<double> direct(op.rows(), 0.0);
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t k = 0; k < 32; ++k)
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = 0; j < k; ++j)
            direct[m * 32 + k] += v.at(m, i, k - j) * g[i * 32 + j];
    worst = std::max(worst, testing::rel_diff(fast, direct));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0,
          "max rel err " + fmt(worst) + " (<= 1e-10), " + fmt(secs) + " s (< 5)"};
}

// --- 2 -------------------------------------------------------------------

Outcome adjoint_identity() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int q = 0; q < 100; ++q) {
    const auto v = testing::random_block(4, 4, 32, rng, 1e-7 * (1 + q % 3));
    const inversion::NearFieldOperatorTime op(v);
    const auto g = testing::random_vector(op.cols(), rng);
    const auto r = testing::random_vector(op.rows(), rng);
    std::vector<double> ng(op.rows()), ar(op.cols());
    op.apply(g, ng);
    op.apply_adjoint(r, ar);
    const double lhs = op.row_weight() * dot(ng, r);
    const double rhs = op.col_weight() * dot(g, ar);
    const double g_norm = std::sqrt(op.col_weight() * dot(g, g));
    const double r_norm = std::sqrt(op.row_weight() * dot(r, r));
    const Eigen::MatrixXd scaled = std::sqrt(op.row_weight() / op.col_weight()) * op.dense();
    const double n_norm = Eigen::BDCSVD<Eigen::MatrixXd>(scaled).singularValues()(0);
    worst = std::max(worst, std::abs(lhs - rhs) / (g_norm * r_norm * n_norm));
  }
  return {worst <= 1e-10, "max |<Ng,r> - <g,N*r>| / (|g||r||N|) = " + fmt(worst)};
}

// --- 3 -------------------------------------------------------------------

Outcome tikhonov_oracle() {
  std::mt19937_64 rng(3);
  double worst_dense = 0.0, worst_proj = 0.0;
  for (int q = 0; q < 20; ++q) {
    const Eigen::MatrixXd a = random_matrix(40, 30, rng);
    const Eigen::VectorXd b = random_matrix(40, 1, rng).col(0);
    const inversion::DenseTikhonov<double> dense(a);
    const inversion::ProjectedTikhonov proj(inversion::as_map(a), b, 30);
    for (double eta : {1e-4, 1e-2, 1.0, 30.0}) {
      const Eigen::VectorXd x = (a.transpose() * a + eta * Eigen::MatrixXd::Identity(30, 30))
                                    .ldlt()
                                    .solve(a.transpose() * b);
      worst_dense = std::max(worst_dense, (dense.solve(b, eta) - x).norm() / x.norm());
      worst_proj = std::max(worst_proj, (proj.solve(eta) - x).norm() / x.norm());
    }
  }
  return {worst_dense <= 1e-8 && worst_proj <= 1e-8,
          "dense " + fmt(worst_dense) + ", projected " + fmt(worst_proj) + " (<= 1e-8)"};
}

// --- 4 -------------------------------------------------------------------

Outcome morozov() {
  std::mt19937_64 rng(4);
  inversion::RegularizationConfig reg;
  double worst = 0.0;
  std::size_t hit = 0, flagged = 0, trials = 0;
  for (int q = 0; q < 20; ++q) {
    const Eigen::MatrixXd a = random_matrix(40, 30, rng);
    const Eigen::VectorXd b = random_matrix(40, 1, rng).col(0);
    const inversion::DenseTikhonov<double> dense(a);
    const auto spec = dense.spectral(b);
    const double scale2 = dense.norm() * dense.norm();
    const double floor = spec.residual(reg.eta_min * scale2) / b.norm();
    for (double delta : {floor * 1.2, 0.5 * (floor + 1.0), 0.95}) {
      const auto t = inversion::morozov_select(spec, delta, scale2, reg);
      const double err = std::abs(t.residual - delta * b.norm()) / (delta * b.norm());
      worst = std::max(worst, err);
      hit += !t.saturated && !t.capped && err <= 0.01;
      ++trials;
    }
    const auto low = inversion::morozov_select(spec, 0.5 * floor, scale2, reg);
    flagged += low.saturated;
  }
  return {hit == trials && flagged == 20,
          std::to_string(hit) + "/" + std::to_string(trials) + " within 1% (worst " +
              fmt(worst) + "), saturation flagged " + std::to_string(flagged) + "/20"};
}

// --- 5 -------------------------------------------------------------------

Outcome reciprocity() {
  double worst = 0.0;
  bool counts = true;
  std::string detail;
  for (auto b : {wavesim::Backend::elastic, wavesim::Backend::scalar}) {
    auto model = testing::small_plate(0.5e-3);
    wavesim::ArrayGeometry array{{0.012, 0.018}, {0.010, 0.015, 0.020}};
    wavesim::TimeGrid sim{std::floor(0.9 * wavesim::stable_dt(model, b) * 1e9) * 1e-9, 240};
    dataops::Conditioning cond{true, 0.3e6, 1.5e6, 2};
    triallib::SamplingGrid grid{0.012, 0.018, 0.004, 0.008, 3, 3};
    triallib::TrialConfig trial;
    trial.polarizations = 2;
    const std::size_t before = wavesim::simulation_count();
    const auto rec =
        triallib::build_library_reciprocal(model, b, grid, trial, array, sim, cond);
    const std::size_t runs = wavesim::simulation_count() - before;
    counts = counts && runs == array.receivers.size();
    const auto dir = triallib::build_time_library(model, b, grid, trial, array, sim, cond);
    double w = 0.0;
    for (std::size_t z = 0; z < grid.size(); ++z)
      for (std::size_t n = 0; n < trial.polarizations; ++n) {
        const auto r = rec.base_signature(z, n), d = dir.base_signature(z, n);
        w = std::max(w, testing::rel_diff({r.begin(), r.end()}, {d.begin(), d.end()}));
      }
    worst = std::max(worst, w);
    detail += std::string(wavesim::to_string(b)) + " " + fmt(w) + " with " +
              std::to_string(runs) + " runs; ";
  }
  return {worst <= 1e-6 && counts, detail + "tolerance 1e-6, N_m = 3"};
}

// --- desk runs (6, 7, 8) ---------------------------------------------------

pipeline::RunConfig desk_config(const std::string& name, const fs::path& work) {
  std::ifstream in(fs::path(TLSM_SOURCE_DIR) / "configs" / name);
  std::stringstream text;
  text << in.rdbuf();
  return pipeline::parse_config(text.str(), work);
}

// Distance from a sampling point to the nearest void boundary, in cells.
double boundary_cells(const pipeline::RunConfig& cfg, std::size_t s) {
  const auto p = cfg.grid.point(s);
  double d = 1e300;
  for (const auto& v : cfg.model.voids)
    d = std::min(d, std::abs(std::hypot(p.x - v.x, p.z - v.z) - v.radius));
  const double cell = std::max((cfg.grid.x_max - cfg.grid.x_min) / double(cfg.grid.nx - 1),
                               (cfg.grid.z_max - cfg.grid.z_min) / double(cfg.grid.nz - 1));
  return d / cell;
}

// Indicator restricted to one outset: 1 / min over polarizations.
std::vector<double> outset_map(const inversion::MapResult& res, std::size_t n_z, std::size_t r) {
  std::vector<double> best(n_z, INFINITY);
  for (const auto& rec : res.records)
    if (rec.r == r) best[rec.s] = std::min(best[rec.s], rec.norm);
  std::vector<double> out(n_z);
  for (std::size_t s = 0; s < n_z; ++s) out[s] = std::isfinite(best[s]) ? 1.0 / best[s] : 0.0;
  return out;
}

double max_over(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  double m = 0.0;
  for (auto s : idx) m = std::max(m, v[s]);
  return m;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct DeskResults {
  Outcome six, eight;
};

DeskResults desk_single(const fs::path& work) {
  const auto cfg = desk_config("desk.json", work);
  const auto t0 = Clock::now();
  pipeline::run_simulate(cfg);
  pipeline::run_scatter(cfg);
  pipeline::run_library(cfg);
  const double prep = seconds_since(t0);

  // Outsets 0 and the configured one in a single factorization; the
  // configured indicator is the second.
  pipeline::InvertOptions topt;
  topt.outsets = std::vector<std::size_t>{0, cfg.active_outsets.front()};
  const auto t = pipeline::run_invert(cfg, topt);
  pipeline::InvertOptions fopt;
  fopt.domain = inversion::MapDomain::frequency;
  const auto l = pipeline::run_invert(cfg, fopt);
  const double wall = seconds_since(t0);

  const std::size_t n_z = cfg.grid.size();
  const auto tmap = outset_map(t.result, n_z, 1);
  const auto& lmap = l.result.map.values;
  const auto mask = cfg.mask();
  const double dt_cells = boundary_cells(cfg, argmax(tmap));
  const double dl_cells = boundary_cells(cfg, argmax(lmap));
  const double ct = imaging::contrast_metric(tmap, mask);
  const double cl = imaging::contrast_metric(lmap, mask);
  const bool ok6 = dt_cells <= 2.0 && dl_cells <= 2.0 && ct >= 5.0 && cl >= 5.0 && wall <= 600.0;

  std::string d6 = "T: argmax " + fmt(dt_cells) + " cells from boundary, contrast " + fmt(ct) +
                   "; L: argmax " + fmt(dl_cells) + " cells, contrast " + fmt(cl) +
                   " (<= 2 cells, >= 5); wall " + fmt(prep + 0.0, 4) + " s prep + " +
                   fmt(t.seconds, 4) + " s T + " + fmt(l.seconds, 4) + " s L = " +
                   fmt(wall, 4) + " s (<= 600, " +
                   std::to_string(std::max(1u, std::thread::hardware_concurrency())) +
                   " hardware threads)";

  const auto early = outset_map(t.result, n_z, 0);
  const double late_v = max_over(tmap, mask.defect);
  const double early_v = max_over(early, mask.defect);
  const double ratio = early_v > 0.0 ? late_v / early_v : INFINITY;
  const auto steps = triallib::outset_steps(cfg.trial.outsets,
                                            cfg.conditioning.output_grid(cfg.sim_grid));
  const double dt_out = cfg.conditioning.output_grid(cfg.sim_grid).dt;
  std::string d8 = "T at void, t0 = " + fmt(steps[cfg.active_outsets.front()] * dt_out * 1e6) +
                   " us: " + fmt(late_v) + ", t0 = 0: " + fmt(early_v) + ", ratio " +
                   fmt(ratio) + " (>= 2)";
  return {{ok6, d6}, {ratio >= 2.0, d8}};
}

Outcome desk_two_voids(const fs::path& work) {
  const auto cfg = desk_config("desk_two_voids.json", work);
  pipeline::run_simulate(cfg);
  pipeline::run_scatter(cfg);
  pipeline::run_library(cfg);
  const auto table = pipeline::run_sweep(cfg, pipeline::SweepAxis::period, cfg.periods);
  pipeline::write_sweep_csv(cfg.paths.maps / "sweep_T.csv", table);
  std::string detail;
  bool ok = true;
  const std::size_t nv = table.values.size();
  for (std::size_t v = 0; v < nv; ++v) {
    const double ct = table.contrast[0][v], cl = table.contrast[1][v];
    detail += "T=" + fmt(table.values[v] * 1e6) + "us T " + fmt(ct) + " L " + fmt(cl) + "; ";
    if (v + 2 >= nv) ok = ok && ct >= cl;
  }
  return {ok, detail + "need T >= L at the two longest"};
}

// --- 9 -------------------------------------------------------------------

Outcome calibration_check() {
  using namespace calibration;
  constexpr double cl = 6580.0, cs = 3211.0, h = 3e-3;
  // Picks on the 61-element, 9 mm aperture with sources at -4.2, 0 and 2.25 mm;
  // bulk reflections only where the offset is at most 6 mm.
  const auto synth = [&](double noise, std::uint64_t seed) {
    ArrivalPickSet set;
    set.geometry.sources = {-4.2e-3, 0.0, 2.25e-3};
    for (int m = 0; m < 61; ++m) set.geometry.receivers.push_back(-4.5e-3 + 0.15e-3 * m);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (Mode mode : {Mode::ssl, Mode::saw, Mode::ll, Mode::ss, Mode::ls})
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t m = 0; m < 61; ++m) {
          Pick p{mode, i, m, 0.0};
          const double d = set.offset(p);
          const bool surface = mode == Mode::ssl || mode == Mode::saw;
          if (d < 1e-4 || (!surface && d > 6e-3)) continue;
          p.time = predict_arrival(mode, d, cl, cs, h) * (1.0 + noise * normal(rng));
          set.picks.push_back(p);
        }
    return set;
  };
  const auto rel = [](double a, double b) { return std::abs(a - b) / b; };
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto f = fit_background(synth(0.01, seed));
    worst = std::max({worst, rel(f.c_long, cl), rel(f.c_shear, cs), rel(f.thickness, h)});
  }
  const auto exact = fit_background(synth(0.0, 1));
  const double exact_err =
      std::max({rel(exact.c_long, cl), rel(exact.c_shear, cs), rel(exact.thickness, h)});
  const double residual = std::abs(rayleigh_residual(rayleigh_speed(cl, cs), cl, cs));
  return {worst <= 0.02 && exact_err <= 1e-9 && residual <= 1e-12,
          "noisy worst " + fmt(worst) + " (<= 0.02), noiseless " + fmt(exact_err) +
              " (<= 1e-9), Rayleigh residual " + fmt(residual) + " (<= 1e-12)"};
}

// --- 10 ------------------------------------------------------------------

Outcome invariance() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<std::string> failed;

  const triallib::SamplingGrid grid{0.0, 0.02, 0.0, 0.02, 21, 21};
  const auto mask = imaging::make_disk_masks(grid, {{0.01, 0.01, 0.002}}, 0.001, 0.001);
  std::vector<double> v(grid.size());
  for (auto& x : v) x = u(rng);
  const double c = imaging::contrast_metric(v, mask);
  bool contrast_ok = true, thr_ok = true, mono_ok = true;
  for (double k : {1e-6, 3.0, 1e9}) {
    auto w = v;
    for (auto& x : w) x *= k;
    contrast_ok = contrast_ok && std::abs(imaging::contrast_metric(w, mask) - c) <= 1e-12 * c;
    for (double f : {0.2, 0.6, 0.9})
      thr_ok = thr_ok && imaging::threshold_map(w, f).keep == imaging::threshold_map(v, f).keep;
  }
  std::vector<std::uint8_t> last(v.size(), 1);
  for (double f = 0.05; f < 1.0; f += 0.05) {
    const auto keep = imaging::threshold_map(v, f).keep;
    for (std::size_t s = 0; s < v.size(); ++s) mono_ok = mono_ok && keep[s] <= last[s];
    last = keep;
  }
  if (!contrast_ok) failed.push_back("contrast scaling");
  if (!thr_ok) failed.push_back("threshold scaling");
  if (!mono_ok) failed.push_back("threshold monotonicity");

  // Data scaled by c multiplies the indicator by c.
  const auto data = testing::random_block(3, 3, 24, rng);
  triallib::SignatureLibrary lib;
  lib.grid = {0.001, 0.004, 0.002, 0.002, 4, 1};
  lib.polarizations = 2;
  lib.angles = {0.0, 1.5};
  lib.array = data.array;
  lib.time_grid = data.grid;
  lib.outset_steps = {0};
  lib.base = testing::random_vector(4 * 2 * 3 * 24, rng);
  inversion::RegularizationConfig reg;
  reg.delta = 0.1;
  reg.mode = inversion::SolverMode::dense_svd;
  const auto base = inversion::tlsm_map(inversion::NearFieldOperatorTime(data), lib, reg);
  auto scaled = data;
  for (auto& x : scaled.values) x *= 7.5;
  const auto big = inversion::tlsm_map(inversion::NearFieldOperatorTime(scaled), lib, reg);
  double law = 0.0;
  for (std::size_t s = 0; s < 4; ++s)
    law = std::max(law, std::abs(big.map.values[s] - 7.5 * base.map.values[s]) /
                            (7.5 * base.map.values[s]));
  if (law > 1e-8) failed.push_back("map scaling law " + fmt(law));

  // Outsets are exact sample shifts of the base signature.
  lib.outset_steps = {0, 5, 11};
  bool shift_ok = true;
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t n = 0; n < 2; ++n) {
      const auto b0 = lib.signature(s, n, 0, 24);
      for (std::size_t r = 1; r < 3; ++r) {
        const auto sh = lib.signature(s, n, r, 24);
        const std::size_t k0 = lib.outset_steps[r];
        for (std::size_t m = 0; m < 3; ++m)
          for (std::size_t k = 0; k < 24; ++k)
            shift_ok = shift_ok && sh[m * 24 + k] == (k < k0 ? 0.0 : b0[m * 24 + k - k0]);
      }
    }
  if (!shift_ok) failed.push_back("outset shift");

  std::string detail = failed.empty() ? "contrast/threshold scaling, map scaling law (rel " +
                                            fmt(law) + "), outset shifts, monotonicity"
                                      : "failed:";
  for (const auto& f : failed) detail += " " + f;
  return {failed.empty(), detail};
}

std::set<int> parse_list(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work", report, only, expect;
  app.add_option("--work", work, "directory for desk-scale artifacts");
  app.add_option("--report", report, "also write the criterion lines here");
  app.add_option("--only", only, "comma-separated criteria to run");
  app.add_option("--expect-fail", expect, "criteria documented as failing");
  CLI11_PARSE(app, argc, argv);

  const auto selected = parse_list(only);
  const auto expected = parse_list(expect);
  const auto wanted = [&](int c) { return selected.empty() || selected.count(c); };
  fs::create_directories(work);
  std::ofstream report_out;
  if (!report.empty()) report_out.open(report);

  std::vector<std::pair<int, Outcome>> results;
  const auto run = [&](int id, auto&& fn) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::ostringstream line;
    line << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL")
         << (!o.pass && expected.count(id) ? " (documented)" : "") << "  " << o.detail;
    std::cout << line.str() << std::endl;
    if (report_out) report_out << line.str() << std::endl;
    results.emplace_back(id, o);
  };

  run(1, operator_oracle);
  run(2, adjoint_identity);
  run(3, tikhonov_oracle);
  run(4, morozov);
  run(5, reciprocity);
  if (wanted(6) || wanted(8)) {
    DeskResults desk;
    try {
      desk = desk_single(work);
    } catch (const std::exception& e) {
      desk.six = desk.eight = {false, std::string("error: ") + e.what()};
    }
    run(6, [&] { return desk.six; });
    run(7, [&] { return desk_two_voids(work); });
    run(8, [&] { return desk.eight; });
  } else {
    run(7, [&] { return desk_two_voids(work); });
  }
  run(9, calibration_check);
  run(10, invariance);

  int status = 0;
  for (const auto& [id, o] : results)
    if (!o.pass && !expected.count(id)) status = 1;
  return status;
}
