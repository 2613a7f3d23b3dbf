#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tlsm/pipeline.hpp"

namespace tlsm::pipeline {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& message) {
  fail(ErrorKind::config, field + ": " + message);
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown fields.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) bad(path_, "expected an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  bool has(const std::string& key) const { return node_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!node_.contains(key)) bad(field(key), "missing");
    return node_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) bad(field(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) bad(field(key), "must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }
  double positive(const std::string& key) {
    const double x = number(key);
    if (!(x > 0.0)) bad(field(key), "must be positive");
    return x;
  }
  double positive(const std::string& key, double fallback) {
    return has(key) ? positive(key) : fallback;
  }

  std::size_t count(const std::string& key, std::size_t minimum = 1) {
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(minimum))
      bad(field(key), "expected an integer >= " + std::to_string(minimum));
    return v.get<std::size_t>();
  }
  std::size_t count(const std::string& key, std::size_t fallback, std::size_t minimum) {
    return has(key) ? count(key, minimum) : fallback;
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) bad(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) bad(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) bad(field(key), "expected a non-empty list of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) bad(field(key) + "[" + std::to_string(k) + "]", "expected a number");
      out.push_back(v[k].get<double>());
    }
    return out;
  }

  Section child(const std::string& key) { return Section(raw(key), field(key)); }

  void finish() const {
    for (const auto& item : node_.items())
      if (!used_.count(item.key())) bad(field(item.key()), "unknown field");
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

// Runs a module validator and re-labels its failure with the section name.
template <class F>
void check(const std::string& field, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    bad(field, e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::uint64_t hash_of(const json& j) { return fnv1a(j.dump()); }

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");

  {
    Section m = top.child("model");
    auto& model = cfg.model;
    model.width = m.positive("width");
    model.depth = m.positive("depth");
    model.cell = m.positive("cell");
    model.density = m.positive("density");
    model.c_long = m.positive("c_long");
    model.c_shear = m.positive("c_shear");
    if (!(model.c_long > model.c_shear))
      bad(m.field("c_shear"), "must be below model.c_long");
    model.sponge_cells = static_cast<int>(m.count("sponge_cells", 30, 0));
    check(m.field("backend"), [&] { cfg.backend = wavesim::parse_backend(m.text("backend", "elastic")); });
    if (m.has("voids")) {
      const json& list = m.raw("voids");
      if (!list.is_array()) bad(m.field("voids"), "expected a list");
      for (std::size_t k = 0; k < list.size(); ++k) {
        Section v(list[k], m.field("voids") + "[" + std::to_string(k) + "]");
        model.voids.push_back({v.number("x"), v.number("z"), v.positive("radius")});
        v.finish();
      }
    }
    check("model", [&] { model.validate(); });
    m.finish();
  }

  {
    Section a = top.child("array");
    if (a.has("count")) {
      const std::size_t n = a.count("count");
      const double pitch = a.positive("pitch");
      const double center = a.number("center", 0.5 * cfg.model.width);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = center + pitch * (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1));
        cfg.array.sources.push_back(x);
        cfg.array.receivers.push_back(x);
      }
    } else {
      cfg.array.sources = a.numbers("sources");
      cfg.array.receivers = a.numbers("receivers");
    }
    check("array", [&] { cfg.array.validate(); });
    for (double x : cfg.array.sources)
      if (x < 0.0 || x > cfg.model.width) bad("array", "element lies outside the model width");
    for (double x : cfg.array.receivers)
      if (x < 0.0 || x > cfg.model.width) bad("array", "element lies outside the model width");
    a.finish();
  }

  {
    Section s = top.child("source");
    const std::string kind = s.text("kind", "laser");
    if (kind == "laser") {
      cfg.source = SourceKind::laser;
      cfg.laser.fwhm = s.positive("fwhm");
      cfg.laser.pulse_width = s.positive("pulse_width");
    } else if (kind == "impulse") {
      cfg.source = SourceKind::impulse;
    } else {
      bad(s.field("kind"), "expected \"laser\" or \"impulse\"");
    }
    s.finish();
  }

  {
    Section b = top.child("band");
    cfg.conditioning.filter = b.flag("filter", true);
    cfg.conditioning.f_lo = b.positive("f_lo");
    cfg.conditioning.f_hi = b.positive("f_hi");
    if (!(cfg.conditioning.f_hi > cfg.conditioning.f_lo)) bad(b.field("f_hi"), "must exceed band.f_lo");
    cfg.n_omega = b.count("n_omega");
    cfg.tukey = b.number("tukey", 0.1);
    if (cfg.tukey < 0.0 || cfg.tukey > 1.0) bad(b.field("tukey"), "must lie in [0, 1]");
    b.finish();
  }

  {
    Section t = top.child("time");
    cfg.sim_grid.dt = t.positive("dt");
    if (t.has("steps"))
      cfg.sim_grid.steps = t.count("steps", 2);
    else
      cfg.sim_grid.steps =
          static_cast<std::size_t>(std::llround(t.positive("duration") / cfg.sim_grid.dt));
    cfg.conditioning.stride = t.count("stride", 1, 1);
    const double limit = wavesim::stable_dt(cfg.model, cfg.backend);
    if (cfg.sim_grid.dt > limit)
      bad(t.field("dt"), "exceeds the stable step " + std::to_string(limit) + " s");
    const double nyquist = 0.5 / (cfg.sim_grid.dt * static_cast<double>(cfg.conditioning.stride));
    if (!(cfg.conditioning.f_hi < nyquist))
      bad("band.f_hi", "must lie below the Nyquist frequency of the decimated record");
    const double record = cfg.record_period();
    cfg.periods = t.has("T") ? t.numbers("T") : std::vector<double>{record};
    const double rec_dt = cfg.sim_grid.dt * static_cast<double>(cfg.conditioning.stride);
    for (std::size_t k = 0; k < cfg.periods.size(); ++k) {
      const double p = cfg.periods[k];
      if (!(p > 0.0) || p > record * (1.0 + 1e-9))
        bad(t.field("T") + "[" + std::to_string(k) + "]", "must lie in (0, record period]");
      if (std::round(p / rec_dt) < 2.0)
        bad(t.field("T") + "[" + std::to_string(k) + "]", "shorter than two samples");
    }
    t.finish();
  }

  {
    Section tr = top.child("trial");
    auto& g = cfg.grid;
    g.x_min = tr.number("x_min");
    g.x_max = tr.number("x_max");
    g.z_min = tr.number("z_min");
    g.z_max = tr.number("z_max");
    g.nx = tr.count("nx");
    g.nz = tr.count("nz");
    check("trial", [&] {
      g.validate();
      g.validate_inside(cfg.model);
    });
    cfg.trial.polarizations = tr.count("polarizations", 8, 1);
    cfg.trial.outsets = tr.has("outsets") ? tr.numbers("outsets") : std::vector<double>{0.0};
    check(tr.field("outsets"), [&] {
      cfg.trial.validate();
      triallib::outset_steps(cfg.trial.outsets, cfg.conditioning.output_grid(cfg.sim_grid));
    });
    if (tr.has("active_outsets")) {
      for (double v : tr.numbers("active_outsets")) {
        if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(cfg.trial.outsets.size()))
          bad(tr.field("active_outsets"), "expected indices into trial.outsets");
        cfg.active_outsets.push_back(static_cast<std::size_t>(v));
      }
    }
    const std::string method = tr.text("method", "reciprocal");
    if (method != "reciprocal" && method != "direct")
      bad(tr.field("method"), "expected \"reciprocal\" or \"direct\"");
    cfg.reciprocal = method == "reciprocal";
    tr.finish();
  }

  {
    cfg.noise_level = 0.0;
    if (top.has("noise")) {
      Section n = top.child("noise");
      cfg.noise_level = n.number("level", 0.0);
      if (cfg.noise_level < 0.0) bad(n.field("level"), "must be nonnegative");
      n.finish();
    }
  }

  {
    auto& reg = cfg.regularization;
    // Without an explicit delta the noise level is the discrepancy target.
    reg.delta = cfg.noise_level > 0.0 ? cfg.noise_level : 1e-3;
    if (top.has("regularization")) {
      Section r = top.child("regularization");
      reg.delta = r.number("delta", reg.delta);
      if (!(reg.delta >= 0.0 && reg.delta < 1.0)) bad(r.field("delta"), "must lie in [0, 1)");
      reg.eta_min = r.positive("eta_min", reg.eta_min);
      reg.eta_max = r.number("eta_max", reg.eta_max);
      if (!(reg.eta_max > reg.eta_min)) bad(r.field("eta_max"), "must exceed eta_min");
      const std::string mode = r.text("mode", "auto");
      if (mode == "auto")
        reg.mode = inversion::SolverMode::automatic;
      else if (mode == "dense")
        reg.mode = inversion::SolverMode::dense_svd;
      else if (mode == "projected")
        reg.mode = inversion::SolverMode::projected;
      else
        bad(r.field("mode"), "expected \"auto\", \"dense\" or \"projected\"");
      reg.projection_cap = r.count("projection_cap", reg.projection_cap, 1);
      reg.dense_limit = r.count("dense_limit", reg.dense_limit, 1);
      check("regularization", [&] { reg.validate(); });
      r.finish();
    }
  }

  if (top.has("metric")) {
    Section m = top.child("metric");
    cfg.metric.dilation = m.number("dilation", cfg.metric.dilation);
    cfg.metric.gap = m.number("gap", cfg.metric.gap);
    cfg.metric.threshold = m.number("threshold", cfg.metric.threshold);
    if (cfg.metric.dilation < 0.0) bad(m.field("dilation"), "must be nonnegative");
    if (cfg.metric.gap < 0.0) bad(m.field("gap"), "must be nonnegative");
    if (!(cfg.metric.threshold > 0.0 && cfg.metric.threshold < 1.0))
      bad(m.field("threshold"), "must lie in (0, 1)");
    m.finish();
  }

  {
    Section p = top.child("paths");
    auto& paths = cfg.paths;
    std::vector<std::pair<std::string, std::filesystem::path*>> slots = {
        {"free", &paths.free},           {"total", &paths.total},
        {"scattered", &paths.scattered}, {"library", &paths.library},
        {"manifest", &paths.manifest},   {"maps", &paths.maps},
        {"picks", &paths.picks}};
    std::set<std::filesystem::path> seen;
    for (auto& [key, slot] : slots) {
      if (key == "picks" && !p.has(key)) continue;
      *slot = resolve(base_dir, p.text(key, ""));
      if (slot->empty()) bad(p.field(key), "missing");
      if (!seen.insert(slot->lexically_normal()).second)
        bad(p.field(key), "path is shared with another entry");
    }
    p.finish();
  }

  if (top.has("seed")) {
    const json& s = top.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      bad("seed", "expected a nonnegative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  top.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

namespace {

json model_json(const wavesim::MaterialModel2D& m, bool with_voids) {
  json j = {{"width", m.width},     {"depth", m.depth},     {"cell", m.cell},
            {"density", m.density}, {"c_long", m.c_long},   {"c_shear", m.c_shear},
            {"sponge", m.sponge_cells}};
  if (with_voids) {
    json v = json::array();
    for (const auto& c : m.voids) v.push_back({c.x, c.z, c.radius});
    j["voids"] = v;
  }
  return j;
}

json array_json(const wavesim::ArrayGeometry& a) {
  return {{"sources", a.sources}, {"receivers", a.receivers}};
}

json conditioning_json(const RunConfig& c) {
  return {{"filter", c.conditioning.filter},
          {"f_lo", c.conditioning.f_lo},
          {"f_hi", c.conditioning.f_hi},
          {"stride", c.conditioning.stride}};
}

}  // namespace

std::uint64_t RunConfig::simulation_hash() const {
  json j = {{"model", model_json(model, true)},
            {"backend", std::string(wavesim::to_string(backend))},
            {"array", array_json(array)},
            {"source", {static_cast<int>(source), laser.fwhm, laser.pulse_width}},
            {"dt", sim_grid.dt},
            {"steps", sim_grid.steps}};
  return hash_of(j);
}

std::uint64_t RunConfig::data_hash() const {
  json j = {{"simulation", simulation_hash()},
            {"conditioning", conditioning_json(*this)},
            {"noise", noise_level},
            {"seed", noise_level > 0.0 ? seed : 0}};
  return hash_of(j);
}

std::uint64_t RunConfig::library_hash() const {
  json j = {{"model", model_json(model, false)},
            {"backend", std::string(wavesim::to_string(backend))},
            {"array", array_json(array)},
            {"dt", sim_grid.dt},
            {"steps", sim_grid.steps},
            {"conditioning", conditioning_json(*this)},
            {"grid", {grid.x_min, grid.x_max, grid.z_min, grid.z_max, grid.nx, grid.nz}},
            {"polarizations", trial.polarizations},
            {"outsets", trial.outsets}};
  return hash_of(j);
}

double RunConfig::record_period() const {
  return conditioning.output_grid(sim_grid).period();
}

imaging::RegionMask RunConfig::mask() const {
  return imaging::make_disk_masks(grid, model.voids, metric.dilation, metric.gap);
}

}  // namespace tlsm::pipeline
