#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tlsm/calibration.hpp"

namespace tlsm::calibration {

namespace {

constexpr std::array<std::string_view, 5> kModeNames{"SSL", "SAW", "LL", "SS", "LS"};

template <class F>
double golden_min(F f, double a, double b, double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 400 && b - a > tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Least-squares slowness of t = s d through the origin.
double slowness(const std::vector<double>& d, const std::vector<double>& t) {
  double dd = 0.0, dt = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    dd += d[k] * d[k];
    dt += d[k] * t[k];
  }
  if (!(dd > 0.0)) fail(ErrorKind::numerical, "speed fit needs nonzero offsets");
  return dt / dd;
}

}  // namespace

std::string_view to_string(Mode mode) { return kModeNames[static_cast<std::size_t>(mode)]; }

Mode parse_mode(std::string_view name) {
  for (std::size_t k = 0; k < kModeNames.size(); ++k)
    if (name == kModeNames[k]) return static_cast<Mode>(k);
  fail(ErrorKind::parameter, "unknown arrival mode '" + std::string(name) + "'");
}

double rayleigh_residual(double c, double c_long, double c_shear) {
  const double xs = c * c / (c_shear * c_shear);
  const double xl = c * c / (c_long * c_long);
  return (2.0 - xs) * (2.0 - xs) - 4.0 * std::sqrt(1.0 - xl) * std::sqrt(1.0 - xs);
}

double rayleigh_speed(double c_long, double c_shear) {
  require(c_shear > 0.0 && c_long > c_shear, ErrorKind::parameter,
          "wave speeds must satisfy c_long > c_shear > 0");
  // The residual vanishes at c = 0 too and is negative just above it, so the
  // bracket starts slightly off zero.
  double lo = 1e-3 * c_shear, hi = c_shear;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (rayleigh_residual(mid, c_long, c_shear) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double a = std::abs(rayleigh_residual(lo, c_long, c_shear));
  const double b = std::abs(rayleigh_residual(hi, c_long, c_shear));
  return a <= b ? lo : hi;
}

double shear_from_rayleigh(double c_rayleigh, double c_long) {
  require(c_rayleigh > 0.0 && c_long > c_rayleigh, ErrorKind::parameter,
          "Rayleigh speed must satisfy 0 < c_R < c_long");
  // c_R grows with c_S at fixed c_L. The bracket stops at Poisson's ratio 0
  // (c_S = c_L / sqrt 2); beyond it the secular equation picks up spurious
  // roots.
  double lo = c_rayleigh, hi = c_long / std::numbers::sqrt2;
  auto g = [&](double cs) { return rayleigh_speed(c_long, cs) - c_rayleigh; };
  if (!(g(lo) < 0.0 && g(hi) > 0.0))
    fail(ErrorKind::numerical, "no shear speed reproduces the Rayleigh speed");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double predict_arrival(Mode mode, double d, double c_long, double c_shear, double h) {
  require(d >= 0.0, ErrorKind::parameter, "offset must be nonnegative");
  require(h > 0.0, ErrorKind::parameter, "thickness must be positive");
  switch (mode) {
    case Mode::ssl: return d / c_long;
    case Mode::saw: return d / rayleigh_speed(c_long, c_shear);
    case Mode::ll: return 2.0 * std::hypot(h, 0.5 * d) / c_long;
    case Mode::ss: return 2.0 * std::hypot(h, 0.5 * d) / c_shear;
    case Mode::ls: {
      auto t = [&](double s) { return std::hypot(h, s) / c_long + std::hypot(h, d - s) / c_shear; };
      if (d == 0.0) return t(0.0);
      return t(golden_min(t, 0.0, d, 1e-12 * std::max(d, h)));
    }
  }
  fail(ErrorKind::parameter, "unknown arrival mode");
}

double ArrivalPickSet::offset(const Pick& p) const {
  return std::abs(geometry.receivers.at(p.receiver) - geometry.sources.at(p.source));
}

void ArrivalPickSet::validate() const {
  for (const auto& p : picks) {
    require(p.time > 0.0, ErrorKind::parameter, "pick times must be positive");
    require(p.source < geometry.sources.size() && p.receiver < geometry.receivers.size(),
            ErrorKind::parameter, "pick index outside the array");
  }
}

FitResult fit_background(const ArrivalPickSet& set, const FitOptions& options) {
  set.validate();
  std::array<std::vector<double>, 5> d, t;
  for (const auto& p : set.picks) {
    const auto k = static_cast<std::size_t>(p.mode);
    d[k].push_back(set.offset(p));
    t[k].push_back(p.time);
  }
  const auto ssl = static_cast<std::size_t>(Mode::ssl), saw = static_cast<std::size_t>(Mode::saw);
  const auto ll = static_cast<std::size_t>(Mode::ll), ss = static_cast<std::size_t>(Mode::ss);
  require(d[ssl].size() >= 2, ErrorKind::parameter, "fit needs at least 2 SSL picks");
  require(d[saw].size() >= 2, ErrorKind::parameter, "fit needs at least 2 SAW picks");
  require(!d[ll].empty() || !d[ss].empty(), ErrorKind::parameter,
          "fit needs at least one LL or SS pick");

  FitResult out;
  if (options.time_offset) {
    // Ordinary regression on the SSL picks fixes the shared delay.
    const double n = static_cast<double>(d[ssl].size());
    double sd = 0.0, st = 0.0, sdd = 0.0, sdt = 0.0;
    for (std::size_t k = 0; k < d[ssl].size(); ++k) {
      sd += d[ssl][k];
      st += t[ssl][k];
      sdd += d[ssl][k] * d[ssl][k];
      sdt += d[ssl][k] * t[ssl][k];
    }
    const double den = n * sdd - sd * sd;
    if (!(den > 0.0)) fail(ErrorKind::numerical, "SSL offsets do not determine a delay");
    out.time_offset = (st * sdd - sd * sdt) / den;
    for (auto& tm : t)
      for (auto& v : tm) v -= out.time_offset;
  }

  out.c_long = 1.0 / slowness(d[ssl], t[ssl]);
  out.c_rayleigh = 1.0 / slowness(d[saw], t[saw]);
  if (!(out.c_rayleigh > 0.0 && out.c_rayleigh < out.c_long))
    fail(ErrorKind::numerical, "non-physical speeds: c_R must lie in (0, c_L)");
  out.c_shear = shear_from_rayleigh(out.c_rayleigh, out.c_long);
  if (!(out.c_shear < out.c_long)) fail(ErrorKind::numerical, "non-physical speeds: c_S >= c_L");

  auto thickness = [&](Mode mode, double speed) {
    const auto k = static_cast<std::size_t>(mode);
    double hi = 0.0;
    for (double v : t[k]) hi = std::max(hi, 0.5 * speed * v);
    auto misfit = [&](double h) {
      double e = 0.0;
      for (std::size_t q = 0; q < d[k].size(); ++q) {
        const double r = predict_arrival(mode, d[k][q], out.c_long, out.c_shear, h) - t[k][q];
        e += r * r;
      }
      return e;
    };
    return golden_min(misfit, 1e-12 * hi, hi, 1e-13 * hi);
  };
  std::vector<double> estimates;
  if (!d[ll].empty()) estimates.push_back(out.thickness_ll = thickness(Mode::ll, out.c_long));
  if (!d[ss].empty()) estimates.push_back(out.thickness_ss = thickness(Mode::ss, out.c_shear));
  out.thickness = 0.0;
  for (double h : estimates) out.thickness += h / static_cast<double>(estimates.size());

  out.rms.assign(5, 0.0);
  out.counts.assign(5, 0);
  for (std::size_t k = 0; k < 5; ++k) {
    out.counts[k] = d[k].size();
    if (d[k].empty()) continue;
    double e = 0.0;
    for (std::size_t q = 0; q < d[k].size(); ++q) {
      const double r = predict_arrival(static_cast<Mode>(k), d[k][q], out.c_long, out.c_shear,
                                       out.thickness) -
                       t[k][q];
      e += r * r;
    }
    out.rms[k] = std::sqrt(e / static_cast<double>(d[k].size()));
  }
  return out;
}

std::vector<Pick> read_picks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("mode,", 0) != 0)
    fail(ErrorKind::format, "pick file must start with header mode,source_index,receiver_index,time_s");
  std::vector<Pick> picks;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string mode, src, rec, time;
    if (!std::getline(ss, mode, ',') || !std::getline(ss, src, ',') ||
        !std::getline(ss, rec, ',') || !std::getline(ss, time))
      fail(ErrorKind::format, "pick file line " + std::to_string(row) + ": expected 4 columns");
    try {
      picks.push_back({parse_mode(mode), std::stoul(src), std::stoul(rec), std::stod(time)});
    } catch (const std::logic_error&) {
      fail(ErrorKind::format, "pick file line " + std::to_string(row) + ": bad number");
    }
  }
  return picks;
}

void write_picks(const std::filesystem::path& path, const std::vector<Pick>& picks) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "mode,source_index,receiver_index,time_s\n";
  for (const auto& p : picks)
    out << to_string(p.mode) << ',' << p.source << ',' << p.receiver << ',' << p.time << '\n';
  if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

}  // namespace tlsm::calibration
