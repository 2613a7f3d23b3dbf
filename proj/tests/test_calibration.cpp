#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "tlsm/calibration.hpp"

using namespace tlsm;
using namespace tlsm::calibration;

namespace {

constexpr double kCL = 6580.0, kCS = 3211.0, kH = 3e-3;

// 20 picks per mode from a 5-source, 8-receiver line.
ArrivalPickSet synthetic(double c_l, double c_s, double h, double noise, std::uint64_t seed) {
  ArrivalPickSet set;
  for (int i = 0; i < 5; ++i) set.geometry.sources.push_back(1e-3 * i);
  for (int m = 0; m < 8; ++m) set.geometry.receivers.push_back(8e-3 + 1.5e-3 * m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (Mode mode : {Mode::ssl, Mode::saw, Mode::ll, Mode::ss, Mode::ls})
    for (std::size_t q = 0; q < 20; ++q) {
      Pick p{mode, q % 5, (q / 5 + 3 * q) % 8, 0.0};
      const double t = predict_arrival(mode, set.offset(p), c_l, c_s, h);
      p.time = t * (1.0 + noise * normal(rng));
      set.picks.push_back(p);
    }
  return set;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("rayleigh speed") {
  // 30-digit bisection oracle, frozen.
  const double c_r = rayleigh_speed(kCL, kCS);
  CHECK(c_r == doctest::Approx(2999.332070613932).epsilon(1e-12));
  CHECK(std::abs(rayleigh_residual(c_r, kCL, kCS)) <= 1e-12);
  CHECK(shear_from_rayleigh(c_r, kCL) == doctest::Approx(kCS).epsilon(1e-12));

  SUBCASE("bracket and homogeneity") {
    for (double ratio : {1.45, 1.6, 2.049, 3.0, 10.0}) {
      const double cs = 3000.0, cl = ratio * cs;
      const double r = rayleigh_speed(cl, cs);
      CHECK(r > 0.85 * cs);
      CHECK(r < cs);
      CHECK(std::abs(rayleigh_residual(r, cl, cs)) <= 1e-12);
      CHECK(rayleigh_speed(2.5 * cl, 2.5 * cs) == doctest::Approx(2.5 * r).epsilon(1e-12));
    }
  }

  SUBCASE("invalid ordering") {
    CHECK_THROWS_AS(rayleigh_speed(3000.0, 3000.0), Error);
    CHECK_THROWS_AS(rayleigh_speed(3000.0, 0.0), Error);
  }
}

TEST_CASE("arrival models") {
  CHECK(predict_arrival(Mode::ll, 0.0, kCL, kCS, kH) == doctest::Approx(0.9118541033434650e-6));
  CHECK(predict_arrival(Mode::ll, 0.0, kCL, kCS, kH) == doctest::Approx(2 * kH / kCL));
  CHECK(predict_arrival(Mode::ls, 0.0, kCL, kCS, kH) == doctest::Approx(kH / kCL + kH / kCS));
  CHECK(predict_arrival(Mode::ssl, 0.01, kCL, kCS, kH) == doctest::Approx(0.01 / kCL));
  CHECK(predict_arrival(Mode::saw, 0.01, kCL, kCS, kH) ==
        doctest::Approx(0.01 / rayleigh_speed(kCL, kCS)));
  CHECK(predict_arrival(Mode::ss, 0.008, kCL, kCS, kH) ==
        doctest::Approx(2 * std::hypot(kH, 0.004) / kCS));

  SUBCASE("mixed path lies between the pure paths") {
    for (double d = 0.0; d < 0.03; d += 0.0013) {
      const double ll = predict_arrival(Mode::ll, d, kCL, kCS, kH);
      const double ls = predict_arrival(Mode::ls, d, kCL, kCS, kH);
      const double ss = predict_arrival(Mode::ss, d, kCL, kCS, kH);
      CHECK(ll <= ls);
      CHECK(ls <= ss);
      // The bounce point minimizes the travel time.
      for (double s : {0.0, 0.25 * d, 0.5 * d, d})
        CHECK(ls <= std::hypot(kH, s) / kCL + std::hypot(kH, d - s) / kCS + 1e-15);
    }
  }

  SUBCASE("bad input") {
    CHECK_THROWS_AS(predict_arrival(Mode::ll, -1e-3, kCL, kCS, kH), Error);
    CHECK_THROWS_AS(predict_arrival(Mode::ll, 1e-3, kCL, kCS, 0.0), Error);
    CHECK_THROWS_AS(parse_mode("XX"), Error);
    CHECK(parse_mode("SAW") == Mode::saw);
  }
}

TEST_CASE("noiseless fit is exact") {
  const auto set = synthetic(kCL, kCS, kH, 0.0, 1);
  const auto fit = fit_background(set);
  CHECK(rel(fit.c_long, kCL) <= 1e-9);
  CHECK(rel(fit.c_shear, kCS) <= 1e-9);
  CHECK(rel(fit.thickness, kH) <= 1e-9);
  CHECK(rel(fit.thickness_ll, kH) <= 1e-9);
  CHECK(rel(fit.thickness_ss, kH) <= 1e-9);
  for (double r : fit.rms) CHECK(r <= 1e-15);
  CHECK(fit.counts[static_cast<std::size_t>(Mode::ls)] == 20);

  SUBCASE("shared delay") {
    auto shifted = set;
    for (auto& p : shifted.picks) p.time += 0.4e-6;
    const auto f = fit_background(shifted, {true});
    CHECK(f.time_offset == doctest::Approx(0.4e-6).epsilon(1e-9));
    CHECK(rel(f.c_long, kCL) <= 1e-9);
    CHECK(rel(f.thickness, kH) <= 1e-9);
  }
}

TEST_CASE("noisy picks recover the parameters") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    CAPTURE(seed);
    const auto fit = fit_background(synthetic(kCL, kCS, kH, 0.01, seed));
    CHECK(rel(fit.c_long, kCL) <= 0.02);
    CHECK(rel(fit.c_shear, kCS) <= 0.02);
    CHECK(rel(fit.thickness, kH) <= 0.02);
  }
}

TEST_CASE("time scaling and pick order") {
  const auto set = synthetic(kCL, kCS, kH, 0.003, 9);
  const auto base = fit_background(set);

  auto slow = set;
  for (auto& p : slow.picks) p.time *= 1.25;
  const auto s = fit_background(slow);
  CHECK(s.c_long == doctest::Approx(base.c_long / 1.25).epsilon(1e-10));
  CHECK(s.c_shear == doctest::Approx(base.c_shear / 1.25).epsilon(1e-10));
  CHECK(s.thickness == doctest::Approx(base.thickness).epsilon(1e-8));

  auto shuffled = set;
  std::mt19937_64 rng(5);
  std::shuffle(shuffled.picks.begin(), shuffled.picks.end(), rng);
  const auto o = fit_background(shuffled);
  CHECK(o.c_long == doctest::Approx(base.c_long).epsilon(1e-13));
  CHECK(o.c_shear == doctest::Approx(base.c_shear).epsilon(1e-13));
  CHECK(o.thickness == doctest::Approx(base.thickness).epsilon(1e-9));
}

TEST_CASE("fit input errors") {
  auto set = synthetic(kCL, kCS, kH, 0.0, 1);
  std::erase_if(set.picks, [](const Pick& p) { return p.mode == Mode::saw; });
  CHECK_THROWS_AS(fit_background(set), Error);

  auto bad = synthetic(kCL, kCS, kH, 0.0, 1);
  bad.picks[0].receiver = 99;
  CHECK_THROWS_AS(fit_background(bad), Error);
  bad = synthetic(kCL, kCS, kH, 0.0, 1);
  bad.picks[0].time = -1.0;
  CHECK_THROWS_AS(fit_background(bad), Error);
}

TEST_CASE("pick files") {
  const auto set = synthetic(kCL, kCS, kH, 0.0, 1);
  const auto dir = std::filesystem::temp_directory_path() / "tlsm_calibration_test";
  std::filesystem::create_directories(dir);
  write_picks(dir / "p.csv", set.picks);
  const auto back = read_picks(dir / "p.csv");
  REQUIRE(back.size() == set.picks.size());
  for (std::size_t q = 0; q < back.size(); ++q) {
    CHECK(back[q].mode == set.picks[q].mode);
    CHECK(back[q].time == set.picks[q].time);
  }
  {
    std::ofstream f(dir / "bad.csv");
    f << "mode,when\nSSL,1\n";
  }
  CHECK_THROWS_AS(read_picks(dir / "bad.csv"), Error);
  std::filesystem::remove_all(dir);
}
