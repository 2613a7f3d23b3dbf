#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tlsm/inversion.hpp"

using namespace tlsm;
using namespace tlsm::inversion;

namespace {

// Direct triple sum of the block-Toeplitz product.
std::vector<double> direct_apply(const dataops::WaveformBlock& v, const std::vector<double>& g) {
  const std::size_t n_m = v.n_m(), n_i = v.n_i(), n_t = v.n_t();
  std::vector<double> out(n_m * n_t, 0.0);
  for (std::size_t m = 0; m < n_m; ++m)
    for (std::size_t k = 0; k < n_t; ++k)
      for (std::size_t i = 0; i < n_i; ++i)
        for (std::size_t j = 0; j < k; ++j) out[m * n_t + k] += v.at(m, i, k - j) * g[i * n_t + j];
  return out;
}

// Correlation with the same kernels: the plain transpose.
std::vector<double> direct_transpose(const dataops::WaveformBlock& v, const std::vector<double>& r) {
  const std::size_t n_m = v.n_m(), n_i = v.n_i(), n_t = v.n_t();
  std::vector<double> out(n_i * n_t, 0.0);
  for (std::size_t i = 0; i < n_i; ++i)
    for (std::size_t j = 0; j < n_t; ++j)
      for (std::size_t m = 0; m < n_m; ++m)
        for (std::size_t k = j + 1; k < n_t; ++k)
          out[i * n_t + j] += v.at(m, i, k - j) * r[m * n_t + k];
  return out;
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

Eigen::VectorXd random_vec(Eigen::Index r, std::mt19937_64& rng) {
  return random_matrix(r, 1, rng).col(0);
}

// Library whose signatures are random for the data's array and step.
triallib::SignatureLibrary random_library(const dataops::WaveformBlock& v, std::size_t n_p,
                                          std::size_t n_z, std::mt19937_64& rng) {
  triallib::SignatureLibrary lib;
  lib.grid = {0.001, 0.001 * static_cast<double>(n_z), 0.002, 0.002, n_z, 1};
  lib.polarizations = n_p;
  for (std::size_t n = 0; n < n_p; ++n) lib.angles.push_back(3.14159 * n / n_p);
  lib.array = v.array;
  lib.time_grid = v.grid;
  lib.outset_steps = {0};
  lib.base = testing::random_vector(n_z * n_p * v.n_m() * v.n_t(), rng);
  return lib;
}

}  // namespace

TEST_CASE("operator equals the direct sum") {
  std::mt19937_64 rng(11);
  const auto v = testing::random_block(4, 4, 32, rng);
  const NearFieldOperatorTime op(v);
  const auto g = testing::random_vector(4 * 32, rng);
  std::vector<double> out(op.rows());
  op.apply(g, out);
  CHECK(testing::rel_diff(out, direct_apply(v, g)) <= 1e-10);

  SUBCASE("unequal counts and dense form") {
    const auto w = testing::random_block(3, 5, 17, rng);
    const NearFieldOperatorTime op2(w);
    const auto h = testing::random_vector(5 * 17, rng);
    std::vector<double> y(op2.rows());
    op2.apply(h, y);
    CHECK(testing::rel_diff(y, direct_apply(w, h)) <= 1e-10);
    const Eigen::VectorXd yd = op2.dense() * Eigen::Map<const Eigen::VectorXd>(h.data(), 85);
    CHECK(testing::rel_diff({yd.data(), yd.data() + yd.size()}, y) <= 1e-12);
  }

  SUBCASE("zero density") {
    std::vector<double> z(op.cols(), 0.0), y(op.rows(), 1.0);
    op.apply(z, y);
    CHECK(testing::max_abs(y) == 0.0);
  }

  SUBCASE("first samples only") {
    const NearFieldOperatorTime cut(v, 20);
    CHECK(cut.n_t() == 20);
    std::vector<double> gc(4 * 20), yc(4 * 20);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 20; ++j) gc[i * 20 + j] = g[i * 32 + j];
    cut.apply(gc, yc);
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t k = 0; k < 20; ++k)
        CHECK(yc[m * 20 + k] == doctest::Approx(out[m * 32 + k]).epsilon(1e-10));
  }
}

TEST_CASE("unit kick sifts the kernel") {
  std::mt19937_64 rng(3);
  const auto v = testing::random_block(3, 2, 24, rng);
  const NearFieldOperatorTime op(v);
  const std::size_t i0 = 1;
  std::vector<double> g(op.cols(), 0.0), out(op.rows());
  g[i0 * 24 + 1] = 1.0;
  op.apply(g, out);
  double worst = 0.0;
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(std::abs(out[m * 24 + 0]) <= 1e-14);
    CHECK(std::abs(out[m * 24 + 1]) <= 1e-14);
    for (std::size_t k = 2; k < 24; ++k)
      worst = std::max(worst, std::abs(out[m * 24 + k] - v.at(m, i0, k - 1)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("transpose is a correlation and the adjoint is exact") {
  std::mt19937_64 rng(5);
  const auto v = testing::random_block(4, 3, 40, rng, 2e-7);
  const NearFieldOperatorTime op(v);
  const auto r = testing::random_vector(op.rows(), rng);
  std::vector<double> t(op.cols());
  op.apply_transpose(r, t);
  CHECK(testing::rel_diff(t, direct_transpose(v, r)) <= 1e-10);

  const auto g = testing::random_vector(op.cols(), rng);
  std::vector<double> ng(op.rows()), ar(op.cols());
  op.apply(g, ng);
  op.apply_adjoint(r, ar);
  const double lhs = op.row_weight() * dot(ng, r);
  const double rhs = op.col_weight() * dot(g, ar);
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));

  std::vector<double> zero(op.rows(), 0.0), out(op.cols(), 1.0);
  op.apply_adjoint(zero, out);
  CHECK(testing::max_abs(out) == 0.0);
}

TEST_CASE("dimension checks") {
  std::mt19937_64 rng(1);
  const auto v = testing::random_block(2, 2, 8, rng);
  const NearFieldOperatorTime op(v);
  std::vector<double> g(op.cols() + 1), out(op.rows());
  CHECK_THROWS_AS(op.apply(g, out), Error);
  CHECK_THROWS_AS(NearFieldOperatorTime(v, 9), Error);
}

TEST_CASE("tikhonov matches the normal equations") {
  std::mt19937_64 rng(17);
  const Eigen::MatrixXd a = random_matrix(40, 30, rng);
  const Eigen::VectorXd b = random_vec(40, rng);
  const Eigen::MatrixXd ata = a.transpose() * a;
  for (double eta : {1e-3, 0.5, 20.0}) {
    CAPTURE(eta);
    const Eigen::VectorXd x =
        (ata + eta * Eigen::MatrixXd::Identity(30, 30)).ldlt().solve(a.transpose() * b);
    const DenseTikhonov<double> dense(a);
    const Eigen::VectorXd xd = dense.solve(b, eta);
    CHECK((xd - x).norm() <= 1e-8 * x.norm());
    const auto at = tikhonov_at(dense.spectral(b), eta);
    CHECK(at.norm == doctest::Approx(x.norm()).epsilon(1e-8));
    CHECK(at.residual == doctest::Approx((a * x - b).norm()).epsilon(1e-8));

    // At full dimension the projection is exact.
    const auto map = as_map(a);
    const ProjectedTikhonov proj(map, b, 30);
    CHECK(proj.dimension() == 30);
    const Eigen::VectorXd xp = proj.solve(eta);
    CHECK((xp - x).norm() <= 1e-8 * x.norm());
    const auto pt = tikhonov_at(proj.spectral(), eta);
    CHECK(pt.residual == doctest::Approx((a * x - b).norm()).epsilon(1e-8));
  }

  SUBCASE("complex blocks") {
    Eigen::MatrixXcd c(12, 9);
    c.real() = random_matrix(12, 9, rng);
    c.imag() = random_matrix(12, 9, rng);
    Eigen::VectorXcd bc(12);
    bc.real() = random_vec(12, rng);
    bc.imag() = random_vec(12, rng);
    const double eta = 0.3;
    const Eigen::VectorXcd x = (c.adjoint() * c + eta * Eigen::MatrixXcd::Identity(9, 9))
                                   .ldlt()
                                   .solve(c.adjoint() * bc);
    const DenseTikhonov<std::complex<double>> dense(c);
    CHECK((dense.solve(bc, eta) - x).norm() <= 1e-8 * x.norm());
  }

  SUBCASE("invalid parameters") {
    const DenseTikhonov<double> dense(a);
    CHECK_THROWS_AS(tikhonov_at(dense.spectral(b), 0.0), Error);
    RegularizationConfig reg;
    reg.projection_cap = 0;
    CHECK_THROWS_AS(reg.validate(), Error);
    reg = {};
    reg.delta = 1.0;
    CHECK_THROWS_AS(reg.validate(), Error);
  }
}

TEST_CASE("batched spectra match single right-hand sides") {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd a = random_matrix(30, 24, rng);
  const Eigen::MatrixXd b = random_matrix(30, 5, rng);
  const DenseTikhonov<double> full(a), lean(a, false);
  const auto batch = lean.spectra(b);
  REQUIRE(batch.size() == 5);
  for (Eigen::Index c = 0; c < 5; ++c) {
    const auto one = full.spectral(Eigen::VectorXd(b.col(c)));
    const auto& got = batch[static_cast<std::size_t>(c)];
    CHECK((got.coef2 - one.coef2).norm() <= 1e-13 * one.coef2.norm());
    CHECK(got.rhs_norm == doctest::Approx(one.rhs_norm).epsilon(1e-14));
    CHECK(got.residual(0.2) == doctest::Approx(one.residual(0.2)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(lean.solve(Eigen::VectorXd(b.col(0)), 0.1), Error);
}

TEST_CASE("identity operator limits") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(10, 10);
  const Eigen::VectorXd b = random_vec(10, rng);
  const DenseTikhonov<double> dense(id);
  const auto spec = dense.spectral(b);
  const auto small = tikhonov_at(spec, 1e-12);
  CHECK((dense.solve(b, 1e-12) - b).norm() <= 1e-10 * b.norm());
  CHECK(small.residual <= 1e-10 * b.norm());
  const auto large = tikhonov_at(spec, 1e12);
  CHECK(large.norm <= 1e-10 * b.norm());
  CHECK(large.residual == doctest::Approx(b.norm()).epsilon(1e-10));

  SUBCASE("delta kernels give the identity operator") {
    auto v = dataops::WaveformBlock::zeros(dataops::BlockKind::scattered,
                                           {{0.0, 1.0}, {0.0, 1.0}}, {1.0, 6});
    v.at(0, 0, 1) = 1.0;
    v.at(1, 1, 1) = 1.0;
    const NearFieldOperatorTime op(v);
    // Sifting by one step: N g(k) = g(k - 1).
    const Eigen::MatrixXd d = op.dense();
    for (Eigen::Index r = 0; r < d.rows(); ++r)
      for (Eigen::Index c = 0; c < d.cols(); ++c)
        CHECK(d(r, c) == ((r / 6 == c / 6 && r % 6 == c % 6 + 1) ? 1.0 : 0.0));
  }
}

TEST_CASE("residual and norm are monotone in eta") {
  std::mt19937_64 rng(23);
  const Eigen::MatrixXd a = random_matrix(25, 20, rng);
  const Eigen::VectorXd b = random_vec(25, rng);
  const DenseTikhonov<double> dense(a);
  const auto spec = dense.spectral(b);
  double last_res = 0.0, last_norm = 1e300;
  for (double eta : {1e-4, 1e-2, 1.0, 1e2, 1e4}) {
    const auto t = tikhonov_at(spec, eta);
    CHECK(t.residual >= last_res);
    CHECK(t.norm <= last_norm);
    last_res = t.residual;
    last_norm = t.norm;
  }
}

TEST_CASE("discrepancy principle") {
  std::mt19937_64 rng(29);
  const Eigen::MatrixXd a = random_matrix(20, 15, rng);
  const Eigen::VectorXd b = random_vec(20, rng);
  const DenseTikhonov<double> dense(a);
  const auto spec = dense.spectral(b);
  const double scale2 = dense.norm() * dense.norm();
  RegularizationConfig reg;
  // 20 x 15 leaves a residual floor, so the target has to sit above it.
  const double floor = spec.residual(1e-300) / b.norm();
  REQUIRE(floor < 0.9);

  SUBCASE("hits the target") {
    const double delta = std::max(0.1, floor + 0.05);
    const auto t = morozov_select(spec, delta, scale2, reg);
    CHECK(!t.saturated);
    CHECK(!t.capped);
    CHECK(std::abs(t.residual - delta * b.norm()) <= 0.001 * b.norm());
    CHECK(t.eta >= reg.eta_min * scale2);
    CHECK(t.eta <= reg.eta_max * scale2);
  }

  SUBCASE("square system reaches delta 0.1") {
    const Eigen::MatrixXd sq = random_matrix(20, 20, rng);
    const DenseTikhonov<double> ds(sq);
    const auto t = morozov_select(ds.spectral(b), 0.1, ds.norm() * ds.norm(), reg);
    CHECK(std::abs(t.residual - 0.1 * b.norm()) <= 0.001 * b.norm());
  }

  SUBCASE("saturation below the floor") {
    const auto t = morozov_select(spec, floor / 2, scale2, reg);
    CHECK(t.saturated);
    CHECK(t.eta == doctest::Approx(reg.eta_min * scale2));
  }

  SUBCASE("delta near one") {
    const auto t = morozov_select(spec, 0.999, scale2, reg);
    CHECK(t.norm <= 0.1 * dense.solve(b, 1e-6).norm());
    CHECK(t.eta > scale2);
  }

  SUBCASE("zero right-hand side") {
    const auto z = dense.spectral(Eigen::VectorXd::Zero(20));
    CHECK_THROWS_AS(morozov_select(z, 0.1, scale2, reg), Error);
  }
}

TEST_CASE("time indicator") {
  std::mt19937_64 rng(31);
  const auto v = testing::random_block(3, 3, 20, rng, 1e-7);
  const NearFieldOperatorTime op(v);
  RegularizationConfig reg;
  reg.delta = 0.2;

  SUBCASE("single pattern per point is the plain reciprocal norm") {
    const auto lib = random_library(v, 1, 4, rng);
    const auto res = tlsm_map(op, lib, reg);
    REQUIRE(res.records.size() == 4);
    for (std::size_t s = 0; s < 4; ++s)
      CHECK(res.map.values[s] == doctest::Approx(1.0 / res.records[s].norm).epsilon(1e-14));
    CHECK(!res.map.degenerate);
  }

  SUBCASE("minimum over polarizations") {
    const auto lib = random_library(v, 3, 2, rng);
    const auto res = tlsm_map(op, lib, reg);
    for (std::size_t s = 0; s < 2; ++s) {
      double best = 1e300;
      for (std::size_t n = 0; n < 3; ++n) best = std::min(best, res.records[s * 3 + n].norm);
      CHECK(res.map.values[s] == doctest::Approx(1.0 / best).epsilon(1e-14));
      CHECK(res.records[s * 3 + res.map.best_n[s]].norm == best);
    }
  }

  SUBCASE("dense and projected agree at full dimension") {
    const auto lib = random_library(v, 2, 3, rng);
    RegularizationConfig d = reg, p = reg;
    d.mode = SolverMode::dense_svd;
    p.mode = SolverMode::projected;
    p.projection_cap = op.cols();
    const auto a = tlsm_map(op, lib, d), b = tlsm_map(op, lib, p);
    // The projected path estimates the norm by power iteration; the range
    // endpoints then differ a little but the solution does not.
    for (std::size_t s = 0; s < 3; ++s)
      CHECK(a.map.values[s] == doctest::Approx(b.map.values[s]).epsilon(1e-5));
  }

  SUBCASE("zero data gives a degenerate map") {
    auto zero = v;
    std::fill(zero.values.begin(), zero.values.end(), 0.0);
    const NearFieldOperatorTime zop(zero);
    const auto res = tlsm_map(zop, random_library(v, 2, 3, rng), reg);
    CHECK(res.map.degenerate);
    CHECK(testing::max_abs(res.map.values) == 0.0);
  }

  SUBCASE("zero pattern contributes nothing") {
    auto lib = random_library(v, 1, 3, rng);
    const std::size_t len = lib.n_m() * lib.n_t();
    std::fill(lib.base.begin() + len, lib.base.begin() + 2 * len, 0.0);
    const auto res = tlsm_map(op, lib, reg);
    CHECK(res.map.values[1] == 0.0);
    CHECK(std::isinf(res.records[1].norm));
    CHECK(res.map.values[0] > 0.0);
  }

  SUBCASE("deterministic") {
    const auto lib = random_library(v, 2, 5, rng);
    const auto a = tlsm_map(op, lib, reg), b = tlsm_map(op, lib, reg);
    CHECK(a.map.values == b.map.values);
  }

  SUBCASE("scaling laws") {
    const auto lib = random_library(v, 2, 4, rng);
    const auto base = tlsm_map(op, lib, reg);
    const double c = 7.5;
    auto scaled = v;
    for (auto& x : scaled.values) x *= c;
    const auto data = tlsm_map(NearFieldOperatorTime(scaled), lib, reg);
    auto lib_c = lib;
    for (auto& x : lib_c.base) x *= c;
    const auto rhs = tlsm_map(op, lib_c, reg);
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(data.map.values[s] == doctest::Approx(c * base.map.values[s]).epsilon(1e-8));
      CHECK(rhs.map.values[s] == doctest::Approx(base.map.values[s] / c).epsilon(1e-8));
    }
    // Fixed eta: the solution is linear in the right-hand side.
    const Eigen::MatrixXd a = op.dense();
    const DenseTikhonov<double> dense(a);
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(lib.base.data(), op.rows());
    CHECK((dense.solve(c * b, 0.1) - c * dense.solve(b, 0.1)).norm() <=
          1e-12 * c * dense.solve(b, 0.1).norm());
  }

  SUBCASE("metadata mismatch") {
    auto lib = random_library(v, 1, 2, rng);
    lib.time_grid.dt *= 2.0;
    CHECK_THROWS_AS(tlsm_map(op, lib, reg), Error);
  }
}

TEST_CASE("multifrequency indicator") {
  std::mt19937_64 rng(37);
  const auto v = testing::random_block(3, 3, 64, rng, 1e-7);
  const auto spec = dataops::spectra(v, 0.1, 1e6, 3e6, 5);
  const NearFieldOperatorFreq op(spec, v.array);
  auto tlib = random_library(v, 2, 3, rng);
  const auto lib = triallib::build_freq_library(tlib, 1e6, 3e6, 5, 0.1);
  RegularizationConfig reg;
  reg.delta = 0.2;

  CHECK(op.matrix().rows() == 15);
  CHECK(op.matrix().cols() == 15);

  SUBCASE("one eta across frequencies") {
    const auto res = lsm_map(op, lib, reg);
    const double rw = std::sqrt(op.row_weight());
    const double sc = std::sqrt(op.row_weight() / op.col_weight());
    const Eigen::MatrixXcd full = sc * op.matrix();
    const DenseTikhonov<std::complex<double>> dense(full);
    for (std::size_t col = 0; col < 6; ++col) {
      const auto& rec = res.records[col];
      const Eigen::VectorXcd b = rw * lib.phi_hat.col(static_cast<Eigen::Index>(col));
      const Eigen::VectorXcd x = dense.solve(b, rec.eta);
      CHECK(x.norm() == doctest::Approx(rec.norm).epsilon(1e-8));
      CHECK((full * x - b).norm() == doctest::Approx(reg.delta * b.norm()).epsilon(1e-2));
    }
  }

  SUBCASE("zero spectra") {
    auto z = spec;
    std::fill(z.values.begin(), z.values.end(), std::complex<double>(0.0));
    const auto res = lsm_map(NearFieldOperatorFreq(z, v.array), lib, reg);
    CHECK(res.map.degenerate);
  }

  SUBCASE("band mismatch") {
    const auto other = triallib::build_freq_library(tlib, 1e6, 2.5e6, 5, 0.1);
    CHECK_THROWS_AS(lsm_map(op, other, reg), Error);
  }
}

TEST_CASE("map files") {
  IndicatorMap map;
  map.grid = {0.01, 0.02, 0.003, 0.006, 3, 2};
  map.domain = MapDomain::frequency;
  map.values = {0.1, 0.5, 0.25, 0.0, 1.5, 0.75};
  map.config_hash = 0xfeedULL;
  const auto dir = std::filesystem::temp_directory_path() / "tlsm_inversion_test";
  std::filesystem::create_directories(dir);
  write_map(dir / "m.map", map);
  const auto back = read_map(dir / "m.map");
  CHECK(back.values == map.values);
  CHECK(back.grid == map.grid);
  CHECK(back.domain == MapDomain::frequency);
  CHECK(back.config_hash == 0xfeedULL);
  CHECK(map.argmax() == 4);
  CHECK(map.normalized()[4] == 1.0);
  write_map_csv(dir / "m.csv", map);
  CHECK(std::filesystem::file_size(dir / "m.csv") > 0);
  std::filesystem::remove_all(dir);
}
