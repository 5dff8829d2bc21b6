#include "drums/fitting.hpp"
#include "drums/phantom.hpp"

#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

using namespace drums;

namespace {

std::vector<double> ir_series(double a, double b, double t1s, const std::vector<double> &ti) {
  std::vector<double> s;
  for (double t : ti)
    s.push_back(std::abs(a - b * std::exp(-t / t1s)));
  return s;
}

/// Exhaustive oracle: T1* on a 0.1 ms grid, every polarity pattern, (A, B) by
/// linear least squares. Returns T1 = (B/A - 1) T1* of the best fit.
double grid_t1(const std::vector<double> &mag, const std::vector<double> &ti) {
  const std::size_t n = mag.size();
  double best = INFINITY, best_t1 = 0;
  for (double t1s = 50.0; t1s <= 3000.0; t1s += 0.1) {
    Eigen::MatrixXd M(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      M(i, 0) = 1.0;
      M(i, 1) = -std::exp(-ti[i] / t1s);
    }
    for (std::size_t k = 0; k <= n; ++k) {
      Eigen::VectorXd s(n);
      for (std::size_t i = 0; i < n; ++i)
        s(i) = i < k ? -mag[i] : mag[i];
      const Eigen::Vector2d ab = M.colPivHouseholderQr().solve(s);
      const double r = (M * ab - s).squaredNorm();
      if (r < best && ab(0) > 0) {
        best = r;
        best_t1 = (ab(1) / ab(0) - 1.0) * t1s;
      }
    }
  }
  return best_t1;
}

} // namespace

TEST_CASE("noiseless inversion recovery: T1 = (B/A - 1) T1*") {
  const auto ti = default_timing(Modality::T1);
  REQUIRE(ti.size() == 9);
  const auto f = fit_t1_voxel(ir_series(1, 2, 1000, ti), ti);
  CHECK(f.value == doctest::Approx(1000).epsilon(0.001));
  CHECK(std::abs(f.value - 1000) < 1.0);
  CHECK(f.flags == kFitOk);
  CHECK(f.residual <= 1e-6);

  const auto g = fit_t1_voxel(ir_series(1, 1.8, 800, ti), ti);
  CHECK(std::abs(g.value - 640) < 1.0);
  CHECK(std::abs(g.t_star - 800) < 1.0);
  CHECK(std::abs(g.b / g.a - 1.8) < 1e-3);
}

TEST_CASE("noiseless round trips over a parameter sweep") {
  const auto ti = default_timing(Modality::T1);
  for (double a : {0.1, 0.5, 1.0})
    for (double ratio : {1.6, 1.9, 2.0})
      for (double t1s : {200.0, 600.0, 1200.0, 2000.0}) {
        const auto f = fit_t1_voxel(ir_series(a, ratio * a, t1s, ti), ti);
        const double truth = (ratio - 1) * t1s;
        CHECK(std::abs(f.value - truth) <= 1e-3 * truth);
        CHECK(f.residual <= 1e-6 * a);
      }
  const auto tp = default_timing(Modality::T2);
  for (double a : {0.1, 1.0})
    for (double t2 : {20.0, 45.0, 120.0, 240.0}) {
      std::vector<double> s;
      for (double t : tp)
        s.push_back(a * std::exp(-t / t2));
      const auto f = fit_t2_voxel(s, tp);
      CHECK(std::abs(f.value - t2) <= 1e-3 * t2);
      CHECK(f.a == doctest::Approx(a).epsilon(1e-6));
      CHECK(f.residual <= 1e-6);
    }
}

TEST_CASE("T1 is invariant to positive scaling of the series") {
  const auto ti = default_timing(Modality::T1);
  const auto s = ir_series(0.8, 1.5, 1100, ti);
  const double ref = fit_t1_voxel(s, ti).value;
  for (double alpha : {0.5, 2.0, 10.0}) {
    std::vector<double> scaled;
    for (double v : s)
      scaled.push_back(alpha * v);
    CHECK(std::abs(fit_t1_voxel(scaled, ti).value - ref) < 1.0);
  }
}

TEST_CASE("noisy magnitude series with a polarity flip at 260 ms") {
  const auto ti = default_timing(Modality::T1);
  // A - B exp(-260 / T1*) = 0 for B = 2A and T1* = 260 / ln 2.
  const double t1s = 260.0 / std::log(2.0), truth = t1s;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.01);
  std::vector<double> errors;
  for (int trial = 0; trial < 10; ++trial) {
    auto s = ir_series(1, 2, t1s, ti);
    for (auto &v : s)
      v = std::abs(v + g(rng));
    const double fit = fit_t1_voxel(s, ti).value;
    const double oracle = grid_t1(s, ti);
    CHECK(std::abs(fit - oracle) <= 0.5);
    errors.push_back(std::abs(fit - truth) / truth);
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[errors.size() / 2] < 0.03);
  CHECK(errors.back() < 0.06);
}

TEST_CASE("T2: the three-point example, the constant series and the clamp") {
  const std::vector<double> tp{0, 35, 55};
  const std::vector<double> s{1.0, std::exp(-35.0 / 50), std::exp(-55.0 / 50)};
  const auto f = fit_t2_voxel(s, tp);
  CHECK(std::abs(f.value - 50.0) < 0.1);
  CHECK(f.flags == kFitOk);

  const auto c = fit_t2_voxel(std::vector<double>{0.7, 0.7, 0.7}, tp);
  CHECK(c.value == kT2Upper);
  CHECK((c.flags & kFitAtBound) != 0);

  const auto z = fit_t2_voxel(std::vector<double>{0, 0, 0}, tp);
  CHECK((z.flags & kFitZeroSignal) != 0);
  CHECK(z.value == 0.0);
}

TEST_CASE("phantom round trips inside every compartment") {
  PhantomSpec spec;
  spec.ny = spec.nx = 64;
  for (Modality m : {Modality::T1, Modality::T2}) {
    const auto truth = generate_truth(spec, m);
    const auto map = fit_map(truth.images, truth.timing, m);
    for (const auto &name : truth.label_names) {
      const auto roi = truth.compartment(name);
      double worst = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < roi.size(); ++i)
        if (roi[i]) {
          ++n;
          worst = std::max(worst, std::abs(map.value[i] - truth.param[i]) / truth.param[i]);
          if (m == Modality::T2)
            CHECK(std::abs(map.value[i] - truth.param[i]) < 0.1);
        }
      CHECK(n > 0);
      INFO(to_string(m) << " " << name);
      CHECK(worst < 0.01);
    }
  }
}

TEST_CASE("map-level behaviour: uniform input, m0 range, errors") {
  const auto ti = default_timing(Modality::T1);
  const auto s = ir_series(0.6, 1.1, 900, ti);
  CArray stack({9, 4, 5});
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t p = 0; p < 20; ++p)
      stack[t * 20 + p] = std::polar(s[t], 0.3 * p);
  const auto map = fit_map(stack, ti, Modality::T1);
  for (std::size_t p = 0; p < 20; ++p) {
    CHECK(map.value[p] == map.value[0]);
    CHECK(map.m0[p] >= 0.0);
    CHECK(map.m0[p] <= 1.0);
  }
  CHECK(std::abs(map.value[0] - (1.1 / 0.6 - 1) * 900) < 1.0);
  CHECK(map.upper == kT1Upper);

  CHECK_THROWS_AS(fit_map(stack, {0, 35, 55}, Modality::T1), DataError);
  CHECK_THROWS_AS(fit_t2_voxel(std::vector<double>{1.0}, std::vector<double>{0.0}), DataError);
  CHECK_THROWS_AS(parse_modality("T3"), ConfigError);
}
