#include "drums/sparsity.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace drums;

namespace {

double l2(std::span<const cx> v) {
  double s = 0;
  for (auto z : v)
    s += std::norm(z);
  return std::sqrt(s);
}

} // namespace

TEST_CASE("constant image: LL holds c * 2^J and every detail is zero") {
  const cx c(0.7, -0.3);
  for (int J : {1, 2, 4}) {
    CArray img({32, 48}, c);
    const auto w = dwt2(img, J);
    for (std::size_t y = 0; y < w.data.dim(0); ++y)
      for (std::size_t x = 0; x < w.data.dim(1); ++x) {
        if (w.in_approx(y, x))
          CHECK(std::abs(w.data(y, x) - c * std::pow(2.0, J)) < 1e-12);
        else
          CHECK(std::abs(w.data(y, x)) < 1e-12);
      }
  }
}

TEST_CASE("perfect reconstruction and orthogonality on dyadic grids") {
  for (auto [ny, nx, J] : {std::tuple{32, 32, 4}, {64, 16, 3}, {16, 16, 4}, {8, 8, 0}}) {
    const auto x = test::random_complex({std::size_t(ny), std::size_t(nx)}, ny + nx + J);
    const auto w = dwt2(x, J);
    CHECK(w.data.size() == x.size());
    CHECK(test::rel_diff(idwt2(w).values(), x.values()) < 1e-10);
    CHECK(l2(w.data.values()) == doctest::Approx(l2(x.values())).epsilon(1e-10));
  }
}

TEST_CASE("non-dyadic extents are padded and cropped back exactly") {
  const auto x = test::random_complex({45, 37}, 11);
  const auto w = dwt2(x, 4);
  CHECK(w.ny == 45);
  CHECK(w.nx == 37);
  CHECK(w.data.dim(0) % 16 == 0);
  CHECK(w.data.dim(1) % 16 == 0);
  const auto back = idwt2(w);
  REQUIRE(back.shape() == x.shape());
  CHECK(test::rel_diff(back.values(), x.values()) < 1e-10);
}

TEST_CASE("too many levels is a configuration error") {
  CHECK_THROWS_AS(dwt2(CArray({8, 8}), 4), ConfigError);
  CHECK_THROWS_AS(dwt2(CArray({8, 8}), -1), ConfigError);
  CHECK_THROWS_AS(dwt2(CArray({2, 8, 8}), 1), DataError);
}

TEST_CASE("scalar shrinkage") {
  CHECK(shrink(cx(3, 4), 5) == cx{});
  CHECK(std::abs(shrink(cx(3, 4), 2.5) - cx(1.5, 2.0)) < 1e-15);
  CHECK(shrink(cx(3, 4), 0) == cx(3, 4));
  CHECK(shrink(cx{}, 1) == cx{});
}

TEST_CASE("shrinkage matches a brute-force prox on a grid") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uw(-5, 5), ut(0, 3);
  const double h = 1e-4;
  for (int trial = 0; trial < 100; ++trial) {
    const double w = uw(rng), t = ut(rng);
    double best = 0, best_f = INFINITY;
    for (double z = -6; z <= 6; z += h) {
      const double f = 0.5 * (z - w) * (z - w) + t * std::abs(z);
      if (f < best_f) {
        best_f = f;
        best = z;
      }
    }
    CHECK(std::abs(shrink(cx(w, 0), t).real() - best) <= h);
  }
}

TEST_CASE("thresholding leaves LL alone, never grows a coefficient and is nonexpansive") {
  const auto a = dwt2(test::random_complex({32, 32}, 21), 3);
  const auto b = dwt2(test::random_complex({32, 32}, 22), 3);
  CHECK(soft_threshold(a, 0.0).data == a.data);
  for (double t : {0.1, 0.5, 2.0}) {
    const auto sa = soft_threshold(a, t), sb = soft_threshold(b, t);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        CHECK(std::abs(sa.data(y, x)) <= std::abs(a.data(y, x)));
        if (a.in_approx(y, x))
          CHECK(sa.data(y, x) == a.data(y, x));
      }
    std::vector<cx> d1(1024), d2(1024);
    for (std::size_t i = 0; i < 1024; ++i) {
      d1[i] = sa.data[i] - sb.data[i];
      d2[i] = a.data[i] - b.data[i];
    }
    CHECK(l2(d1) <= l2(d2) + 1e-12);
  }
  CHECK_THROWS_AS(soft_threshold(a, -1.0), ConfigError);
}

TEST_CASE("detail L1 excludes the approximation band") {
  CArray img({16, 16}, cx(2.0, 0.0));
  CHECK(detail_l1(dwt2(img, 2)) < 1e-12);
  auto w = dwt2(img, 2);
  w.data(15, 15) = cx(0, 3);
  CHECK(detail_l1(w) == doctest::Approx(3.0));
}
