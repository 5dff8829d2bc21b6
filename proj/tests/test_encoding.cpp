#include "drums/encoding.hpp"
#include "drums/fft.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace drums;

namespace {

// Smooth random maps normalised to unit sum of squares on every pixel.
SensitivityMaps smooth_maps(std::size_t Q, std::size_t ny, std::size_t nx, std::uint64_t seed,
                            bool normalise = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SensitivityMaps s{CArray({Q, ny, nx}), MaskArray({ny, nx}, 1)};
  for (std::size_t q = 0; q < Q; ++q) {
    const double cy = u(rng) * ny, cxx = u(rng) * nx, ph = u(rng) * 3, sl = u(rng) * 0.2;
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cxx) * (x - cxx)) / (ny * nx);
        s.maps(q, y, x) = std::polar(std::exp(-d2), ph + sl * x);
      }
  }
  if (normalise)
    for (std::size_t i = 0; i < ny * nx; ++i) {
      double ss = 0;
      for (std::size_t q = 0; q < Q; ++q)
        ss += std::norm(s.maps[q * ny * nx + i]);
      for (std::size_t q = 0; q < Q; ++q)
        s.maps[q * ny * nx + i] /= std::sqrt(ss);
    }
  return s;
}

SamplingMask undersampled(std::size_t ny, std::size_t nx, int R, std::size_t acs = 4) {
  MaskOptions o;
  o.ny = ny;
  o.nx = nx;
  o.acceleration = R;
  o.acs_lines = acs;
  return make_mask(o);
}

} // namespace

TEST_CASE("fft2c of a centred delta is constant 1/N") {
  for (std::size_t n : {8, 9}) {
    CArray d({n, n});
    d(n / 2, n / 2) = 1.0;
    const auto k = fft2c(d);
    for (auto v : k.values())
      CHECK(std::abs(v - cx(1.0 / n, 0.0)) < 1e-14);
  }
}

TEST_CASE("fft2c matches a direct centred DFT for even and odd sizes") {
  for (auto [ny, nx] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 5}, {7, 9}}) {
    const auto x = test::random_complex({ny, nx}, ny * 31 + nx);
    const auto want = test::naive_dft2c(x.values(), ny, nx);
    CHECK(test::max_abs_diff(fft2c(x).values(), want) < 1e-12);
    const auto want_inv = test::naive_dft2c(x.values(), ny, nx, true);
    CHECK(test::max_abs_diff(ifft2c(x).values(), want_inv) < 1e-12);
  }
}

TEST_CASE("fft2c round trip and Parseval") {
  const auto x = test::random_complex({3, 24, 20}, 5);
  const auto k = fft2c(x);
  CHECK(test::rel_diff(ifft2c(k).values(), x.values()) < 1e-12);
  CHECK(std::abs(norm(k.values()) / norm(x.values()) - 1.0) < 1e-12);
}

TEST_CASE("mask: every-R lines through the centre plus contiguous ACS") {
  const auto m = undersampled(64, 32, 4, 24);
  CHECK(m.planes() == 1);
  CHECK_FALSE(m.per_contrast);
  std::size_t lines = 0;
  for (std::size_t ky = 0; ky < 64; ++ky) {
    const bool on = m.grid(0, ky, 0) != 0;
    for (std::size_t kx = 0; kx < 32; ++kx)
      CHECK((m.grid(0, ky, kx) != 0) == on);
    const bool acs = ky >= 20 && ky < 44;
    const bool grid = (ky >= 32 ? ky - 32 : 32 - ky) % 4 == 0;
    CHECK(on == (acs || grid));
    lines += on;
  }
  CHECK(m.sampled_fraction() == doctest::Approx(lines / 64.0));
  // 16 grid lines, 24 ACS lines, 6 of the grid lines fall inside the ACS band.
  CHECK(lines == 34);
}

TEST_CASE("mask: sampled fraction near 1/R away from the ACS contribution") {
  for (int R : {4, 8, 10}) {
    const auto m = undersampled(192, 8, R, 24);
    const double grid_only = 1.0 / R;
    const double acs_extra = 24.0 / 192.0;
    CHECK(m.sampled_fraction() >= grid_only - 1.0 / 192);
    CHECK(m.sampled_fraction() <= grid_only + acs_extra + 1.0 / 192);
  }
}

TEST_CASE("mask: partial Fourier zeroes the leading ky lines only") {
  MaskOptions o;
  o.ny = 64;
  o.nx = 4;
  o.acceleration = 2;
  o.acs_lines = 8;
  o.partial_fourier = 6.0 / 8.0;
  const auto m = make_mask(o);
  for (std::size_t ky = 0; ky < 16; ++ky)
    CHECK(m.grid(0, ky, 0) == 0);
  for (std::size_t ky = 28; ky < 36; ++ky)
    CHECK(m.grid(0, ky, 0) == 1);
  o.partial_fourier = 0.5;
  CHECK_THROWS_AS(make_mask(o), ConfigError);
}

TEST_CASE("mask: time-varying option differs per contrast and is seeded") {
  MaskOptions o;
  o.ny = 64;
  o.nx = 8;
  o.acceleration = 4;
  o.acs_lines = 8;
  o.time_varying = true;
  o.contrasts = 3;
  o.seed = 9;
  const auto a = make_mask(o), b = make_mask(o);
  CHECK(a.grid == b.grid);
  CHECK(a.per_contrast);
  CHECK(a.planes() == 3);
  CHECK_FALSE(std::equal(a.plane(0).begin(), a.plane(0).end(), a.plane(1).begin()));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t ky = 28; ky < 36; ++ky)
      CHECK(a.grid(t, ky, 0) == 1);
}

TEST_CASE("forward: zero in, zero out; single unit coil full mask is fft2c") {
  const auto maps = unit_maps(16, 12);
  const auto full = full_mask(16, 12);
  CArray zero({2, 16, 12});
  const auto y0 = sense_forward(zero, maps, full);
  for (auto v : y0.values())
    CHECK(v == cx{});
  const auto x = test::random_complex({2, 16, 12}, 1);
  const auto y = sense_forward(x, maps, full);
  CHECK(test::max_abs_diff(y.values(), fft2c(x).values()) < 1e-13);
  CHECK(test::rel_diff(sense_adjoint(y, maps, full).values(), x.values()) < 1e-12);
}

TEST_CASE("adjoint: zero in, zero out") {
  const auto maps = smooth_maps(3, 8, 8, 2);
  CArray zero({2, 3, 8, 8});
  const auto x0 = sense_adjoint(zero, maps, full_mask(8, 8));
  for (auto v : x0.values())
    CHECK(v == cx{});
}

TEST_CASE("adjoint identity, 4 coils, R = 4") {
  const auto maps = smooth_maps(4, 32, 24, 3);
  const auto mask = undersampled(32, 24, 4);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = test::random_complex({3, 32, 24}, 100 + s);
    const auto y = test::random_complex({3, 4, 32, 24}, 200 + s);
    const auto ex = sense_forward(x, maps, mask);
    const cx lhs = dot(ex.values(), y.values());
    const cx rhs = dot(x.values(), sense_adjoint(y, maps, mask).values());
    CHECK(std::abs(lhs - rhs) <= 1e-6 * norm(ex.values()) * norm(y.values()));
  }
}

TEST_CASE("adjoint equals the conjugate transpose of the dense operator") {
  const std::size_t ny = 6, nx = 5, Q = 2, P = ny * nx;
  const auto maps = smooth_maps(Q, ny, nx, 4);
  const auto mask = undersampled(ny, nx, 2, 2);
  Eigen::MatrixXcd E(Q * P, P), A(P, Q * P);
  for (std::size_t j = 0; j < P; ++j) {
    CArray e({1, ny, nx});
    e[j] = 1.0;
    const auto col = sense_forward(e, maps, mask);
    for (std::size_t i = 0; i < Q * P; ++i)
      E(i, j) = col[i];
  }
  for (std::size_t j = 0; j < Q * P; ++j) {
    CArray e({1, Q, ny, nx});
    e[j] = 1.0;
    const auto col = sense_adjoint(e, maps, mask);
    for (std::size_t i = 0; i < P; ++i)
      A(i, j) = col[i];
  }
  CHECK((A - E.adjoint()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("normal operator equals adjoint of forward") {
  const auto maps = smooth_maps(3, 16, 16, 5);
  MaskOptions o;
  o.ny = o.nx = 16;
  o.acceleration = 3;
  o.acs_lines = 4;
  o.time_varying = true;
  o.contrasts = 2;
  const auto mask = make_mask(o);
  const auto x = test::random_complex({2, 16, 16}, 6);
  const auto a = sense_normal(x, maps, mask);
  const auto b = sense_adjoint(sense_forward(x, maps, mask), maps, mask);
  CHECK(test::max_abs_diff(a.values(), b.values()) < 1e-12);
}

TEST_CASE("operators reject incongruent inputs") {
  const auto maps = smooth_maps(2, 8, 8, 1);
  CHECK_THROWS_AS(sense_forward(CArray({1, 8, 6}), maps, full_mask(8, 8)), DataError);
  CHECK_THROWS_AS(sense_forward(CArray({1, 8, 8}), maps, full_mask(8, 6)), DataError);
  CHECK_THROWS_AS(sense_adjoint(CArray({1, 3, 8, 8}), maps, full_mask(8, 8)), DataError);
  MaskOptions o;
  o.ny = o.nx = 8;
  o.acs_lines = 2;
  o.time_varying = true;
  o.contrasts = 3;
  CHECK_THROWS_AS(sense_forward(CArray({2, 8, 8}), maps, make_mask(o)), DataError);
}

TEST_CASE("max eigenvalue: normalised maps with full sampling give 1") {
  const auto est = max_eigenvalue(smooth_maps(4, 16, 16, 7), full_mask(16, 16));
  CHECK(est.value == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_FALSE(est.zero_operator);
}

TEST_CASE("max eigenvalue: empty mask is the zero operator") {
  SamplingMask m = full_mask(8, 8);
  m.grid.fill(0);
  const auto est = max_eigenvalue(smooth_maps(2, 8, 8, 1), m);
  CHECK(est.value == 0.0);
  CHECK(est.zero_operator);
}

TEST_CASE("max eigenvalue within 1% of a dense eigensolve, R = 4, 16 x 16") {
  const std::size_t n = 16, P = n * n;
  const auto maps = smooth_maps(3, n, n, 8);
  const auto mask = undersampled(n, n, 4, 4);
  Eigen::MatrixXcd N(P, P);
  for (std::size_t j = 0; j < P; ++j) {
    CArray e({1, n, n});
    e[j] = 1.0;
    const auto col = sense_normal(e, maps, mask);
    for (std::size_t i = 0; i < P; ++i)
      N(i, j) = col[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(N, Eigen::EigenvaluesOnly);
  const double dense = es.eigenvalues().maxCoeff();
  const auto est = max_eigenvalue(maps, mask);
  CHECK(std::abs(est.value - dense) <= 0.01 * dense);
  for (std::size_t i = 1; i < est.history.size(); ++i)
    CHECK(est.history[i] >= est.history[i - 1] - 1e-12 * dense);
}

TEST_CASE("max eigenvalue converges to the dense value for unnormalised maps") {
  // Clustered top eigenvalues slow power iteration down; the estimate stays below
  // the true value and approaches it with more iterations.
  const std::size_t n = 16, P = n * n;
  const auto maps = smooth_maps(3, n, n, 8, false);
  const auto mask = undersampled(n, n, 4, 4);
  Eigen::MatrixXcd N(P, P);
  for (std::size_t j = 0; j < P; ++j) {
    CArray e({1, n, n});
    e[j] = 1.0;
    const auto col = sense_normal(e, maps, mask);
    for (std::size_t i = 0; i < P; ++i)
      N(i, j) = col[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(N, Eigen::EigenvaluesOnly);
  const double dense = es.eigenvalues().maxCoeff();
  const auto e30 = max_eigenvalue(maps, mask, 30);
  const auto e1000 = max_eigenvalue(maps, mask, 1000);
  CHECK(e30.value <= dense * (1 + 1e-12));
  CHECK(e1000.value >= e30.value);
  CHECK(std::abs(e1000.value - dense) <= 1e-3 * dense);
}

TEST_CASE("max eigenvalue stays at or below 1 for normalised maps under undersampling") {
  for (int R : {2, 4, 8}) {
    const auto est = max_eigenvalue(smooth_maps(4, 32, 32, R), undersampled(32, 32, R));
    CHECK(est.value <= 1.0 + 1e-3);
  }
}
