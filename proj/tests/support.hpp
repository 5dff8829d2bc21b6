#pragma once

// Test-only helpers: seeded random inputs and slow reference implementations
// that share no code with the library.

#include "drums/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace drums::test {

inline CArray random_complex(const Shape &shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  CArray a(shape);
  for (auto &v : a.values())
    v = cx(g(rng), g(rng));
  return a;
}

inline RArray random_real(const Shape &shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  RArray a(shape);
  for (auto &v : a.values())
    v = u(rng);
  return a;
}

inline double max_abs_diff(std::span<const cx> a, std::span<const cx> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(std::span<const cx> a, std::span<const cx> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

/// Direct centered DFT: X[k] = N^-1/2 sum_n x[n] exp(-+2 pi i (k - c)(n - c) / N), c = floor(N/2).
inline std::vector<cx> naive_dft2c(std::span<const cx> x, std::size_t ny, std::size_t nx,
                                   bool inverse = false) {
  const double sgn = inverse ? 1.0 : -1.0;
  const double cy = std::floor(ny / 2.0), cxo = std::floor(nx / 2.0);
  std::vector<cx> out(ny * nx);
  for (std::size_t ky = 0; ky < ny; ++ky)
    for (std::size_t kx = 0; kx < nx; ++kx) {
      cx acc{};
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t xx = 0; xx < nx; ++xx) {
          const double ph = 2.0 * std::numbers::pi *
                            ((ky - cy) * (y - cy) / ny + (kx - cxo) * (xx - cxo) / nx);
          acc += x[y * nx + xx] * std::polar(1.0, sgn * ph);
        }
      out[ky * nx + kx] = acc / std::sqrt(static_cast<double>(ny * nx));
    }
  return out;
}

/// Singular values via the eigenvalues of M^H M (independent of any SVD routine).
inline std::vector<double> gram_singular_values(const Eigen::MatrixXcd &m) {
  const Eigen::MatrixXcd g = m.adjoint() * m;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g);
  std::vector<double> s;
  for (Eigen::Index i = es.eigenvalues().size() - 1; i >= 0; --i)
    s.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i))));
  return s;
}

/// Casorati matrix (pixels x contrasts) of a (T, Ny, Nx) stack.
inline Eigen::MatrixXcd casorati(const CArray &stack) {
  const std::size_t T = stack.dim(0), P = stack.dim(1) * stack.dim(2);
  Eigen::MatrixXcd m(P, T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p)
      m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)) = stack[t * P + p];
  return m;
}

/// Zero-padded "same" 3x3 (or 1x1) cross-correlation on (C, H, W) floats, in double.
inline std::vector<double> naive_conv(const std::vector<float> &x, std::size_t C, std::size_t H,
                                      std::size_t W, const std::vector<float> &k, std::size_t O,
                                      std::size_t K, const std::vector<float> *bias) {
  std::vector<double> y(O * H * W, 0.0);
  const long r = static_cast<long>(K / 2);
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double acc = bias ? (*bias)[o] : 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < K; ++u)
            for (std::size_t v = 0; v < K; ++v) {
              const long yy = static_cast<long>(i) + static_cast<long>(u) - r;
              const long xx = static_cast<long>(j) + static_cast<long>(v) - r;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W))
                continue;
              acc += static_cast<double>(k[((o * C + c) * K + u) * K + v]) *
                     x[(c * H + yy) * W + xx];
            }
        y[(o * H + i) * W + j] = acc;
      }
  return y;
}

/// Sliding-window SSIM written the slow way: explicit loops per window.
inline double naive_ssim(const RArray &a, const RArray &b, std::size_t w) {
  const std::size_t H = a.dim(0), W = a.dim(1);
  double lo = a[0], hi = a[0];
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min({lo, a[i], b[i]});
    hi = std::max({hi, a[i], b[i]});
  }
  const double D = hi - lo, c1 = std::pow(0.01 * D, 2), c2 = std::pow(0.03 * D, 2);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y + w <= H; ++y)
    for (std::size_t x = 0; x + w <= W; ++x) {
      double ma = 0, mb = 0;
      for (std::size_t u = 0; u < w; ++u)
        for (std::size_t v = 0; v < w; ++v) {
          ma += a(y + u, x + v);
          mb += b(y + u, x + v);
        }
      ma /= w * w;
      mb /= w * w;
      double va = 0, vb = 0, cab = 0;
      for (std::size_t u = 0; u < w; ++u)
        for (std::size_t v = 0; v < w; ++v) {
          const double da = a(y + u, x + v) - ma, db = b(y + u, x + v) - mb;
          va += da * da;
          vb += db * db;
          cab += da * db;
        }
      va /= w * w;
      vb /= w * w;
      cab /= w * w;
      total += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / n;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("drums_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

} // namespace drums::test
