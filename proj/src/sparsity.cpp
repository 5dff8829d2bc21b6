#include "drums/sparsity.hpp"

#include <array>
#include <cmath>

namespace drums {

namespace {

const std::array<double, 4> &lowpass() {
  static const std::array<double, 4> h = [] {
    const double s3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
    return std::array<double, 4>{(1 + s3) / d, (3 + s3) / d, (3 - s3) / d, (1 - s3) / d};
  }();
  return h;
}

const std::array<double, 4> &highpass() {
  static const std::array<double, 4> g = [] {
    const auto &h = lowpass();
    return std::array<double, 4>{h[3], -h[2], h[1], -h[0]};
  }();
  return g;
}

// One periodized analysis step on n samples read with the given stride.
void analyze(cx *v, std::size_t n, std::size_t stride, std::vector<cx> &tmp) {
  const auto &h = lowpass();
  const auto &g = highpass();
  const std::size_t half = n / 2;
  tmp.assign(n, cx{});
  for (std::size_t i = 0; i < half; ++i) {
    cx a{}, d{};
    for (std::size_t k = 0; k < 4; ++k) {
      const cx x = v[((2 * i + k) % n) * stride];
      a += h[k] * x;
      d += g[k] * x;
    }
    tmp[i] = a;
    tmp[half + i] = d;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i * stride] = tmp[i];
}

void synthesize(cx *v, std::size_t n, std::size_t stride, std::vector<cx> &tmp) {
  const auto &h = lowpass();
  const auto &g = highpass();
  const std::size_t half = n / 2;
  tmp.assign(n, cx{});
  for (std::size_t i = 0; i < half; ++i) {
    const cx a = v[i * stride], d = v[(half + i) * stride];
    for (std::size_t k = 0; k < 4; ++k)
      tmp[(2 * i + k) % n] += h[k] * a + g[k] * d;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i * stride] = tmp[i];
}

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

// Half-sample symmetric extension index.
std::size_t mirror(std::size_t i, std::size_t n) {
  const std::size_t period = 2 * n;
  i %= period;
  return i < n ? i : period - 1 - i;
}

} // namespace

WaveletCoeffs dwt2(const CArray &img, int levels) {
  if (img.rank() != 2)
    throw DataError("dwt2: expected a 2-D image");
  const std::size_t ny = img.dim(0), nx = img.dim(1);
  if (levels < 0 || (levels > 0 && (std::size_t{1} << levels) > std::min(ny, nx)))
    throw ConfigError("dwt2: " + std::to_string(levels) + " levels exceed log2 of image size " +
                      shape_string(img.shape()));
  const std::size_t block = std::size_t{1} << levels;
  const std::size_t py = round_up(ny, block), px = round_up(nx, block);

  WaveletCoeffs c;
  c.levels = levels;
  c.ny = ny;
  c.nx = nx;
  c.data = CArray({py, px});
  for (std::size_t y = 0; y < py; ++y)
    for (std::size_t x = 0; x < px; ++x)
      c.data(y, x) = img(mirror(y, ny), mirror(x, nx));

  std::vector<cx> tmp;
  std::size_t h = py, w = px;
  for (int l = 0; l < levels; ++l) {
    for (std::size_t y = 0; y < h; ++y)
      analyze(&c.data(y, 0), w, 1, tmp);
    for (std::size_t x = 0; x < w; ++x)
      analyze(&c.data(0, x), h, px, tmp);
    h /= 2;
    w /= 2;
  }
  return c;
}

CArray idwt2(const WaveletCoeffs &coeffs) {
  CArray work = coeffs.data;
  const std::size_t py = work.dim(0), px = work.dim(1);
  std::vector<cx> tmp;
  for (int l = coeffs.levels - 1; l >= 0; --l) {
    const std::size_t h = py >> l, w = px >> l;
    for (std::size_t x = 0; x < w; ++x)
      synthesize(&work(0, x), h, px, tmp);
    for (std::size_t y = 0; y < h; ++y)
      synthesize(&work(y, 0), w, 1, tmp);
  }
  if (py == coeffs.ny && px == coeffs.nx)
    return work;
  CArray out({coeffs.ny, coeffs.nx});
  for (std::size_t y = 0; y < coeffs.ny; ++y)
    for (std::size_t x = 0; x < coeffs.nx; ++x)
      out(y, x) = work(y, x);
  return out;
}

cx shrink(cx w, double t) {
  const double m = std::abs(w);
  if (m <= t || m == 0.0)
    return cx{};
  return w * ((m - t) / m);
}

void soft_threshold_inplace(WaveletCoeffs &coeffs, double t) {
  if (t < 0.0)
    throw ConfigError("soft_threshold: negative threshold");
  if (t == 0.0)
    return;
  const std::size_t py = coeffs.data.dim(0), px = coeffs.data.dim(1);
  for (std::size_t y = 0; y < py; ++y)
    for (std::size_t x = 0; x < px; ++x)
      if (!coeffs.in_approx(y, x))
        coeffs.data(y, x) = shrink(coeffs.data(y, x), t);
}

WaveletCoeffs soft_threshold(WaveletCoeffs coeffs, double t) {
  soft_threshold_inplace(coeffs, t);
  return coeffs;
}

double detail_l1(const WaveletCoeffs &coeffs) {
  double acc = 0.0;
  const std::size_t py = coeffs.data.dim(0), px = coeffs.data.dim(1);
  for (std::size_t y = 0; y < py; ++y)
    for (std::size_t x = 0; x < px; ++x)
      if (!coeffs.in_approx(y, x))
        acc += std::abs(coeffs.data(y, x));
  return acc;
}

} // namespace drums
