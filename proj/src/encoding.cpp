#include "drums/encoding.hpp"

#include "drums/fft.hpp"
#include "drums/log.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace drums {

double SamplingMask::sampled_fraction() const {
  std::size_t n = 0;
  for (auto v : grid.values())
    n += v;
  return static_cast<double>(n) / static_cast<double>(grid.size());
}

namespace {

std::pair<std::size_t, std::size_t> acs_band(std::size_t ny, std::size_t acs) {
  acs = std::min(acs, ny);
  const std::size_t lo = ny / 2 - std::min(ny / 2, acs / 2);
  return {lo, std::min(ny, lo + acs)};
}

void fill_line(std::span<unsigned char> plane, std::size_t nx, std::size_t ky) {
  std::fill_n(plane.begin() + static_cast<std::ptrdiff_t>(ky * nx), nx, 1);
}

void check_congruent(const SensitivityMaps &maps, const SamplingMask &mask, std::size_t ny,
                     std::size_t nx, std::size_t contrasts, const char *op) {
  if (maps.maps.rank() != 3 || maps.ny() != ny || maps.nx() != nx)
    throw DataError(std::string(op) + ": sensitivity maps " + shape_string(maps.maps.shape()) +
                    " do not match image grid");
  if (mask.grid.rank() != 3 || mask.ny() != ny || mask.nx() != nx)
    throw DataError(std::string(op) + ": mask " + shape_string(mask.grid.shape()) +
                    " does not match image grid");
  if (mask.per_contrast && mask.planes() != contrasts)
    throw DataError(std::string(op) + ": per-contrast mask has " +
                    std::to_string(mask.planes()) + " planes for " + std::to_string(contrasts) +
                    " contrasts");
}

} // namespace

SamplingMask make_mask(const MaskOptions &opt) {
  if (opt.ny == 0 || opt.nx == 0)
    throw ConfigError("mask: empty grid");
  if (opt.acceleration < 1)
    throw ConfigError("mask: acceleration must be >= 1");
  if (opt.partial_fourier <= 0.5 || opt.partial_fourier > 1.0)
    throw ConfigError("mask: partial Fourier fraction must be in (0.5, 1]");

  const std::size_t planes = opt.time_varying ? std::max<std::size_t>(opt.contrasts, 1) : 1;
  SamplingMask m;
  m.grid = MaskArray({planes, opt.ny, opt.nx}, 0);
  m.acceleration = opt.acceleration;
  m.acs_lines = opt.acs_lines;
  m.per_contrast = opt.time_varying;

  const auto [acs_lo, acs_hi] = acs_band(opt.ny, opt.acs_lines);
  const std::size_t pf_start = static_cast<std::size_t>(
      std::floor(static_cast<double>(opt.ny) * (1.0 - opt.partial_fourier)));
  const auto R = static_cast<std::size_t>(opt.acceleration);
  const std::size_t centre = opt.ny / 2;

  std::mt19937_64 rng(opt.seed);
  for (std::size_t p = 0; p < planes; ++p) {
    auto plane = m.grid.slab(p);
    if (opt.time_varying) {
      std::vector<std::size_t> outer;
      for (std::size_t ky = pf_start; ky < opt.ny; ++ky)
        if (ky < acs_lo || ky >= acs_hi)
          outer.push_back(ky);
      const std::size_t target = (opt.ny + R - 1) / R;
      const std::size_t have = acs_hi - acs_lo;
      const std::size_t want = std::min(outer.size(), target > have ? target - have : 0);
      std::shuffle(outer.begin(), outer.end(), rng);
      for (std::size_t i = 0; i < want; ++i)
        fill_line(plane, opt.nx, outer[i]);
    } else {
      for (std::size_t ky = pf_start; ky < opt.ny; ++ky) {
        const std::size_t d = ky >= centre ? ky - centre : centre - ky;
        if (d % R == 0)
          fill_line(plane, opt.nx, ky);
      }
    }
    for (std::size_t ky = acs_lo; ky < acs_hi; ++ky)
      fill_line(plane, opt.nx, ky);
  }
  return m;
}

SamplingMask full_mask(std::size_t ny, std::size_t nx, std::size_t acs_lines) {
  SamplingMask m;
  m.grid = MaskArray({1, ny, nx}, 1);
  m.acceleration = 1.0;
  m.acs_lines = acs_lines;
  return m;
}

SensitivityMaps unit_maps(std::size_t ny, std::size_t nx) {
  return {CArray({1, ny, nx}, cx{1.0, 0.0}), MaskArray({ny, nx}, 1)};
}

CArray sense_forward(const CArray &x, const SensitivityMaps &maps, const SamplingMask &mask) {
  if (x.rank() != 3)
    throw DataError("sense_forward: image stack must be (contrast, y, x)");
  const std::size_t nt = x.dim(0), ny = x.dim(1), nx = x.dim(2), nq = maps.coils();
  check_congruent(maps, mask, ny, nx, nt, "sense_forward");

  CArray y({nt, nq, ny, nx});
  const std::size_t np = ny * nx;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t q = 0; q < nq; ++q) {
      cx *out = y.data() + (t * nq + q) * np;
      const cx *img = x.data() + t * np;
      const cx *s = maps.maps.data() + q * np;
      for (std::size_t i = 0; i < np; ++i)
        out[i] = s[i] * img[i];
      fft2c_inplace({out, np}, ny, nx);
      const auto p = mask.plane(t);
      for (std::size_t i = 0; i < np; ++i)
        if (!p[i])
          out[i] = 0.0;
    }
  return y;
}

CArray sense_adjoint(const CArray &y, const SensitivityMaps &maps, const SamplingMask &mask) {
  if (y.rank() != 4)
    throw DataError("sense_adjoint: k-space must be (contrast, coil, ky, kx)");
  const std::size_t nt = y.dim(0), nq = y.dim(1), ny = y.dim(2), nx = y.dim(3);
  check_congruent(maps, mask, ny, nx, nt, "sense_adjoint");
  if (nq != maps.coils())
    throw DataError("sense_adjoint: k-space has " + std::to_string(nq) + " coils, maps have " +
                    std::to_string(maps.coils()));

  const std::size_t np = ny * nx;
  CArray x({nt, ny, nx});
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < nt; ++t) {
    std::vector<cx> buf(np);
    cx *acc = x.data() + t * np;
    const auto p = mask.plane(t);
    for (std::size_t q = 0; q < nq; ++q) {
      const cx *src = y.data() + (t * nq + q) * np;
      for (std::size_t i = 0; i < np; ++i)
        buf[i] = p[i] ? src[i] : cx{};
      ifft2c_inplace(buf, ny, nx);
      const cx *s = maps.maps.data() + q * np;
      for (std::size_t i = 0; i < np; ++i)
        acc[i] += std::conj(s[i]) * buf[i];
    }
  }
  return x;
}

CArray sense_normal(const CArray &x, const SensitivityMaps &maps, const SamplingMask &mask) {
  if (x.rank() != 3)
    throw DataError("sense_normal: image stack must be (contrast, y, x)");
  const std::size_t nt = x.dim(0), ny = x.dim(1), nx = x.dim(2), nq = maps.coils();
  check_congruent(maps, mask, ny, nx, nt, "sense_normal");

  const std::size_t np = ny * nx;
  CArray out({nt, ny, nx});
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < nt; ++t) {
    std::vector<cx> buf(np);
    const cx *img = x.data() + t * np;
    cx *acc = out.data() + t * np;
    const auto p = mask.plane(t);
    for (std::size_t q = 0; q < nq; ++q) {
      const cx *s = maps.maps.data() + q * np;
      for (std::size_t i = 0; i < np; ++i)
        buf[i] = s[i] * img[i];
      fft2c_inplace(buf, ny, nx);
      for (std::size_t i = 0; i < np; ++i)
        if (!p[i])
          buf[i] = 0.0;
      ifft2c_inplace(buf, ny, nx);
      for (std::size_t i = 0; i < np; ++i)
        acc[i] += std::conj(s[i]) * buf[i];
    }
  }
  return out;
}

EigenEstimate max_eigenvalue(const SensitivityMaps &maps, const SamplingMask &mask,
                             int iterations, std::uint64_t seed) {
  if (iterations < 1)
    throw ConfigError("max_eigenvalue: iterations must be >= 1");
  const std::size_t nt = mask.per_contrast ? mask.planes() : 1;
  CArray x({nt, maps.ny(), maps.nx()});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (auto &v : x.values())
    v = cx(g(rng), g(rng));
  double n = norm(x.values());
  for (auto &v : x.values())
    v /= n;

  EigenEstimate est;
  for (int it = 0; it < iterations; ++it) {
    CArray y = sense_normal(x, maps, mask);
    const double rq = dot(x.values(), y.values()).real();
    n = norm(y.values());
    if (n == 0.0 || !std::isfinite(n)) {
      est.value = 0.0;
      est.zero_operator = true;
      est.history.push_back(0.0);
      log::warn("max_eigenvalue: encoding operator is zero");
      return est;
    }
    est.history.push_back(rq);
    est.value = rq;
    for (std::size_t i = 0; i < y.size(); ++i)
      x[i] = y[i] / n;
  }
  return est;
}

} // namespace drums
