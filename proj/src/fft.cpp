#include "drums/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace drums {

namespace {

// fftw_execute on distinct plans is thread-safe; planning is not.
std::mutex &planner_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
public:
  Plan(std::size_t ny, std::size_t nx, int sign) : n_(ny * nx) {
    std::lock_guard lock(planner_mutex());
    buf_ = fftw_alloc_complex(n_);
    plan_ = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), buf_, buf_, sign,
                             FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  Plan(const Plan &) = delete;
  Plan &operator=(const Plan &) = delete;

  cx *buffer() { return reinterpret_cast<cx *>(buf_); }
  void execute() { fftw_execute(plan_); }

private:
  std::size_t n_;
  fftw_complex *buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

Plan &plan_for(std::size_t ny, std::size_t nx, int sign) {
  thread_local std::map<std::tuple<std::size_t, std::size_t, int>, std::unique_ptr<Plan>> cache;
  auto &slot = cache[{ny, nx, sign}];
  if (!slot)
    slot = std::make_unique<Plan>(ny, nx, sign);
  return *slot;
}

void centered(std::span<cx> plane, std::size_t ny, std::size_t nx, int sign) {
  if (plane.size() != ny * nx)
    throw DataError("fft2c: plane size mismatch");
  Plan &p = plan_for(ny, nx, sign);
  cx *buf = p.buffer();
  // ifftshift on the way in moves index i to (i - floor(n/2)) mod n,
  // fftshift on the way out moves it to (i + floor(n/2)) mod n.
  const std::size_t iy = ny / 2, ix = nx / 2;
  for (std::size_t y = 0; y < ny; ++y) {
    const cx *src = plane.data() + y * nx;
    cx *dst = buf + ((y + ny - iy) % ny) * nx;
    std::copy(src + ix, src + nx, dst);
    std::copy(src, src + ix, dst + (nx - ix));
  }
  p.execute();
  const double scale = 1.0 / std::sqrt(static_cast<double>(ny * nx));
  const std::size_t ox = nx - ix;
  for (std::size_t y = 0; y < ny; ++y) {
    const cx *src = buf + y * nx;
    cx *dst = plane.data() + ((y + iy) % ny) * nx;
    for (std::size_t x = 0; x < ox; ++x)
      dst[x + ix] = src[x] * scale;
    for (std::size_t x = ox; x < nx; ++x)
      dst[x - ox] = src[x] * scale;
  }
}

CArray apply_planes(const CArray &in, int sign) {
  if (in.rank() < 2)
    throw DataError("fft2c: need at least two axes");
  const std::size_t ny = in.dim(in.rank() - 2), nx = in.dim(in.rank() - 1);
  CArray out = in;
  const std::size_t planes = in.size() / (ny * nx);
  for (std::size_t p = 0; p < planes; ++p)
    centered(std::span<cx>(out.data() + p * ny * nx, ny * nx), ny, nx, sign);
  return out;
}

} // namespace

void fft2c_inplace(std::span<cx> plane, std::size_t ny, std::size_t nx) {
  centered(plane, ny, nx, FFTW_FORWARD);
}

void ifft2c_inplace(std::span<cx> plane, std::size_t ny, std::size_t nx) {
  centered(plane, ny, nx, FFTW_BACKWARD);
}

CArray fft2c(const CArray &img) { return apply_planes(img, FFTW_FORWARD); }
CArray ifft2c(const CArray &kspace) { return apply_planes(kspace, FFTW_BACKWARD); }

} // namespace drums
