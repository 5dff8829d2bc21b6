#include "drums/espirit.hpp"

#include "drums/log.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace drums {

void CalibrationConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("calibration: threshold must lie in (0, 1)");
  if (!(crop > 0.0 && crop <= 1.0))
    throw ConfigError("calibration: crop must lie in (0, 1]");
  if (kernel_y == 0 || kernel_x == 0)
    throw ConfigError("calibration: empty kernel");
}

CArray extract_acs(const CArray &kspace, const SamplingMask &mask) {
  if (kspace.rank() != 4)
    throw DataError("extract_acs: k-space must be (contrast, coil, ky, kx)");
  const std::size_t nq = kspace.dim(1), ny = kspace.dim(2), nx = kspace.dim(3);
  if (mask.ny() != ny || mask.nx() != nx)
    throw DataError("extract_acs: mask does not match k-space grid");
  const std::size_t acs = mask.acs_lines;
  if (acs == 0 || acs > ny)
    throw CalibrationError("extract_acs: no autocalibration band (acs_lines = " +
                           std::to_string(acs) + ")");
  const std::size_t lo = ny / 2 - std::min(ny / 2, acs / 2);

  const auto plane = mask.plane(0);
  for (std::size_t ky = lo; ky < lo + acs; ++ky)
    for (std::size_t kx = 0; kx < nx; ++kx)
      if (!plane[ky * nx + kx])
        throw CalibrationError("extract_acs: central band line " + std::to_string(ky) +
                               " is not fully sampled");

  CArray out({nq, acs, nx});
  for (std::size_t q = 0; q < nq; ++q)
    for (std::size_t a = 0; a < acs; ++a)
      for (std::size_t kx = 0; kx < nx; ++kx)
        out(q, a, kx) = kspace(std::size_t{0}, q, lo + a, kx);
  return out;
}

Eigen::MatrixXcd calibration_matrix(const CArray &acs, std::size_t kernel_y,
                                    std::size_t kernel_x) {
  if (acs.rank() != 3)
    throw DataError("calibration_matrix: ACS must be (coil, ky, kx)");
  const std::size_t nq = acs.dim(0), ay = acs.dim(1), ax = acs.dim(2);
  if (kernel_y > ay || kernel_x > ax)
    throw CalibrationError("calibration_matrix: kernel " + std::to_string(kernel_y) + "x" +
                           std::to_string(kernel_x) + " larger than ACS " + std::to_string(ay) +
                           "x" + std::to_string(ax));
  const std::size_t py = ay - kernel_y + 1, px = ax - kernel_x + 1;
  Eigen::MatrixXcd A(static_cast<Eigen::Index>(py * px),
                     static_cast<Eigen::Index>(kernel_y * kernel_x * nq));
  for (std::size_t y = 0; y < py; ++y)
    for (std::size_t x = 0; x < px; ++x) {
      const auto row = static_cast<Eigen::Index>(y * px + x);
      Eigen::Index col = 0;
      for (std::size_t q = 0; q < nq; ++q)
        for (std::size_t dy = 0; dy < kernel_y; ++dy)
          for (std::size_t dx = 0; dx < kernel_x; ++dx)
            A(row, col++) = acs(q, y + dy, x + dx);
    }
  return A;
}

Calibration calibrate(const CArray &kspace, const SamplingMask &mask,
                      const CalibrationConfig &cfg) {
  cfg.validate();
  const CArray acs = extract_acs(kspace, mask);
  const std::size_t nq = acs.dim(0), ny = kspace.dim(2), nx = kspace.dim(3);
  const std::size_t ky = cfg.kernel_y, kx = cfg.kernel_x, kernel = ky * kx;
  const Eigen::MatrixXcd A = calibration_matrix(acs, ky, kx);

  // Patches are the rows of A; their span is the range of P = A^T, whose left
  // singular vectors are the eigenvectors of P P^H.
  const Eigen::MatrixXcd gram = A.transpose() * A.conjugate();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
  if (es.info() != Eigen::Success)
    throw CalibrationError("calibration: eigensolve of calibration matrix failed");
  const Eigen::Index ncol = gram.cols();

  Calibration cal;
  for (Eigen::Index i = ncol - 1; i >= 0; --i)
    cal.singular_values.push_back(std::sqrt(std::max(es.eigenvalues()(i), 0.0)));
  const double s1 = cal.singular_values.front();
  if (!(s1 > 0.0))
    throw CalibrationError("calibration: calibration matrix is zero");
  std::size_t kept = 0;
  while (kept < cal.singular_values.size() && cal.singular_values[kept] >= cfg.threshold * s1)
    ++kept;
  cal.kernels_kept = kept;
  log::debug("espirit: kept " + std::to_string(kept) + " of " + std::to_string(ncol) +
             " kernels");

  // Partial image-domain transform along x: hx(l, q, dy, x).
  const double two_pi = 2.0 * std::numbers::pi;
  const auto cy = static_cast<double>(ny / 2), cxo = static_cast<double>(nx / 2);
  std::vector<cx> ex(kx * nx), ey(ky * ny);
  for (std::size_t d = 0; d < kx; ++d)
    for (std::size_t x = 0; x < nx; ++x)
      ex[d * nx + x] = std::polar(1.0, two_pi * static_cast<double>(d) *
                                           (static_cast<double>(x) - cxo) / static_cast<double>(nx));
  for (std::size_t d = 0; d < ky; ++d)
    for (std::size_t y = 0; y < ny; ++y)
      ey[d * ny + y] = std::polar(1.0, two_pi * static_cast<double>(d) *
                                           (static_cast<double>(y) - cy) / static_cast<double>(ny));

  std::vector<cx> hx(kept * nq * ky * nx, cx{});
  for (std::size_t l = 0; l < kept; ++l) {
    const auto colv = es.eigenvectors().col(ncol - 1 - static_cast<Eigen::Index>(l));
    for (std::size_t q = 0; q < nq; ++q)
      for (std::size_t dy = 0; dy < ky; ++dy) {
        cx *dst = &hx[((l * nq + q) * ky + dy) * nx];
        for (std::size_t dx = 0; dx < kx; ++dx) {
          const cx v = colv(static_cast<Eigen::Index>((q * ky + dy) * kx + dx));
          for (std::size_t x = 0; x < nx; ++x)
            dst[x] += v * ex[dx * nx + x];
        }
      }
  }

  SensitivityMaps maps{CArray({nq, ny, nx}), MaskArray({ny, nx}, 0)};
  cal.eigenvalues = RArray({ny, nx});
  const double inv_kernel = 1.0 / static_cast<double>(kernel);
  const auto nq_i = static_cast<Eigen::Index>(nq), kept_i = static_cast<Eigen::Index>(kept);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t y = 0; y < ny; ++y) {
    Eigen::MatrixXcd W(nq_i, kept_i);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> pix;
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t l = 0; l < kept; ++l)
        for (std::size_t q = 0; q < nq; ++q) {
          cx acc{};
          const cx *src = &hx[((l * nq + q) * ky) * nx + x];
          for (std::size_t dy = 0; dy < ky; ++dy)
            acc += src[dy * nx] * ey[dy * ny + y];
          W(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(l)) = acc;
        }
      const Eigen::MatrixXcd G = (W * W.adjoint()) * inv_kernel;
      pix.compute(G);
      const auto &evals = pix.eigenvalues();
      Eigen::Index top = nq_i - 1;
      if (nq_i > 1) {
        const double a = evals(nq_i - 1), b = evals(nq_i - 2);
        if (std::abs(a - b) <= 1e-12 * std::max(std::abs(a), 1e-300) &&
            std::abs(pix.eigenvectors()(0, nq_i - 2)) > std::abs(pix.eigenvectors()(0, nq_i - 1)))
          top = nq_i - 2;
      }
      const double lam = evals(top);
      cal.eigenvalues(y, x) = lam;
      if (lam < cfg.crop)
        continue;
      Eigen::VectorXcd v = pix.eigenvectors().col(top);
      const double m0 = std::abs(v(0));
      if (m0 > 0.0)
        v *= std::conj(v(0)) / m0;
      v /= v.norm();
      for (std::size_t q = 0; q < nq; ++q)
        maps.maps(q, y, x) = v(static_cast<Eigen::Index>(q));
      if (m0 > 0.0)
        maps.maps(std::size_t{0}, y, x) = cx(maps.maps(std::size_t{0}, y, x).real(), 0.0);
      maps.support(y, x) = 1;
    }
  }

  if (std::none_of(maps.support.values().begin(), maps.support.values().end(),
                   [](unsigned char s) { return s != 0; }))
    throw CalibrationError("calibration: degenerate, no pixel reaches the eigenvalue crop " +
                           std::to_string(cfg.crop) + " with " + std::to_string(kept) +
                           " kernels above threshold");
  cal.maps = std::move(maps);
  return cal;
}

SensitivityMaps estimate_maps(const CArray &kspace, const SamplingMask &mask,
                              const CalibrationConfig &cfg) {
  return calibrate(kspace, mask, cfg).maps;
}

} // namespace drums
