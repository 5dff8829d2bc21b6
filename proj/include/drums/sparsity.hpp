#pragma once

#include "drums/core.hpp"

namespace drums {

/// Orthogonal 2-D Daubechies-4 coefficients in the usual pyramid layout: the
/// coarsest approximation (LL) occupies the top-left (py >> J) x (px >> J)
/// block of the padded plane and detail subbands surround it level by level.
struct WaveletCoeffs {
  CArray data; // (py, px), padded extents
  int levels = 0;
  std::size_t ny = 0; // original extents before symmetric padding
  std::size_t nx = 0;

  std::size_t approx_ny() const { return data.dim(0) >> levels; }
  std::size_t approx_nx() const { return data.dim(1) >> levels; }
  bool in_approx(std::size_t y, std::size_t x) const { return y < approx_ny() && x < approx_nx(); }
};

WaveletCoeffs dwt2(const CArray &img, int levels = 4);
CArray idwt2(const WaveletCoeffs &coeffs);

/// Complex soft threshold w . max(|w| - t, 0) / |w| on detail coefficients; LL is untouched.
WaveletCoeffs soft_threshold(WaveletCoeffs coeffs, double t);
void soft_threshold_inplace(WaveletCoeffs &coeffs, double t);

/// Scalar complex shrinkage used by soft_threshold.
cx shrink(cx w, double t);

/// Sum of |w| over detail coefficients (the penalised part).
double detail_l1(const WaveletCoeffs &coeffs);

} // namespace drums
