#pragma once

#include "drums/core.hpp"

#include <optional>

namespace drums {

/// Partially separable factorisation x(t, r) = sum_l a_l C_l(r) T_l(t).
///
/// Columns of the Casorati matrix M (pixels x contrasts) factor as
/// M = U diag(a) V^H; C_l is U's column reshaped to the image grid and
/// T_l = conj(V's column) so the model is a plain outer product.
/// Each (C_l, T_l) pair is rotated so the largest-magnitude entry of T_l is
/// real and positive, which makes the factorisation deterministic.
struct SubspaceBasis {
  CArray spatial;          // (L, Ny, Nx)
  CArray temporal;         // (L, Nt)
  std::vector<double> singular_values; // a_l, descending

  std::size_t rank() const { return singular_values.size(); }
  std::size_t ny() const { return spatial.dim(1); }
  std::size_t nx() const { return spatial.dim(2); }
  std::size_t contrasts() const { return temporal.dim(1); }
};

inline constexpr std::size_t kPreparedSize = 128;

/// Network-ready spatial basis: dephased, centre-cropped (or zero padded) to
/// 128 x 128, split into [Re C_1, Im C_1, ..., Re C_L, Im C_L] channels and
/// z-scored per channel. Everything needed to invert the preparation is kept.
struct PreparedBasis {
  RArray channels;           // (2L, 128, 128)
  std::vector<double> phase; // phi_l removed from C_l
  std::vector<double> mean;  // per channel
  std::vector<double> stddev;
  /// Top-left corner of the 128 x 128 window in the full grid; negative when padded.
  long offset_y = 0;
  long offset_x = 0;
  std::size_t ny = 0;
  std::size_t nx = 0;

  std::size_t rank() const { return phase.size(); }
};

SubspaceBasis decompose(const CArray &stack, std::size_t rank);
SubspaceBasis truncate(const SubspaceBasis &basis, std::size_t rank);

PreparedBasis prepare_basis(const SubspaceBasis &basis);

/// Undo standardisation and dephasing: complex (L, 128, 128) window of the basis.
CArray unprepare(const PreparedBasis &prepared);

/// x(t) = sum_l a_l C_l T_l(t). With a refined basis, its window is pasted back into
/// each C_l (periphery kept from the input basis) before summation.
CArray recombine(const SubspaceBasis &basis, const PreparedBasis *refined = nullptr);

/// Basis with the refined window pasted back in.
SubspaceBasis apply_refined(const SubspaceBasis &basis, const PreparedBasis &refined);

} // namespace drums
