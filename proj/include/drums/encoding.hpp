#pragma once

#include "drums/core.hpp"

#include <cstdint>

namespace drums {

/// Cartesian ky/kx sampling pattern. The grid has shape (Tm, Ny, Nx) where
/// Tm is 1 when one mask is shared by every contrast.
struct SamplingMask {
  MaskArray grid;
  double acceleration = 1.0;
  std::size_t acs_lines = 24;
  bool per_contrast = false;

  std::size_t ny() const { return grid.dim(1); }
  std::size_t nx() const { return grid.dim(2); }
  std::size_t planes() const { return grid.dim(0); }
  std::span<const unsigned char> plane(std::size_t contrast) const {
    return grid.slab(per_contrast ? contrast : 0);
  }
  double sampled_fraction() const;
};

struct MaskOptions {
  std::size_t ny = 0;
  std::size_t nx = 0;
  int acceleration = 4;
  std::size_t acs_lines = 24;
  /// Fraction of ky kept on one side (7/8, 6/8, ...); 1 disables partial Fourier.
  double partial_fourier = 1.0;
  /// Pseudorandom ky lines drawn independently per contrast.
  bool time_varying = false;
  std::size_t contrasts = 1;
  std::uint64_t seed = 0;
};

/// Every-R ky lines through the centre plus a fully sampled central ACS band.
SamplingMask make_mask(const MaskOptions &opt);
SamplingMask full_mask(std::size_t ny, std::size_t nx, std::size_t acs_lines = 24);

struct SensitivityMaps {
  CArray maps;       // (coil, y, x)
  MaskArray support; // (y, x)

  std::size_t coils() const { return maps.dim(0); }
  std::size_t ny() const { return maps.dim(1); }
  std::size_t nx() const { return maps.dim(2); }
};

/// Unit maps for a single coil over the full grid.
SensitivityMaps unit_maps(std::size_t ny, std::size_t nx);

/// E x: per contrast t and coil q, P F (S_q . x_t). x is (T, Ny, Nx); result (T, Q, Ny, Nx).
CArray sense_forward(const CArray &x, const SensitivityMaps &maps, const SamplingMask &mask);

/// E^H y: per contrast, sum_q conj(S_q) . ifft2c(P y_q).
CArray sense_adjoint(const CArray &y, const SensitivityMaps &maps, const SamplingMask &mask);

/// E^H E x without materialising k-space for all coils at once.
CArray sense_normal(const CArray &x, const SensitivityMaps &maps, const SamplingMask &mask);

struct EigenEstimate {
  double value = 0.0;
  bool zero_operator = false;
  /// Rayleigh quotient after each iteration.
  std::vector<double> history;
};

/// Power iteration for the largest eigenvalue of E^H E.
EigenEstimate max_eigenvalue(const SensitivityMaps &maps, const SamplingMask &mask,
                             int iterations = 30, std::uint64_t seed = 0x5eed);

} // namespace drums
