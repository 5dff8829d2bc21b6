#pragma once

#include "drums/encoding.hpp"

#include <Eigen/Core>

namespace drums {

struct CalibrationConfig {
  std::size_t kernel_y = 6;
  std::size_t kernel_x = 6;
  /// Keep singular vectors with sigma >= threshold * sigma_1.
  double threshold = 0.02;
  /// Keep pixels whose top eigenvalue is >= crop.
  double crop = 0.9;

  void validate() const;
};

class CalibrationError : public DataError {
public:
  using DataError::DataError;
};

/// Central fully sampled ky band of the first contrast, shape (coil, acs_lines, Nx).
/// The band size is the mask's acs_lines regardless of how much else was sampled.
CArray extract_acs(const CArray &kspace, const SamplingMask &mask);

/// Block-Hankel matrix of all kernel-sized sliding patches. One row per patch
/// position (ky-major), columns ordered (coil, dy, dx).
Eigen::MatrixXcd calibration_matrix(const CArray &acs, std::size_t kernel_y, std::size_t kernel_x);

struct Calibration {
  SensitivityMaps maps;
  RArray eigenvalues;               // top eigenvalue per pixel (Ny, Nx)
  std::vector<double> singular_values;
  std::size_t kernels_kept = 0;
};

Calibration calibrate(const CArray &kspace, const SamplingMask &mask, const CalibrationConfig &cfg);

/// Per-pixel dominant eigenvector of the image-domain ESPIRiT operator.
SensitivityMaps estimate_maps(const CArray &kspace, const SamplingMask &mask,
                              const CalibrationConfig &cfg = {});

} // namespace drums
