#pragma once

#include "drums/core.hpp"

#include <string>

namespace drums {

enum class Modality { T1, T2 };

std::string to_string(Modality m);
Modality parse_modality(const std::string &s);

/// Inversion times (T1) or T2-preparation times (T2) of the mapping sequences, in ms.
std::vector<double> default_timing(Modality m);

inline constexpr double kT1Upper = 5000.0;
inline constexpr double kT2Upper = 250.0;

enum FitFlag : unsigned char {
  kFitOk = 0,
  kFitZeroSignal = 1,
  kFitAtBound = 2,
  kFitNonConvergent = 4,
};

struct VoxelFit {
  double value = 0.0;  // T1 or T2 in ms
  double a = 0.0;      // A
  double b = 0.0;      // B (T1 only)
  double t_star = 0.0; // apparent T1* (T1 only)
  double residual = 0.0; // RMS over samples
  unsigned char flags = kFitOk;
};

/// Magnitude inversion-recovery fit of |A - B exp(-TI/T1*)| with polarity
/// restoration, then T1 = (B/A - 1) T1*.
VoxelFit fit_t1_voxel(std::span<const double> magnitude, std::span<const double> ti);

/// A exp(-T_prep / T2) with T2 in (0, 250] ms.
VoxelFit fit_t2_voxel(std::span<const double> signal, std::span<const double> tprep);

struct RelaxationSeries {
  RArray signal; // (Nt, Ny, Nx) magnitudes
  std::vector<double> timing;
  Modality modality = Modality::T1;

  void validate() const;
};

struct ParameterMap {
  Modality modality = Modality::T1;
  RArray value;    // T1 or T2 (ms)
  RArray a;        // A
  RArray b;        // B (T1)
  RArray t_star;   // T1* (T1)
  RArray m0;       // A over the 99th percentile of well-fitted A, clipped to [0, 1]
  RArray residual; // RMS fit error
  MaskArray flags;
  double lower = 0.0;
  double upper = 0.0;
};

ParameterMap fit_t1(const RelaxationSeries &series);
ParameterMap fit_t2(const RelaxationSeries &series);
/// Voxelwise fit of |stack|.
ParameterMap fit_map(const CArray &stack, const std::vector<double> &timing, Modality modality);

} // namespace drums
