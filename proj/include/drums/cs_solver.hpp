#pragma once

#include "drums/encoding.hpp"

#include <filesystem>
#include <utility>

namespace drums {

struct SolverConfig {
  double lambda = 0.01;
  int iterations = 100;
  /// Reject objective-increasing steps and reset momentum.
  bool restart = true;
  int power_iterations = 30;
  /// Step size is step_safety / lambda_max.
  double step_safety = 0.95;
  int wavelet_levels = 4;
  std::uint64_t seed = 0x5eed;
};

struct SolveReport {
  /// Objective of the accepted iterate after each iteration, in normalised data units.
  std::vector<double> objective;
  /// ||E x - y|| / ||y|| after each iteration.
  std::vector<double> residual;
  double initial_objective = 0.0;
  double final_residual = 0.0;
  int iterations = 0;
  int restarts = 0;
  double lambda_max = 0.0;
  double step = 0.0;
  /// Data were divided by this before solving and the result multiplied back.
  double scale = 1.0;
  bool zero_data = false;
};

class SolverError : public Error {
public:
  using Error::Error;
};

/// 1/2 sum_q ||P F S_q x - y||^2 + lambda ||Psi x||_1 (detail coefficients only).
double cs_objective(const CArray &x, const CArray &y, const SensitivityMaps &maps,
                    const SamplingMask &mask, double lambda, int wavelet_levels);

/// Prox of t ||Psi x||_1 applied plane by plane to a (T, Ny, Nx) stack.
CArray wavelet_prox(const CArray &x, double t, int wavelet_levels);

/// L1-wavelet SENSE reconstruction by FISTA with function-value restart.
std::pair<CArray, SolveReport> solve_espirit(const CArray &y, const SensitivityMaps &maps,
                                             const SamplingMask &mask, const SolverConfig &cfg);

void write_report_csv(const SolveReport &report, const std::filesystem::path &path);

} // namespace drums
