#include "drums/cs_solver.hpp"

#include "drums/log.hpp"
#include "drums/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace drums {

namespace {

struct Evaluation {
  double objective;
  double residual_norm;
};

Evaluation evaluate(const CArray &x, const CArray &y, const SensitivityMaps &maps,
                    const SamplingMask &mask, double lambda, int levels) {
  const CArray ex = sense_forward(x, maps, mask);
  double data = 0.0;
  for (std::size_t i = 0; i < ex.size(); ++i)
    data += std::norm(ex[i] - y[i]);
  double reg = 0.0;
  if (lambda > 0.0)
    for (std::size_t t = 0; t < x.dim(0); ++t)
      reg += detail_l1(dwt2(x.slice(t), levels));
  return {0.5 * data + lambda * reg, std::sqrt(data)};
}

} // namespace

double cs_objective(const CArray &x, const CArray &y, const SensitivityMaps &maps,
                    const SamplingMask &mask, double lambda, int wavelet_levels) {
  return evaluate(x, y, maps, mask, lambda, wavelet_levels).objective;
}

CArray wavelet_prox(const CArray &x, double t, int wavelet_levels) {
  if (t == 0.0)
    return x;
  CArray out(x.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    auto w = dwt2(x.slice(c), wavelet_levels);
    soft_threshold_inplace(w, t);
    out.set_slice(c, idwt2(w));
  }
  return out;
}

std::pair<CArray, SolveReport> solve_espirit(const CArray &y, const SensitivityMaps &maps,
                                             const SamplingMask &mask, const SolverConfig &cfg) {
  if (cfg.lambda < 0.0)
    throw ConfigError("solver: lambda must be >= 0");
  if (cfg.iterations < 1)
    throw ConfigError("solver: iterations must be >= 1");
  if (y.rank() != 4)
    throw DataError("solver: k-space must be (contrast, coil, ky, kx)");

  SolveReport report;
  const CArray adj = sense_adjoint(y, maps, mask);
  report.scale = max_abs(adj.values());
  if (report.scale == 0.0) {
    log::warn("solver: zero data, returning zero image");
    report.zero_data = true;
    report.scale = 1.0;
    return {CArray(adj.shape()), report};
  }

  CArray yn = y;
  for (auto &v : yn.values())
    v /= report.scale;
  CArray b = adj;
  for (auto &v : b.values())
    v /= report.scale;
  const double ynorm = norm(yn.values());

  const auto eig = max_eigenvalue(maps, mask, cfg.power_iterations, cfg.seed);
  if (eig.zero_operator || eig.value <= 0.0)
    throw SolverError("solver: encoding operator has no positive eigenvalue");
  report.lambda_max = eig.value;
  report.step = cfg.step_safety / eig.value;
  const double alpha = report.step;
  const int levels = cfg.wavelet_levels;

  // The data term is evaluated from the normal operator,
  // ||E x - y||^2 = <x, N x> - 2 Re <x, E^H y> + ||y||^2, and N is applied once
  // per iteration: N z follows from linearity of the momentum update.
  const double y2 = ynorm * ynorm;
  auto objective = [&](const CArray &u, const CArray &nu) {
    const double data = std::max(0.0, dot(u.values(), nu.values()).real() -
                                          2.0 * dot(u.values(), b.values()).real() + y2);
    double reg = 0.0;
    if (cfg.lambda > 0.0)
      for (std::size_t c = 0; c < u.dim(0); ++c)
        reg += detail_l1(dwt2(u.slice(c), levels));
    return Evaluation{0.5 * data + cfg.lambda * reg, std::sqrt(data)};
  };

  CArray x = b; // zero-filled start
  CArray nx = sense_normal(x, maps, mask);
  const auto e0 = objective(x, nx);
  report.initial_objective = e0.objective;
  double fx = e0.objective;
  double rx = e0.residual_norm;
  CArray z = x, nz = nx;
  double t = 1.0;

  for (int k = 0; k < cfg.iterations; ++k) {
    CArray v(z.shape());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = z[i] - alpha * (nz[i] - b[i]);
    CArray xn = wavelet_prox(v, alpha * cfg.lambda, levels);
    CArray nxn = sense_normal(xn, maps, mask);
    const auto en = objective(xn, nxn);
    if (!std::isfinite(en.objective))
      throw SolverError("solver: non-finite objective at iteration " + std::to_string(k + 1) +
                        " (step " + std::to_string(alpha) + ")");

    if (cfg.restart && en.objective > fx) {
      // Reject and restart momentum from the last accepted iterate.
      ++report.restarts;
      t = 1.0;
      z = x;
      nz = nx;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / tn;
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = xn[i] + beta * (xn[i] - x[i]);
        nz[i] = nxn[i] + beta * (nxn[i] - nx[i]);
      }
      x = std::move(xn);
      nx = std::move(nxn);
      fx = en.objective;
      rx = en.residual_norm;
      t = tn;
    }
    report.objective.push_back(fx);
    report.residual.push_back(ynorm > 0 ? rx / ynorm : 0.0);
    report.iterations = k + 1;
  }
  report.final_residual = report.residual.empty() ? 0.0 : report.residual.back();

  for (auto &val : x.values())
    val *= report.scale;
  return {std::move(x), report};
}

void write_report_csv(const SolveReport &report, const std::filesystem::path &path) {
  std::ofstream os(path);
  if (!os)
    throw DataError("cannot write '" + path.string() + "'");
  os << "iteration,objective,residual\n" << std::setprecision(10);
  os << 0 << ',' << report.initial_objective << ",\n";
  for (std::size_t i = 0; i < report.objective.size(); ++i)
    os << i + 1 << ',' << report.objective[i] << ',' << report.residual[i] << '\n';
}

} // namespace drums
