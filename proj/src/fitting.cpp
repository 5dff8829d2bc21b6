#include "drums/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace drums {

std::string to_string(Modality m) { return m == Modality::T1 ? "T1" : "T2"; }

Modality parse_modality(const std::string &s) {
  if (s == "T1" || s == "t1")
    return Modality::T1;
  if (s == "T2" || s == "t2")
    return Modality::T2;
  throw ConfigError("unknown modality '" + s + "'");
}

std::vector<double> default_timing(Modality m) {
  if (m == Modality::T1)
    return {100, 180, 260, 900, 1000, 1050, 1700, 1800, 2500};
  return {0, 35, 55};
}

namespace {

constexpr double kGolden = 0.6180339887498949;

// Log-spaced search grid shared by every voxel.
struct Grid {
  std::vector<double> tau;
  std::vector<std::vector<double>> e; // e[g][i] = exp(-t_i / tau_g)

  Grid(double lo, double hi, std::size_t n, std::span<const double> t) {
    for (std::size_t g = 0; g < n; ++g) {
      const double tg = lo * std::pow(hi / lo, static_cast<double>(g) / static_cast<double>(n - 1));
      tau.push_back(tg);
      std::vector<double> row;
      for (double ti : t)
        row.push_back(std::exp(-ti / tg));
      e.push_back(std::move(row));
    }
  }
};

// Minimise f over log(tau) in [lo, hi].
template <class F> double golden_log(F f, double lo, double hi) {
  double a = std::log(lo), b = std::log(hi);
  double c = b - kGolden * (b - a), d = a + kGolden * (b - a);
  double fc = f(std::exp(c)), fd = f(std::exp(d));
  for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kGolden * (b - a);
      fc = f(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kGolden * (b - a);
      fd = f(std::exp(d));
    }
  }
  return std::exp(0.5 * (a + b));
}

struct T1Solution {
  double a = 0.0, b = 0.0, sse = std::numeric_limits<double>::infinity();
};

// Least-squares (A, B) for s_i ~ A - B e_i.
T1Solution solve_ab(std::span<const double> s, std::span<const double> e) {
  double n = 0, se = 0, see = 0, ss = 0, sse_ = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    n += 1;
    se += e[i];
    see += e[i] * e[i];
    ss += s[i];
    sse_ += s[i] * e[i];
  }
  const double det = n * see - se * se;
  T1Solution r;
  if (!(det > 1e-300)) {
    r.a = ss / n;
    r.b = 0;
  } else {
    // [n, -se; -se, see] [A; B] = [ss; -sse]
    r.a = (see * ss - se * sse_) / det;
    r.b = (se * ss - n * sse_) / det;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - (r.a - r.b * e[i]);
    acc += d * d;
  }
  r.sse = acc;
  return r;
}

const Grid &t1_grid(std::span<const double> ti) {
  thread_local std::vector<double> key;
  thread_local std::unique_ptr<Grid> grid;
  if (!grid || !std::equal(key.begin(), key.end(), ti.begin(), ti.end())) {
    key.assign(ti.begin(), ti.end());
    grid = std::make_unique<Grid>(20.0, 10000.0, 120, ti);
  }
  return *grid;
}

const Grid &t2_grid(std::span<const double> tp) {
  thread_local std::vector<double> key;
  thread_local std::unique_ptr<Grid> grid;
  if (!grid || !std::equal(key.begin(), key.end(), tp.begin(), tp.end())) {
    key.assign(tp.begin(), tp.end());
    grid = std::make_unique<Grid>(0.5, kT2Upper, 100, tp);
  }
  return *grid;
}

void check_timing(std::span<const double> t, std::size_t min_samples, const char *what) {
  if (t.size() < min_samples)
    throw DataError(std::string(what) + ": need at least " + std::to_string(min_samples) +
                    " samples, got " + std::to_string(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0.0)
      throw DataError(std::string(what) + ": negative timing value");
    if (i > 0 && !(t[i] > t[i - 1]))
      throw DataError(std::string(what) + ": timing must be strictly increasing");
  }
}

} // namespace

VoxelFit fit_t1_voxel(std::span<const double> m, std::span<const double> ti) {
  if (m.size() != ti.size())
    throw DataError("fit_t1: signal/timing length mismatch");
  if (m.size() < 3)
    throw DataError("fit_t1: need at least 3 samples");
  VoxelFit out;
  const std::size_t n = m.size();
  if (std::all_of(m.begin(), m.end(), [](double v) { return v == 0.0; })) {
    out.flags = kFitZeroSignal;
    return out;
  }
  const Grid &grid = t1_grid(ti);

  // Closed-form residual for every (grid tau, flip count k) from prefix sums.
  const double N = static_cast<double>(n);
  double sum_m = 0, sum_mm = 0;
  for (double v : m) {
    sum_m += v;
    sum_mm += v * v;
  }
  std::size_t best_g = 0, best_k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.tau.size(); ++g) {
    const auto &e = grid.e[g];
    double se = 0, see = 0, sme = 0;
    for (std::size_t i = 0; i < n; ++i) {
      se += e[i];
      see += e[i] * e[i];
      sme += m[i] * e[i];
    }
    const double det = N * see - se * se;
    if (!(det > 1e-300))
      continue;
    double pre_m = 0, pre_me = 0;
    for (std::size_t k = 0; k <= n; ++k) {
      if (k > 0) {
        pre_m += m[k - 1];
        pre_me += m[k - 1] * e[k - 1];
      }
      const double ss = sum_m - 2 * pre_m;   // sum of signed samples
      const double sse = sme - 2 * pre_me;   // sum of signed samples * e
      // Residual = |s|^2 - b^T G^-1 b with b = (ss, -sse).
      const double proj = (see * ss * ss - 2 * se * ss * sse + N * sse * sse) / det;
      const double r = sum_mm - proj;
      if (r < best) {
        best = r;
        best_g = g;
        best_k = k;
      }
    }
  }

  // Refine tau by golden section around the best grid cell. The flip count is
  // re-chosen among its neighbours since the optimum can cross a sign boundary
  // between grid points.
  std::vector<double> s(n), e(n), best_s;
  auto sse_at = [&](double tau) {
    for (std::size_t i = 0; i < n; ++i)
      e[i] = std::exp(-ti[i] / tau);
    return solve_ab(s, e).sse;
  };
  const std::size_t G = grid.tau.size();
  const double lo = grid.tau[best_g > 0 ? best_g - 1 : 0];
  const double hi = grid.tau[std::min(best_g + 1, G - 1)];
  double tau = grid.tau[best_g], best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t k = best_k > 0 ? best_k - 1 : 0; k <= std::min(best_k + 1, n); ++k) {
    for (std::size_t i = 0; i < n; ++i)
      s[i] = i < k ? -m[i] : m[i];
    const double t = golden_log(sse_at, lo, hi);
    const double r = sse_at(t);
    if (r < best_sse) {
      best_sse = r;
      tau = t;
      best_s = s;
    }
  }
  s = best_s;
  for (std::size_t i = 0; i < n; ++i)
    e[i] = std::exp(-ti[i] / tau);
  const auto sol = solve_ab(s, e);

  out.a = sol.a;
  out.b = sol.b;
  out.t_star = tau;
  out.residual = std::sqrt(std::max(sol.sse, 0.0) / N);
  if (best_g == G - 1 && tau > grid.tau.back() * (1 - 1e-6))
    out.flags |= kFitAtBound;
  if (!(sol.a > 0.0) || !std::isfinite(sol.b)) {
    out.flags |= kFitNonConvergent;
    out.value = std::clamp(tau, 0.0, kT1Upper);
    return out;
  }
  double t1 = (sol.b / sol.a - 1.0) * tau;
  if (t1 < 0.0 || t1 > kT1Upper) {
    out.flags |= kFitAtBound;
    t1 = std::clamp(t1, 0.0, kT1Upper);
  }
  out.value = t1;
  return out;
}

VoxelFit fit_t2_voxel(std::span<const double> sig, std::span<const double> tp) {
  if (sig.size() != tp.size())
    throw DataError("fit_t2: signal/timing length mismatch");
  if (sig.size() < 2)
    throw DataError("fit_t2: need at least 2 samples");
  VoxelFit out;
  const std::size_t n = sig.size();
  if (std::all_of(sig.begin(), sig.end(), [](double v) { return v == 0.0; })) {
    out.flags = kFitZeroSignal;
    return out;
  }
  const Grid &grid = t2_grid(tp);
  auto fit_at = [&](const double *e, double &amp) {
    double se = 0, ee = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      se += sig[i] * e[i];
      ee += e[i] * e[i];
      ss += sig[i] * sig[i];
    }
    amp = se / ee;
    return ss - se * se / ee;
  };

  std::size_t best_g = 0;
  double best = std::numeric_limits<double>::infinity(), amp = 0;
  for (std::size_t g = 0; g < grid.tau.size(); ++g) {
    const double r = fit_at(grid.e[g].data(), amp);
    if (r < best) {
      best = r;
      best_g = g;
    }
  }
  std::vector<double> e(n);
  auto sse_at = [&](double tau) {
    for (std::size_t i = 0; i < n; ++i)
      e[i] = std::exp(-tp[i] / tau);
    double a = 0;
    return fit_at(e.data(), a);
  };
  const std::size_t G = grid.tau.size();
  double tau = golden_log(sse_at, grid.tau[best_g > 0 ? best_g - 1 : 0],
                          grid.tau[std::min(best_g + 1, G - 1)]);
  if (best_g == G - 1 && tau > kT2Upper * (1 - 1e-6)) {
    tau = kT2Upper;
    out.flags |= kFitAtBound;
  } else if (best_g == 0 && tau < grid.tau.front() * (1 + 1e-6)) {
    out.flags |= kFitAtBound;
  }
  const double sse = sse_at(tau);
  fit_at(e.data(), amp);
  out.value = tau;
  out.a = amp;
  out.residual = std::sqrt(std::max(sse, 0.0) / static_cast<double>(n));
  if (!(amp > 0.0)) {
    out.flags |= kFitNonConvergent;
    out.a = 0.0;
  }
  return out;
}

void RelaxationSeries::validate() const {
  if (signal.rank() != 3)
    throw DataError("relaxation series must be (contrast, y, x)");
  if (signal.dim(0) != timing.size())
    throw DataError("relaxation series has " + std::to_string(signal.dim(0)) +
                    " contrasts but " + std::to_string(timing.size()) + " timing values");
  check_timing(timing, modality == Modality::T1 ? 3 : 2,
               modality == Modality::T1 ? "T1 series" : "T2 series");
}

namespace {

ParameterMap fit_series(const RelaxationSeries &series) {
  series.validate();
  const std::size_t nt = series.signal.dim(0), ny = series.signal.dim(1), nx = series.signal.dim(2);
  const std::size_t np = ny * nx;
  ParameterMap pm;
  pm.modality = series.modality;
  pm.lower = 0.0;
  pm.upper = series.modality == Modality::T1 ? kT1Upper : kT2Upper;
  for (RArray *a : {&pm.value, &pm.a, &pm.b, &pm.t_star, &pm.m0, &pm.residual})
    *a = RArray({ny, nx});
  pm.flags = MaskArray({ny, nx});

  const bool t1 = series.modality == Modality::T1;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::size_t r = 0; r < np; ++r) {
    std::vector<double> sig(nt);
    for (std::size_t t = 0; t < nt; ++t)
      sig[t] = series.signal[t * np + r];
    const VoxelFit f = t1 ? fit_t1_voxel(sig, series.timing) : fit_t2_voxel(sig, series.timing);
    pm.value[r] = f.value;
    pm.a[r] = f.a;
    pm.b[r] = f.b;
    pm.t_star[r] = f.t_star;
    pm.residual[r] = f.residual;
    pm.flags[r] = f.flags;
  }
  // Robust peak: a handful of ill-conditioned background voxels can carry huge A.
  std::vector<double> pos;
  for (std::size_t r = 0; r < np; ++r)
    if (pm.a[r] > 0.0 && pm.flags[r] == kFitOk)
      pos.push_back(pm.a[r]);
  double amax = 0.0;
  if (!pos.empty()) {
    const auto k = static_cast<std::size_t>(0.99 * static_cast<double>(pos.size() - 1));
    std::nth_element(pos.begin(), pos.begin() + k, pos.end());
    amax = pos[k];
  }
  if (amax > 0.0)
    for (std::size_t r = 0; r < np; ++r)
      pm.m0[r] = std::clamp(pm.a[r] / amax, 0.0, 1.0);
  return pm;
}

} // namespace

ParameterMap fit_t1(const RelaxationSeries &series) {
  if (series.modality != Modality::T1)
    throw DataError("fit_t1: series is not T1");
  return fit_series(series);
}

ParameterMap fit_t2(const RelaxationSeries &series) {
  if (series.modality != Modality::T2)
    throw DataError("fit_t2: series is not T2");
  return fit_series(series);
}

ParameterMap fit_map(const CArray &stack, const std::vector<double> &timing, Modality modality) {
  if (stack.rank() != 3)
    throw DataError("fit_map: stack must be (contrast, y, x)");
  if (stack.dim(0) != timing.size())
    throw DataError("fit_map: stack has " + std::to_string(stack.dim(0)) + " contrasts but " +
                    std::to_string(timing.size()) + " timing values");
  RelaxationSeries s{magnitude(stack), timing, modality};
  return fit_series(s);
}

} // namespace drums
