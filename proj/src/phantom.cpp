#include "drums/phantom.hpp"

#include "drums/log.hpp"
#include "drums/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace drums {

std::vector<Compartment> default_compartments() {
  return {
      {"fat", 0.0, 0.0, 0.80, 0.92, 0.0, 400.0, 70.0, 0.90},
      {"muscle", 0.0, 0.0, 0.72, 0.84, 0.0, 1400.0, 35.0, 0.60},
      {"rv_blood", -0.02, -0.24, 0.24, 0.12, 0.35, 1900.0, 180.0, 0.95},
      {"myocardium", -0.04, 0.08, 0.30, 0.27, 0.30, 1200.0, 45.0, 0.75},
      {"lv_blood", -0.04, 0.08, 0.19, 0.16, 0.30, 1900.0, 180.0, 0.95},
  };
}

void PhantomSpec::validate() const {
  if (ny < 16 || nx < 16)
    throw ConfigError("phantom grid must be at least 16 x 16");
  if (coils == 0)
    throw ConfigError("phantom needs at least one coil");
  if (compartments.empty() || compartments.size() > 254)
    throw ConfigError("phantom needs between 1 and 254 compartments");
  for (const auto &c : compartments) {
    if (!(c.ry > 0.0 && c.rx > 0.0))
      throw ConfigError("compartment '" + c.label + "' has a degenerate radius");
    if (!(c.pd >= 0.0 && c.pd <= 1.0))
      throw ConfigError("compartment '" + c.label + "' proton density outside [0, 1]");
    if (!(c.t1 > 0.0 && c.t2 > 0.0))
      throw ConfigError("compartment '" + c.label + "' needs positive T1 and T2");
  }
  if (!(noise >= 0.0))
    throw ConfigError("noise must be non-negative");
  if (!(jitter >= 0.0 && jitter < 0.5))
    throw ConfigError("jitter must be in [0, 0.5)");
  if (!(coil_width > 0.0))
    throw ConfigError("coil width must be positive");
}

std::vector<Compartment> realised_compartments(const PhantomSpec &spec) {
  auto out = spec.compartments;
  if (spec.jitter == 0.0)
    return out;
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Shared cardiac offset keeps the heart compartments nested.
  const double dy = spec.jitter * 0.2 * u(rng), dx = spec.jitter * 0.2 * u(rng);
  const double heart_scale = 1.0 + spec.jitter * u(rng);
  for (auto &c : out) {
    const bool body = c.label == "fat" || c.label == "muscle";
    if (!body) {
      c.cy = c.cy * heart_scale + dy;
      c.cx = c.cx * heart_scale + dx;
      c.ry *= heart_scale;
      c.rx *= heart_scale;
    }
    c.t1 *= 1.0 + spec.jitter * u(rng);
    c.t2 *= 1.0 + spec.jitter * u(rng);
    c.pd = std::clamp(c.pd * (1.0 + spec.jitter * u(rng)), 0.0, 1.0);
  }
  return out;
}

MaskArray PhantomTruth::support() const {
  MaskArray m(labels.shape());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = labels[i] != 0;
  return m;
}

MaskArray PhantomTruth::compartment(const std::string &name) const {
  const auto it = std::find(label_names.begin(), label_names.end(), name);
  if (it == label_names.end())
    throw DataError("phantom has no compartment '" + name + "'");
  const auto id = static_cast<unsigned char>(it - label_names.begin() + 1);
  MaskArray m(labels.shape());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = labels[i] == id;
  return m;
}

double t1_signal(double a, double t1, double ti) {
  return std::abs(a - 2.0 * a * std::exp(-ti / t1));
}

double t2_signal(double a, double t2, double tprep) { return a * std::exp(-tprep / t2); }

PhantomTruth generate_truth(const PhantomSpec &spec, Modality modality) {
  return generate_truth(spec, modality, default_timing(modality));
}

PhantomTruth generate_truth(const PhantomSpec &spec, Modality modality,
                            const std::vector<double> &timing) {
  spec.validate();
  if (timing.empty())
    throw ConfigError("phantom timing list is empty");
  const auto comps = realised_compartments(spec);
  const std::size_t ny = spec.ny, nx = spec.nx, nt = timing.size();

  PhantomTruth t;
  t.modality = modality;
  t.timing = timing;
  t.labels = MaskArray({ny, nx});
  t.param = RArray({ny, nx});
  t.pd = RArray({ny, nx});
  for (const auto &c : comps)
    t.label_names.push_back(c.label);

  const double hy = ny / 2.0, hx = nx / 2.0;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto &c = comps[k];
    const double ca = std::cos(c.angle), sa = std::sin(c.angle);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const double v = (y - hy) / hy - c.cy, u = (x - hx) / hx - c.cx;
        const double a = ca * u + sa * v, b = -sa * u + ca * v;
        if ((a / c.rx) * (a / c.rx) + (b / c.ry) * (b / c.ry) <= 1.0) {
          t.labels(y, x) = static_cast<unsigned char>(k + 1);
          t.param(y, x) = modality == Modality::T1 ? c.t1 : c.t2;
          t.pd(y, x) = c.pd;
        }
      }
  }

  t.images = CArray({nt, ny, nx});
  for (std::size_t j = 0; j < nt; ++j)
    for (std::size_t i = 0; i < ny * nx; ++i) {
      if (!t.labels[i])
        continue;
      const double s = modality == Modality::T1 ? t1_signal(t.pd[i], t.param[i], timing[j])
                                                : t2_signal(t.pd[i], t.param[i], timing[j]);
      t.images[j * ny * nx + i] = s;
    }
  return t;
}

namespace {

struct Lobe {
  double cy, cx, phase, dir_y, dir_x;
};

std::vector<Lobe> coil_lobes(const PhantomSpec &spec) {
  std::vector<Lobe> lobes;
  const double hy = spec.ny / 2.0, hx = spec.nx / 2.0;
  const double Q = static_cast<double>(spec.coils);
  for (std::size_t q = 0; q < spec.coils; ++q) {
    const double th = 2.0 * std::numbers::pi * (q + 0.5) / Q;
    lobes.push_back({hy + spec.coil_ring * hy * std::sin(th), hx + spec.coil_ring * hx * std::cos(th),
                     2.0 * std::numbers::pi * q / Q, std::cos(th), -std::sin(th)});
  }
  return lobes;
}

} // namespace

SensitivityMaps simulate_coils(const PhantomSpec &spec) {
  spec.validate();
  const std::size_t ny = spec.ny, nx = spec.nx, Q = spec.coils;
  SensitivityMaps s;
  s.maps = CArray({Q, ny, nx});
  s.support = generate_truth(spec, Modality::T2, {0.0}).support();
  if (Q == 1) {
    s.maps.fill(1.0);
    return s;
  }
  const auto lobes = coil_lobes(spec);
  const double w = spec.coil_width * static_cast<double>(std::min(ny, nx));
  std::vector<double> g(Q);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      double ss = 0.0;
      for (std::size_t q = 0; q < Q; ++q) {
        const double dy = y - lobes[q].cy, dx = x - lobes[q].cx;
        g[q] = std::exp(-(dy * dy + dx * dx) / (2.0 * w * w));
        ss += g[q] * g[q];
      }
      const double inv = 1.0 / std::sqrt(ss);
      for (std::size_t q = 0; q < Q; ++q) {
        const double dy = y - lobes[q].cy, dx = x - lobes[q].cx;
        const double ph =
            lobes[q].phase + spec.coil_phase_slope * (dy * lobes[q].dir_y + dx * lobes[q].dir_x);
        s.maps(q, y, x) = std::polar(g[q] * inv, ph);
      }
    }
  return s;
}

double coil_gradient_bound(const PhantomSpec &spec) {
  if (spec.coils == 1)
    return 0.0;
  // |grad (g_q / G)| <= 2 max|grad log g| and the phase term adds its slope.
  const auto lobes = coil_lobes(spec);
  const double w = spec.coil_width * static_cast<double>(std::min(spec.ny, spec.nx));
  double dmax = 0.0;
  for (const auto &l : lobes)
    for (double y : {0.0, spec.ny - 1.0})
      for (double x : {0.0, spec.nx - 1.0})
        dmax = std::max(dmax, std::hypot(y - l.cy, x - l.cx));
  return 2.0 * dmax / (w * w) + spec.coil_phase_slope;
}

CArray acquire(const CArray &truth, const SensitivityMaps &maps, const SamplingMask &mask,
               double noise_std, std::uint64_t seed) {
  if (!(noise_std >= 0.0))
    throw ConfigError("noise std must be non-negative");
  CArray k = sense_forward(truth, maps, mask);
  if (noise_std == 0.0)
    return k;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise_std / std::sqrt(2.0));
  const std::size_t T = k.dim(0), Q = k.dim(1), P = k.dim(2) * k.dim(3);
  for (std::size_t t = 0; t < T; ++t) {
    const auto m = mask.plane(t);
    for (std::size_t q = 0; q < Q; ++q) {
      cx *kp = k.data() + (t * Q + q) * P;
      for (std::size_t i = 0; i < P; ++i)
        if (m[i]) {
          const double re = n(rng);
          kp[i] += cx(re, n(rng));
        }
    }
  }
  return k;
}

double partial_fourier_fraction(Modality modality) {
  return modality == Modality::T1 ? 7.0 / 8.0 : 6.0 / 8.0;
}

SamplingMask phantom_mask(const PhantomSpec &spec, Modality modality, int acceleration,
                          bool time_varying, std::size_t contrasts) {
  if (acceleration < 1)
    throw ConfigError("acceleration must be >= 1");
  if (acceleration == 1)
    return full_mask(spec.ny, spec.nx);
  MaskOptions opt;
  opt.ny = spec.ny;
  opt.nx = spec.nx;
  opt.acceleration = acceleration;
  opt.partial_fourier = partial_fourier_fraction(modality);
  opt.time_varying = time_varying;
  opt.contrasts = contrasts;
  opt.seed = spec.seed * 131 + static_cast<std::uint64_t>(acceleration);
  return make_mask(opt);
}

std::string kspace_filename(Modality m, int acceleration) {
  return "kspace_" + to_string(m) + "_R" + std::to_string(acceleration) + ".drum";
}

std::string truth_filename(Modality m) { return "truth_" + to_string(m) + ".drum"; }

void write_dataset(const PhantomSpec &spec, const DatasetOptions &opt,
                   const std::filesystem::path &dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  const auto maps = simulate_coils(spec);
  write_archive({make_tensor("maps", maps.maps), make_tensor("support", maps.support)},
                dir / kCoilsFilename);

  double pd_max = 0.0;
  for (const auto &c : realised_compartments(spec))
    pd_max = std::max(pd_max, c.pd);
  const double noise_std = spec.noise * pd_max;

  std::vector<int> rs{1};
  for (int r : opt.accelerations)
    if (r != 1)
      rs.push_back(r);

  for (Modality m : opt.modalities) {
    const auto truth = generate_truth(spec, m);
    write_archive({make_tensor("images", truth.images), make_tensor("param", truth.param),
                   make_tensor("pd", truth.pd), make_tensor("labels", truth.labels),
                   make_scalars("timing", truth.timing)},
                  dir / truth_filename(m));
    for (int r : rs) {
      const auto mask = phantom_mask(spec, m, r, opt.time_varying, truth.timing.size());
      const std::uint64_t seed = spec.seed * 1000 + (m == Modality::T1 ? 100 : 200) + r;
      const auto k = acquire(truth.images, maps, mask, noise_std, seed);
      write_archive({make_tensor("kspace", k), make_tensor("mask", mask.grid),
                     make_scalars("acceleration", {static_cast<double>(r)}),
                     make_scalars("acs_lines", {static_cast<double>(mask.acs_lines)}),
                     make_scalars("timing", truth.timing)},
                    dir / kspace_filename(m, r));
      log::info("wrote " + (dir / kspace_filename(m, r)).string());
    }
  }
}

} // namespace drums
