#include "drums/pipeline.hpp"

#include "drums/fft.hpp"
#include "drums/log.hpp"
#include "drums/phantom.hpp"
#include "drums/png.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace drums {

std::string to_string(Method m) {
  switch (m) {
  case Method::Fft:
    return "fft";
  case Method::Espirit:
    return "espirit";
  case Method::Lowrank:
    return "lowrank";
  case Method::Drums:
    return "drums";
  }
  return "?";
}

Method parse_method(const std::string &s) {
  for (Method m : {Method::Fft, Method::Espirit, Method::Lowrank, Method::Drums})
    if (to_string(m) == s)
      return m;
  throw ConfigError("unknown method '" + s + "' (fft, espirit, lowrank, drums)");
}

void PipelineConfig::validate() const {
  if (acceleration < 1)
    throw ConfigError("acceleration must be >= 1");
  if (rank == 0)
    throw ConfigError("rank must be >= 1");
  if (!(solver.lambda >= 0.0))
    throw ConfigError("lambda must be non-negative");
  if (solver.iterations < 1)
    throw ConfigError("iterations must be >= 1");
  if (solver.power_iterations < 1)
    throw ConfigError("power_iterations must be >= 1");
  if (!(solver.step_safety > 0.0 && solver.step_safety <= 1.0))
    throw ConfigError("step_safety must be in (0, 1]");
  if (solver.wavelet_levels < 1)
    throw ConfigError("wavelet_levels must be >= 1");
  calibration.validate();
}

PipelineConfig PipelineConfig::from_keys(const KeyValues &kv, PipelineConfig c) {
  kv.require_known({"modality", "acceleration", "rank", "lambda", "iterations", "restart",
                    "power_iterations", "step_safety", "wavelet_levels", "kernel", "threshold",
                    "crop", "weights", "output", "seed"});
  c.modality = parse_modality(kv.get_string("modality", to_string(c.modality)));
  c.acceleration = static_cast<int>(kv.get_int("acceleration", c.acceleration));
  const long rank = kv.get_int("rank", static_cast<long>(c.rank));
  if (rank < 1)
    throw ConfigError("rank must be >= 1");
  c.rank = static_cast<std::size_t>(rank);
  c.solver.lambda = kv.get_double("lambda", c.solver.lambda);
  c.solver.iterations = static_cast<int>(kv.get_int("iterations", c.solver.iterations));
  c.solver.restart = kv.get_bool("restart", c.solver.restart);
  c.solver.power_iterations =
      static_cast<int>(kv.get_int("power_iterations", c.solver.power_iterations));
  c.solver.step_safety = kv.get_double("step_safety", c.solver.step_safety);
  c.solver.wavelet_levels = static_cast<int>(kv.get_int("wavelet_levels", c.solver.wavelet_levels));
  const long kernel = kv.get_int("kernel", static_cast<long>(c.calibration.kernel_y));
  if (kernel < 1)
    throw ConfigError("kernel must be >= 1");
  c.calibration.kernel_y = c.calibration.kernel_x = static_cast<std::size_t>(kernel);
  c.calibration.threshold = kv.get_double("threshold", c.calibration.threshold);
  c.calibration.crop = kv.get_double("crop", c.calibration.crop);
  if (kv.contains("weights")) {
    const auto w = kv.get_string("weights", "");
    c.weights = w.empty() ? std::nullopt : std::optional<std::filesystem::path>(w);
  }
  c.output = kv.get_string("output", c.output.string());
  const long seed = kv.get_int("seed", static_cast<long>(c.seed));
  if (seed < 0)
    throw ConfigError("seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.solver.seed = c.seed;
  c.validate();
  return c;
}

KeyValues PipelineConfig::to_keys() const {
  KeyValues kv;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("modality", to_string(modality));
  kv.set("acceleration", std::to_string(acceleration));
  kv.set("rank", std::to_string(rank));
  kv.set("lambda", num(solver.lambda));
  kv.set("iterations", std::to_string(solver.iterations));
  kv.set("restart", solver.restart ? "true" : "false");
  kv.set("power_iterations", std::to_string(solver.power_iterations));
  kv.set("step_safety", num(solver.step_safety));
  kv.set("wavelet_levels", std::to_string(solver.wavelet_levels));
  kv.set("kernel", std::to_string(calibration.kernel_y));
  kv.set("threshold", num(calibration.threshold));
  kv.set("crop", num(calibration.crop));
  kv.set("weights", weights ? weights->string() : "");
  kv.set("output", output.string());
  kv.set("seed", std::to_string(seed));
  return kv;
}

SliceData load_slice(const std::filesystem::path &dir, Modality modality, int acceleration) {
  const auto path = dir / kspace_filename(modality, acceleration);
  if (!std::filesystem::exists(path))
    throw DataError("missing k-space archive '" + path.string() + "'");
  const auto a = Archive::load(path);
  SliceData s;
  s.kspace = to_complex(a.at("kspace"));
  if (s.kspace.rank() != 4)
    throw DataError(path.string() + ": kspace must be (contrast, coil, ky, kx)");
  s.mask.grid = to_mask(a.at("mask"));
  if (s.mask.grid.rank() != 3 || s.mask.ny() != s.kspace.dim(2) || s.mask.nx() != s.kspace.dim(3))
    throw DataError(path.string() + ": mask does not match k-space grid");
  s.mask.per_contrast = s.mask.planes() > 1;
  if (s.mask.per_contrast && s.mask.planes() != s.kspace.dim(0))
    throw DataError(path.string() + ": per-contrast mask count does not match contrasts");
  s.acceleration = static_cast<int>(to_scalars(a.at("acceleration")).at(0));
  s.mask.acceleration = s.acceleration;
  s.mask.acs_lines = static_cast<std::size_t>(to_scalars(a.at("acs_lines")).at(0));
  s.timing = to_scalars(a.at("timing"));
  if (s.timing.size() != s.kspace.dim(0))
    throw DataError(path.string() + ": timing length does not match contrasts");
  return s;
}

CArray fft_recon(const CArray &kspace, const SamplingMask &mask) {
  const std::size_t T = kspace.dim(0), Q = kspace.dim(1), ny = kspace.dim(2), nx = kspace.dim(3);
  const std::size_t P = ny * nx;
  CArray out({T, ny, nx});
  std::vector<cx> buf(P);
  for (std::size_t t = 0; t < T; ++t) {
    const auto m = mask.plane(t);
    std::vector<double> ss(P, 0.0);
    for (std::size_t q = 0; q < Q; ++q) {
      const cx *k = kspace.data() + (t * Q + q) * P;
      for (std::size_t i = 0; i < P; ++i)
        buf[i] = m[i] ? k[i] : cx{};
      ifft2c_inplace(buf, ny, nx);
      for (std::size_t i = 0; i < P; ++i)
        ss[i] += std::norm(buf[i]);
    }
    for (std::size_t i = 0; i < P; ++i)
      out[t * P + i] = std::sqrt(ss[i]);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

Reconstruction reconstruct(Method method, const SliceData &slice, const PipelineConfig &cfg,
                           const NetworkWeights *weights) {
  cfg.validate();
  if (method == Method::Drums && !weights)
    throw ConfigError("method drums needs network weights");
  const auto t_start = Clock::now();
  Reconstruction r;
  r.method = method;

  if (method == Method::Fft) {
    r.images = fft_recon(slice.kspace, slice.mask);
    r.timings.total = seconds_since(t_start);
    return r;
  }

  auto t0 = Clock::now();
  r.maps = calibrate(slice.kspace, slice.mask, cfg.calibration).maps;
  r.timings.calibration = seconds_since(t0);

  t0 = Clock::now();
  auto [x, report] = solve_espirit(slice.kspace, *r.maps, slice.mask, cfg.solver);
  r.timings.solve = seconds_since(t0);
  r.report = std::move(report);

  if (method == Method::Espirit) {
    r.images = std::move(x);
    r.timings.total = seconds_since(t_start);
    return r;
  }

  t0 = Clock::now();
  const std::size_t rank = std::min(cfg.rank, x.dim(0));
  r.basis = decompose(x, rank);
  r.prepared = prepare_basis(*r.basis);
  r.timings.svd = seconds_since(t0);

  if (method == Method::Lowrank) {
    r.images = recombine(*r.basis);
  } else {
    if (weights->arch().in_channels != static_cast<int>(2 * rank) ||
        weights->arch().out_channels != static_cast<int>(2 * rank))
      throw ConfigError("network expects " + std::to_string(weights->arch().in_channels) +
                        " channels but rank " + std::to_string(rank) + " gives " +
                        std::to_string(2 * rank));
    t0 = Clock::now();
    r.refined = refine_basis(*r.prepared, *weights);
    r.timings.inference = seconds_since(t0);
    r.images = recombine(*r.basis, &*r.refined);
  }
  r.timings.total = seconds_since(t_start);
  return r;
}

Archive basis_archive(const SubspaceBasis &basis, const PreparedBasis &p) {
  Archive a;
  a.put(make_tensor("channels", p.channels));
  a.put(make_scalars("phase", p.phase));
  a.put(make_scalars("mean", p.mean));
  a.put(make_scalars("stddev", p.stddev));
  a.put(make_scalars("offset", {static_cast<double>(p.offset_y), static_cast<double>(p.offset_x)}));
  a.put(make_scalars("grid", {static_cast<double>(p.ny), static_cast<double>(p.nx)}));
  a.put(make_tensor("spatial", basis.spatial));
  a.put(make_tensor("temporal", basis.temporal));
  a.put(make_scalars("singular_values", basis.singular_values));
  return a;
}

PreparedBasis prepared_from_archive(const Archive &a) {
  PreparedBasis p;
  p.channels = to_real(a.at("channels"));
  p.phase = to_scalars(a.at("phase"));
  p.mean = to_scalars(a.at("mean"));
  p.stddev = to_scalars(a.at("stddev"));
  const auto off = to_scalars(a.at("offset"));
  const auto grid = to_scalars(a.at("grid"));
  if (off.size() != 2 || grid.size() != 2)
    throw DataError("basis archive: offset and grid need two values");
  p.offset_y = std::lround(off[0]);
  p.offset_x = std::lround(off[1]);
  p.ny = static_cast<std::size_t>(grid[0]);
  p.nx = static_cast<std::size_t>(grid[1]);
  const std::size_t L = p.phase.size();
  if (p.channels.rank() != 3 || p.channels.dim(0) != 2 * L || p.mean.size() != 2 * L ||
      p.stddev.size() != 2 * L)
    throw DataError("basis archive: channel statistics do not match rank");
  return p;
}

std::string recon_stem(Method method, Modality modality, int acceleration) {
  return to_string(method) + "_" + to_string(modality) + "_R" + std::to_string(acceleration);
}

void write_reconstruction(const Reconstruction &r, const SliceData &slice, Modality modality,
                          const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  const auto stem = recon_stem(r.method, modality, slice.acceleration);
  write_archive({make_tensor("images", r.images), make_scalars("timing", slice.timing),
                 make_scalars("modality", {modality == Modality::T1 ? 1.0 : 2.0}),
                 make_scalars("acceleration", {static_cast<double>(slice.acceleration)})},
                dir / ("recon_" + stem + ".drum"));
  if (r.method != Method::Fft)
    write_report_csv(r.report, dir / ("solver_" + stem + ".csv"));
  if (r.basis && r.prepared) {
    auto a = basis_archive(*r.basis, *r.prepared);
    if (r.refined)
      a.put(make_tensor("refined", r.refined->channels));
    a.save(dir / ("basis_" + stem + ".drum"));
  }
}

StackFile load_stack(const std::filesystem::path &path, std::optional<Modality> modality) {
  const auto a = Archive::load(path);
  StackFile s;
  s.images = to_complex(a.at("images"));
  if (s.images.rank() != 3)
    throw DataError(path.string() + ": images must be (contrast, y, x)");
  s.timing = to_scalars(a.at("timing"));
  if (s.timing.size() != s.images.dim(0))
    throw DataError(path.string() + ": timing length does not match contrasts");
  if (modality) {
    s.modality = *modality;
  } else if (a.contains("modality")) {
    s.modality = to_scalars(a.at("modality")).at(0) == 2.0 ? Modality::T2 : Modality::T1;
  } else {
    s.modality = s.timing.size() == default_timing(Modality::T2).size() ? Modality::T2 : Modality::T1;
  }
  return s;
}

std::string map_name(Modality m) { return m == Modality::T1 ? "t1map" : "t2map"; }

Archive map_archive(const ParameterMap &map) {
  Archive a;
  a.put(make_tensor(map_name(map.modality), map.value));
  a.put(make_tensor("m0", map.m0));
  a.put(make_tensor("a", map.a));
  if (map.modality == Modality::T1) {
    a.put(make_tensor("b", map.b));
    a.put(make_tensor("t_star", map.t_star));
  }
  a.put(make_tensor("residual", map.residual));
  a.put(make_tensor("flags", map.flags));
  return a;
}

std::vector<MetricRow> evaluate(const StackFile &test, const StackFile &ref, const MaskArray *roi,
                                const MetricRow &proto,
                                const std::optional<std::filesystem::path> &png_dir) {
  require_shape(test.images.shape(), ref.images.shape(), "evaluate");
  if (test.modality != ref.modality)
    throw DataError("evaluate: test and reference modalities differ");
  const RArray tm = magnitude(test.images), rm = magnitude(ref.images);
  const std::size_t T = tm.dim(0), ny = tm.dim(1), nx = tm.dim(2);
  if (png_dir)
    std::filesystem::create_directories(*png_dir);

  auto plane = [&](const RArray &stack, std::size_t t) {
    RArray p({ny, nx});
    std::copy_n(stack.data() + t * ny * nx, ny * nx, p.data());
    return p;
  };
  auto panel = [&](const RArray &a, const RArray &b, double lo, double hi, const std::string &name) {
    RArray d(a.shape());
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = std::abs(a[i] - b[i]) + lo;
    write_png(tile_horizontal({a, b, d}, lo), lo, hi, *png_dir / (name + ".png"));
  };

  std::vector<MetricRow> rows;
  double ref_peak = 0.0;
  for (std::size_t i = 0; i < rm.size(); ++i)
    ref_peak = std::max(ref_peak, rm[i]);
  for (std::size_t t = 0; t < T; ++t) {
    MetricRow p = proto;
    p.target = "contrast" + std::to_string(t);
    const auto a = plane(tm, t), b = plane(rm, t);
    auto r = all_metrics(a, b, roi, p);
    rows.insert(rows.end(), r.begin(), r.end());
    if (png_dir && ref_peak > 0.0)
      panel(a, b, 0.0, ref_peak, p.target);
  }

  const auto fit_test = fit_map(test.images, test.timing, test.modality);
  const auto fit_ref = fit_map(ref.images, ref.timing, ref.modality);
  const double upper = test.modality == Modality::T1 ? 2500.0 : kT2Upper;
  for (const auto &[name, a, b, hi] :
       {std::tuple{map_name(test.modality), &fit_test.value, &fit_ref.value, upper},
        std::tuple{std::string("m0"), &fit_test.m0, &fit_ref.m0, 1.0}}) {
    MetricRow p = proto;
    p.target = name;
    auto r = all_metrics(*a, *b, roi, p);
    rows.insert(rows.end(), r.begin(), r.end());
    if (png_dir)
      panel(*a, *b, 0.0, hi, name);
  }
  return rows;
}

std::optional<MaskArray> roi_from_truth(const std::filesystem::path &truth, const std::string &name) {
  if (name == "full")
    return std::nullopt;
  const auto a = Archive::load(truth);
  const MaskArray labels = to_mask(a.at("labels"));
  MaskArray roi(labels.shape());
  if (name == "support") {
    for (std::size_t i = 0; i < roi.size(); ++i)
      roi[i] = labels[i] != 0;
    return roi;
  }
  const auto names = default_compartments();
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k].label == name) {
      for (std::size_t i = 0; i < roi.size(); ++i)
        roi[i] = labels[i] == k + 1;
      return roi;
    }
  throw ConfigError("unknown ROI '" + name + "'");
}

std::vector<SummaryRow> summarise(const std::vector<MetricRow> &rows) {
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto &r : rows) {
    const std::string target = r.target.rfind("contrast", 0) == 0 ? "contrast" : r.target;
    auto &g = groups[{r.method, r.acceleration, target, r.metric}];
    if (std::isfinite(r.value))
      g.push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto &[k, v] : groups) {
    SummaryRow s{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k)};
    s.count = v.size();
    if (!v.empty()) {
      double sum = 0.0;
      for (double x : v)
        sum += x;
      s.mean = sum / v.size();
      double ss = 0.0;
      for (double x : v)
        ss += (x - s.mean) * (x - s.mean);
      s.stddev = std::sqrt(ss / v.size());
    } else {
      s.mean = s.stddev = std::nan("");
    }
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::vector<SummaryRow> &rows, const std::filesystem::path &path) {
  std::ofstream os(path);
  if (!os)
    throw DataError("cannot write '" + path.string() + "'");
  os.precision(10);
  os << "method,R,target,metric,mean,std,count\n";
  for (const auto &r : rows)
    os << r.method << ',' << r.acceleration << ',' << r.target << ',' << r.metric << ','
       << r.mean << ',' << r.stddev << ',' << r.count << '\n';
}

std::vector<std::filesystem::path> find_slices(const std::filesystem::path &root) {
  if (!std::filesystem::is_directory(root))
    throw DataError("'" + root.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  if (std::filesystem::exists(root / kCoilsFilename))
    out.push_back(root);
  for (const auto &e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / kCoilsFilename))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace drums
