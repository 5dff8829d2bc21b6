// Command-line front end: phantom, recon, fit, eval, report, weights.

#include "drums/log.hpp"
#include "drums/phantom.hpp"
#include "drums/pipeline.hpp"
#include "drums/png.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace drums;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

void write_manifest(const fs::path &path, json body) {
  body["version"] = kVersion;
  std::ofstream os(path);
  if (!os)
    throw DataError("cannot write '" + path.string() + "'");
  os << body.dump(2) << '\n';
}

json keys_json(const KeyValues &kv) {
  json j = json::object();
  for (const auto &[k, v] : kv.values())
    j[k] = v;
  return j;
}

std::vector<Modality> parse_modalities(const std::vector<std::string> &names) {
  std::vector<Modality> out;
  for (const auto &n : names)
    out.push_back(parse_modality(n));
  return out;
}

// phantom ---------------------------------------------------------------

struct PhantomArgs {
  fs::path out;
  std::size_t subjects = 1;
  std::size_t slices = 1;
  std::size_t size = 192;
  std::size_t coils = 8;
  double noise = 0.002;
  double jitter = -1.0; // auto: 0.05 for multi-slice corpora, 0 otherwise
  std::uint64_t seed = 1;
  std::vector<int> accelerations{4, 8, 10};
  std::vector<std::string> modalities{"T1", "T2"};
  bool time_varying = false;
};

int run_phantom(const PhantomArgs &a) {
  DatasetOptions opt;
  opt.accelerations = a.accelerations;
  opt.modalities = parse_modalities(a.modalities);
  opt.time_varying = a.time_varying;
  json slices = json::array();
  for (std::size_t s = 0; s < a.subjects; ++s)
    for (std::size_t z = 0; z < a.slices; ++z) {
      PhantomSpec spec;
      spec.ny = spec.nx = a.size;
      spec.coils = a.coils;
      spec.noise = a.noise;
      spec.seed = a.seed * 10007 + s * 101 + z;
      spec.jitter = a.jitter >= 0.0 ? a.jitter : (a.subjects * a.slices > 1 ? 0.05 : 0.0);
      char name[64];
      std::snprintf(name, sizeof name, "subject%03zu/slice%02zu", s, z);
      write_dataset(spec, opt, a.out / name);
      slices.push_back({{"dir", name}, {"seed", spec.seed}});
    }
  json accel = a.accelerations;
  write_manifest(a.out / "manifest_phantom.json",
                 {{"command", "phantom"},
                  {"size", a.size},
                  {"coils", a.coils},
                  {"noise", a.noise},
                  {"jitter", a.jitter},
                  {"seed", a.seed},
                  {"accelerations", accel},
                  {"modalities", a.modalities},
                  {"time_varying", a.time_varying},
                  {"slices", slices}});
  std::cout << "wrote " << slices.size() << " slice(s) to " << a.out << '\n';
  return 0;
}

// recon -----------------------------------------------------------------

struct ReconArgs {
  std::string method = "espirit";
  fs::path dataset;
  fs::path config;
  std::string modality;
  std::optional<int> acceleration;
  std::optional<long> rank;
  fs::path weights;
  fs::path out;
  std::optional<double> lambda;
  std::optional<int> iterations;
};

int run_recon(const ReconArgs &a) {
  PipelineConfig cfg;
  if (!a.config.empty())
    cfg = PipelineConfig::from_keys(KeyValues::load(a.config), cfg);
  if (!a.modality.empty())
    cfg.modality = parse_modality(a.modality);
  if (a.acceleration)
    cfg.acceleration = *a.acceleration;
  if (a.rank) {
    if (*a.rank < 1)
      throw ConfigError("rank must be >= 1");
    cfg.rank = static_cast<std::size_t>(*a.rank);
  }
  if (!a.weights.empty())
    cfg.weights = a.weights;
  if (!a.out.empty())
    cfg.output = a.out;
  if (a.lambda)
    cfg.solver.lambda = *a.lambda;
  if (a.iterations)
    cfg.solver.iterations = *a.iterations;
  cfg.validate();
  const Method method = parse_method(a.method);

  std::optional<NetworkWeights> weights;
  if (method == Method::Drums) {
    if (!cfg.weights)
      throw ConfigError("recon --method drums needs --weights or 'weights' in the config");
    weights = load_weights(*cfg.weights);
  }

  const auto slices = find_slices(a.dataset);
  if (slices.empty())
    throw DataError("no slice directories under '" + a.dataset.string() + "'");

  std::vector<json> records(slices.size());
  std::vector<std::string> errors(slices.size());
  const auto stem = recon_stem(method, cfg.modality, cfg.acceleration);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < slices.size(); ++i) {
    try {
      const auto rel = fs::relative(slices[i], a.dataset);
      const auto slice = load_slice(slices[i], cfg.modality, cfg.acceleration);
      const auto r = reconstruct(method, slice, cfg, weights ? &*weights : nullptr);
      const auto dir = cfg.output / rel;
      write_reconstruction(r, slice, cfg.modality, dir);
      records[i] = {{"slice", rel.string()},
                    {"output", (dir / ("recon_" + stem + ".drum")).string()},
                    {"iterations", r.report.iterations},
                    {"restarts", r.report.restarts},
                    {"final_residual", r.report.final_residual},
                    {"seconds",
                     {{"calibration", r.timings.calibration},
                      {"solve", r.timings.solve},
                      {"svd", r.timings.svd},
                      {"inference", r.timings.inference},
                      {"total", r.timings.total}}}};
    } catch (const std::exception &e) {
      errors[i] = slices[i].string() + ": " + e.what();
    }
  }
  for (std::size_t i = 0; i < slices.size(); ++i)
    if (!errors[i].empty())
      throw DataError(errors[i]);

  fs::create_directories(cfg.output);
  write_manifest(cfg.output / ("manifest_recon_" + stem + ".json"),
                 {{"command", "recon"},
                  {"method", a.method},
                  {"dataset", a.dataset.string()},
                  {"config", keys_json(cfg.to_keys())},
                  {"slices", records}});
  for (const auto &r : records)
    std::cout << r["slice"].get<std::string>() << "  " << stem << "  "
              << r["seconds"]["total"].get<double>() << " s\n";
  return 0;
}

// fit -------------------------------------------------------------------

struct FitArgs {
  fs::path recon;
  fs::path out;
  std::string modality;
  fs::path png;
};

int run_fit(const FitArgs &a) {
  std::optional<Modality> m;
  if (!a.modality.empty())
    m = parse_modality(a.modality);
  const auto stack = load_stack(a.recon, m);
  const auto map = fit_map(stack.images, stack.timing, stack.modality);
  if (a.out.has_parent_path())
    fs::create_directories(a.out.parent_path());
  map_archive(map).save(a.out);
  if (!a.png.empty())
    write_png(map.value, 0.0, stack.modality == Modality::T1 ? 2500.0 : kT2Upper, a.png);
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < map.flags.size(); ++i)
    flagged += map.flags[i] & (kFitAtBound | kFitNonConvergent) ? 1 : 0;
  std::cout << map_name(stack.modality) << " written to " << a.out << " (" << flagged
            << " voxel(s) at bound or non-convergent)\n";
  return 0;
}

// eval ------------------------------------------------------------------

struct EvalArgs {
  fs::path recon;
  fs::path reference;
  fs::path results;
  fs::path dataset;
  fs::path labels;
  std::string roi = "full";
  fs::path out = "metrics.csv";
  fs::path png;
  std::string subject = "-", slice = "-", method, acceleration;
};

// recon_<method>_<mod>_R<r>.drum -> (method, R)
std::pair<std::string, std::string> parse_stem(const fs::path &p) {
  std::string s = p.stem().string();
  if (s.rfind("recon_", 0) == 0)
    s = s.substr(6);
  const auto u1 = s.find('_'), u2 = s.rfind("_R");
  if (u1 == std::string::npos || u2 == std::string::npos)
    return {s, "?"};
  return {s.substr(0, u1), s.substr(u2 + 2)};
}

int run_eval(const EvalArgs &a) {
  std::vector<MetricRow> rows;
  if (!a.results.empty()) {
    // Batch mode: every reconstruction under results against the fully
    // sampled ESPIRiT reconstruction of the same slice (phantom truth if absent).
    if (a.dataset.empty())
      throw ConfigError("eval --results needs --dataset");
    for (const auto &dir : find_slices(a.dataset)) {
      const auto rel = fs::relative(dir, a.dataset);
      const auto rdir = a.results / rel;
      if (!fs::is_directory(rdir))
        continue;
      std::vector<fs::path> recons;
      for (const auto &e : fs::directory_iterator(rdir))
        if (e.path().extension() == ".drum" && e.path().stem().string().rfind("recon_", 0) == 0)
          recons.push_back(e.path());
      std::sort(recons.begin(), recons.end());
      for (const auto &rp : recons) {
        const auto test = load_stack(rp);
        const auto ref_path = rdir / ("recon_" + recon_stem(Method::Espirit, test.modality, 1) + ".drum");
        const auto truth = dir / truth_filename(test.modality);
        const auto ref = load_stack(fs::exists(ref_path) ? ref_path : truth, test.modality);
        const auto roi = roi_from_truth(truth, a.roi);
        const auto [method, r] = parse_stem(rp);
        if (r == "1" && method == "espirit" && fs::exists(ref_path))
          continue;
        MetricRow proto;
        proto.subject = rel.parent_path().string();
        proto.slice = rel.filename().string();
        proto.method = method;
        proto.acceleration = r;
        std::optional<fs::path> png;
        if (!a.png.empty())
          png = a.png / rel / rp.stem();
        const auto got = evaluate(test, ref, roi ? &*roi : nullptr, proto, png);
        rows.insert(rows.end(), got.begin(), got.end());
      }
    }
  } else {
    if (a.recon.empty() || a.reference.empty())
      throw ConfigError("eval needs --recon and --reference (or --results and --dataset)");
    const auto test = load_stack(a.recon);
    const auto ref = load_stack(a.reference, test.modality);
    std::optional<MaskArray> roi;
    if (a.roi != "full") {
      if (a.labels.empty())
        throw ConfigError("--roi " + a.roi + " needs --labels <truth archive>");
      roi = roi_from_truth(a.labels, a.roi);
    }
    const auto [method, r] = parse_stem(a.recon);
    MetricRow proto;
    proto.subject = a.subject;
    proto.slice = a.slice;
    proto.method = a.method.empty() ? method : a.method;
    proto.acceleration = a.acceleration.empty() ? r : a.acceleration;
    std::optional<fs::path> png;
    if (!a.png.empty())
      png = a.png;
    rows = evaluate(test, ref, roi ? &*roi : nullptr, proto, png);
  }
  if (a.out.has_parent_path())
    fs::create_directories(a.out.parent_path());
  write_metrics_csv(rows, a.out);
  std::cout << rows.size() << " metric row(s) written to " << a.out << '\n';
  return 0;
}

// report ----------------------------------------------------------------

struct ReportArgs {
  std::vector<fs::path> inputs;
  fs::path out = "summary.csv";
};

int run_report(const ReportArgs &a) {
  std::vector<MetricRow> rows;
  for (const auto &p : a.inputs) {
    const auto r = read_metrics_csv(p);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto summary = summarise(rows);
  write_summary_csv(summary, a.out);
  std::printf("%-8s %-4s %-10s %-6s %12s %12s %6s\n", "method", "R", "target", "metric", "mean",
              "std", "n");
  for (const auto &s : summary)
    std::printf("%-8s %-4s %-10s %-6s %12.6g %12.6g %6zu\n", s.method.c_str(),
                s.acceleration.c_str(), s.target.c_str(), s.metric.c_str(), s.mean, s.stddev,
                s.count);
  return 0;
}

// weights ---------------------------------------------------------------

struct WeightsArgs {
  std::string init;
  fs::path out;
  fs::path input;
  fs::path parity;
  std::uint64_t seed = 1;
  int levels = 4;
  int filters = 64;
  int channels = 6;
  double tolerance = 1e-4;
};

int run_weights(const WeightsArgs &a) {
  if (!a.init.empty()) {
    if (a.out.empty())
      throw ConfigError("weights --init needs --out");
    UNetArch arch;
    arch.levels = a.levels;
    arch.base_filters = a.filters;
    arch.in_channels = arch.out_channels = a.channels;
    NetworkWeights w;
    if (a.init == "zero")
      w = zero_weights(arch);
    else if (a.init == "identity")
      w = identity_weights(arch);
    else if (a.init == "random")
      w = random_weights(arch, a.seed);
    else
      throw ConfigError("unknown weight initialisation '" + a.init +
                        "' (expected zero, identity or random)");
    if (a.out.has_parent_path())
      fs::create_directories(a.out.parent_path());
    save_weights(w, a.out);
    std::cout << "wrote " << a.out << " (" << w.parameter_count() << " trainable parameters)\n";
    return 0;
  }
  if (a.input.empty())
    throw ConfigError("weights needs --init or -i/--input");
  const auto w = load_weights(a.input);
  std::cout << "levels " << w.arch().levels << ", base filters " << w.arch().base_filters
            << ", channels " << w.arch().in_channels << " -> " << w.arch().out_channels << '\n'
            << "trainable parameters " << w.parameter_count() << " (layer arithmetic "
            << parameter_count(w.arch()) << ")\n";
  if (a.parity.empty())
    return 0;
  const auto rep = check_parity(Archive::load(a.parity), w);
  for (const auto &[stage, m] : rep.stage_max_abs)
    std::printf("%-8s max |diff| %.3e\n", stage.c_str(), m);
  const bool ok = rep.output_max_abs <= a.tolerance;
  std::printf("parity %s (output max |diff| %.3e, tolerance %.1e)\n", ok ? "ok" : "FAILED",
              rep.output_max_abs, a.tolerance);
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Accelerated cardiac T1/T2 mapping: subspace reconstruction with learned basis "
               "refinement"};
  app.require_subcommand(1);
  bool verbose = false;
  int threads = 0;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_option("-j,--threads", threads, "Worker threads (default: all cores)");

  PhantomArgs pa;
  auto *ph = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
  ph->add_option("-o,--out", pa.out, "Output directory")->required();
  ph->add_option("--subjects", pa.subjects, "Number of subjects");
  ph->add_option("--slices", pa.slices, "Slices per subject");
  ph->add_option("--size", pa.size, "Grid size (square)");
  ph->add_option("--coils", pa.coils, "Receive coils");
  ph->add_option("--noise", pa.noise, "k-space noise std relative to peak proton density");
  ph->add_option("--jitter", pa.jitter, "Relative per-slice perturbation of geometry and tissue");
  ph->add_option("--seed", pa.seed, "Base seed");
  ph->add_option("--accel", pa.accelerations, "Acceleration factors")->delimiter(',');
  ph->add_option("--modality", pa.modalities, "Modalities (T1, T2)")->delimiter(',');
  ph->add_flag("--time-varying", pa.time_varying, "Draw pseudorandom lines per contrast");

  ReconArgs ra;
  auto *rc = app.add_subcommand("recon", "Reconstruct every slice of a dataset");
  rc->add_option("-m,--method", ra.method, "fft | espirit | lowrank | drums")->required();
  rc->add_option("-d,--dataset", ra.dataset, "Dataset root or slice directory")->required();
  rc->add_option("-c,--config", ra.config, "key = value config file");
  rc->add_option("--modality", ra.modality, "T1 or T2");
  rc->add_option("-R,--accel", ra.acceleration, "Acceleration factor (1 = fully sampled)");
  rc->add_option("--rank", ra.rank, "Subspace rank L");
  rc->add_option("-w,--weights", ra.weights, "Network weight archive (drums)");
  rc->add_option("-o,--out", ra.out, "Output root");
  rc->add_option("--lambda", ra.lambda, "Wavelet regularisation weight");
  rc->add_option("--iterations", ra.iterations, "FISTA iterations");

  FitArgs fa;
  auto *ft = app.add_subcommand("fit", "Fit a T1 or T2 map to a reconstruction");
  ft->add_option("-i,--recon", fa.recon, "Reconstruction or truth archive")->required();
  ft->add_option("-o,--out", fa.out, "Output map archive")->required();
  ft->add_option("--modality", fa.modality, "Override the archive's modality");
  ft->add_option("--png", fa.png, "Also render the map");

  EvalArgs ea;
  auto *ev = app.add_subcommand("eval", "Image and map metrics against a reference");
  ev->add_option("--recon", ea.recon, "Reconstruction archive");
  ev->add_option("--reference", ea.reference, "Reference archive");
  ev->add_option("--results", ea.results, "Batch mode: recon output root");
  ev->add_option("--dataset", ea.dataset, "Batch mode: dataset root");
  ev->add_option("--roi", ea.roi, "full | support | <compartment>");
  ev->add_option("--labels", ea.labels, "Truth archive providing ROI labels");
  ev->add_option("-o,--out", ea.out, "Metrics CSV");
  ev->add_option("--png", ea.png, "Directory for PNG panels");
  ev->add_option("--subject", ea.subject);
  ev->add_option("--slice", ea.slice);
  ev->add_option("--method", ea.method);
  ev->add_option("-R,--accel", ea.acceleration);

  ReportArgs rp;
  auto *rep = app.add_subcommand("report", "Aggregate metric CSVs");
  rep->add_option("inputs", rp.inputs, "Metric CSV files")->required();
  rep->add_option("-o,--out", rp.out, "Summary CSV");

  WeightsArgs wa;
  auto *wt = app.add_subcommand("weights", "Create, inspect or parity-check network weights");
  wt->add_option("--init", wa.init, "Create weights: zero | identity | random");
  wt->add_option("-o,--out", wa.out, "Output weight archive (with --init)");
  wt->add_option("--seed", wa.seed, "Seed for random weights");
  wt->add_option("--levels", wa.levels, "Down/up sampling levels");
  wt->add_option("--filters", wa.filters, "Filters at the first level");
  wt->add_option("--channels", wa.channels, "Input and output channels (2L)");
  wt->add_option("-i,--input", wa.input, "Weight archive to inspect");
  wt->add_option("--parity", wa.parity, "Forward-pass dump to compare against");
  wt->add_option("--tolerance", wa.tolerance, "Parity tolerance on the output (max abs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  log::set_level(verbose ? log::Level::Info : log::Level::Warn);
  if (threads > 0)
    omp_set_num_threads(threads);

  try {
    if (*ph)
      return run_phantom(pa);
    if (*rc)
      return run_recon(ra);
    if (*ft)
      return run_fit(fa);
    if (*ev)
      return run_eval(ea);
    if (*rep)
      return run_report(rp);
    if (*wt)
      return run_weights(wa);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
