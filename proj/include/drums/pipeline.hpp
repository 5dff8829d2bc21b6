#pragma once

#include "drums/config.hpp"
#include "drums/cs_solver.hpp"
#include "drums/espirit.hpp"
#include "drums/fitting.hpp"
#include "drums/metrics.hpp"
#include "drums/refiner.hpp"
#include "drums/subspace.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace drums {

enum class Method { Fft, Espirit, Lowrank, Drums };

std::string to_string(Method m);
Method parse_method(const std::string &s);

struct PipelineConfig {
  Modality modality = Modality::T1;
  int acceleration = 4;
  std::size_t rank = 3;
  SolverConfig solver;
  CalibrationConfig calibration;
  std::optional<std::filesystem::path> weights;
  std::filesystem::path output = "out";
  std::uint64_t seed = 1;

  void validate() const;
  /// Overlay keys from a config file onto `base`; unknown keys are rejected.
  static PipelineConfig from_keys(const KeyValues &kv, PipelineConfig base);
  KeyValues to_keys() const;
};

/// One undersampled acquisition of one slice.
struct SliceData {
  CArray kspace; // (Nt, Q, Ny, Nx)
  SamplingMask mask;
  std::vector<double> timing;
  int acceleration = 1;
};

SliceData load_slice(const std::filesystem::path &dir, Modality modality, int acceleration);

struct StageTimings {
  double calibration = 0.0;
  double solve = 0.0;
  double svd = 0.0;
  double inference = 0.0;
  double total = 0.0;
};

struct Reconstruction {
  Method method = Method::Fft;
  CArray images; // (Nt, Ny, Nx)
  SolveReport report;
  StageTimings timings;
  std::optional<SensitivityMaps> maps;
  std::optional<SubspaceBasis> basis;
  std::optional<PreparedBasis> prepared; // network input
  std::optional<PreparedBasis> refined;  // network output (drums)
};

/// Zero-filled inverse FFT per coil combined by root-sum-of-squares.
CArray fft_recon(const CArray &kspace, const SamplingMask &mask);

/// Runs one method on one slice. `weights` is required for Method::Drums.
Reconstruction reconstruct(Method method, const SliceData &slice, const PipelineConfig &cfg,
                           const NetworkWeights *weights = nullptr);

/// Archive entries "channels", "phase", "mean", "stddev", "offset", "grid" plus
/// the full basis ("spatial", "temporal", "singular_values").
Archive basis_archive(const SubspaceBasis &basis, const PreparedBasis &prepared);
PreparedBasis prepared_from_archive(const Archive &archive);

std::string recon_stem(Method method, Modality modality, int acceleration);

/// recon_<stem>.drum (images, timing, modality, acceleration), solver_<stem>.csv
/// for iterative methods and basis_<stem>.drum for subspace methods.
void write_reconstruction(const Reconstruction &r, const SliceData &slice, Modality modality,
                          const std::filesystem::path &dir);

struct StackFile {
  CArray images;
  std::vector<double> timing;
  Modality modality = Modality::T1;
};
/// Reads "images" and "timing" from a reconstruction or phantom truth archive.
StackFile load_stack(const std::filesystem::path &path, std::optional<Modality> modality = {});

/// Entries "<t1map|t2map>", "m0", "a", "b", "t_star", "residual", "flags".
Archive map_archive(const ParameterMap &map);
std::string map_name(Modality m);

/// Metrics per contrast (target "contrast<j>") and per fitted map (parameter
/// map and m0), all on magnitudes. Optionally writes PNG panels
/// (test | reference | |difference|) with fixed windows per modality.
std::vector<MetricRow> evaluate(const StackFile &test, const StackFile &ref, const MaskArray *roi,
                                const MetricRow &prototype,
                                const std::optional<std::filesystem::path> &png_dir = {});

/// ROI by name from phantom labels: "full" (none), "support" or a compartment label.
std::optional<MaskArray> roi_from_truth(const std::filesystem::path &truth, const std::string &name);

struct SummaryRow {
  std::string method;
  std::string acceleration;
  std::string target; // "contrast" (all contrasts pooled) or a map name
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

/// Mean and population std per (method, R, target class, metric); infinite values are skipped.
std::vector<SummaryRow> summarise(const std::vector<MetricRow> &rows);
void write_summary_csv(const std::vector<SummaryRow> &rows, const std::filesystem::path &path);

/// Slice directories (those holding coils.drum) at or below `root`, sorted.
std::vector<std::filesystem::path> find_slices(const std::filesystem::path &root);

} // namespace drums
