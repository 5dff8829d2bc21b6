#pragma once

#include "drums/encoding.hpp"
#include "drums/fitting.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace drums {

/// Filled ellipse in normalised coordinates: centre and radii are fractions of
/// the half-FOV, angle in radians. Later compartments paint over earlier ones.
struct Compartment {
  std::string label;
  double cy = 0.0, cx = 0.0;
  double ry = 0.0, rx = 0.0;
  double angle = 0.0;
  double t1 = 0.0; // ms
  double t2 = 0.0; // ms
  double pd = 0.0; // proton density in [0, 1]
};

/// Thorax-like default: body fat, skeletal muscle, myocardium, LV and RV blood.
std::vector<Compartment> default_compartments();

struct PhantomSpec {
  std::size_t ny = 192;
  std::size_t nx = 192;
  std::vector<Compartment> compartments = default_compartments();
  std::size_t coils = 8;
  /// k-space noise std relative to the maximum proton density.
  double noise = 0.0;
  std::uint64_t seed = 1;
  /// Relative random perturbation of geometry and tissue values (subject variety).
  double jitter = 0.0;
  /// Coil lobe centres sit on a ring of this radius (fraction of half-FOV).
  double coil_ring = 1.1;
  /// Gaussian lobe width as a fraction of min(ny, nx).
  double coil_width = 0.35;
  /// Linear phase slope across each lobe, radians per pixel.
  double coil_phase_slope = 0.01;

  void validate() const;
};

/// Compartment actually used after jitter is applied.
std::vector<Compartment> realised_compartments(const PhantomSpec &spec);

struct PhantomTruth {
  Modality modality = Modality::T1;
  std::vector<double> timing;
  CArray images; // (Nt, Ny, Nx)
  RArray param;  // T1 or T2 (ms), 0 outside
  RArray pd;     // proton density A
  MaskArray labels; // compartment index + 1, 0 background
  std::vector<std::string> label_names;

  MaskArray support() const;
  MaskArray compartment(const std::string &name) const;
};

/// Signal models: T1 |A - 2A exp(-TI/T1)|, T2 A exp(-t/T2).
double t1_signal(double a, double t1, double ti);
double t2_signal(double a, double t2, double tprep);

PhantomTruth generate_truth(const PhantomSpec &spec, Modality modality);
PhantomTruth generate_truth(const PhantomSpec &spec, Modality modality,
                            const std::vector<double> &timing);

/// Smooth Gaussian-lobe coil profiles, normalised to unit sum of squares on
/// every pixel. The support is the phantom's non-background region.
SensitivityMaps simulate_coils(const PhantomSpec &spec);

/// Upper bound on the per-pixel finite difference of any simulated map,
/// derived from lobe widths, ring geometry and phase slope.
double coil_gradient_bound(const PhantomSpec &spec);

/// sense_forward(truth) plus complex white Gaussian noise of the given std
/// (E|n|^2 = std^2) on sampled positions.
CArray acquire(const CArray &truth, const SensitivityMaps &maps, const SamplingMask &mask,
               double noise_std, std::uint64_t seed);

/// Undersampling pattern for the phantom sequences: every-R lines, 24 ACS
/// lines and the modality's partial Fourier fraction (none at R = 1).
SamplingMask phantom_mask(const PhantomSpec &spec, Modality modality, int acceleration,
                          bool time_varying = false, std::size_t contrasts = 1);

double partial_fourier_fraction(Modality modality);

struct DatasetOptions {
  std::vector<int> accelerations{4, 8, 10};
  std::vector<Modality> modalities{Modality::T1, Modality::T2};
  bool time_varying = false;
};

/// Writes one dataset slice directory:
///   coils.drum                maps, support
///   truth_<mod>.drum          images, param, pd, labels, timing
///   kspace_<mod>_R<r>.drum    kspace, mask, acceleration, acs_lines, timing (R = 1 is full)
void write_dataset(const PhantomSpec &spec, const DatasetOptions &opt,
                   const std::filesystem::path &dir);

std::string kspace_filename(Modality m, int acceleration);
std::string truth_filename(Modality m);
inline constexpr const char *kCoilsFilename = "coils.drum";

} // namespace drums
