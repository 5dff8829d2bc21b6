#pragma once

#include "drums/core.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace drums {

/// Image-quality metrics on real 2-D images, optionally restricted to a ROI
/// mask. Complex images should be reduced with magnitude() first.
///
/// nrmse = ||test - ref|| / ||ref||, nmse = nrmse^2, psnr uses the reference
/// maximum over the ROI as peak. SSIM uses a uniform 5x5 window, population
/// statistics, and C1 = (0.01 D)^2, C2 = (0.03 D)^2 with D the joint dynamic
/// range of both images over the ROI; local values are averaged over windows
/// that lie entirely inside the ROI.
double nrmse(const RArray &test, const RArray &ref, const MaskArray *roi = nullptr);
double nmse(const RArray &test, const RArray &ref, const MaskArray *roi = nullptr);
/// +infinity when the images agree exactly.
double psnr(const RArray &test, const RArray &ref, const MaskArray *roi = nullptr);
double ssim(const RArray &test, const RArray &ref, const MaskArray *roi = nullptr,
            std::size_t window = 5);

struct MetricRow {
  std::string subject;
  std::string slice;
  std::string target; // "contrast3", "t1map", ...
  std::string metric; // NRMSE | NMSE | PSNR | SSIM
  std::string acceleration;
  std::string method;
  std::string roi; // "full" or "mask"
  double value = 0.0;

  bool operator==(const MetricRow &) const = default;
};

/// NRMSE, NMSE, PSNR, SSIM for one image pair, in that order.
std::vector<MetricRow> all_metrics(const RArray &test, const RArray &ref, const MaskArray *roi,
                                   const MetricRow &prototype);

void write_metrics_csv(const std::vector<MetricRow> &rows, const std::filesystem::path &path);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path &path);

} // namespace drums
