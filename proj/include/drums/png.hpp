#pragma once

#include "drums/core.hpp"

#include <filesystem>

namespace drums {

/// 8-bit grayscale PNG of a 2-D image windowed linearly to [lo, hi].
void write_png(const RArray &image, double lo, double hi, const std::filesystem::path &path);

/// Images of equal shape side by side with a one-pixel separator.
RArray tile_horizontal(const std::vector<RArray> &images, double separator = 0.0);

} // namespace drums
