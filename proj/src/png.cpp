#include "drums/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace drums {

void write_png(const RArray &image, double lo, double hi, const std::filesystem::path &path) {
  if (image.rank() != 2)
    throw DataError("write_png: expected a 2-D image");
  if (!(hi > lo))
    throw ConfigError("write_png: empty display window");
  const std::size_t H = image.dim(0), W = image.dim(1);
  std::vector<png_byte> pixels(H * W);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::isfinite(image[i]) ? (image[i] - lo) / (hi - lo) : 0.0;
    pixels[i] = static_cast<png_byte>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  }

  std::unique_ptr<FILE, int (*)(FILE *)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp)
    throw DataError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < H; ++y)
    png_write_row(png, pixels.data() + y * W);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RArray tile_horizontal(const std::vector<RArray> &images, double separator) {
  if (images.empty())
    throw DataError("tile_horizontal: no images");
  const std::size_t H = images[0].dim(0), W = images[0].dim(1), n = images.size();
  RArray out({H, n * W + (n - 1)}, separator);
  for (std::size_t k = 0; k < n; ++k) {
    require_shape(images[k].shape(), images[0].shape(), "tile_horizontal");
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        out(y, k * (W + 1) + x) = images[k](y, x);
  }
  return out;
}

} // namespace drums
