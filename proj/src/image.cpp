#include "spritegan/image.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>

namespace sprite {

Image8 crop(const Image8& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.h || x0 + w > src.w)
    throw config_error("crop out of bounds");
  Image8 out(h, w, src.c);
  for (int y = 0; y < h; ++y)
    std::memcpy(&out.px[static_cast<size_t>(y) * w * src.c],
                &src.px[((static_cast<size_t>(y0) + y) * src.w + x0) * src.c],
                static_cast<size_t>(w) * src.c);
  return out;
}

Image8 hmirror(const Image8& src) {
  Image8 out(src.h, src.w, src.c);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x)
      for (int ch = 0; ch < src.c; ++ch)
        out.at(y, x, ch) = src.at(y, src.w - 1 - x, ch);
  return out;
}

Image8 resize_nearest(const Image8& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw config_error("resize to empty size");
  Image8 out(out_h, out_w, src.c);
  for (int y = 0; y < out_h; ++y) {
    int sy = std::min(static_cast<int>(static_cast<int64_t>(y) * src.h / out_h),
                      src.h - 1);
    for (int x = 0; x < out_w; ++x) {
      int sx = std::min(
          static_cast<int>(static_cast<int64_t>(x) * src.w / out_w), src.w - 1);
      for (int ch = 0; ch < src.c; ++ch) out.at(y, x, ch) = src.at(sy, sx, ch);
    }
  }
  return out;
}

Image8 upscale(const Image8& src, int scale) {
  if (scale < 1) throw config_error("upscale factor must be >= 1");
  return resize_nearest(src, src.h * scale, src.w * scale);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw io_error("cannot open PNG for reading: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("png_create_info_struct failed");
  }

  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("failed to decode PNG: " + path);
  }

  png_init_io(png, f.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  img = Image8(static_cast<int>(h), static_cast<int>(w), channels);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.px.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const Image8& img, const std::string& path) {
  if (img.c != 1 && img.c != 3 && img.c != 4)
    throw config_error("save_png: unsupported channel count " +
                       std::to_string(img.c));
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw io_error("cannot open PNG for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("failed to encode PNG: " + path);
  }

  png_init_io(png, f.get());
  int color = img.c == 1   ? PNG_COLOR_TYPE_GRAY
              : img.c == 3 ? PNG_COLOR_TYPE_RGB
                           : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, img.w, img.h, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y)
    rows[y] = const_cast<png_bytep>(img.px.data() +
                                    static_cast<size_t>(y) * img.w * img.c);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace sprite
