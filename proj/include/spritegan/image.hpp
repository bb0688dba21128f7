#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spritegan/common.hpp"

namespace sprite {

// 8-bit interleaved image, row-major HWC. c is 3 (RGB) or 4 (RGBA) for
// sprites; 1 is allowed for masks.
struct Image8 {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> px;

  Image8() = default;
  Image8(int h_, int w_, int c_, uint8_t fill = 0)
      : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, fill) {}

  uint8_t& at(int y, int x, int ch) {
    return px[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  uint8_t at(int y, int x, int ch) const {
    return px[(static_cast<size_t>(y) * w + x) * c + ch];
  }

  bool same_shape(const Image8& o) const {
    return h == o.h && w == o.w && c == o.c;
  }
  bool operator==(const Image8& o) const {
    return same_shape(o) && px == o.px;
  }
};

using Rgb = std::array<uint8_t, 3>;

Image8 crop(const Image8& src, int y0, int x0, int h, int w);
Image8 hmirror(const Image8& src);

// Nearest-neighbour resize; source index = floor(i * in / out).
Image8 resize_nearest(const Image8& src, int out_h, int out_w);

// Integer-factor upscale (each source pixel becomes a scale x scale block).
Image8 upscale(const Image8& src, int scale);

// PNG I/O (8-bit; palette/gray/16-bit inputs are expanded on read).
Image8 load_png(const std::string& path);
void save_png(const Image8& img, const std::string& path);

}  // namespace sprite
