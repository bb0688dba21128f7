#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "spritegan/nn.hpp"
#include "spritegan/rng.hpp"

namespace testutil {

inline sprite::nn::Tensor random_tensor(int c, int h, int w, sprite::Rng& rng,
                                        float scale = 1.f) {
  sprite::nn::Tensor t(c, h, w);
  for (float& v : t.v) v = rng.normalf(scale);
  return t;
}

inline float max_abs_diff(const sprite::nn::Tensor& a,
                          const sprite::nn::Tensor& b) {
  float m = 0.f;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.v[i] - b.v[i]));
  return m;
}

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1e-12, std::fabs(want));
}

// Fresh scratch directory under the system temp root, unique per name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("spritegan-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
