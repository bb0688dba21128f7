#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "spritegan/common.hpp"
#include "spritegan/rng.hpp"

namespace sprite::nn {

// Dense float tensor, single sample, channel-major CHW.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  float& at(int ci, int y, int x) {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
  float at(int ci, int y, int x) const {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
  bool same_shape(const Tensor& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a channel-gradient back into the two concatenated parts.
void split_channels(const Tensor& g, Tensor& ga, Tensor& gb);

// C[m x n] (row-major) = A * B (+ C if accumulate). A is m x k, or k x m when
// trans_a is set. Backed by Eigen's GEMM.
void gemm(bool trans_a, int m, int n, int k, const float* a, const float* b,
          float* c, bool accumulate);

struct ConvGeom {
  int kernel = 4;
  int stride = 2;
  int pad = 1;
};

inline int conv_out_size(int in, const ConvGeom& g) {
  int span = in + 2 * g.pad - g.kernel;
  return span < 0 ? 0 : span / g.stride + 1;
}
inline int tconv_out_size(int in, const ConvGeom& g) {
  return (in - 1) * g.stride + g.kernel - 2 * g.pad;
}

// A learnable tensor plus its gradient accumulator.
struct Param {
  std::string name;
  std::vector<float> w;
  std::vector<float> g;

  void resize(size_t n) {
    w.assign(n, 0.f);
    g.assign(n, 0.f);
  }
};

class Conv2d {
 public:
  Conv2d(std::string name, int in_c, int out_c, ConvGeom geom);

  void init(Rng& rng, float stddev);
  Tensor forward(const Tensor& x);
  // Accumulates parameter gradients and returns the input gradient.
  Tensor backward(const Tensor& gout);

  void params(std::vector<Param*>& out);
  int in_c() const { return in_c_; }
  int out_c() const { return out_c_; }
  const ConvGeom& geom() const { return geom_; }

 private:
  std::string name_;
  int in_c_, out_c_;
  ConvGeom geom_;
  Param weight_;  // [out_c][in_c][k][k]
  Param bias_;    // [out_c]
  int in_h_ = 0, in_w_ = 0;
  std::vector<float> col_;  // cached im2col of the last input
};

class ConvTranspose2d {
 public:
  ConvTranspose2d(std::string name, int in_c, int out_c, ConvGeom geom);

  void init(Rng& rng, float stddev);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gout);

  void params(std::vector<Param*>& out);
  int in_c() const { return in_c_; }
  int out_c() const { return out_c_; }

 private:
  std::string name_;
  int in_c_, out_c_;
  ConvGeom geom_;
  Param weight_;  // [in_c][out_c][k][k]
  Param bias_;    // [out_c]
  Tensor x_;      // cached input
};

// Per-channel normalization over the spatial dims of one sample, with a
// learnable affine. Identical behaviour in train and eval mode.
class InstanceNorm2d {
 public:
  explicit InstanceNorm2d(std::string name, int channels, float eps = 1e-5f);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gout);
  void params(std::vector<Param*>& out);

 private:
  std::string name_;
  int channels_;
  float eps_;
  Param gamma_, beta_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

enum class Act { none, relu, leaky_relu, tanh, sigmoid };

const char* to_string(Act a);
Act act_from_string(const std::string& s);

inline constexpr float kLeakySlope = 0.2f;

Tensor act_forward(Act a, const Tensor& x);
// All supported activations can be differentiated from their output alone.
Tensor act_backward(Act a, const Tensor& y, const Tensor& gout);

// Inverted dropout: scales kept units by 1/(1-rate) in training mode, is the
// identity in eval mode.
class Dropout {
 public:
  explicit Dropout(float rate) : rate_(rate) {}

  Tensor forward(const Tensor& x, bool train, Rng& rng);
  Tensor backward(const Tensor& gout);
  float rate() const { return rate_; }

 private:
  float rate_;
  std::vector<float> mask_;
};

// One network stage: conv or transpose-conv, optional instance norm,
// optional dropout, then activation.
struct BlockSpec {
  enum class Kind { downsample, upsample };
  Kind kind = Kind::downsample;
  int filters = 64;
  int kernel = 4;
  int stride = 2;
  int pad = 1;
  bool normalize = true;
  float dropout = 0.f;
  Act act = Act::leaky_relu;
};

class Block {
 public:
  Block(std::string name, int in_c, const BlockSpec& spec);

  void init(Rng& rng, float stddev);
  Tensor forward(const Tensor& x, bool train, Rng& rng);
  Tensor backward(const Tensor& gout);
  void params(std::vector<Param*>& out);

  const BlockSpec& spec() const { return spec_; }
  int in_c() const { return in_c_; }
  int out_c() const { return spec_.filters; }

 private:
  std::string name_;
  int in_c_;
  BlockSpec spec_;
  std::unique_ptr<Conv2d> conv_;
  std::unique_ptr<ConvTranspose2d> tconv_;
  std::unique_ptr<InstanceNorm2d> norm_;
  std::unique_ptr<Dropout> dropout_;
  Tensor act_out_;
};

int64_t param_count(const std::vector<Param*>& ps);

// Flat named-tensor archive used for weights and optimizer state.
void write_params(std::ostream& os, const std::vector<const Param*>& ps);
void write_params(const std::string& path, std::vector<Param*> ps);
void read_params(std::istream& is, std::vector<Param*> ps);
void read_params(const std::string& path, std::vector<Param*> ps);

}  // namespace sprite::nn
