#include "spritegan/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>

namespace sprite::nn {

namespace {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Gathers conv patches: col[(c*k*k) x (out_h*out_w)] from x[c, h, w].
void im2col(const float* x, int c, int h, int w, const ConvGeom& g, int out_h,
            int out_w, float* col) {
  const int k = g.kernel;
  for (int ci = 0; ci < c; ++ci) {
    const float* xc = x + static_cast<size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<size_t>(ci) * k * k + ky * k + kx) *
                               out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= h) {
            std::memset(row + static_cast<size_t>(oy) * out_w, 0,
                        sizeof(float) * out_w);
            continue;
          }
          const float* xr = xc + static_cast<size_t>(iy) * w;
          float* cr = row + static_cast<size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            int ix = ox * g.stride - g.pad + kx;
            cr[ox] = (ix >= 0 && ix < w) ? xr[ix] : 0.f;
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
void col2im(const float* col, int c, int h, int w, const ConvGeom& g,
            int out_h, int out_w, float* x) {
  const int k = g.kernel;
  std::memset(x, 0, sizeof(float) * c * h * w);
  for (int ci = 0; ci < c; ++ci) {
    float* xc = x + static_cast<size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<size_t>(ci) * k * k + ky * k +
                                  kx) *
                                     out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= h) continue;
          float* xr = xc + static_cast<size_t>(iy) * w;
          const float* cr = row + static_cast<size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < w) xr[ix] += cr[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::string Tensor::shape_str() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.h != b.h || a.w != b.w)
    throw config_error("concat_channels: spatial shapes differ: " +
                       a.shape_str() + " vs " + b.shape_str());
  Tensor out(a.c + b.c, a.h, a.w);
  std::memcpy(out.v.data(), a.v.data(), sizeof(float) * a.size());
  std::memcpy(out.v.data() + a.size(), b.v.data(), sizeof(float) * b.size());
  return out;
}

void split_channels(const Tensor& g, Tensor& ga, Tensor& gb) {
  if (g.c != ga.c + gb.c || g.h != ga.h || g.w != ga.w)
    throw config_error("split_channels: shape mismatch");
  std::memcpy(ga.v.data(), g.v.data(), sizeof(float) * ga.size());
  std::memcpy(gb.v.data(), g.v.data() + ga.size(), sizeof(float) * gb.size());
}

void gemm(bool trans_a, int m, int n, int k, const float* a, const float* b,
          float* c, bool accumulate) {
  CMapMat bm(b, k, n);
  MapMat cm(c, m, n);
  if (trans_a) {
    CMapMat am(a, k, m);
    if (accumulate)
      cm.noalias() += am.transpose() * bm;
    else
      cm.noalias() = am.transpose() * bm;
  } else {
    CMapMat am(a, m, k);
    if (accumulate)
      cm.noalias() += am * bm;
    else
      cm.noalias() = am * bm;
  }
}

namespace {

// C[m x n] = A[m x k] * B'[k x n] where B is stored as n x k.
void gemm_bt(int m, int n, int k, const float* a, const float* b, float* c,
             bool accumulate) {
  CMapMat am(a, m, k);
  CMapMat bm(b, n, k);
  MapMat cm(c, m, n);
  if (accumulate)
    cm.noalias() += am * bm.transpose();
  else
    cm.noalias() = am * bm.transpose();
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_c, int out_c, ConvGeom geom)
    : name_(std::move(name)), in_c_(in_c), out_c_(out_c), geom_(geom) {
  if (in_c <= 0 || out_c <= 0 || geom.kernel <= 0 || geom.stride <= 0)
    throw config_error("Conv2d " + name_ + ": invalid geometry");
  weight_.name = name_ + ".w";
  weight_.resize(static_cast<size_t>(out_c) * in_c * geom.kernel * geom.kernel);
  bias_.name = name_ + ".b";
  bias_.resize(out_c);
}

void Conv2d::init(Rng& rng, float stddev) {
  for (float& w : weight_.w) w = rng.normalf(stddev);
  for (float& b : bias_.w) b = 0.f;
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_c_)
    throw config_error("Conv2d " + name_ + ": expected " +
                       std::to_string(in_c_) + " channels, got " +
                       std::to_string(x.c));
  in_h_ = x.h;
  in_w_ = x.w;
  int oh = conv_out_size(x.h, geom_);
  int ow = conv_out_size(x.w, geom_);
  if (oh <= 0 || ow <= 0)
    throw config_error("Conv2d " + name_ + ": input " + x.shape_str() +
                       " too small for kernel");
  const int kk = geom_.kernel * geom_.kernel;
  col_.resize(static_cast<size_t>(in_c_) * kk * oh * ow);
  im2col(x.v.data(), x.c, x.h, x.w, geom_, oh, ow, col_.data());

  Tensor out(out_c_, oh, ow);
  gemm(false, out_c_, oh * ow, in_c_ * kk, weight_.w.data(), col_.data(),
       out.v.data(), false);
  for (int co = 0; co < out_c_; ++co) {
    float b = bias_.w[co];
    float* o = out.v.data() + static_cast<size_t>(co) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) o[i] += b;
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& gout) {
  const int oh = gout.h, ow = gout.w;
  const int kk = geom_.kernel * geom_.kernel;
  // dW += gout * col^T
  gemm_bt(out_c_, in_c_ * kk, oh * ow, gout.v.data(), col_.data(),
          weight_.g.data(), true);
  for (int co = 0; co < out_c_; ++co) {
    const float* g = gout.v.data() + static_cast<size_t>(co) * oh * ow;
    double s = 0;
    for (int i = 0; i < oh * ow; ++i) s += g[i];
    bias_.g[co] += static_cast<float>(s);
  }
  // dcol = W^T * gout, then scatter back to the input.
  std::vector<float> dcol(static_cast<size_t>(in_c_) * kk * oh * ow);
  gemm(true, in_c_ * kk, oh * ow, out_c_, weight_.w.data(), gout.v.data(),
       dcol.data(), false);
  Tensor gin(in_c_, in_h_, in_w_);
  col2im(dcol.data(), in_c_, in_h_, in_w_, geom_, oh, ow, gin.v.data());
  return gin;
}

void Conv2d::params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_c, int out_c,
                                 ConvGeom geom)
    : name_(std::move(name)), in_c_(in_c), out_c_(out_c), geom_(geom) {
  weight_.name = name_ + ".w";
  weight_.resize(static_cast<size_t>(in_c) * out_c * geom.kernel * geom.kernel);
  bias_.name = name_ + ".b";
  bias_.resize(out_c);
}

void ConvTranspose2d::init(Rng& rng, float stddev) {
  for (float& w : weight_.w) w = rng.normalf(stddev);
  for (float& b : bias_.w) b = 0.f;
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  if (x.c != in_c_)
    throw config_error("ConvTranspose2d " + name_ + ": expected " +
                       std::to_string(in_c_) + " channels, got " +
                       std::to_string(x.c));
  x_ = x;
  int oh = tconv_out_size(x.h, geom_);
  int ow = tconv_out_size(x.w, geom_);
  if (oh <= 0 || ow <= 0)
    throw config_error("ConvTranspose2d " + name_ + ": degenerate output");
  const int kk = geom_.kernel * geom_.kernel;

  // M[(out_c*k*k) x (in_h*in_w)] = W^T * x, scattered onto the output grid.
  std::vector<float> m(static_cast<size_t>(out_c_) * kk * x.h * x.w);
  gemm(true, out_c_ * kk, x.h * x.w, in_c_, weight_.w.data(), x.v.data(),
       m.data(), false);
  Tensor out(out_c_, oh, ow);
  col2im(m.data(), out_c_, oh, ow, geom_, x.h, x.w, out.v.data());
  for (int co = 0; co < out_c_; ++co) {
    float b = bias_.w[co];
    float* o = out.v.data() + static_cast<size_t>(co) * oh * ow;
    for (int i = 0; i < oh * ow; ++i) o[i] += b;
  }
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& gout) {
  const int kk = geom_.kernel * geom_.kernel;
  std::vector<float> gcol(static_cast<size_t>(out_c_) * kk * x_.h * x_.w);
  im2col(gout.v.data(), out_c_, gout.h, gout.w, geom_, x_.h, x_.w,
         gcol.data());
  // dW += x * gcol^T
  gemm_bt(in_c_, out_c_ * kk, x_.h * x_.w, x_.v.data(), gcol.data(),
          weight_.g.data(), true);
  for (int co = 0; co < out_c_; ++co) {
    const float* g = gout.v.data() + static_cast<size_t>(co) * gout.h * gout.w;
    double s = 0;
    for (int i = 0; i < gout.h * gout.w; ++i) s += g[i];
    bias_.g[co] += static_cast<float>(s);
  }
  Tensor gin(in_c_, x_.h, x_.w);
  gemm(false, in_c_, x_.h * x_.w, out_c_ * kk, weight_.w.data(), gcol.data(),
       gin.v.data(), false);
  return gin;
}

void ConvTranspose2d::params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// -------------------------------------------------------- InstanceNorm2d

InstanceNorm2d::InstanceNorm2d(std::string name, int channels, float eps)
    : name_(std::move(name)), channels_(channels), eps_(eps) {
  gamma_.name = name_ + ".gamma";
  gamma_.resize(channels);
  std::fill(gamma_.w.begin(), gamma_.w.end(), 1.f);
  beta_.name = name_ + ".beta";
  beta_.resize(channels);
}

Tensor InstanceNorm2d::forward(const Tensor& x) {
  if (x.c != channels_)
    throw config_error("InstanceNorm2d " + name_ + ": channel mismatch");
  const int hw = x.h * x.w;
  xhat_ = Tensor(x.c, x.h, x.w);
  inv_std_.resize(channels_);
  Tensor out(x.c, x.h, x.w);
  for (int ci = 0; ci < channels_; ++ci) {
    const float* xc = x.v.data() + static_cast<size_t>(ci) * hw;
    double mu = 0;
    for (int i = 0; i < hw; ++i) mu += xc[i];
    mu /= hw;
    double var = 0;
    for (int i = 0; i < hw; ++i) {
      double d = xc[i] - mu;
      var += d * d;
    }
    var /= hw;
    float is = static_cast<float>(1.0 / std::sqrt(var + eps_));
    inv_std_[ci] = is;
    float* xh = xhat_.v.data() + static_cast<size_t>(ci) * hw;
    float* o = out.v.data() + static_cast<size_t>(ci) * hw;
    float g = gamma_.w[ci], b = beta_.w[ci];
    float muf = static_cast<float>(mu);
    for (int i = 0; i < hw; ++i) {
      xh[i] = (xc[i] - muf) * is;
      o[i] = g * xh[i] + b;
    }
  }
  return out;
}

Tensor InstanceNorm2d::backward(const Tensor& gout) {
  const int hw = gout.h * gout.w;
  Tensor gin(gout.c, gout.h, gout.w);
  for (int ci = 0; ci < channels_; ++ci) {
    const float* g = gout.v.data() + static_cast<size_t>(ci) * hw;
    const float* xh = xhat_.v.data() + static_cast<size_t>(ci) * hw;
    double dg = 0, db = 0;
    for (int i = 0; i < hw; ++i) {
      dg += static_cast<double>(g[i]) * xh[i];
      db += g[i];
    }
    gamma_.g[ci] += static_cast<float>(dg);
    beta_.g[ci] += static_cast<float>(db);

    // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    double gm = gamma_.w[ci];
    double mean_dxhat = gm * db / hw;
    double mean_dxhat_xhat = gm * dg / hw;
    float is = inv_std_[ci];
    float* gi = gin.v.data() + static_cast<size_t>(ci) * hw;
    for (int i = 0; i < hw; ++i) {
      double dxhat = gm * g[i];
      gi[i] = static_cast<float>(
          is * (dxhat - mean_dxhat - xh[i] * mean_dxhat_xhat));
    }
  }
  return gin;
}

void InstanceNorm2d::params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ------------------------------------------------------------ activations

const char* to_string(Act a) {
  switch (a) {
    case Act::none: return "none";
    case Act::relu: return "relu";
    case Act::leaky_relu: return "leaky_relu";
    case Act::tanh: return "tanh";
    case Act::sigmoid: return "sigmoid";
  }
  return "?";
}

Act act_from_string(const std::string& s) {
  for (Act a : {Act::none, Act::relu, Act::leaky_relu, Act::tanh, Act::sigmoid})
    if (s == to_string(a)) return a;
  throw config_error("unknown activation '" + s + "'");
}

Tensor act_forward(Act a, const Tensor& x) {
  Tensor y = x;
  switch (a) {
    case Act::none:
      break;
    case Act::relu:
      // negative-test form keeps NaN visible instead of clamping it away
      for (float& v : y.v)
        if (v < 0.f) v = 0.f;
      break;
    case Act::leaky_relu:
      for (float& v : y.v)
        if (v < 0.f) v *= kLeakySlope;
      break;
    case Act::tanh:
      for (float& v : y.v) v = std::tanh(v);
      break;
    case Act::sigmoid:
      for (float& v : y.v)
        v = v >= 0.f ? 1.f / (1.f + std::exp(-v))
                     : std::exp(v) / (1.f + std::exp(v));
      break;
  }
  return y;
}

Tensor act_backward(Act a, const Tensor& y, const Tensor& gout) {
  Tensor gin = gout;
  switch (a) {
    case Act::none:
      break;
    case Act::relu:
      for (size_t i = 0; i < gin.size(); ++i)
        if (y.v[i] <= 0.f) gin.v[i] = 0.f;
      break;
    case Act::leaky_relu:
      for (size_t i = 0; i < gin.size(); ++i)
        if (y.v[i] < 0.f) gin.v[i] *= kLeakySlope;
      break;
    case Act::tanh:
      for (size_t i = 0; i < gin.size(); ++i)
        gin.v[i] *= 1.f - y.v[i] * y.v[i];
      break;
    case Act::sigmoid:
      for (size_t i = 0; i < gin.size(); ++i)
        gin.v[i] *= y.v[i] * (1.f - y.v[i]);
      break;
  }
  return gin;
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, bool train, Rng& rng) {
  if (!train || rate_ <= 0.f) {
    mask_.clear();
    return x;
  }
  float keep_scale = 1.f / (1.f - rate_);
  mask_.resize(x.size());
  Tensor y = x;
  for (size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng.uniform() < rate_ ? 0.f : keep_scale;
    y.v[i] *= mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& gout) {
  if (mask_.empty()) return gout;
  Tensor gin = gout;
  for (size_t i = 0; i < gin.size(); ++i) gin.v[i] *= mask_[i];
  return gin;
}

// ------------------------------------------------------------------ Block

Block::Block(std::string name, int in_c, const BlockSpec& spec)
    : name_(std::move(name)), in_c_(in_c), spec_(spec) {
  ConvGeom g{spec.kernel, spec.stride, spec.pad};
  if (spec.kind == BlockSpec::Kind::downsample)
    conv_ = std::make_unique<Conv2d>(name_, in_c, spec.filters, g);
  else
    tconv_ = std::make_unique<ConvTranspose2d>(name_, in_c, spec.filters, g);
  if (spec.normalize)
    norm_ = std::make_unique<InstanceNorm2d>(name_ + ".norm", spec.filters);
  if (spec.dropout > 0.f) {
    if (spec.kind != BlockSpec::Kind::upsample)
      throw config_error("Block " + name_ +
                         ": dropout is only valid on upsample blocks");
    dropout_ = std::make_unique<Dropout>(spec.dropout);
  }
}

void Block::init(Rng& rng, float stddev) {
  if (conv_) conv_->init(rng, stddev);
  if (tconv_) tconv_->init(rng, stddev);
}

Tensor Block::forward(const Tensor& x, bool train, Rng& rng) {
  Tensor t = conv_ ? conv_->forward(x) : tconv_->forward(x);
  if (norm_) t = norm_->forward(t);
  if (dropout_) t = dropout_->forward(t, train, rng);
  act_out_ = act_forward(spec_.act, t);
  return act_out_;
}

Tensor Block::backward(const Tensor& gout) {
  Tensor g = act_backward(spec_.act, act_out_, gout);
  if (dropout_) g = dropout_->backward(g);
  if (norm_) g = norm_->backward(g);
  return conv_ ? conv_->backward(g) : tconv_->backward(g);
}

void Block::params(std::vector<Param*>& out) {
  if (conv_) conv_->params(out);
  if (tconv_) tconv_->params(out);
  if (norm_) norm_->params(out);
}

int64_t param_count(const std::vector<Param*>& ps) {
  int64_t n = 0;
  for (const Param* p : ps) n += static_cast<int64_t>(p->w.size());
  return n;
}

// -------------------------------------------------------------- archive

namespace {
constexpr char kMagic[4] = {'S', 'G', 'T', 'A'};
}

void write_params(std::ostream& os, const std::vector<const Param*>& ps) {
  os.write(kMagic, 4);
  uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 4);
  uint64_t count = ps.size();
  os.write(reinterpret_cast<const char*>(&count), 8);
  for (const Param* p : ps) {
    uint32_t nl = static_cast<uint32_t>(p->name.size());
    os.write(reinterpret_cast<const char*>(&nl), 4);
    os.write(p->name.data(), nl);
    uint64_t n = p->w.size();
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(p->w.data()),
             static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!os) throw io_error("failed to write tensor archive");
}

void write_params(const std::string& path, std::vector<Param*> ps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  std::vector<const Param*> cps(ps.begin(), ps.end());
  write_params(os, cps);
}

void read_params(std::istream& is, std::vector<Param*> ps) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw io_error("bad tensor archive header");
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw io_error("unsupported tensor archive version");
  uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 8);
  std::map<std::string, std::vector<float>> found;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t nl = 0;
    is.read(reinterpret_cast<char*>(&nl), 4);
    std::string name(nl, '\0');
    is.read(name.data(), nl);
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    std::vector<float> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw io_error("truncated tensor archive");
    found.emplace(std::move(name), std::move(data));
  }
  for (Param* p : ps) {
    auto it = found.find(p->name);
    if (it == found.end())
      throw io_error("tensor archive is missing '" + p->name + "'");
    if (it->second.size() != p->w.size())
      throw io_error("tensor '" + p->name + "' has size " +
                     std::to_string(it->second.size()) + ", expected " +
                     std::to_string(p->w.size()));
    p->w = it->second;
  }
}

void read_params(const std::string& path, std::vector<Param*> ps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open for reading: " + path);
  read_params(is, std::move(ps));
}

}  // namespace sprite::nn
