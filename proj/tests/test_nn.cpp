#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "spritegan/nn.hpp"
#include "test_utils.hpp"

using namespace sprite;
using namespace sprite::nn;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

// W layout [out_c][in_c][k][k], matching Conv2d.
Tensor naive_conv(const Tensor& x, const std::vector<float>& w,
                  const std::vector<float>& b, int out_c, ConvGeom g) {
  int oh = conv_out_size(x.h, g), ow = conv_out_size(x.w, g);
  int k = g.kernel;
  Tensor out(out_c, oh, ow);
  for (int co = 0; co < out_c; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b[co];
        for (int ci = 0; ci < x.c; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * g.stride - g.pad + ky;
              int ix = ox * g.stride - g.pad + kx;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
              acc += static_cast<double>(
                         w[((static_cast<size_t>(co) * x.c + ci) * k + ky) * k +
                           kx]) *
                     x.at(ci, iy, ix);
            }
        out.at(co, oy, ox) = static_cast<float>(acc);
      }
  return out;
}

// W layout [in_c][out_c][k][k], matching ConvTranspose2d.
Tensor naive_tconv(const Tensor& x, const std::vector<float>& w,
                   const std::vector<float>& b, int out_c, ConvGeom g) {
  int oh = tconv_out_size(x.h, g), ow = tconv_out_size(x.w, g);
  int k = g.kernel;
  Tensor out(out_c, oh, ow);
  for (int co = 0; co < out_c; ++co)
    for (int i = 0; i < oh * ow; ++i)
      out.v[static_cast<size_t>(co) * oh * ow + i] = b[co];
  for (int ci = 0; ci < x.c; ++ci)
    for (int iy = 0; iy < x.h; ++iy)
      for (int ix = 0; ix < x.w; ++ix)
        for (int co = 0; co < out_c; ++co)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int oy = iy * g.stride - g.pad + ky;
              int ox = ix * g.stride - g.pad + kx;
              if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
              out.at(co, oy, ox) +=
                  w[((static_cast<size_t>(ci) * out_c + co) * k + ky) * k +
                    kx] *
                  x.at(ci, iy, ix);
            }
  return out;
}

void require_close(const Tensor& got, const Tensor& want, float tol) {
  REQUIRE(got.same_shape(want));
  float scale = 0.f;
  for (float v : want.v) scale = std::max(scale, std::fabs(v));
  REQUIRE(max_abs_diff(got, want) <= tol * std::max(1.f, scale));
}

}  // namespace

TEST_CASE("conv output sizes") {
  ConvGeom down{4, 2, 1};
  CHECK(conv_out_size(64, down) == 32);
  CHECK(conv_out_size(2, down) == 1);
  CHECK(conv_out_size(1, down) == 0);
  CHECK(conv_out_size(63, ConvGeom{2, 1, 0}) == 62);
  CHECK(conv_out_size(63, ConvGeom{1, 1, 0}) == 63);
  CHECK(conv_out_size(64, ConvGeom{5, 2, 0}) == 30);
  CHECK(conv_out_size(64, ConvGeom{4, 1, 0}) == 61);
  CHECK(tconv_out_size(1, down) == 2);
  CHECK(tconv_out_size(32, down) == 64);
  CHECK(tconv_out_size(2, down) == 4);
}

TEST_CASE("gemm matches hand-computed products") {
  // A = [1 2 3; 4 5 6], B = [7 8; 9 10; 11 12]
  std::vector<float> a{1, 2, 3, 4, 5, 6};
  std::vector<float> b{7, 8, 9, 10, 11, 12};
  std::vector<float> c(4, 100.f);
  gemm(false, 2, 2, 3, a.data(), b.data(), c.data(), false);
  CHECK(c == std::vector<float>{58, 64, 139, 154});

  // Same A stored transposed (3 x 2, column i holds row i of A).
  std::vector<float> at{1, 4, 2, 5, 3, 6};
  std::vector<float> c2(4, 1.f);
  gemm(true, 2, 2, 3, at.data(), b.data(), c2.data(), true);
  CHECK(c2 == std::vector<float>{59, 65, 140, 155});
}

TEST_CASE("conv forward matches naive reference") {
  Rng rng(101);
  for (ConvGeom g : {ConvGeom{4, 2, 1}, ConvGeom{2, 1, 0}, ConvGeom{5, 2, 0},
                     ConvGeom{1, 1, 0}, ConvGeom{4, 1, 0}}) {
    Conv2d conv("c", 3, 5, g);
    conv.init(rng, 0.5f);
    std::vector<Param*> ps;
    conv.params(ps);
    for (float& b : ps[1]->w) b = rng.normalf(0.3f);
    Tensor x = random_tensor(3, 9, 11, rng);
    Tensor want = naive_conv(x, ps[0]->w, ps[1]->w, 5, g);
    require_close(conv.forward(x), want, 1e-5f);
  }
}

TEST_CASE("tconv forward matches naive reference") {
  Rng rng(102);
  for (ConvGeom g : {ConvGeom{4, 2, 1}, ConvGeom{2, 2, 0}, ConvGeom{3, 1, 1}}) {
    ConvTranspose2d tconv("t", 4, 3, g);
    tconv.init(rng, 0.5f);
    std::vector<Param*> ps;
    tconv.params(ps);
    for (float& b : ps[1]->w) b = rng.normalf(0.3f);
    Tensor x = random_tensor(4, 5, 6, rng);
    Tensor want = naive_tconv(x, ps[0]->w, ps[1]->w, 3, g);
    require_close(tconv.forward(x), want, 1e-5f);
  }
}

TEST_CASE("conv backward matches naive gradients") {
  Rng rng(103);
  ConvGeom g{4, 2, 1};
  Conv2d conv("c", 3, 4, g);
  conv.init(rng, 0.5f);
  std::vector<Param*> ps;
  conv.params(ps);
  Tensor x = random_tensor(3, 8, 8, rng);
  Tensor out = conv.forward(x);
  Tensor gout = random_tensor(out.c, out.h, out.w, rng);
  Tensor gin = conv.backward(gout);

  const int k = g.kernel;
  Tensor want_gin(x.c, x.h, x.w);
  std::vector<double> want_gw(ps[0]->w.size(), 0.0);
  std::vector<double> want_gb(ps[1]->w.size(), 0.0);
  for (int co = 0; co < out.c; ++co)
    for (int oy = 0; oy < out.h; ++oy)
      for (int ox = 0; ox < out.w; ++ox) {
        float go = gout.at(co, oy, ox);
        want_gb[co] += go;
        for (int ci = 0; ci < x.c; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * g.stride - g.pad + ky;
              int ix = ox * g.stride - g.pad + kx;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
              size_t wi =
                  ((static_cast<size_t>(co) * x.c + ci) * k + ky) * k + kx;
              want_gin.at(ci, iy, ix) += go * ps[0]->w[wi];
              want_gw[wi] += static_cast<double>(go) * x.at(ci, iy, ix);
            }
      }
  require_close(gin, want_gin, 1e-4f);
  for (size_t i = 0; i < want_gw.size(); ++i)
    CHECK(std::fabs(ps[0]->g[i] - want_gw[i]) <= 1e-3);
  for (size_t i = 0; i < want_gb.size(); ++i)
    CHECK(std::fabs(ps[1]->g[i] - want_gb[i]) <= 1e-3);
}

TEST_CASE("tconv backward matches naive gradients") {
  Rng rng(104);
  ConvGeom g{4, 2, 1};
  ConvTranspose2d tconv("t", 3, 4, g);
  tconv.init(rng, 0.5f);
  std::vector<Param*> ps;
  tconv.params(ps);
  Tensor x = random_tensor(3, 5, 5, rng);
  Tensor out = tconv.forward(x);
  Tensor gout = random_tensor(out.c, out.h, out.w, rng);
  Tensor gin = tconv.backward(gout);

  const int k = g.kernel;
  Tensor want_gin(x.c, x.h, x.w);
  std::vector<double> want_gw(ps[0]->w.size(), 0.0);
  std::vector<double> want_gb(ps[1]->w.size(), 0.0);
  for (int co = 0; co < out.c; ++co)
    for (int oy = 0; oy < out.h; ++oy)
      for (int ox = 0; ox < out.w; ++ox) want_gb[co] += gout.at(co, oy, ox);
  for (int ci = 0; ci < x.c; ++ci)
    for (int iy = 0; iy < x.h; ++iy)
      for (int ix = 0; ix < x.w; ++ix)
        for (int co = 0; co < out.c; ++co)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int oy = iy * g.stride - g.pad + ky;
              int ox = ix * g.stride - g.pad + kx;
              if (oy < 0 || oy >= out.h || ox < 0 || ox >= out.w) continue;
              size_t wi =
                  ((static_cast<size_t>(ci) * out.c + co) * k + ky) * k + kx;
              float go = gout.at(co, oy, ox);
              want_gin.at(ci, iy, ix) += go * ps[0]->w[wi];
              want_gw[wi] += static_cast<double>(go) * x.at(ci, iy, ix);
            }
  require_close(gin, want_gin, 1e-4f);
  for (size_t i = 0; i < want_gw.size(); ++i)
    CHECK(std::fabs(ps[0]->g[i] - want_gw[i]) <= 1e-3);
  for (size_t i = 0; i < want_gb.size(); ++i)
    CHECK(std::fabs(ps[1]->g[i] - want_gb[i]) <= 1e-3);
}

TEST_CASE("conv forward/backward-data are adjoint") {
  Rng rng(105);
  ConvGeom g{4, 2, 1};
  Conv2d conv("c", 2, 3, g);
  conv.init(rng, 0.5f);
  Tensor x = random_tensor(2, 10, 10, rng);
  Tensor y = conv.forward(x);
  Tensor u = random_tensor(y.c, y.h, y.w, rng);
  Tensor xt = conv.backward(u);
  // Bias is zero after init, so <conv(x), u> == <x, conv^T(u)>.
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < y.size(); ++i)
    lhs += static_cast<double>(y.v[i]) * u.v[i];
  for (size_t i = 0; i < x.size(); ++i)
    rhs += static_cast<double>(x.v[i]) * xt.v[i];
  CHECK(testutil::rel_err(lhs, rhs) < 1e-4);
}

TEST_CASE("instance norm forward normalizes each channel") {
  Rng rng(106);
  InstanceNorm2d norm("n", 3);
  Tensor x = random_tensor(3, 7, 9, rng, 2.f);
  for (int i = 0; i < 7 * 9; ++i) x.v[i] += 5.f;  // offset channel 0
  Tensor y = norm.forward(x);
  for (int ci = 0; ci < 3; ++ci) {
    double mu = 0, var = 0;
    for (int i = 0; i < 7 * 9; ++i) mu += y.v[ci * 63 + i];
    mu /= 63;
    for (int i = 0; i < 7 * 9; ++i) {
      double d = y.v[ci * 63 + i] - mu;
      var += d * d;
    }
    var /= 63;
    CHECK(std::fabs(mu) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-3);
  }

  std::vector<Param*> ps;
  norm.params(ps);
  ps[0]->w = {2.f, 1.f, 1.f};
  ps[1]->w = {0.f, 3.f, 0.f};
  Tensor y2 = norm.forward(x);
  CHECK(y2.at(0, 1, 1) == doctest::Approx(2.f * y.at(0, 1, 1)));
  CHECK(y2.at(1, 1, 1) == doctest::Approx(y.at(1, 1, 1) + 3.f));
}

namespace {

// Double-precision reference, used as the base for finite differences.
std::vector<double> ref_inorm(const std::vector<double>& x, int c, int hw,
                              const std::vector<double>& gamma,
                              const std::vector<double>& beta, double eps) {
  std::vector<double> y(x.size());
  for (int ci = 0; ci < c; ++ci) {
    double mu = 0, var = 0;
    for (int i = 0; i < hw; ++i) mu += x[ci * hw + i];
    mu /= hw;
    for (int i = 0; i < hw; ++i) {
      double d = x[ci * hw + i] - mu;
      var += d * d;
    }
    var /= hw;
    double is = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < hw; ++i)
      y[ci * hw + i] = gamma[ci] * (x[ci * hw + i] - mu) * is + beta[ci];
  }
  return y;
}

}  // namespace

TEST_CASE("instance norm backward matches finite differences") {
  Rng rng(107);
  const int c = 2, h = 3, w = 4, hw = h * w;
  InstanceNorm2d norm("n", c);
  std::vector<Param*> ps;
  norm.params(ps);
  ps[0]->w = {1.3f, 0.7f};
  ps[1]->w = {0.2f, -0.4f};
  Tensor x = random_tensor(c, h, w, rng);
  Tensor gout = random_tensor(c, h, w, rng);

  Tensor yf = norm.forward(x);
  std::vector<double> xd(x.v.begin(), x.v.end());
  std::vector<double> gd{1.3, 0.7}, bd{0.2, -0.4};
  std::vector<double> yd = ref_inorm(xd, c, hw, gd, bd, 1e-5);
  for (size_t i = 0; i < yf.size(); ++i)
    CHECK(std::fabs(yf.v[i] - yd[i]) < 1e-5);

  Tensor gin = norm.backward(gout);
  auto loss = [&](const std::vector<double>& xx, const std::vector<double>& gg,
                  const std::vector<double>& bb) {
    std::vector<double> yy = ref_inorm(xx, c, hw, gg, bb, 1e-5);
    double l = 0;
    for (size_t i = 0; i < yy.size(); ++i) l += yy[i] * gout.v[i];
    return l;
  };
  const double fd = 1e-6;
  for (size_t i = 0; i < xd.size(); ++i) {
    std::vector<double> xp = xd, xm = xd;
    xp[i] += fd;
    xm[i] -= fd;
    double want = (loss(xp, gd, bd) - loss(xm, gd, bd)) / (2 * fd);
    CHECK(std::fabs(gin.v[i] - want) < 1e-3 * std::max(1.0, std::fabs(want)));
  }
  for (int ci = 0; ci < c; ++ci) {
    std::vector<double> gp = gd, gm = gd;
    gp[ci] += fd;
    gm[ci] -= fd;
    double want_g = (loss(xd, gp, bd) - loss(xd, gm, bd)) / (2 * fd);
    CHECK(std::fabs(ps[0]->g[ci] - want_g) < 1e-3 * std::max(1.0, want_g));
    std::vector<double> bp = bd, bm = bd;
    bp[ci] += fd;
    bm[ci] -= fd;
    double want_b = (loss(xd, gd, bp) - loss(xd, gd, bm)) / (2 * fd);
    CHECK(std::fabs(ps[1]->g[ci] - want_b) < 1e-3 * std::max(1.0, want_b));
  }
}

TEST_CASE("activation gradients match analytic derivatives") {
  Rng rng(108);
  Tensor x = random_tensor(1, 8, 8, rng, 1.5f);
  Tensor ones(1, 8, 8, 1.f);
  for (Act a : {Act::relu, Act::leaky_relu, Act::tanh, Act::sigmoid}) {
    Tensor y = act_forward(a, x);
    Tensor g = act_backward(a, y, ones);
    for (size_t i = 0; i < x.size(); ++i) {
      double xv = x.v[i], want = 0;
      switch (a) {
        case Act::relu: want = xv > 0 ? 1.0 : 0.0; break;
        case Act::leaky_relu: want = xv > 0 ? 1.0 : kLeakySlope; break;
        case Act::tanh: {
          double t = std::tanh(xv);
          want = 1.0 - t * t;
          break;
        }
        case Act::sigmoid: {
          double s = 1.0 / (1.0 + std::exp(-xv));
          want = s * (1.0 - s);
          break;
        }
        default: break;
      }
      CHECK(std::fabs(g.v[i] - want) < 1e-6);
    }
  }
  CHECK(act_forward(Act::none, x).v == x.v);
}

TEST_CASE("activations pass non-finite values through") {
  // A NaN that reaches an activation must surface in the output so training
  // can abort, not be clamped into a healthy-looking zero.
  Tensor x(1, 2, 2);
  x.v = {std::nanf(""), -1.f, 2.f, 0.f};
  for (Act a : {Act::relu, Act::leaky_relu, Act::tanh, Act::sigmoid}) {
    Tensor y = act_forward(a, x);
    CHECK(std::isnan(y.v[0]));
    CHECK(std::isfinite(y.v[1]));
    CHECK(std::isfinite(y.v[2]));
  }
  CHECK(act_forward(Act::relu, x).v[1] == 0.f);
  CHECK(act_forward(Act::relu, x).v[2] == 2.f);
}

TEST_CASE("activation names round-trip") {
  for (Act a : {Act::none, Act::relu, Act::leaky_relu, Act::tanh,
                Act::sigmoid})
    CHECK(act_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(act_from_string("gelu"), config_error);
}

TEST_CASE("dropout scales, masks, and is identity in eval") {
  Rng rng(109);
  Dropout drop(0.5f);
  Tensor x(4, 50, 100, 1.f);
  Tensor eval_y = drop.forward(x, false, rng);
  CHECK(eval_y.v == x.v);

  Tensor y = drop.forward(x, true, rng);
  int zeros = 0;
  for (float v : y.v) {
    CHECK((v == 0.f || v == 2.f));
    if (v == 0.f) ++zeros;
  }
  double rate = static_cast<double>(zeros) / y.size();
  CHECK(rate > 0.48);
  CHECK(rate < 0.52);

  Tensor g = drop.backward(Tensor(4, 50, 100, 1.f));
  for (size_t i = 0; i < y.size(); ++i)
    CHECK(g.v[i] == (y.v[i] == 0.f ? 0.f : 2.f));

  Dropout none(0.f);
  CHECK(none.forward(x, true, rng).v == x.v);
}

TEST_CASE("concat and split are inverse") {
  Rng rng(110);
  Tensor a = random_tensor(3, 4, 5, rng);
  Tensor b = random_tensor(2, 4, 5, rng);
  Tensor ab = concat_channels(a, b);
  REQUIRE(ab.c == 5);
  CHECK(ab.at(2, 3, 4) == a.at(2, 3, 4));
  CHECK(ab.at(3, 0, 0) == b.at(0, 0, 0));
  Tensor ga(3, 4, 5), gb(2, 4, 5);
  split_channels(ab, ga, gb);
  CHECK(ga.v == a.v);
  CHECK(gb.v == b.v);
  CHECK_THROWS_AS(concat_channels(a, Tensor(1, 3, 5)), config_error);
}

TEST_CASE("block applies conv, norm, then activation") {
  BlockSpec spec;
  spec.kind = BlockSpec::Kind::downsample;
  spec.filters = 4;
  spec.act = Act::leaky_relu;
  Rng rng_block(7), rng_manual(7), rng_fwd(1);
  Block block("b", 3, spec);
  block.init(rng_block, 0.02f);

  Conv2d conv("b", 3, 4, ConvGeom{4, 2, 1});
  conv.init(rng_manual, 0.02f);
  InstanceNorm2d norm("b.norm", 4);

  Tensor x = random_tensor(3, 8, 8, rng_fwd);
  Tensor want = act_forward(Act::leaky_relu, norm.forward(conv.forward(x)));
  Tensor got = block.forward(x, false, rng_fwd);
  CHECK(max_abs_diff(got, want) == 0.f);
}

TEST_CASE("block gradient survives the full stack") {
  BlockSpec spec;
  spec.kind = BlockSpec::Kind::downsample;
  spec.filters = 4;
  Rng rng(111);
  Block block("b", 3, spec);
  block.init(rng, 0.1f);
  Tensor x = random_tensor(3, 8, 8, rng);
  Tensor gout = random_tensor(4, 4, 4, rng);

  Tensor y0 = block.forward(x, false, rng);
  Tensor gin = block.backward(gout);
  auto loss = [&](const Tensor& xx) {
    Rng r(0);
    Tensor yy = const_cast<Block&>(block).forward(xx, false, r);
    double l = 0;
    for (size_t i = 0; i < yy.size(); ++i)
      l += static_cast<double>(yy.v[i]) * gout.v[i];
    return l;
  };
  Rng pick(112);
  const float h = 1e-2f;
  int checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    size_t i = static_cast<size_t>(pick.uniform_int(static_cast<int>(x.size())));
    Tensor xp = x, xm = x;
    xp.v[i] += h;
    xm.v[i] -= h;
    double want = (loss(xp) - loss(xm)) / (2.0 * h);
    if (std::fabs(want) < 5e-2) continue;  // skip tiny, noise-dominated slots
    CHECK(std::fabs(gin.v[i] - want) < 0.05 * std::fabs(want) + 1e-3);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("dropout placement is rejected on downsample blocks") {
  BlockSpec spec;
  spec.kind = BlockSpec::Kind::downsample;
  spec.dropout = 0.5f;
  CHECK_THROWS_AS(Block("b", 3, spec), config_error);
}

TEST_CASE("identical seeds give identical layers") {
  Rng a(42), b(42);
  Conv2d ca("c", 3, 8, ConvGeom{4, 2, 1});
  Conv2d cb("c", 3, 8, ConvGeom{4, 2, 1});
  ca.init(a, 0.02f);
  cb.init(b, 0.02f);
  std::vector<Param*> pa, pb;
  ca.params(pa);
  cb.params(pb);
  CHECK(pa[0]->w == pb[0]->w);

  Rng c1 = Rng::child(42, 1), c2 = Rng::child(42, 2);
  CHECK(c1.next_u64() != c2.next_u64());
}

TEST_CASE("param archive round-trips and validates") {
  Rng rng(113);
  Conv2d src("layer", 2, 3, ConvGeom{4, 2, 1});
  src.init(rng, 0.4f);
  std::vector<Param*> sp;
  src.params(sp);

  std::stringstream buf;
  write_params(buf, {sp[0], sp[1]});

  Conv2d dst("layer", 2, 3, ConvGeom{4, 2, 1});
  std::vector<Param*> dp;
  dst.params(dp);
  read_params(buf, dp);
  CHECK(dp[0]->w == sp[0]->w);
  CHECK(dp[1]->w == sp[1]->w);

  Tensor x = random_tensor(2, 6, 6, rng);
  CHECK(max_abs_diff(src.forward(x), dst.forward(x)) == 0.f);

  SUBCASE("missing tensor") {
    std::stringstream partial;
    write_params(partial, {sp[0]});
    CHECK_THROWS_AS(read_params(partial, dp), io_error);
  }
  SUBCASE("shape mismatch") {
    std::stringstream full;
    write_params(full, {sp[0], sp[1]});
    Conv2d other("layer", 2, 5, ConvGeom{4, 2, 1});
    std::vector<Param*> op;
    other.params(op);
    CHECK_THROWS_AS(read_params(full, op), io_error);
  }
  SUBCASE("garbage header") {
    std::stringstream bad("not an archive");
    CHECK_THROWS_AS(read_params(bad, dp), io_error);
  }
}

TEST_CASE("param_count sums all learnables") {
  Conv2d conv("c", 3, 8, ConvGeom{4, 2, 1});
  InstanceNorm2d norm("n", 8);
  std::vector<Param*> ps;
  conv.params(ps);
  norm.params(ps);
  CHECK(param_count(ps) == 3 * 8 * 16 + 8 + 8 + 8);
}
