#include "spritegan/model.hpp"

#include <algorithm>

namespace sprite {

using nn::Block;
using nn::BlockSpec;
using nn::Tensor;

namespace {

void add_inplace(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) throw config_error("add_inplace: shape mismatch");
  for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
}

void check_image_input(const Tensor& x, int channels, const char* who) {
  if (x.c != channels || x.h != kCanvas || x.w != kCanvas)
    throw config_error(std::string(who) + ": expected " +
                       std::to_string(channels) + "x" +
                       std::to_string(kCanvas) + "x" + std::to_string(kCanvas) +
                       " input, got " + x.shape_str());
}

nlohmann::json block_json(const Block& b) {
  const BlockSpec& s = b.spec();
  return {{"kind",
           s.kind == BlockSpec::Kind::downsample ? "downsample" : "upsample"},
          {"in_channels", b.in_c()},
          {"filters", s.filters},
          {"kernel", s.kernel},
          {"stride", s.stride},
          {"pad", s.pad},
          {"normalize", s.normalize},
          {"dropout", s.dropout},
          {"activation", nn::to_string(s.act)}};
}

}  // namespace

nlohmann::json to_json(const GeneratorConfig& cfg) {
  return {{"type", "generator"},
          {"channels", cfg.channels},
          {"encoder_filters", cfg.encoder_filters},
          {"dropout", cfg.dropout},
          {"dropout_blocks", cfg.dropout_blocks},
          {"init_stddev", cfg.init_stddev}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  cfg.channels = j.at("channels").get<int>();
  cfg.encoder_filters = j.at("encoder_filters").get<std::vector<int>>();
  cfg.dropout = j.at("dropout").get<float>();
  cfg.dropout_blocks = j.at("dropout_blocks").get<int>();
  cfg.init_stddev = j.at("init_stddev").get<float>();
  return cfg;
}

Generator::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.channels != 3 && cfg_.channels != 4)
    throw config_error("generator channels must be 3 or 4");
  const auto& f = cfg_.encoder_filters;
  // Six halvings take the 64x64 canvas to a 1x1 bottleneck; any other depth
  // would leave spatial extent there.
  constexpr size_t kDepth = 6;
  if (f.size() != kDepth)
    throw config_error("encoder_filters must have exactly " +
                       std::to_string(kDepth) + " entries, got " +
                       std::to_string(f.size()));
  for (size_t i = 0; i < f.size(); ++i)
    if (f[i] <= 0)
      throw config_error("encoder block " + std::to_string(i) +
                         ": filter count must be positive");

  const int n = static_cast<int>(f.size());
  int in_c = cfg_.channels;
  for (int i = 0; i < n; ++i) {
    BlockSpec s;
    s.kind = BlockSpec::Kind::downsample;
    s.filters = f[i];
    s.normalize = i > 0;
    s.act = nn::Act::leaky_relu;
    enc_.emplace_back("enc" + std::to_string(i), in_c, s);
    in_c = f[i];
  }
  // Decoder filters mirror the encoder; each block after the first also
  // consumes the matching encoder activation through a skip concat.
  for (int i = 0; i < n; ++i) {
    BlockSpec s;
    s.kind = BlockSpec::Kind::upsample;
    s.filters = f[n - 1 - i];
    s.normalize = true;
    s.dropout = i < std::min(cfg_.dropout_blocks, n) ? cfg_.dropout : 0.f;
    s.act = nn::Act::relu;
    int dec_in = i == 0 ? f[n - 1] : f[n - i] + f[n - i - 1];
    dec_.emplace_back("dec" + std::to_string(i), dec_in, s);
  }
  BlockSpec hs;
  hs.kind = BlockSpec::Kind::downsample;
  hs.filters = cfg_.channels;
  hs.kernel = 1;
  hs.stride = 1;
  hs.pad = 0;
  hs.normalize = false;
  hs.act = nn::Act::tanh;
  head_ = std::make_unique<Block>("head", f[0], hs);
}

void Generator::init(Rng& rng) {
  for (auto& b : enc_) b.init(rng, cfg_.init_stddev);
  for (auto& b : dec_) b.init(rng, cfg_.init_stddev);
  head_->init(rng, cfg_.init_stddev);
}

Tensor Generator::forward(const Tensor& x, bool train, Rng& rng) {
  check_image_input(x, cfg_.channels, "generator");
  const int n = static_cast<int>(enc_.size());
  enc_out_.clear();
  enc_out_.reserve(n);
  Tensor t = x;
  for (int i = 0; i < n; ++i) {
    t = enc_[i].forward(t, train, rng);
    enc_out_.push_back(t);
  }
  for (int i = 0; i < n; ++i) {
    t = dec_[i].forward(t, train, rng);
    if (i < n - 1) t = nn::concat_channels(t, enc_out_[n - 2 - i]);
  }
  return head_->forward(t, train, rng);
}

Tensor Generator::forward(const Tensor& x) {
  return forward(x, false, eval_rng_);
}

Tensor Generator::backward(const Tensor& gout) {
  const int n = static_cast<int>(enc_.size());
  const auto& f = cfg_.encoder_filters;
  std::vector<Tensor> skip_g(n);  // gradient w.r.t. enc_out_[j] via skips

  Tensor g = head_->backward(gout);
  for (int i = n - 1; i >= 1; --i) {
    g = dec_[i].backward(g);
    // dec_[i] consumed concat(dec_[i-1] out, enc_out_[n-1-i]).
    const Tensor& skip_ref = enc_out_[n - 1 - i];
    Tensor gd(f[n - i], skip_ref.h, skip_ref.w);
    Tensor gs(skip_ref.c, skip_ref.h, skip_ref.w);
    nn::split_channels(g, gd, gs);
    skip_g[n - 1 - i] = std::move(gs);
    g = std::move(gd);
  }
  g = dec_[0].backward(g);  // now w.r.t. enc_out_[n-1]
  for (int j = n - 1; j >= 1; --j) {
    g = enc_[j].backward(g);
    add_inplace(g, skip_g[j - 1]);
  }
  return enc_[0].backward(g);
}

std::vector<nn::Param*> Generator::params() {
  std::vector<nn::Param*> ps;
  for (auto& b : enc_) b.params(ps);
  for (auto& b : dec_) b.params(ps);
  head_->params(ps);
  return ps;
}

// ----------------------------------------------------------- discriminator

nlohmann::json to_json(const DiscriminatorConfig& cfg) {
  return {{"type", "discriminator"},
          {"channels", cfg.channels},
          {"patch_size", cfg.patch_size},
          {"init_stddev", cfg.init_stddev}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig cfg;
  cfg.channels = j.at("channels").get<int>();
  cfg.patch_size = j.at("patch_size").get<int>();
  cfg.init_stddev = j.at("init_stddev").get<float>();
  return cfg;
}

std::vector<BlockSpec> discriminator_stack(int patch_size) {
  auto block = [](int kernel, int stride, int pad, int filters, bool norm) {
    BlockSpec s;
    s.kind = BlockSpec::Kind::downsample;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    s.filters = filters;
    s.normalize = norm;
    s.act = nn::Act::leaky_relu;
    return s;
  };
  std::vector<BlockSpec> stack;
  switch (patch_size) {
    case 2:
      stack = {block(2, 1, 0, 64, false)};
      break;
    case 5:
      stack = {block(4, 1, 0, 64, false), block(2, 1, 0, 128, false)};
      break;
    case 11:
      stack = {block(5, 2, 0, 64, false), block(4, 1, 0, 128, false)};
      break;
    case 64:
      // The last block lands on a 1x1 map, where per-channel normalization
      // degenerates (zero variance) and would cut gradient flow entirely.
      stack = {block(4, 2, 1, 64, false),  block(4, 2, 1, 128, true),
               block(4, 2, 1, 256, true),  block(4, 2, 1, 512, true),
               block(4, 2, 1, 512, true),  block(4, 2, 1, 512, false)};
      break;
    default:
      throw config_error("unsupported patch size " +
                         std::to_string(patch_size) +
                         " (choose one of 2, 5, 11, 64)");
  }
  BlockSpec score = block(1, 1, 0, 1, false);
  score.act = nn::Act::sigmoid;
  stack.push_back(score);
  return stack;
}

FieldInfo field_of_stack(const std::vector<BlockSpec>& stack) {
  FieldInfo info;
  info.rf = 1;
  info.jump = 1;
  info.offset = 0;
  int size = kCanvas;
  for (const auto& s : stack) {
    info.rf += (s.kernel - 1) * info.jump;
    info.offset += s.pad * info.jump;
    info.jump *= s.stride;
    size = nn::conv_out_size(size, nn::ConvGeom{s.kernel, s.stride, s.pad});
  }
  info.effective = std::min(info.rf, kCanvas);
  info.grid_h = info.grid_w = size;
  return info;
}

FieldInfo receptive_field(const DiscriminatorConfig& cfg) {
  return field_of_stack(discriminator_stack(cfg.patch_size));
}

Footprint footprint(const DiscriminatorConfig& cfg, int gy, int gx) {
  FieldInfo info = receptive_field(cfg);
  Footprint fp;
  fp.y0 = std::max(0, gy * info.jump - info.offset);
  fp.x0 = std::max(0, gx * info.jump - info.offset);
  fp.y1 = std::min(kCanvas, gy * info.jump - info.offset + info.rf);
  fp.x1 = std::min(kCanvas, gx * info.jump - info.offset + info.rf);
  return fp;
}

Discriminator::Discriminator(DiscriminatorConfig cfg)
    : Discriminator(cfg, discriminator_stack(cfg.patch_size)) {}

Discriminator::Discriminator(DiscriminatorConfig cfg,
                             std::vector<BlockSpec> stack)
    : cfg_(std::move(cfg)) {
  if (cfg_.channels != 3 && cfg_.channels != 4)
    throw config_error("discriminator channels must be 3 or 4");
  FieldInfo info = field_of_stack(stack);
  if (info.effective != cfg_.patch_size)
    throw config_error("discriminator stack has receptive field " +
                       std::to_string(info.effective) +
                       ", requested patch size " +
                       std::to_string(cfg_.patch_size));
  int in_c = 2 * cfg_.channels;
  for (size_t i = 0; i < stack.size(); ++i) {
    layers_.emplace_back("l" + std::to_string(i), in_c, stack[i]);
    in_c = stack[i].filters;
  }
}

void Discriminator::init(Rng& rng) {
  for (auto& b : layers_) b.init(rng, cfg_.init_stddev);
}

Tensor Discriminator::forward(const Tensor& src, const Tensor& img) {
  check_image_input(src, cfg_.channels, "discriminator(src)");
  check_image_input(img, cfg_.channels, "discriminator(img)");
  Tensor t = nn::concat_channels(src, img);
  for (auto& b : layers_) t = b.forward(t, false, eval_rng_);
  return t;
}

Tensor Discriminator::backward(const Tensor& ggrid, Tensor* gsrc) {
  Tensor g = ggrid;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = it->backward(g);
  Tensor gs(cfg_.channels, kCanvas, kCanvas);
  Tensor gi(cfg_.channels, kCanvas, kCanvas);
  nn::split_channels(g, gs, gi);
  if (gsrc) *gsrc = std::move(gs);
  return gi;
}

std::vector<nn::Param*> Discriminator::params() {
  std::vector<nn::Param*> ps;
  for (auto& b : layers_) b.params(ps);
  return ps;
}

// ------------------------------------------------------------ descriptions

nlohmann::json network_spec_json(const Generator& g) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : g.encoder()) blocks.push_back(block_json(b));
  for (const auto& b : g.decoder()) blocks.push_back(block_json(b));
  blocks.push_back(block_json(g.head()));
  nlohmann::json wiring = nlohmann::json::array();
  const int n = static_cast<int>(g.encoder().size());
  for (int i = 0; i < n - 1; ++i)
    wiring.push_back({{"from", "enc" + std::to_string(i)},
                      {"concat_after", "dec" + std::to_string(n - 2 - i)}});
  return {{"version", 1},
          {"config", to_json(g.config())},
          {"blocks", blocks},
          {"wiring", wiring}};
}

nlohmann::json network_spec_json(const Discriminator& d) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : d.layers()) blocks.push_back(block_json(b));
  FieldInfo info = receptive_field(d.config());
  return {{"version", 1},
          {"config", to_json(d.config())},
          {"blocks", blocks},
          {"receptive_field",
           {{"analytic", info.rf},
            {"effective", info.effective},
            {"grid", {info.grid_h, info.grid_w}},
            {"jump", info.jump}}}};
}

nn::Tensor model_input(const nn::Tensor& sprite_pixels, int channels) {
  if (sprite_pixels.c == channels) return sprite_pixels;
  if (sprite_pixels.c == 4 && channels == 3) {
    nn::Tensor rgb(3, sprite_pixels.h, sprite_pixels.w);
    nn::Tensor alpha(1, sprite_pixels.h, sprite_pixels.w);
    nn::split_channels(sprite_pixels, rgb, alpha);
    return rgb;
  }
  throw config_error("sprite has " + std::to_string(sprite_pixels.c) +
                     " channels, model expects " + std::to_string(channels));
}

}  // namespace sprite
