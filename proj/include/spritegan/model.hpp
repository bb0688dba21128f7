#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "spritegan/nn.hpp"

namespace sprite {

// Image-to-image U-Net: mirrored strided-conv encoder / transpose-conv
// decoder with skip concatenations, tanh head. All resolution changes come
// from stride-2 convolutions; six blocks take 64x64 down to a 1x1 bottleneck.
struct GeneratorConfig {
  int channels = 4;  // image channels; 4 keeps the alpha plane
  std::vector<int> encoder_filters = {64, 128, 256, 512, 512, 512};
  float dropout = 0.5f;
  int dropout_blocks = 3;  // applied to the first decoder blocks
  float init_stddev = 0.02f;
};

nlohmann::json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg);

  void init(Rng& rng);
  nn::Tensor forward(const nn::Tensor& x, bool train, Rng& rng);
  nn::Tensor forward(const nn::Tensor& x);  // eval mode
  // Accumulates parameter gradients; returns dL/dx.
  nn::Tensor backward(const nn::Tensor& gout);

  std::vector<nn::Param*> params();
  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<nn::Block>& encoder() const { return enc_; }
  const std::vector<nn::Block>& decoder() const { return dec_; }
  const nn::Block& head() const { return *head_; }
  // Encoder activations cached by the most recent forward.
  const std::vector<nn::Tensor>& encoder_outputs() const { return enc_out_; }

 private:
  GeneratorConfig cfg_;
  std::vector<nn::Block> enc_, dec_;
  std::unique_ptr<nn::Block> head_;
  std::vector<nn::Tensor> enc_out_;
  Rng eval_rng_{0};
};

// Patch discriminator over the channel-concatenated (source, candidate)
// pair. Outputs a grid of per-patch real probabilities; patch_size selects a
// stack whose effective receptive field matches it exactly.
struct DiscriminatorConfig {
  int channels = 4;    // per image; the net sees 2*channels
  int patch_size = 2;  // one of {2, 5, 11, 64}
  float init_stddev = 0.02f;
};

nlohmann::json to_json(const DiscriminatorConfig& cfg);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

// Default layer stack for a patch size, score layer included; throws
// config_error for unsupported sizes. The small-patch stacks carry no
// normalization so that every score stays a pure function of its patch.
std::vector<nn::BlockSpec> discriminator_stack(int patch_size);

struct FieldInfo {
  int rf = 0;         // analytic receptive field of one grid cell
  int effective = 0;  // clipped to the input resolution
  int grid_h = 0, grid_w = 0;
  int jump = 0;    // input-pixel step between adjacent grid cells
  int offset = 0;  // left/top padding reach, in input pixels
};

// rf <- rf + (kernel-1)*jump, jump <- jump*stride, folded over the stack.
FieldInfo field_of_stack(const std::vector<nn::BlockSpec>& stack);
FieldInfo receptive_field(const DiscriminatorConfig& cfg);

struct Footprint {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open, clipped to the input
};

Footprint footprint(const DiscriminatorConfig& cfg, int gy, int gx);

class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg);
  // Custom stack (score layer included) validated against cfg.patch_size.
  Discriminator(DiscriminatorConfig cfg, std::vector<nn::BlockSpec> stack);

  void init(Rng& rng);
  // src and img must share shape [channels x 64 x 64].
  nn::Tensor forward(const nn::Tensor& src, const nn::Tensor& img);
  // Accumulates parameter gradients; returns dL/d(img). If gsrc is non-null
  // it receives dL/d(src).
  nn::Tensor backward(const nn::Tensor& ggrid, nn::Tensor* gsrc = nullptr);

  std::vector<nn::Param*> params();
  const DiscriminatorConfig& config() const { return cfg_; }
  const std::vector<nn::Block>& layers() const { return layers_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<nn::Block> layers_;
  Rng eval_rng_{0};
};

// Versioned architecture descriptions stored beside weight checkpoints.
nlohmann::json network_spec_json(const Generator& g);
nlohmann::json network_spec_json(const Discriminator& d);

// The sprite planes a model consumes: identity when channel counts match,
// the RGB planes when a 3-channel model is fed 4-channel sprites.
nn::Tensor model_input(const nn::Tensor& sprite_pixels, int channels);

}  // namespace sprite
