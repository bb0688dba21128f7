#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "spritegan/dataset.hpp"
#include "spritegan/image.hpp"
#include "spritegan/model.hpp"

namespace sprite {

// Sample mean and unbiased covariance of a feature set.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> cov;  // dim x dim, row-major, symmetric
  int64_t n = 0;

  int dim() const { return static_cast<int>(mean.size()); }
};

// rows: n x dim feature matrix. Covariance divides by n-1 and is
// symmetrized; fewer than 2 rows is rejected.
FeatureStats gaussian_stats(const std::vector<std::vector<double>>& rows);

// ||mu_a - mu_b||^2 + Tr(Ca + Cb - 2 (Ca Cb)^(1/2)), the matrix square root
// taken via eigendecomposition of C_a^(1/2) C_b C_a^(1/2) with negative
// round-off eigenvalues clamped; tiny negative totals clamp to 0. A failed
// eigensolve is retried once with a jitter of 1e-10 I.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// Pluggable image-to-feature map for distribution distances.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int input_size() const = 0;  // square RGB input edge length
  virtual int dim() const = 0;
  virtual std::vector<double> extract(const Image8& rgb) const = 0;
};

// Built-in extractor: 16x16 grid of block-averaged RGB values over the
// composited sprite (768-d). Deterministic and self-contained; FID numbers
// are comparable only within one extractor id.
class PixelPoolExtractor final : public FeatureExtractor {
 public:
  std::string id() const override { return "pixelpool16-v1"; }
  int input_size() const override { return 64; }
  int dim() const override { return 16 * 16 * 3; }
  std::vector<double> extract(const Image8& rgb) const override;
};

// [-1,1] sprite planes -> RGB bytes, alpha-composited over the background
// (out = fg*a + bg*(1-a)); 3-channel inputs are treated as fully opaque.
Image8 composite_rgb(const nn::Tensor& pixels, Rgb background);

// Composite, then nearest-neighbor resize to the extractor input size.
std::vector<Image8> preprocess_for_fid(const std::vector<nn::Tensor>& batch,
                                       Rgb background, int input_size);

double fid_between(const std::vector<nn::Tensor>& generated,
                   const std::vector<nn::Tensor>& truth,
                   const FeatureExtractor& extractor, Rgb background);

struct FidReport {
  double fid_train = 0;
  double fid_test = 0;
  int64_t n_train = 0;
  int64_t n_test = 0;
  std::string extractor;
  Rgb background = {255, 255, 255};
  std::string resize = "nearest";
};

nlohmann::json to_json(const FidReport& r);
FidReport fid_report_from_json(const nlohmann::json& j);

// Temp-file-and-rename write so readers never observe partial reports.
void write_json_atomic(const nlohmann::json& j,
                       const std::filesystem::path& path);

// Runs the generator over both split sides and scores each against its
// ground truth. Either side smaller than 2 is rejected.
FidReport evaluate_model(Generator& gen, const DatasetSplit& split,
                         const FeatureExtractor& extractor,
                         Rgb background = {255, 255, 255});

struct NearestMatch {
  size_t index = 0;
  double distance = 0;
};

// Argmin of mean-absolute pixel distance between the probe's pixels and
// every training pair's source; ties break on (character_id, frame).
NearestMatch nearest_training_match(const Sprite& probe,
                                    const std::vector<PairedExample>& train);

// Fraction of generated pixels that read as opaque outside the ground
// truth's silhouette. 4-channel outputs count alpha > 0 as opaque;
// 3-channel outputs count a max-channel deviation > 0.3 from the black
// transparent background.
double dangling_pixel_rate(const nn::Tensor& generated,
                           const nn::Tensor& truth_rgba);

inline constexpr int kGridLabelBand = 16;

// Comparison sheet: one labeled column per cell role, one row per example,
// every cell composited over white and integer-upscaled. Height is
// kGridLabelBand + rows * 64 * scale.
Image8 render_grid(const std::vector<std::string>& labels,
                   const std::vector<std::vector<nn::Tensor>>& rows,
                   int scale);

}  // namespace sprite
