#include "spritegan/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <utility>

#include <Eigen/Dense>

namespace sprite {

namespace fs = std::filesystem;
using nlohmann::json;

// --- feature statistics -----------------------------------------------------

FeatureStats gaussian_stats(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2)
    throw config_error("feature statistics need at least 2 samples, got " +
                       std::to_string(rows.size()));
  size_t d = rows[0].size();
  if (d == 0) throw config_error("feature dimension is 0");
  for (const auto& r : rows)
    if (r.size() != d)
      throw config_error("feature rows have inconsistent dimensions");

  FeatureStats st;
  st.n = static_cast<int64_t>(rows.size());
  st.mean.assign(d, 0.0);
  for (const auto& r : rows)
    for (size_t j = 0; j < d; ++j) st.mean[j] += r[j];
  for (double& m : st.mean) m /= static_cast<double>(rows.size());

  st.cov.assign(d * d, 0.0);
  double denom = static_cast<double>(rows.size() - 1);
  for (const auto& r : rows)
    for (size_t i = 0; i < d; ++i) {
      double di = r[i] - st.mean[i];
      for (size_t j = i; j < d; ++j)
        st.cov[i * d + j] += di * (r[j] - st.mean[j]) / denom;
    }
  for (size_t i = 0; i < d; ++i)  // mirror: symmetric by construction
    for (size_t j = 0; j < i; ++j) st.cov[i * d + j] = st.cov[j * d + i];
  return st;
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_matrix(const std::vector<double>& cov, int d) {
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = cov[static_cast<size_t>(i) * d + j];
  return m;
}

bool sqrt_psd(const Mat& a, Mat* out) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) return false;
  Vec vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  *out = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
  return true;
}

bool trace_sqrt_product(const Mat& ca, const Mat& cb, double* out) {
  Mat s;
  if (!sqrt_psd(ca, &s)) return false;
  Mat m = s * cb * s;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success) return false;
  *out = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return true;
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim())
    throw config_error("feature stats dimensions differ: " +
                       std::to_string(a.dim()) + " vs " +
                       std::to_string(b.dim()));
  int d = a.dim();
  Mat ca = to_matrix(a.cov, d), cb = to_matrix(b.cov, d);

  double mean_term = 0;
  for (int i = 0; i < d; ++i) {
    double dm = a.mean[static_cast<size_t>(i)] - b.mean[static_cast<size_t>(i)];
    mean_term += dm * dm;
  }

  double tr_sqrt = 0;
  if (!trace_sqrt_product(ca, cb, &tr_sqrt)) {
    Mat jitter = 1e-10 * Mat::Identity(d, d);
    if (!trace_sqrt_product(ca + jitter, cb + jitter, &tr_sqrt))
      throw runtime_failure(
          "covariance square root did not converge (dim " +
          std::to_string(d) + ", traces " + std::to_string(ca.trace()) +
          ", " + std::to_string(cb.trace()) + ")");
  }

  double fid = mean_term + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  return std::max(fid, 0.0);
}

// --- extraction pipeline ----------------------------------------------------

std::vector<double> PixelPoolExtractor::extract(const Image8& rgb) const {
  if (rgb.c != 3 || rgb.h != input_size() || rgb.w != input_size())
    throw config_error("extractor expects " + std::to_string(input_size()) +
                       "x" + std::to_string(input_size()) + " RGB, got " +
                       std::to_string(rgb.h) + "x" + std::to_string(rgb.w) +
                       "x" + std::to_string(rgb.c));
  const int grid = 16;
  const int block = input_size() / grid;
  std::vector<double> feat(static_cast<size_t>(dim()), 0.0);
  for (int by = 0; by < grid; ++by)
    for (int bx = 0; bx < grid; ++bx)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0;
        for (int y = 0; y < block; ++y)
          for (int x = 0; x < block; ++x)
            acc += rgb.at(by * block + y, bx * block + x, ch);
        feat[static_cast<size_t>((by * grid + bx) * 3 + ch)] =
            acc / (255.0 * block * block);
      }
  return feat;
}

Image8 composite_rgb(const nn::Tensor& pixels, Rgb background) {
  if (pixels.c != 3 && pixels.c != 4)
    throw config_error("composite_rgb: expected 3 or 4 planes, got " +
                       std::to_string(pixels.c));
  Image8 out(pixels.h, pixels.w, 3);
  for (int y = 0; y < pixels.h; ++y)
    for (int x = 0; x < pixels.w; ++x) {
      double a = 1.0;
      if (pixels.c == 4)
        a = std::clamp((static_cast<double>(pixels.at(3, y, x)) + 1.0) / 2.0,
                       0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        double fg = (static_cast<double>(pixels.at(ch, y, x)) + 1.0) * 127.5;
        double v = fg * a + static_cast<double>(background[ch]) * (1.0 - a);
        out.at(y, x, ch) =
            static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  return out;
}

std::vector<Image8> preprocess_for_fid(const std::vector<nn::Tensor>& batch,
                                       Rgb background, int input_size) {
  std::vector<Image8> out;
  out.reserve(batch.size());
  for (const nn::Tensor& t : batch) {
    Image8 rgb = composite_rgb(t, background);
    if (rgb.h != input_size || rgb.w != input_size)
      rgb = resize_nearest(rgb, input_size, input_size);
    out.push_back(std::move(rgb));
  }
  return out;
}

double fid_between(const std::vector<nn::Tensor>& generated,
                   const std::vector<nn::Tensor>& truth,
                   const FeatureExtractor& extractor, Rgb background) {
  auto features = [&](const std::vector<nn::Tensor>& batch) {
    std::vector<std::vector<double>> rows;
    rows.reserve(batch.size());
    for (const Image8& img :
         preprocess_for_fid(batch, background, extractor.input_size()))
      rows.push_back(extractor.extract(img));
    return gaussian_stats(rows);
  };
  return frechet_distance(features(generated), features(truth));
}

// --- reports ------------------------------------------------------------

json to_json(const FidReport& r) {
  return {{"fid_train", r.fid_train},
          {"fid_test", r.fid_test},
          {"n_train", r.n_train},
          {"n_test", r.n_test},
          {"extractor", r.extractor},
          {"preprocessing",
           {{"background", {r.background[0], r.background[1], r.background[2]}},
            {"resize", r.resize}}}};
}

FidReport fid_report_from_json(const json& j) {
  FidReport r;
  r.fid_train = j.at("fid_train").get<double>();
  r.fid_test = j.at("fid_test").get<double>();
  r.n_train = j.at("n_train").get<int64_t>();
  r.n_test = j.at("n_test").get<int64_t>();
  r.extractor = j.at("extractor").get<std::string>();
  if (j.contains("preprocessing")) {
    const json& p = j.at("preprocessing");
    if (p.contains("background"))
      for (int i = 0; i < 3; ++i)
        r.background[static_cast<size_t>(i)] =
            p.at("background").at(static_cast<size_t>(i)).get<uint8_t>();
    r.resize = p.value("resize", r.resize);
  }
  return r;
}

void write_json_atomic(const json& j, const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream out(tmp);
    if (!out) throw io_error("cannot write " + tmp.string());
    out << j.dump(2) << "\n";
    if (!out) throw io_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

FidReport evaluate_model(Generator& gen, const DatasetSplit& split,
                         const FeatureExtractor& extractor, Rgb background) {
  const int ch = gen.config().channels;
  auto side_fid = [&](const std::vector<PairedExample>& pairs) {
    if (pairs.size() < 2)
      throw config_error("evaluation split needs at least 2 examples, got " +
                         std::to_string(pairs.size()));
    std::vector<nn::Tensor> generated, truth;
    generated.reserve(pairs.size());
    truth.reserve(pairs.size());
    for (const PairedExample& p : pairs) {
      generated.push_back(gen.forward(model_input(p.source.pixels, ch)));
      truth.push_back(model_input(p.target.pixels, ch));
    }
    return fid_between(generated, truth, extractor, background);
  };

  FidReport r;
  r.fid_train = side_fid(split.train);
  r.fid_test = side_fid(split.test);
  r.n_train = static_cast<int64_t>(split.train.size());
  r.n_test = static_cast<int64_t>(split.test.size());
  r.extractor = extractor.id();
  r.background = background;
  return r;
}

// --- nearest match and dangling pixels --------------------------------------

NearestMatch nearest_training_match(const Sprite& probe,
                                    const std::vector<PairedExample>& train) {
  if (train.empty()) throw config_error("nearest match over an empty set");
  NearestMatch best;
  best.distance = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < train.size(); ++i) {
    const Sprite& cand = train[i].source;
    if (!cand.pixels.same_shape(probe.pixels))
      throw config_error("nearest match: shape mismatch");
    double acc = 0;
    for (size_t k = 0; k < cand.pixels.v.size(); ++k)
      acc += std::fabs(static_cast<double>(probe.pixels.v[k]) -
                       cand.pixels.v[k]);
    double dist = acc / static_cast<double>(cand.pixels.v.size());
    bool better = dist < best.distance;
    if (dist == best.distance) {
      const Sprite& incumbent = train[best.index].source;
      better = std::make_pair(cand.character_id, cand.frame) <
               std::make_pair(incumbent.character_id, incumbent.frame);
    }
    if (better) {
      best.index = i;
      best.distance = dist;
    }
  }
  return best;
}

double dangling_pixel_rate(const nn::Tensor& generated,
                           const nn::Tensor& truth_rgba) {
  if (truth_rgba.c != 4)
    throw config_error("dangling rate needs RGBA ground truth");
  if (generated.h != truth_rgba.h || generated.w != truth_rgba.w)
    throw config_error("dangling rate: size mismatch");
  if (generated.c != 3 && generated.c != 4)
    throw config_error("dangling rate: generated output must be RGB(A)");

  int64_t dangling = 0;
  for (int y = 0; y < generated.h; ++y)
    for (int x = 0; x < generated.w; ++x) {
      bool outside = truth_rgba.at(3, y, x) <= 0.0f;
      if (!outside) continue;
      bool opaque;
      if (generated.c == 4) {
        opaque = generated.at(3, y, x) > 0.0f;
      } else {
        // transparent training pixels are black, so visible content is a
        // departure from -1 on any channel
        float dev = 0;
        for (int ch = 0; ch < 3; ++ch)
          dev = std::max(dev, std::fabs(generated.at(ch, y, x) + 1.0f));
        opaque = dev > 0.3f;
      }
      if (opaque) ++dangling;
    }
  return static_cast<double>(dangling) /
         (static_cast<double>(generated.h) * generated.w);
}

// --- comparison grids ---------------------------------------------------

namespace {

// 3x5 capital glyphs, one byte per row, low 3 bits used.
const std::map<char, std::array<uint8_t, 5>>& font() {
  static const std::map<char, std::array<uint8_t, 5>> f = {
      {'A', {0b010, 0b101, 0b111, 0b101, 0b101}},
      {'B', {0b110, 0b101, 0b110, 0b101, 0b110}},
      {'C', {0b111, 0b100, 0b100, 0b100, 0b111}},
      {'D', {0b110, 0b101, 0b101, 0b101, 0b110}},
      {'E', {0b111, 0b100, 0b110, 0b100, 0b111}},
      {'G', {0b111, 0b100, 0b101, 0b101, 0b111}},
      {'H', {0b101, 0b101, 0b111, 0b101, 0b101}},
      {'I', {0b111, 0b010, 0b010, 0b010, 0b111}},
      {'L', {0b100, 0b100, 0b100, 0b100, 0b111}},
      {'N', {0b101, 0b111, 0b111, 0b111, 0b101}},
      {'O', {0b111, 0b101, 0b101, 0b101, 0b111}},
      {'P', {0b110, 0b101, 0b110, 0b100, 0b100}},
      {'R', {0b110, 0b101, 0b110, 0b101, 0b101}},
      {'S', {0b111, 0b100, 0b111, 0b001, 0b111}},
      {'T', {0b111, 0b010, 0b010, 0b010, 0b010}},
      {'U', {0b101, 0b101, 0b101, 0b101, 0b111}},
      {'0', {0b111, 0b101, 0b101, 0b101, 0b111}},
      {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
      {'2', {0b111, 0b001, 0b111, 0b100, 0b111}},
      {'3', {0b111, 0b001, 0b011, 0b001, 0b111}},
      {'4', {0b101, 0b101, 0b111, 0b001, 0b001}},
      {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
      {'6', {0b111, 0b100, 0b111, 0b101, 0b111}},
      {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
      {'8', {0b111, 0b101, 0b111, 0b101, 0b111}},
      {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
      {' ', {0, 0, 0, 0, 0}},
  };
  return f;
}

void draw_text(Image8& img, int x0, int y0, const std::string& text, int scale,
               int x_limit) {
  int x = x0;
  for (char raw : text) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    auto it = font().find(c);
    if (it == font().end()) it = font().find(' ');
    for (int ry = 0; ry < 5; ++ry)
      for (int rx = 0; rx < 3; ++rx) {
        if (!((it->second[static_cast<size_t>(ry)] >> (2 - rx)) & 1)) continue;
        for (int sy = 0; sy < scale; ++sy)
          for (int sx = 0; sx < scale; ++sx) {
            int py = y0 + ry * scale + sy;
            int px = x + rx * scale + sx;
            if (py < 0 || py >= img.h || px < 0 || px >= x_limit) continue;
            img.at(py, px, 0) = 20;
            img.at(py, px, 1) = 20;
            img.at(py, px, 2) = 20;
          }
      }
    x += 4 * scale;
  }
}

}  // namespace

Image8 render_grid(const std::vector<std::string>& labels,
                   const std::vector<std::vector<nn::Tensor>>& rows,
                   int scale) {
  if (labels.empty() || rows.empty())
    throw config_error("render_grid: nothing to draw");
  if (scale < 1) throw config_error("render_grid: scale must be >= 1");
  for (const auto& row : rows)
    if (row.size() != labels.size())
      throw config_error("render_grid: row width " +
                         std::to_string(row.size()) + " != label count " +
                         std::to_string(labels.size()));

  const int cell = kCanvas * scale;
  const int w = cell * static_cast<int>(labels.size());
  const int h = kGridLabelBand + cell * static_cast<int>(rows.size());
  Image8 img(h, w, 3, 255);

  for (size_t col = 0; col < labels.size(); ++col)
    draw_text(img, static_cast<int>(col) * cell + 4, 3, labels[col], 2,
              static_cast<int>(col + 1) * cell - 2);

  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t col = 0; col < labels.size(); ++col) {
      Image8 sprite =
          upscale(composite_rgb(rows[r][col], {255, 255, 255}), scale);
      int oy = kGridLabelBand + static_cast<int>(r) * cell;
      int ox = static_cast<int>(col) * cell;
      for (int y = 0; y < cell; ++y)
        for (int x = 0; x < cell; ++x)
          for (int ch = 0; ch < 3; ++ch)
            img.at(oy + y, ox + x, ch) = sprite.at(y, x, ch);
    }
  return img;
}

}  // namespace sprite
