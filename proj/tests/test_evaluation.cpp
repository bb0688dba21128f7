#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "spritegan/evaluation.hpp"
#include "spritegan/synthetic.hpp"
#include "test_utils.hpp"

using namespace sprite;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<double>> random_rows(int n, int dim, uint64_t seed,
                                             double spread = 1.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows(static_cast<size_t>(n));
  for (auto& r : rows) {
    r.resize(static_cast<size_t>(dim));
    for (double& v : r) v = rng.normal() * spread;
  }
  return rows;
}

FeatureStats stats_1d(double mean, double var) {
  FeatureStats st;
  st.mean = {mean};
  st.cov = {var};
  st.n = 2;
  return st;
}

std::vector<nn::Tensor> all_sprite_tensors(
    const std::vector<CharacterRecord>& records) {
  std::vector<nn::Tensor> out;
  for (const auto& rec : records)
    for (const auto& [pose, sprites] : rec.sprites)
      for (const Sprite& s : sprites) out.push_back(s.pixels);
  return out;
}

std::vector<nn::Tensor> with_noise(const std::vector<nn::Tensor>& clean,
                                   float sigma, uint64_t seed) {
  Rng rng(seed);
  std::vector<nn::Tensor> out = clean;
  for (nn::Tensor& t : out)
    for (float& v : t.v)
      v = std::clamp(v + rng.normalf(sigma), -1.f, 1.f);
  return out;
}

nn::Tensor flat_rgba(float r, float g, float b, float a) {
  nn::Tensor t(4, kCanvas, kCanvas);
  for (int y = 0; y < kCanvas; ++y)
    for (int x = 0; x < kCanvas; ++x) {
      t.at(0, y, x) = r;
      t.at(1, y, x) = g;
      t.at(2, y, x) = b;
      t.at(3, y, x) = a;
    }
  return t;
}

Sprite make_probe(const std::string& id, int frame, float fill) {
  Sprite s;
  s.character_id = id;
  s.pose = Pose::front;
  s.frame = frame;
  s.pixels = nn::Tensor(4, 4, 4);
  for (float& v : s.pixels.v) v = fill;
  return s;
}

PairedExample make_pair(const Sprite& src) {
  PairedExample p;
  p.source = src;
  p.target = src;
  p.target.pose = Pose::right;
  return p;
}

}  // namespace

TEST_CASE("gaussian stats match the worked two-sample example") {
  auto st = gaussian_stats({{0.0, 0.0}, {2.0, 2.0}});
  CHECK(st.n == 2);
  CHECK(st.dim() == 2);
  CHECK(st.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(st.mean[1] == doctest::Approx(1.0).epsilon(1e-12));
  for (double c : st.cov) CHECK(c == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("gaussian stats basic properties") {
  SUBCASE("identical rows give zero covariance") {
    auto st = gaussian_stats({{3.0, -1.0, 7.0},
                              {3.0, -1.0, 7.0},
                              {3.0, -1.0, 7.0}});
    CHECK(st.mean == std::vector<double>{3.0, -1.0, 7.0});
    for (double c : st.cov) CHECK(c == 0.0);
  }
  SUBCASE("agrees with a full-matrix reference") {
    auto rows = random_rows(40, 6, 11);
    auto st = gaussian_stats(rows);
    std::vector<double> mean(6, 0.0);
    for (const auto& r : rows)
      for (int j = 0; j < 6; ++j) mean[static_cast<size_t>(j)] += r[static_cast<size_t>(j)] / 40.0;
    for (int j = 0; j < 6; ++j)
      CHECK(std::fabs(st.mean[static_cast<size_t>(j)] - mean[static_cast<size_t>(j)]) < 1e-9);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        double acc = 0;
        for (const auto& r : rows)
          acc += (r[static_cast<size_t>(i)] - mean[static_cast<size_t>(i)]) *
                 (r[static_cast<size_t>(j)] - mean[static_cast<size_t>(j)]);
        CHECK(std::fabs(st.cov[static_cast<size_t>(i * 6 + j)] - acc / 39.0) <
              1e-9);
      }
  }
  SUBCASE("row order does not matter") {
    auto rows = random_rows(25, 4, 5);
    auto a = gaussian_stats(rows);
    std::reverse(rows.begin(), rows.end());
    auto b = gaussian_stats(rows);
    for (int j = 0; j < 4; ++j)
      CHECK(std::fabs(a.mean[static_cast<size_t>(j)] - b.mean[static_cast<size_t>(j)]) < 1e-9);
    for (size_t k = 0; k < a.cov.size(); ++k)
      CHECK(std::fabs(a.cov[k] - b.cov[k]) < 1e-9);
  }
  SUBCASE("covariance is exactly symmetric") {
    auto st = gaussian_stats(random_rows(15, 5, 2));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        CHECK(st.cov[static_cast<size_t>(i * 5 + j)] ==
              st.cov[static_cast<size_t>(j * 5 + i)]);
  }
  SUBCASE("fewer than two samples is rejected") {
    CHECK_THROWS_AS(gaussian_stats({}), config_error);
    CHECK_THROWS_AS(gaussian_stats({{1.0, 2.0}}), config_error);
  }
  SUBCASE("ragged rows are rejected") {
    CHECK_THROWS_AS(gaussian_stats({{1.0, 2.0}, {1.0}}), config_error);
  }
}

TEST_CASE("frechet distance closed forms and symmetry") {
  SUBCASE("one dimension, equal variances, means 0 and 1") {
    CHECK(std::fabs(frechet_distance(stats_1d(0.0, 1.0), stats_1d(1.0, 1.0)) -
                    1.0) < 1e-9);
  }
  SUBCASE("one dimension, equal means, sigma 1 and 2") {
    CHECK(std::fabs(frechet_distance(stats_1d(0.0, 1.0), stats_1d(0.0, 4.0)) -
                    1.0) < 1e-9);
  }
  SUBCASE("diagonal covariances reduce to a sum of 1-d terms") {
    FeatureStats a, b;
    a.mean = {0.0, 0.0};
    a.cov = {1.0, 0.0, 0.0, 4.0};
    a.n = b.n = 2;
    b.mean = {1.0, 1.0};
    b.cov = {4.0, 0.0, 0.0, 9.0};
    // |dmu|^2 = 2, (1-2)^2 + (2-3)^2 = 2
    CHECK(std::fabs(frechet_distance(a, b) - 4.0) < 1e-9);
  }
  SUBCASE("distance to self is zero") {
    auto st = gaussian_stats(random_rows(50, 12, 21));
    CHECK(frechet_distance(st, st) <= 1e-6);
  }
  SUBCASE("symmetric in its arguments") {
    auto a = gaussian_stats(random_rows(60, 8, 31));
    auto b = gaussian_stats(random_rows(60, 8, 32, 1.7));
    double ab = frechet_distance(a, b);
    double ba = frechet_distance(b, a);
    CHECK(ab > 0.0);
    CHECK(std::fabs(ab - ba) <= 1e-6);
  }
  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(
        frechet_distance(stats_1d(0.0, 1.0), gaussian_stats(random_rows(5, 2, 1))),
        config_error);
  }
  SUBCASE("rank-deficient covariances are handled") {
    // 3 samples in 8 dimensions: covariance rank <= 2.
    auto a = gaussian_stats(random_rows(3, 8, 41));
    auto b = gaussian_stats(random_rows(3, 8, 42));
    double d = frechet_distance(a, b);
    CHECK(std::isfinite(d));
    CHECK(d >= 0.0);
  }
}

TEST_CASE("pixel pool extractor") {
  PixelPoolExtractor ex;
  CHECK(ex.id() == "pixelpool16-v1");
  CHECK(ex.input_size() == 64);
  CHECK(ex.dim() == 768);

  SUBCASE("uniform image maps every feature to value/255") {
    Image8 img(64, 64, 3, 128);
    auto f = ex.extract(img);
    REQUIRE(f.size() == 768);
    for (double v : f) CHECK(v == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
  }
  SUBCASE("a single 4x4 block lights exactly one feature") {
    Image8 img(64, 64, 3, 0);
    for (int y = 8; y < 12; ++y)
      for (int x = 12; x < 16; ++x) img.at(y, x, 0) = 255;
    auto f = ex.extract(img);
    // block row 2, block column 3, red channel
    size_t hot = (2 * 16 + 3) * 3 + 0;
    for (size_t k = 0; k < f.size(); ++k)
      CHECK(f[k] == (k == hot ? 1.0 : 0.0));
  }
  SUBCASE("deterministic") {
    Rng rng(9);
    Image8 img(64, 64, 3);
    for (auto& b : img.px) b = static_cast<uint8_t>(rng.uniform_int(256));
    CHECK(ex.extract(img) == ex.extract(img));
  }
  SUBCASE("wrong shape is rejected") {
    CHECK_THROWS_AS(ex.extract(Image8(32, 32, 3)), config_error);
    CHECK_THROWS_AS(ex.extract(Image8(64, 64, 4)), config_error);
  }
}

TEST_CASE("composite over a background") {
  SUBCASE("fully transparent gives the background everywhere") {
    Image8 img = composite_rgb(flat_rgba(1.f, -1.f, 0.5f, -1.f), {40, 80, 120});
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        CHECK(img.at(y, x, 0) == 40);
        CHECK(img.at(y, x, 1) == 80);
        CHECK(img.at(y, x, 2) == 120);
      }
  }
  SUBCASE("fully opaque ignores the background") {
    nn::Tensor t = flat_rgba(1.f, -1.f, 0.f, 1.f);
    Image8 img = composite_rgb(t, {40, 80, 120});
    CHECK(img.at(0, 0, 0) == 255);
    CHECK(img.at(0, 0, 1) == 0);
    CHECK(img.at(0, 0, 2) == 128);  // lround(127.5) rounds half up
  }
  SUBCASE("half alpha blends midway") {
    // fg 255 at alpha 0.5 over bg 101: 0.5*255 + 0.5*101 = 178
    Image8 img = composite_rgb(flat_rgba(1.f, 1.f, 1.f, 0.f), {101, 101, 101});
    for (int ch = 0; ch < 3; ++ch) CHECK(img.at(7, 9, ch) == 178);
  }
  SUBCASE("three-channel input is treated as opaque") {
    nn::Tensor t(3, 2, 2);
    for (float& v : t.v) v = -0.5f;
    Image8 img = composite_rgb(t, {255, 255, 255});
    for (auto b : img.px) CHECK(b == 64);  // lround(0.5 * 127.5)
  }
  SUBCASE("out-of-range values clamp") {
    Image8 img = composite_rgb(flat_rgba(1.2f, -1.3f, 0.f, 2.f), {0, 0, 0});
    CHECK(img.at(0, 0, 0) == 255);
    CHECK(img.at(0, 0, 1) == 0);
  }
  SUBCASE("wrong plane count is rejected") {
    CHECK_THROWS_AS(composite_rgb(nn::Tensor(2, 4, 4), {0, 0, 0}),
                    config_error);
  }
}

TEST_CASE("fid preprocessing composites then resizes") {
  auto records = generate_synthetic_dataset(77, 2);
  nn::Tensor sprite = records[0].sprites.at(Pose::front)[0].pixels;

  auto same = preprocess_for_fid({sprite}, {255, 255, 255}, 64);
  REQUIRE(same.size() == 1);
  CHECK(same[0] == composite_rgb(sprite, {255, 255, 255}));

  auto small = preprocess_for_fid({sprite}, {255, 255, 255}, 32);
  CHECK(small[0] ==
        resize_nearest(composite_rgb(sprite, {255, 255, 255}), 32, 32));
}

TEST_CASE("fid is zero against itself and grows with noise") {
  auto tensors = all_sprite_tensors(generate_synthetic_dataset(5, 30));
  REQUIRE(tensors.size() == 120);
  PixelPoolExtractor ex;
  Rgb white{255, 255, 255};

  CHECK(fid_between(tensors, tensors, ex, white) <= 1e-6);

  double f1 = fid_between(with_noise(tensors, 0.05f, 100), tensors, ex, white);
  double f2 = fid_between(with_noise(tensors, 0.10f, 100), tensors, ex, white);
  double f3 = fid_between(with_noise(tensors, 0.20f, 100), tensors, ex, white);
  CHECK(f1 > 0.0);
  CHECK(f1 < f2);
  CHECK(f2 < f3);
}

TEST_CASE("fid report json round trip and atomic write") {
  FidReport r;
  r.fid_train = 1.25;
  r.fid_test = 2.5;
  r.n_train = 776;
  r.n_test = 136;
  r.extractor = "pixelpool16-v1";
  r.background = {1, 2, 3};

  auto j = to_json(r);
  FidReport back = fid_report_from_json(j);
  CHECK(back.fid_train == r.fid_train);
  CHECK(back.fid_test == r.fid_test);
  CHECK(back.n_train == r.n_train);
  CHECK(back.n_test == r.n_test);
  CHECK(back.extractor == r.extractor);
  CHECK(back.background == r.background);
  CHECK(back.resize == "nearest");

  auto dir = testutil::scratch_dir("eval-json");
  auto path = dir / "nested" / "report.json";
  write_json_atomic(j, path);
  CHECK(!fs::exists(path.string() + ".tmp"));
  std::ifstream in(path);
  nlohmann::json parsed = nlohmann::json::parse(in);
  CHECK(parsed == j);
  fs::remove_all(dir);
}

TEST_CASE("model evaluation over a split") {
  auto records = generate_synthetic_dataset(13, 20);
  auto pairs = build_pairs(records, Pose::front, Pose::right).pairs;
  REQUIRE(pairs.size() == 20);
  auto split = split_pairs(pairs, 0.85, 1, SplitGranularity::character);
  REQUIRE(split.train.size() == 17);
  REQUIRE(split.test.size() == 3);
  PixelPoolExtractor ex;

  SUBCASE("reports both sides with finite scores") {
    GeneratorConfig gc;
    gc.encoder_filters = {4, 6, 8, 8, 8, 8};
    Generator gen(gc);
    Rng rng(2);
    gen.init(rng);
    FidReport r = evaluate_model(gen, split, ex);
    CHECK(r.n_train == 17);
    CHECK(r.n_test == 3);
    CHECK(r.extractor == "pixelpool16-v1");
    CHECK(std::isfinite(r.fid_train));
    CHECK(std::isfinite(r.fid_test));
    CHECK(r.fid_train >= 0.0);
    CHECK(r.fid_test >= 0.0);
    // an untrained net is far from ground truth
    CHECK(r.fid_train > 1e-3);
  }
  SUBCASE("a 3-channel model evaluates against the color planes") {
    GeneratorConfig gc;
    gc.channels = 3;
    gc.encoder_filters = {4, 6, 8, 8, 8, 8};
    Generator gen(gc);
    Rng rng(2);
    gen.init(rng);
    FidReport r = evaluate_model(gen, split, ex);
    CHECK(std::isfinite(r.fid_train));
    CHECK(std::isfinite(r.fid_test));
  }
  SUBCASE("sides smaller than two are rejected") {
    GeneratorConfig gc;
    gc.encoder_filters = {4, 6, 8, 8, 8, 8};
    Generator gen(gc);
    Rng rng(2);
    gen.init(rng);
    DatasetSplit tiny;
    tiny.train = split.train;
    tiny.test = {pairs[0]};
    CHECK_THROWS_AS(evaluate_model(gen, tiny, ex), config_error);
  }
}

TEST_CASE("nearest training match") {
  std::vector<PairedExample> train;
  for (int i = 0; i < 6; ++i)
    train.push_back(make_pair(
        make_probe("char-" + std::to_string(i), 0, 0.1f * static_cast<float>(i))));

  SUBCASE("an exact copy matches itself at distance zero") {
    for (size_t k : {size_t{0}, size_t{3}, size_t{5}}) {
      auto m = nearest_training_match(train[k].source, train);
      CHECK(m.index == k);
      CHECK(m.distance == 0.0);
    }
  }
  SUBCASE("agrees with a brute-force scan") {
    Rng rng(17);
    Sprite probe = make_probe("probe", 0, 0.f);
    for (float& v : probe.pixels.v) v = rng.normalf(0.3f);
    auto m = nearest_training_match(probe, train);

    size_t best = 0;
    double best_d = 1e300;
    for (size_t i = 0; i < train.size(); ++i) {
      double acc = 0;
      for (size_t k = 0; k < probe.pixels.v.size(); ++k)
        acc += std::fabs(static_cast<double>(probe.pixels.v[k]) -
                         train[i].source.pixels.v[k]);
      double d = acc / static_cast<double>(probe.pixels.v.size());
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    CHECK(m.index == best);
    CHECK(m.distance == doctest::Approx(best_d).epsilon(1e-12));
  }
  SUBCASE("ties break on character id then frame, not vector order") {
    std::vector<PairedExample> dup = {make_pair(make_probe("b", 0, 0.5f)),
                                      make_pair(make_probe("a", 2, 0.5f))};
    Sprite probe = make_probe("p", 0, 0.5f);
    CHECK(nearest_training_match(probe, dup).index == 1);
    std::swap(dup[0], dup[1]);
    CHECK(nearest_training_match(probe, dup).index == 0);

    std::vector<PairedExample> frames = {make_pair(make_probe("a", 3, 0.5f)),
                                         make_pair(make_probe("a", 1, 0.5f))};
    CHECK(nearest_training_match(probe, frames).index == 1);
  }
  SUBCASE("empty training set is rejected") {
    CHECK_THROWS_AS(nearest_training_match(train[0].source, {}), config_error);
  }
  SUBCASE("shape mismatch is rejected") {
    Sprite probe = make_probe("p", 0, 0.f);
    probe.pixels = nn::Tensor(4, 8, 8);
    CHECK_THROWS_AS(nearest_training_match(probe, train), config_error);
  }
}

TEST_CASE("dangling pixel rate") {
  // ground truth: opaque in the top 8 rows only
  nn::Tensor truth = flat_rgba(0.f, 0.f, 0.f, -1.f);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 64; ++x) truth.at(3, y, x) = 1.f;

  SUBCASE("alpha output opaque everywhere") {
    CHECK(dangling_pixel_rate(flat_rgba(0.f, 0.f, 0.f, 1.f), truth) == 0.875);
  }
  SUBCASE("alpha output matching the silhouette") {
    nn::Tensor gen = flat_rgba(0.f, 0.f, 0.f, -1.f);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 64; ++x) gen.at(3, y, x) = 1.f;
    CHECK(dangling_pixel_rate(gen, truth) == 0.0);
    // one extra opaque row below the silhouette
    for (int x = 0; x < 64; ++x) gen.at(3, 8, x) = 0.25f;
    CHECK(dangling_pixel_rate(gen, truth) == 64.0 / 4096.0);
  }
  SUBCASE("alpha exactly zero counts as transparent") {
    CHECK(dangling_pixel_rate(flat_rgba(0.f, 0.f, 0.f, 0.f), truth) == 0.0);
  }
  SUBCASE("color output against the black transparent background") {
    nn::Tensor gen(3, 64, 64);
    for (float& v : gen.v) v = -1.f;
    CHECK(dangling_pixel_rate(gen, truth) == 0.0);
    gen.at(1, 20, 5) = -0.69f;  // deviation 0.31 > threshold
    CHECK(dangling_pixel_rate(gen, truth) == 1.0 / 4096.0);
    gen.at(1, 20, 5) = -0.71f;  // deviation 0.29, below threshold
    CHECK(dangling_pixel_rate(gen, truth) == 0.0);
    gen.at(0, 30, 9) = 1.f;  // bright pixel outside the silhouette: dangling
    gen.at(0, 5, 9) = 1.f;   // inside the silhouette: ignored
    CHECK(dangling_pixel_rate(gen, truth) == 1.0 / 4096.0);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(dangling_pixel_rate(nn::Tensor(4, 64, 64),
                                        nn::Tensor(3, 64, 64)),
                    config_error);
    CHECK_THROWS_AS(dangling_pixel_rate(nn::Tensor(4, 32, 32), truth),
                    config_error);
    CHECK_THROWS_AS(dangling_pixel_rate(nn::Tensor(1, 64, 64), truth),
                    config_error);
  }
}

TEST_CASE("comparison grid layout") {
  auto records = generate_synthetic_dataset(3, 2);
  nn::Tensor a = records[0].sprites.at(Pose::front)[0].pixels;
  nn::Tensor b = records[0].sprites.at(Pose::right)[0].pixels;
  nn::Tensor c = records[1].sprites.at(Pose::front)[0].pixels;

  SUBCASE("one row at scale 4 is 16 + 256 pixels tall") {
    Image8 img = render_grid({"source", "target", "output"}, {{a, b, c}}, 4);
    CHECK(img.h == 16 + 256);
    CHECK(img.w == 3 * 256);
    CHECK(img.c == 3);
    // first cell is the upscaled white-composited sprite
    CHECK(crop(img, 16, 0, 256, 256) ==
          upscale(composite_rgb(a, {255, 255, 255}), 4));
    CHECK(crop(img, 16, 512, 256, 256) ==
          upscale(composite_rgb(c, {255, 255, 255}), 4));
    // label band: white ground, dark glyph anchor at (3, 4)
    CHECK(img.at(0, 0, 0) == 255);
    CHECK(img.at(3, 4, 0) == 20);
  }
  SUBCASE("multiple rows stack below the band") {
    Image8 img = render_grid({"a", "b"}, {{a, b}, {c, b}}, 2);
    CHECK(img.h == 16 + 2 * 128);
    CHECK(img.w == 2 * 128);
    CHECK(crop(img, 16 + 128, 0, 128, 128) ==
          upscale(composite_rgb(c, {255, 255, 255}), 2));
  }
  SUBCASE("three-channel cells composite as opaque") {
    nn::Tensor rgb(3, 64, 64);
    for (float& v : rgb.v) v = 0.f;
    Image8 img = render_grid({"x"}, {{rgb}}, 1);
    CHECK(img.at(16, 0, 0) == 128);
  }
  SUBCASE("deterministic") {
    Image8 one = render_grid({"source"}, {{a}}, 2);
    Image8 two = render_grid({"source"}, {{a}}, 2);
    CHECK(one == two);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(render_grid({}, {{a}}, 2), config_error);
    CHECK_THROWS_AS(render_grid({"a"}, {}, 2), config_error);
    CHECK_THROWS_AS(render_grid({"a"}, {{a}}, 0), config_error);
    CHECK_THROWS_AS(render_grid({"a", "b"}, {{a}}, 2), config_error);
  }
}
