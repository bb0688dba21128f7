#include "spritegan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "spritegan/synthetic.hpp"

namespace sprite {

namespace fs = std::filesystem;
using nlohmann::json;

// --- spec serialization ---------------------------------------------------

json to_json(const ExperimentSpec& s) {
  return {{"name", s.name},
          {"dataset", s.dataset},
          {"synthetic_characters", s.synthetic_characters},
          {"synthetic_seed", s.synthetic_seed},
          {"source_pose", to_string(s.source_pose)},
          {"target_pose", to_string(s.target_pose)},
          {"split_ratio", s.split_ratio},
          {"split_by", to_string(s.split_by)},
          {"split_seed", s.split_seed},
          {"generator", to_json(s.gen)},
          {"discriminator", to_json(s.disc)},
          {"train", to_json(s.train)},
          {"eval_background",
           {s.eval_background[0], s.eval_background[1], s.eval_background[2]}},
          {"grid_examples", s.grid_examples},
          {"grid_scale", s.grid_scale}};
}

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  s.name = j.at("name").get<std::string>();
  s.dataset = j.at("dataset").get<std::string>();
  s.synthetic_characters = j.at("synthetic_characters").get<int>();
  s.synthetic_seed = j.at("synthetic_seed").get<uint64_t>();
  s.source_pose = pose_from_string(j.at("source_pose").get<std::string>());
  s.target_pose = pose_from_string(j.at("target_pose").get<std::string>());
  s.split_ratio = j.at("split_ratio").get<double>();
  s.split_by =
      split_granularity_from_string(j.at("split_by").get<std::string>());
  s.split_seed = j.at("split_seed").get<uint64_t>();
  s.gen = generator_config_from_json(j.at("generator"));
  s.disc = discriminator_config_from_json(j.at("discriminator"));
  s.train = train_config_from_json(j.at("train"));
  const nlohmann::json& bg = j.at("eval_background");
  for (size_t i = 0; i < 3; ++i)
    s.eval_background[i] = static_cast<uint8_t>(bg.at(i).get<int>());
  s.grid_examples = j.at("grid_examples").get<int>();
  s.grid_scale = j.at("grid_scale").get<int>();
  return s;
}

std::string experiment_hash(const ExperimentSpec& s) {
  // nlohmann::json keeps object keys sorted, so dump() is canonical
  std::string dump = to_json(s).dump();
  return hex64(fnv1a64(dump.data(), dump.size()));
}

// --- spec files -------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

int parse_int(const std::string& where, const std::string& value) {
  try {
    size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error(where + ": expected an integer, got '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& where, const std::string& value) {
  try {
    size_t used = 0;
    uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error(where + ": expected a non-negative integer, got '" +
                       value + "'");
  }
}

double parse_real(const std::string& where, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error(where + ": expected a number, got '" + value + "'");
  }
}

uint8_t parse_byte(const std::string& where, const std::string& value) {
  int v = parse_int(where, value);
  if (v < 0 || v > 255)
    throw config_error(where + ": expected 0..255, got " + value);
  return static_cast<uint8_t>(v);
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

ExperimentSpec parse_experiment_spec(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw io_error("cannot open experiment spec " + file.string());

  std::map<std::string, std::pair<int, std::string>> kv;  // key -> line, value
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    std::string where = file.string() + ":" + std::to_string(line_no);
    if (eq == std::string::npos)
      throw config_error(where + ": expected 'key = value', got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw config_error(where + ": empty key");
    static const std::set<std::string> known = {
        "name",           "dataset",        "synthetic_characters",
        "synthetic_seed", "source_pose",    "target_pose",
        "split_ratio",    "split_by",       "split_seed",
        "channels",       "encoder_filters", "dropout",
        "dropout_blocks", "init_stddev",    "patch_size",
        "steps",          "lr",             "beta1",
        "beta2",          "batch_size",     "seed",
        "checkpoint_every", "lambda_l1",    "eval_background",
        "grid_examples",  "grid_scale"};
    if (!known.count(key))
      throw config_error(where + ": unknown key '" + key + "'");
    if (kv.count(key))
      throw config_error(where + ": duplicate key '" + key +
                         "' (first set on line " +
                         std::to_string(kv[key].first) + ")");
    kv[key] = {line_no, value};
  }

  auto where_of = [&](const std::string& key) {
    return file.string() + ":" + std::to_string(kv[key].first) + ": " + key;
  };
  auto get = [&](const char* key) -> const std::string& {
    return kv[key].second;
  };

  ExperimentSpec s;
  s.name = kv.count("name") ? get("name") : file.stem().string();
  if (kv.count("dataset")) {
    s.dataset = get("dataset");
    if (s.dataset != "synthetic") {
      fs::path p = s.dataset;
      if (p.is_relative()) p = file.parent_path() / p;
      s.dataset = p.lexically_normal().string();
    }
  }
  if (kv.count("synthetic_characters")) {
    s.synthetic_characters =
        parse_int(where_of("synthetic_characters"), get("synthetic_characters"));
    if (s.synthetic_characters <= 0)
      throw config_error(where_of("synthetic_characters") +
                         ": must be positive");
  }
  if (kv.count("synthetic_seed"))
    s.synthetic_seed = parse_u64(where_of("synthetic_seed"), get("synthetic_seed"));
  try {
    if (kv.count("source_pose")) s.source_pose = pose_from_string(get("source_pose"));
  } catch (const config_error& e) {
    throw config_error(where_of("source_pose") + ": " + e.what());
  }
  try {
    if (kv.count("target_pose")) s.target_pose = pose_from_string(get("target_pose"));
  } catch (const config_error& e) {
    throw config_error(where_of("target_pose") + ": " + e.what());
  }
  if (kv.count("split_ratio")) {
    s.split_ratio = parse_real(where_of("split_ratio"), get("split_ratio"));
    if (s.split_ratio <= 0.0 || s.split_ratio >= 1.0)
      throw config_error(where_of("split_ratio") + ": must be in (0, 1)");
  }
  try {
    if (kv.count("split_by"))
      s.split_by = split_granularity_from_string(get("split_by"));
  } catch (const config_error& e) {
    throw config_error(where_of("split_by") + ": " + e.what());
  }
  if (kv.count("split_seed"))
    s.split_seed = parse_u64(where_of("split_seed"), get("split_seed"));
  if (kv.count("channels")) {
    int ch = parse_int(where_of("channels"), get("channels"));
    if (ch != 3 && ch != 4)
      throw config_error(where_of("channels") + ": must be 3 or 4");
    s.gen.channels = ch;
    s.disc.channels = ch;
  }
  if (kv.count("encoder_filters")) {
    std::vector<int> filters;
    for (const std::string& part : split_csv(get("encoder_filters")))
      filters.push_back(parse_int(where_of("encoder_filters"), part));
    s.gen.encoder_filters = std::move(filters);
  }
  if (kv.count("dropout")) {
    s.gen.dropout =
        static_cast<float>(parse_real(where_of("dropout"), get("dropout")));
    if (s.gen.dropout < 0.f || s.gen.dropout >= 1.f)
      throw config_error(where_of("dropout") + ": must be in [0, 1)");
  }
  if (kv.count("dropout_blocks"))
    s.gen.dropout_blocks =
        parse_int(where_of("dropout_blocks"), get("dropout_blocks"));
  if (kv.count("init_stddev")) {
    float sd = static_cast<float>(
        parse_real(where_of("init_stddev"), get("init_stddev")));
    if (sd <= 0.f)
      throw config_error(where_of("init_stddev") + ": must be positive");
    s.gen.init_stddev = sd;
    s.disc.init_stddev = sd;
  }
  if (kv.count("patch_size"))
    s.disc.patch_size = parse_int(where_of("patch_size"), get("patch_size"));
  if (kv.count("steps"))
    s.train.steps = parse_int(where_of("steps"), get("steps"));
  if (kv.count("lr"))
    s.train.lr = parse_real(where_of("lr"), get("lr"));
  if (kv.count("beta1"))
    s.train.beta1 = parse_real(where_of("beta1"), get("beta1"));
  if (kv.count("beta2"))
    s.train.beta2 = parse_real(where_of("beta2"), get("beta2"));
  if (kv.count("batch_size"))
    s.train.batch_size = parse_int(where_of("batch_size"), get("batch_size"));
  if (kv.count("seed"))
    s.train.seed = parse_u64(where_of("seed"), get("seed"));
  if (kv.count("checkpoint_every"))
    s.train.checkpoint_every =
        parse_int(where_of("checkpoint_every"), get("checkpoint_every"));
  if (kv.count("lambda_l1")) {
    s.train.loss.lambda_l1 = parse_real(where_of("lambda_l1"), get("lambda_l1"));
    if (s.train.loss.lambda_l1 < 0)
      throw config_error(where_of("lambda_l1") + ": must be non-negative");
  }
  if (kv.count("eval_background")) {
    auto parts = split_csv(get("eval_background"));
    if (parts.size() != 3)
      throw config_error(where_of("eval_background") + ": expected 'r,g,b'");
    for (int i = 0; i < 3; ++i)
      s.eval_background[static_cast<size_t>(i)] =
          parse_byte(where_of("eval_background"), parts[static_cast<size_t>(i)]);
  }
  if (kv.count("grid_examples")) {
    s.grid_examples = parse_int(where_of("grid_examples"), get("grid_examples"));
    if (s.grid_examples <= 0)
      throw config_error(where_of("grid_examples") + ": must be positive");
  }
  if (kv.count("grid_scale")) {
    s.grid_scale = parse_int(where_of("grid_scale"), get("grid_scale"));
    if (s.grid_scale <= 0)
      throw config_error(where_of("grid_scale") + ": must be positive");
  }
  validate(s.train);
  return s;
}

// --- data loading -----------------------------------------------------------

StudyData load_study_data(const ExperimentSpec& spec) {
  StudyData d;
  if (spec.dataset == "synthetic") {
    d.records =
        generate_synthetic_dataset(spec.synthetic_seed, spec.synthetic_characters);
  } else {
    fs::path p = spec.dataset;
    if (!fs::exists(p)) throw io_error("dataset not found: " + p.string());
    d.records = fs::is_directory(p) ? load_canonical(p)
                                    : ingest(parse_descriptor(p));
  }
  BuildPairsResult built =
      build_pairs(d.records, spec.source_pose, spec.target_pose);
  if (built.pairs.empty())
    throw config_error("dataset '" + spec.dataset + "' yields no " +
                       std::string(to_string(spec.source_pose)) + "->" +
                       std::string(to_string(spec.target_pose)) + " pairs");
  d.split =
      split_pairs(built.pairs, spec.split_ratio, spec.split_seed, spec.split_by);
  return d;
}

// --- sub-runs ---------------------------------------------------------------

namespace {

fs::path run_dir_for(const ExperimentSpec& spec, const fs::path& out) {
  return out / "runs" / (spec.name + "-" + experiment_hash(spec).substr(0, 8));
}

json parse_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return json::value_t::discarded;
  return json::parse(in, nullptr, /*allow_exceptions=*/false);
}

}  // namespace

Generator load_trained_generator(const fs::path& ckpt_dir) {
  json spec = parse_json_file(ckpt_dir / "netspec.json");
  if (spec.is_discarded())
    throw io_error("missing or unreadable checkpoint " + ckpt_dir.string());
  Generator gen(
      generator_config_from_json(spec.at("generator").at("config")));
  nn::read_params((ckpt_dir / "gen.params").string(), gen.params());
  return gen;
}

Generator load_trained_generator(const fs::path& run_dir, int64_t steps) {
  return load_trained_generator(run_dir / ("ckpt-" + std::to_string(steps)));
}

SubRunResult run_sub_experiment(const ExperimentSpec& spec,
                                const fs::path& out) {
  if (spec.name.empty()) throw config_error("experiment name is empty");
  validate(spec.train);

  SubRunResult r;
  r.name = spec.name;
  r.config_hash = experiment_hash(spec);
  r.run_dir = run_dir_for(spec, out);
  const fs::path eval_path = r.run_dir / "eval-final.json";

  json done = parse_json_file(eval_path);
  if (!done.is_discarded() && done.value("config_hash", "") == r.config_hash) {
    r.fid = fid_report_from_json(done.at("fid"));
    r.train_size = done.at("train_size").get<int64_t>();
    r.test_size = done.at("test_size").get<int64_t>();
    r.epochs = done.at("epochs").get<double>();
    if (done.contains("dangling_rate") && done["dangling_rate"].is_number())
      r.dangling_rate = done["dangling_rate"].get<double>();
    r.reused = true;
    return r;
  }

  // A run directory left by a different (or corrupted) spec is untrustworthy.
  const fs::path spec_path = r.run_dir / "spec.json";
  if (fs::exists(r.run_dir)) {
    json prev = parse_json_file(spec_path);
    if (prev.is_discarded() || prev.value("config_hash", "") != r.config_hash)
      fs::remove_all(r.run_dir);
  }

  StudyData data = load_study_data(spec);
  r.train_size = static_cast<int64_t>(data.split.train.size());
  r.test_size = static_cast<int64_t>(data.split.test.size());
  if (r.train_size < 2 || r.test_size < 2)
    throw config_error("experiment '" + spec.name + "': split " +
                       std::to_string(r.train_size) + "/" +
                       std::to_string(r.test_size) +
                       " too small to evaluate (need 2 per side)");
  r.epochs = epochs_equivalent(spec.train.steps, r.train_size);

  fs::create_directories(r.run_dir);
  json meta = to_json(spec);
  meta["config_hash"] = r.config_hash;
  write_json_atomic(meta, spec_path);

  Generator gen(spec.gen);
  Discriminator disc(spec.disc);
  init_models(gen, disc, spec.train.seed);
  train(gen, disc, data.split.train, spec.train, r.run_dir, /*resume=*/true);

  const int ch = spec.gen.channels;
  auto translate_all = [&](const std::vector<PairedExample>& pairs,
                           std::vector<nn::Tensor>& generated,
                           std::vector<nn::Tensor>& truth) {
    for (const PairedExample& p : pairs) {
      generated.push_back(gen.forward(model_input(p.source.pixels, ch)));
      truth.push_back(model_input(p.target.pixels, ch));
    }
  };
  std::vector<nn::Tensor> gen_train, truth_train, gen_test, truth_test;
  translate_all(data.split.train, gen_train, truth_train);
  translate_all(data.split.test, gen_test, truth_test);

  PixelPoolExtractor extractor;
  r.fid.fid_train =
      fid_between(gen_train, truth_train, extractor, spec.eval_background);
  r.fid.fid_test =
      fid_between(gen_test, truth_test, extractor, spec.eval_background);
  r.fid.n_train = r.train_size;
  r.fid.n_test = r.test_size;
  r.fid.extractor = extractor.id();
  r.fid.background = spec.eval_background;

  double dangling = 0;
  for (size_t i = 0; i < gen_test.size(); ++i)
    dangling +=
        dangling_pixel_rate(gen_test[i], data.split.test[i].target.pixels);
  r.dangling_rate = dangling / static_cast<double>(gen_test.size());

  json summary = {
      {"config_hash", r.config_hash},
      {"name", spec.name},
      {"fid", to_json(r.fid)},
      {"train_size", r.train_size},
      {"test_size", r.test_size},
      {"epochs", r.epochs},
      {"dangling_rate", r.dangling_rate},
      {"checkpoint",
       (r.run_dir / ("ckpt-" + std::to_string(spec.train.steps))).string()}};
  write_json_atomic(summary, eval_path);
  return r;
}

// --- studies ----------------------------------------------------------------

namespace {

void note_failure(StudyResult& res, const std::string& name,
                  const std::string& what) {
  if (!res.failure_note.empty()) res.failure_note += "; ";
  res.failure_note += name + ": " + what;
}

SubRunResult failed_row(const ExperimentSpec& spec, const std::string& what) {
  SubRunResult r;
  r.name = spec.name;
  r.config_hash = experiment_hash(spec);
  r.failed = true;
  r.note = what;
  return r;
}

// Renders grid_examples test rows: source | target | one column per model.
fs::path render_study_grid(const ExperimentSpec& data_spec,
                           const std::vector<std::string>& model_labels,
                           std::vector<Generator>& models,
                           const std::string& figure_name,
                           const fs::path& out) {
  StudyData data = load_study_data(data_spec);
  int n = std::min<int>(data_spec.grid_examples,
                        static_cast<int>(data.split.test.size()));
  if (n == 0) throw config_error("no test examples to render");

  std::vector<std::string> labels = {"source", "target"};
  labels.insert(labels.end(), model_labels.begin(), model_labels.end());
  std::vector<std::vector<nn::Tensor>> rows;
  for (int i = 0; i < n; ++i) {
    const PairedExample& p = data.split.test[static_cast<size_t>(i)];
    std::vector<nn::Tensor> row = {p.source.pixels, p.target.pixels};
    for (Generator& g : models)
      row.push_back(
          g.forward(model_input(p.source.pixels, g.config().channels)));
    rows.push_back(std::move(row));
  }
  Image8 img = render_grid(labels, rows, data_spec.grid_scale);
  fs::create_directories(out / "figures");
  fs::path rel = fs::path("figures") / figure_name;
  save_png(img, (out / rel).string());
  return rel;
}

}  // namespace

StudyResult run_dataset_study(const std::vector<ExperimentSpec>& specs,
                              const fs::path& out) {
  StudyResult res;
  res.study = "dataset";
  for (const ExperimentSpec& spec : specs) {
    if (spec.dataset != "synthetic" && !fs::exists(spec.dataset)) {
      SubRunResult r;
      r.name = spec.name;
      r.config_hash = experiment_hash(spec);
      r.skipped = true;
      r.note = "dataset not found: " + spec.dataset;
      res.rows.push_back(std::move(r));
      continue;
    }
    try {
      SubRunResult r = run_sub_experiment(spec, out);
      std::vector<Generator> models;
      models.push_back(load_trained_generator(r.run_dir, spec.train.steps));
      std::vector<std::string> labels = {"output"};
      res.figures.push_back(render_study_grid(
          spec, labels, models, spec.name + "-examples.png", out));
      res.rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      res.rows.push_back(failed_row(spec, e.what()));
      note_failure(res, spec.name, e.what());
    }
  }
  return res;
}

StudyResult run_patch_study(const ExperimentSpec& base,
                            const std::vector<int>& patch_sizes,
                            const fs::path& out) {
  if (patch_sizes.empty())
    throw config_error("patch study needs at least one patch size");
  for (int p : patch_sizes) discriminator_stack(p);  // reject upfront

  StudyResult res;
  res.study = "patch";
  std::vector<std::string> ok_labels;
  std::vector<Generator> ok_models;
  for (int p : patch_sizes) {
    ExperimentSpec spec = base;
    spec.name = base.name + "-patch" + std::to_string(p);
    spec.disc.patch_size = p;
    try {
      SubRunResult r = run_sub_experiment(spec, out);
      ok_labels.push_back("patch " + std::to_string(p));
      ok_models.push_back(load_trained_generator(r.run_dir, spec.train.steps));
      res.rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      res.rows.push_back(failed_row(spec, e.what()));
      note_failure(res, spec.name, e.what());
    }
  }
  if (!ok_models.empty()) {
    try {
      res.figures.push_back(render_study_grid(
          base, ok_labels, ok_models, base.name + "-patch-grid.png", out));
    } catch (const std::exception& e) {
      note_failure(res, base.name + " grid", e.what());
    }
  }
  return res;
}

StudyResult run_alpha_ablation(const ExperimentSpec& base,
                               const fs::path& out) {
  // Both models are scored in composited RGB space over the dataset's
  // transparent-background color so channel count cannot confound FID. RGB
  // planes store that color under transparent pixels (the key color for
  // keyed sources, black for synthetic/alpha-native data).
  Rgb bg{0, 0, 0};
  if (base.dataset != "synthetic" && fs::exists(base.dataset) &&
      !fs::is_directory(base.dataset)) {
    DatasetDescriptor d = parse_descriptor(base.dataset);
    if (d.key_color) bg = *d.key_color;
  }

  StudyResult res;
  res.study = "alpha";
  std::vector<std::string> ok_labels;
  std::vector<Generator> ok_models;
  for (int channels : {4, 3}) {
    ExperimentSpec spec = base;
    spec.name = base.name + (channels == 4 ? "-rgba" : "-rgb");
    spec.gen.channels = channels;
    spec.disc.channels = channels;
    spec.eval_background = bg;
    try {
      SubRunResult r = run_sub_experiment(spec, out);
      ok_labels.push_back(channels == 4 ? "rgba" : "rgb");
      ok_models.push_back(load_trained_generator(r.run_dir, spec.train.steps));
      res.rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      res.rows.push_back(failed_row(spec, e.what()));
      note_failure(res, spec.name, e.what());
    }
  }
  if (!ok_models.empty()) {
    try {
      res.figures.push_back(render_study_grid(
          base, ok_labels, ok_models, base.name + "-alpha-grid.png", out));
    } catch (const std::exception& e) {
      note_failure(res, base.name + " grid", e.what());
    }
  }
  return res;
}

// --- report -----------------------------------------------------------------

std::string emit_report(const std::vector<StudyResult>& results) {
  std::ostringstream md;
  md << "# Study report\n";
  for (const StudyResult& sr : results) {
    if (sr.study == "dataset") {
      md << "\n## Dataset study\n\n";
      md << "| dataset | train size | epochs | fid train | fid test | config "
            "| note |\n";
      md << "|---|---|---|---|---|---|---|\n";
      for (const SubRunResult& r : sr.rows) {
        md << "| " << r.name << " | ";
        if (r.skipped || r.failed) {
          md << "- | - | - | - | `" << r.config_hash << "` | "
             << (r.skipped ? "skipped: " : "failed: ") << r.note << " |\n";
        } else {
          md << r.train_size << " | " << std::llround(r.epochs) << " | "
             << fmt_g(r.fid.fid_train) << " | " << fmt_g(r.fid.fid_test)
             << " | `" << r.config_hash << "` |  |\n";
        }
      }
    } else if (sr.study == "patch") {
      md << "\n## Patch-size ablation\n\n";
      md << "| run | fid train | fid test | config | note |\n";
      md << "|---|---|---|---|---|\n";
      for (const SubRunResult& r : sr.rows) {
        md << "| " << r.name << " | ";
        if (r.failed)
          md << "- | - | `" << r.config_hash << "` | failed: " << r.note
             << " |\n";
        else
          md << fmt_g(r.fid.fid_train) << " | " << fmt_g(r.fid.fid_test)
             << " | `" << r.config_hash << "` |  |\n";
      }
    } else {
      md << "\n## Alpha-channel ablation\n\n";
      md << "| run | fid train | fid test | dangling rate | config | note "
            "|\n";
      md << "|---|---|---|---|---|---|\n";
      for (const SubRunResult& r : sr.rows) {
        md << "| " << r.name << " | ";
        if (r.failed)
          md << "- | - | - | `" << r.config_hash << "` | failed: " << r.note
             << " |\n";
        else
          md << fmt_g(r.fid.fid_train) << " | " << fmt_g(r.fid.fid_test)
             << " | " << fmt_g(r.dangling_rate) << " | `" << r.config_hash
             << "` |  |\n";
      }
    }
    if (!sr.failure_note.empty())
      md << "\nFailures: " << sr.failure_note << "\n";
    if (!sr.figures.empty()) {
      md << "\nFigures:\n";
      for (const fs::path& f : sr.figures)
        md << "- " << f.generic_string() << "\n";
    }
  }
  return md.str();
}

}  // namespace sprite
