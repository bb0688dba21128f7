#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spritegan/experiments.hpp"
#include "spritegan/synthetic.hpp"

namespace fs = std::filesystem;
using namespace sprite;

namespace {

fs::path runs_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("SPRITE_RUNS_DIR"))
    if (*env) return env;
  return "runs";
}

// Accepts either a directory path or a run id under the runs root.
fs::path resolve_run_dir(const std::string& run, const std::string& root_flag) {
  fs::path direct = run;
  if (fs::exists(direct / "spec.json") || fs::is_directory(direct))
    return direct;
  return runs_root(root_flag) / run;
}

int64_t latest_checkpoint_step(const fs::path& run_dir) {
  int64_t best = -1;
  if (fs::is_directory(run_dir)) {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      std::string name = entry.path().filename().string();
      if (name.rfind("ckpt-", 0) != 0) continue;
      try {
        best = std::max(best, static_cast<int64_t>(std::stoll(name.substr(5))));
      } catch (const std::exception&) {
      }
    }
  }
  if (best < 0)
    throw io_error("no checkpoints under " + run_dir.string());
  return best;
}

void print_dataset_summary(const std::vector<CharacterRecord>& records) {
  std::map<Pose, int64_t> per_pose;
  int64_t total = 0;
  for (const CharacterRecord& r : records) {
    for (const auto& [pose, sprites] : r.sprites) {
      per_pose[pose] += static_cast<int64_t>(sprites.size());
      total += static_cast<int64_t>(sprites.size());
    }
  }
  std::printf("characters: %zu\nsprites: %lld\n", records.size(),
              static_cast<long long>(total));
  for (const auto& [pose, n] : per_pose)
    std::printf("  pose %-6s %lld\n", to_string(pose),
                static_cast<long long>(n));
  for (const CharacterRecord& r : records) {
    int64_t n = 0;
    for (const auto& [pose, sprites] : r.sprites)
      n += static_cast<int64_t>(sprites.size());
    std::printf("  %s: %lld sprites\n", r.character_id.c_str(),
                static_cast<long long>(n));
  }
}

void write_run_spec(const ExperimentSpec& spec, const fs::path& run_dir) {
  nlohmann::json meta = to_json(spec);
  meta["config_hash"] = experiment_hash(spec);
  write_json_atomic(meta, run_dir / "spec.json");
}

ExperimentSpec read_run_spec(const fs::path& run_dir) {
  std::ifstream in(run_dir / "spec.json");
  if (!in)
    throw io_error("missing run configuration " +
                   (run_dir / "spec.json").string());
  nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
  if (meta.is_discarded())
    throw io_error("unreadable run configuration " +
                   (run_dir / "spec.json").string());
  return experiment_spec_from_json(meta);
}

// --- subcommand options -----------------------------------------------------

struct PrepareOpts {
  std::string descriptor;
  std::string out;
  uint64_t seed = 0;  // preparation is deterministic; kept for uniformity
};

struct SynthOpts {
  std::string out;
  int characters = 200;
  uint64_t seed = 7;
};

struct TrainOpts {
  std::string data = "synthetic";
  int characters = 200;
  uint64_t synth_seed = 7;
  std::string source_pose = "front";
  std::string target_pose = "right";
  double split_ratio = 0.85;
  std::string split_by = "character";
  uint64_t split_seed = 1;
  std::vector<int> gen_filters = {64, 128, 256, 512, 512, 512};
  double dropout = 0.5;
  double init_stddev = 0.02;
  int patch_size = 2;
  int channels = 4;
  int64_t steps = 40000;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  uint64_t seed = 0;
  int64_t checkpoint_every = 4000;
  double lambda_l1 = 100.0;
  std::string run_id;
  std::string runs_dir;
  bool fresh = false;
};

struct EvaluateOpts {
  std::string run;
  std::string runs_dir;
  int64_t steps = -1;
  std::vector<int> background = {255, 255, 255};
  uint64_t seed = 0;  // evaluation is deterministic; kept for uniformity
  bool background_set = false;
};

struct TranslateOpts {
  std::string run;
  std::string ckpt;
  std::string runs_dir;
  int64_t steps = -1;
  std::string out = ".";
  std::vector<std::string> inputs;
  uint64_t seed = 0;  // inference is deterministic; kept for uniformity
};

struct StudyOpts {
  std::string kind;
  std::string spec;
  std::vector<std::string> specs;
  std::vector<int> sizes = {2, 5, 11, 64};
  std::string out = "studies";
  int64_t steps = -1;
  uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentSpec spec_from_train_opts(const TrainOpts& o) {
  ExperimentSpec s;
  s.dataset = o.data;
  s.synthetic_characters = o.characters;
  s.synthetic_seed = o.synth_seed;
  s.source_pose = pose_from_string(o.source_pose);
  s.target_pose = pose_from_string(o.target_pose);
  s.split_ratio = o.split_ratio;
  s.split_by = split_granularity_from_string(o.split_by);
  s.split_seed = o.split_seed;
  s.gen.channels = o.channels;
  s.gen.encoder_filters = o.gen_filters;
  s.gen.dropout = static_cast<float>(o.dropout);
  s.gen.init_stddev = static_cast<float>(o.init_stddev);
  s.disc.channels = o.channels;
  s.disc.patch_size = o.patch_size;
  s.disc.init_stddev = static_cast<float>(o.init_stddev);
  s.train.steps = o.steps;
  s.train.lr = o.lr;
  s.train.beta1 = o.beta1;
  s.train.beta2 = o.beta2;
  s.train.batch_size = o.batch_size;
  s.train.seed = o.seed;
  s.train.checkpoint_every = o.checkpoint_every;
  s.train.loss.lambda_l1 = o.lambda_l1;
  s.name = o.run_id;
  return s;
}

// --- subcommands ------------------------------------------------------------

void cmd_prepare(const PrepareOpts& o) {
  DatasetDescriptor desc = parse_descriptor(o.descriptor);
  std::vector<CharacterRecord> records = ingest(desc);
  write_canonical(records, o.out, desc.name);
  print_dataset_summary(records);
  std::printf("wrote %s\n", o.out.c_str());
}

void cmd_synth(const SynthOpts& o) {
  std::vector<CharacterRecord> records =
      generate_synthetic_dataset(o.seed, o.characters);
  write_canonical(records, o.out, "synthetic");
  print_dataset_summary(records);
  std::printf("wrote %s\n", o.out.c_str());
}

void cmd_train(const TrainOpts& o) {
  ExperimentSpec spec = spec_from_train_opts(o);
  if (spec.name.empty())
    spec.name = "run-" + experiment_hash(spec).substr(0, 8);
  validate(spec.train);

  StudyData data = load_study_data(spec);
  fs::path run_dir = runs_root(o.runs_dir) / spec.name;
  if (o.fresh) fs::remove_all(run_dir);
  fs::create_directories(run_dir);
  write_run_spec(spec, run_dir);

  std::printf("run %s: %zu train / %zu test pairs, %lld steps (%.1f epochs)\n",
              run_dir.string().c_str(), data.split.train.size(),
              data.split.test.size(), static_cast<long long>(spec.train.steps),
              epochs_equivalent(spec.train.steps,
                                static_cast<int64_t>(data.split.train.size())));

  Generator gen(spec.gen);
  Discriminator disc(spec.disc);
  init_models(gen, disc, spec.train.seed);

  int64_t report_every = std::max<int64_t>(1, spec.train.steps / 20);
  auto progress = [&](const StepMetrics& m) {
    if (m.step % report_every == 0 || m.step == spec.train.steps) {
      std::printf("step %6lld  g_total %.4f  g_l1 %.4f  d %.4f  (%.1f/s)\n",
                  static_cast<long long>(m.step), m.g_total, m.g_l1, m.d_loss,
                  m.steps_per_sec);
      std::fflush(stdout);
    }
  };
  TrainRunResult res = train(gen, disc, data.split.train, spec.train, run_dir,
                             /*resume=*/!o.fresh, progress);
  std::printf("finished at step %lld; checkpoint %s\n",
              static_cast<long long>(res.steps),
              res.last_checkpoint.string().c_str());
}

void cmd_evaluate(const EvaluateOpts& o) {
  fs::path run_dir = resolve_run_dir(o.run, o.runs_dir);
  ExperimentSpec spec = read_run_spec(run_dir);
  if (o.background_set) {
    if (o.background.size() != 3)
      throw config_error("--background expects r,g,b");
    for (size_t i = 0; i < 3; ++i) {
      if (o.background[i] < 0 || o.background[i] > 255)
        throw config_error("--background components must be 0..255");
      spec.eval_background[i] = static_cast<uint8_t>(o.background[i]);
    }
  }
  int64_t steps = o.steps >= 0 ? o.steps : latest_checkpoint_step(run_dir);

  Generator gen = load_trained_generator(run_dir, steps);
  StudyData data = load_study_data(spec);
  PixelPoolExtractor extractor;
  FidReport rep =
      evaluate_model(gen, data.split, extractor, spec.eval_background);

  std::printf("fid_train %.6g\nfid_test %.6g\n", rep.fid_train, rep.fid_test);
  nlohmann::json summary = {
      {"config_hash", experiment_hash(spec)},
      {"name", spec.name},
      {"fid", to_json(rep)},
      {"train_size", rep.n_train},
      {"test_size", rep.n_test},
      {"epochs", epochs_equivalent(steps, rep.n_train)},
      {"checkpoint",
       (run_dir / ("ckpt-" + std::to_string(steps))).string()}};
  write_json_atomic(summary, run_dir / "eval-final.json");
  std::printf("wrote %s\n", (run_dir / "eval-final.json").string().c_str());
}

void cmd_translate(const TranslateOpts& o) {
  if (o.run.empty() && o.ckpt.empty())
    throw config_error("translate needs --run or --ckpt");
  Generator gen = [&] {
    if (!o.ckpt.empty()) return load_trained_generator(fs::path(o.ckpt));
    fs::path run_dir = resolve_run_dir(o.run, o.runs_dir);
    int64_t steps = o.steps >= 0 ? o.steps : latest_checkpoint_step(run_dir);
    return load_trained_generator(run_dir, steps);
  }();

  fs::create_directories(o.out);
  for (const std::string& input : o.inputs) {
    Image8 img = load_png(input);
    if (img.c == 3) {
      Image8 rgba(img.h, img.w, 4, 255);
      for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
          for (int ch = 0; ch < 3; ++ch)
            rgba.at(y, x, ch) = img.at(y, x, ch);
      img = rgba;
    } else if (img.c != 4) {
      throw config_error("input " + input + " has " + std::to_string(img.c) +
                         " channels; expected RGB or RGBA");
    }
    if (img.h != kCanvas || img.w != kCanvas) {
      std::fprintf(stderr, "warning: %s is %dx%d; padding to %dx%d\n",
                   input.c_str(), img.h, img.w, kCanvas, kCanvas);
      img = pad_to_canvas(img);
    }
    nn::Tensor x = model_input(normalize(img), gen.config().channels);
    Image8 result = denormalize(gen.forward(x));
    fs::path out_path = fs::path(o.out) / fs::path(input).filename();
    save_png(result, out_path.string());
    std::printf("%s -> %s\n", input.c_str(), out_path.string().c_str());
  }
}

void cmd_study(const StudyOpts& o) {
  auto overridden = [&](ExperimentSpec s) {
    if (o.steps >= 0) s.train.steps = o.steps;
    if (o.seed_set) s.train.seed = o.seed;
    return s;
  };
  ExperimentSpec base;
  base.train.steps = 8000;  // desk-scale study default
  base.name = o.kind;
  if (!o.spec.empty()) base = parse_experiment_spec(o.spec);
  base = overridden(base);

  fs::path out = o.out;
  StudyResult res;
  if (o.kind == "dataset") {
    std::vector<ExperimentSpec> specs;
    for (const std::string& file : o.specs)
      specs.push_back(overridden(parse_experiment_spec(file)));
    if (specs.empty()) specs.push_back(base);
    res = run_dataset_study(specs, out);
  } else if (o.kind == "patch") {
    res = run_patch_study(base, o.sizes, out);
  } else if (o.kind == "alpha") {
    res = run_alpha_ablation(base, out);
  } else {
    throw config_error("unknown study kind '" + o.kind +
                       "' (expected dataset, patch, or alpha)");
  }

  std::string report = emit_report({res});
  fs::create_directories(out);
  fs::path report_path = out / (o.kind + "-report.md");
  std::ofstream rf(report_path, std::ios::trunc | std::ios::binary);
  if (!rf) throw io_error("cannot write " + report_path.string());
  rf << report;
  rf.close();
  std::fputs(report.c_str(), stdout);
  std::printf("wrote %s\n", report_path.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-to-pose sprite translation pipeline"};
  app.set_version_flag("--version", std::string("spritegan ") + kVersion);
  app.require_subcommand(1);

  PrepareOpts prepare_opts;
  CLI::App* prepare = app.add_subcommand(
      "prepare", "Ingest a raw dataset into the canonical layout");
  prepare->add_option("descriptor", prepare_opts.descriptor,
                      "Dataset descriptor file")->required();
  prepare->add_option("--out", prepare_opts.out, "Canonical output directory")
      ->required();
  prepare->add_option("--seed", prepare_opts.seed,
                      "Unused; preparation is deterministic");
  prepare->callback([&] { cmd_prepare(prepare_opts); });

  SynthOpts synth_opts;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate the procedural dataset in canonical layout");
  synth->add_option("--out", synth_opts.out, "Canonical output directory")
      ->required();
  synth->add_option("--characters", synth_opts.characters,
                    "Number of characters")->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "Generation seed")->capture_default_str();
  synth->callback([&] { cmd_synth(synth_opts); });

  TrainOpts train_opts;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a translation model");
  train_cmd->add_option("--data", train_opts.data,
                        "'synthetic', canonical dataset dir, or descriptor")->capture_default_str();
  train_cmd->add_option("--characters", train_opts.characters,
                        "Synthetic dataset size")->capture_default_str();
  train_cmd->add_option("--synth-seed", train_opts.synth_seed,
                        "Synthetic dataset seed")->capture_default_str();
  train_cmd->add_option("--source-pose", train_opts.source_pose,
                        "front|right|back|left")->capture_default_str();
  train_cmd->add_option("--target-pose", train_opts.target_pose,
                        "front|right|back|left")->capture_default_str();
  train_cmd->add_option("--split-ratio", train_opts.split_ratio,
                        "Train fraction")->capture_default_str();
  train_cmd->add_option("--split-by", train_opts.split_by, "character|frame")->capture_default_str();
  train_cmd->add_option("--split-seed", train_opts.split_seed, "Split seed")->capture_default_str();
  train_cmd->add_option("--gen-filters", train_opts.gen_filters,
                        "Encoder widths, comma separated")
      ->delimiter(',');
  train_cmd->add_option("--dropout", train_opts.dropout,
                        "Decoder dropout rate")->capture_default_str();
  train_cmd->add_option("--init-stddev", train_opts.init_stddev,
                        "Weight init stddev")->capture_default_str();
  train_cmd->add_option("--patch-size", train_opts.patch_size,
                        "Discriminator patch size (2, 5, 11 or 64)")->capture_default_str();
  train_cmd->add_option("--channels", train_opts.channels,
                        "Model channels: 4 (RGBA) or 3 (RGB)")->capture_default_str();
  train_cmd->add_option("--steps", train_opts.steps, "Training steps")->capture_default_str();
  train_cmd->add_option("--lr", train_opts.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--beta1", train_opts.beta1, "Adam beta1")->capture_default_str();
  train_cmd->add_option("--beta2", train_opts.beta2, "Adam beta2")->capture_default_str();
  train_cmd->add_option("--batch-size", train_opts.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--seed", train_opts.seed, "Training seed")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", train_opts.checkpoint_every,
                        "Checkpoint cadence in steps (0 = final only)")->capture_default_str();
  train_cmd->add_option("--lambda-l1", train_opts.lambda_l1,
                        "Reconstruction weight")->capture_default_str();
  train_cmd->add_option("--run-id", train_opts.run_id,
                        "Run directory name (default: config hash)");
  train_cmd->add_option("--runs-dir", train_opts.runs_dir,
                        "Runs root (default: $SPRITE_RUNS_DIR or ./runs)");
  train_cmd->add_flag("--fresh", train_opts.fresh,
                      "Discard any previous run state instead of resuming");
  train_cmd->callback([&] { cmd_train(train_opts); });

  EvaluateOpts eval_opts;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Score a trained run with FID");
  evaluate->add_option("--run", eval_opts.run, "Run directory or run id")
      ->required();
  evaluate->add_option("--runs-dir", eval_opts.runs_dir,
                       "Runs root (default: $SPRITE_RUNS_DIR or ./runs)");
  evaluate->add_option("--steps", eval_opts.steps,
                       "Checkpoint step (default: latest)");
  evaluate
      ->add_option("--background", eval_opts.background,
                   "Composite background r,g,b")
      ->delimiter(',')
      ->each([&](const std::string&) { eval_opts.background_set = true; });
  evaluate->add_option("--seed", eval_opts.seed,
                       "Unused; evaluation is deterministic");
  evaluate->callback([&] { cmd_evaluate(eval_opts); });

  TranslateOpts tr_opts;
  CLI::App* translate =
      app.add_subcommand("translate", "Run a trained generator on PNGs");
  translate->add_option("--run", tr_opts.run, "Run directory or run id");
  translate->add_option("--ckpt", tr_opts.ckpt, "Checkpoint directory");
  translate->add_option("--runs-dir", tr_opts.runs_dir,
                        "Runs root (default: $SPRITE_RUNS_DIR or ./runs)");
  translate->add_option("--steps", tr_opts.steps,
                        "Checkpoint step (default: latest)");
  translate->add_option("--out", tr_opts.out, "Output directory")->capture_default_str();
  translate->add_option("inputs", tr_opts.inputs, "Input PNGs")->required();
  translate->add_option("--seed", tr_opts.seed,
                        "Unused; inference is deterministic");
  translate->callback([&] { cmd_translate(tr_opts); });

  StudyOpts study_opts;
  CLI::App* study = app.add_subcommand(
      "study", "Run a dataset, patch-size, or alpha-channel study");
  study->add_option("kind", study_opts.kind, "dataset|patch|alpha")
      ->required();
  study->add_option("--spec", study_opts.spec,
                    "Experiment spec file for the base configuration");
  study->add_option("--specs", study_opts.specs,
                    "Experiment spec files (dataset study)");
  study->add_option("--sizes", study_opts.sizes,
                    "Patch sizes (patch study)")->capture_default_str()
      ->delimiter(',');
  study->add_option("--out", study_opts.out, "Study output directory")->capture_default_str();
  study->add_option("--steps", study_opts.steps,
                    "Override training steps (default: spec file or 8000)");
  study
      ->add_option("--seed", study_opts.seed, "Override training seed")
      ->each([&](const std::string&) { study_opts.seed_set = true; });
  study->callback([&] { cmd_study(study_opts); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const runtime_failure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
