#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "spritegan/dataset.hpp"
#include "spritegan/evaluation.hpp"
#include "spritegan/training.hpp"

namespace sprite {

// One declarative experiment: dataset choice, pose pair, split policy, model
// and training configuration, and evaluation options. Hashable so completed
// runs can be recognized and reused.
struct ExperimentSpec {
  std::string name;
  std::string dataset = "synthetic";  // "synthetic", canonical dir, descriptor
  int synthetic_characters = 200;
  uint64_t synthetic_seed = 7;
  Pose source_pose = Pose::front;
  Pose target_pose = Pose::right;
  double split_ratio = 0.85;
  SplitGranularity split_by = SplitGranularity::character;
  uint64_t split_seed = 1;
  GeneratorConfig gen;
  DiscriminatorConfig disc;
  TrainConfig train;
  Rgb eval_background = {255, 255, 255};
  int grid_examples = 4;
  int grid_scale = 4;
};

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

// Key-value experiment file (same `key = value` grammar as dataset
// descriptors); unknown or duplicate keys are rejected with file:line.
ExperimentSpec parse_experiment_spec(const std::filesystem::path& file);

// 16 hex digits over the canonical JSON form; identical spec => identical
// hash on every platform.
std::string experiment_hash(const ExperimentSpec& spec);

struct StudyData {
  std::vector<CharacterRecord> records;
  DatasetSplit split;
};

// Resolves spec.dataset (synthetic generation, canonical dir, or descriptor
// ingest), builds the pose pairs, and splits them.
StudyData load_study_data(const ExperimentSpec& spec);

struct SubRunResult {
  std::string name;
  std::string config_hash;
  std::filesystem::path run_dir;
  int64_t train_size = 0;
  int64_t test_size = 0;
  double epochs = 0;
  FidReport fid;
  double dangling_rate = std::numeric_limits<double>::quiet_NaN();
  bool skipped = false;  // dataset missing; row kept for the table
  bool failed = false;
  bool reused = false;  // satisfied by an existing completed run
  std::string note;
};

// Trains (or resumes, or reuses) one spec under <out>/runs/<name>-<hash8>,
// evaluates both split sides, and persists eval-final.json. A run directory
// holding a different config hash is discarded and retrained.
SubRunResult run_sub_experiment(const ExperimentSpec& spec,
                                const std::filesystem::path& out);

struct StudyResult {
  std::string study;
  std::vector<SubRunResult> rows;
  std::vector<std::filesystem::path> figures;
  std::string failure_note;  // aggregated sub-run failures
};

// One row per dataset spec (train size, epochs, FID pair) plus an example
// grid per dataset. Missing datasets become skipped rows.
StudyResult run_dataset_study(const std::vector<ExperimentSpec>& specs,
                              const std::filesystem::path& out);

// Four models differing only in patch size, shared seed and data; emits a
// source|target|patch-N comparison grid. Unsupported sizes are rejected
// before any training starts.
StudyResult run_patch_study(const ExperimentSpec& base,
                            const std::vector<int>& patch_sizes,
                            const std::filesystem::path& out);

// RGBA vs RGB models on an identical split; FID for both is computed in
// composited RGB space over the dataset's transparent-background color, and
// each row carries its mean dangling-pixel rate on the test set.
StudyResult run_alpha_ablation(const ExperimentSpec& base,
                               const std::filesystem::path& out);

// Deterministic markdown: one table per study, config hash per run, figure
// index. Same results => identical bytes.
std::string emit_report(const std::vector<StudyResult>& results);

// Rebuilds a generator from a checkpoint directory (netspec + parameters),
// or from <run_dir>/ckpt-<steps>.
Generator load_trained_generator(const std::filesystem::path& ckpt_dir);
Generator load_trained_generator(const std::filesystem::path& run_dir,
                                 int64_t steps);

}  // namespace sprite
