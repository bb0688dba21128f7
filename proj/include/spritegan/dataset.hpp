#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spritegan/common.hpp"
#include "spritegan/image.hpp"
#include "spritegan/nn.hpp"
#include "spritegan/rng.hpp"

namespace sprite {

// One pose rendering of one character, padded to the 64x64 canvas and
// normalized to [-1, 1]. pixels is CHW with 4 channels (RGBA).
struct Sprite {
  std::string character_id;
  Pose pose = Pose::front;
  int frame = 0;
  nn::Tensor pixels;
};

// All sprites of one character, keyed by pose, frames in index order.
struct CharacterRecord {
  std::string character_id;
  std::map<Pose, std::vector<Sprite>> sprites;

  int frames(Pose p) const {
    auto it = sprites.find(p);
    return it == sprites.end() ? 0 : static_cast<int>(it->second.size());
  }
};

// One (source pose, target pose) training example.
struct PairedExample {
  Sprite source;
  Sprite target;
};

struct PairReport {
  int64_t pairs = 0;
  int64_t skipped_characters = 0;
  std::vector<std::string> warnings;
};

struct BuildPairsResult {
  std::vector<PairedExample> pairs;
  PairReport report;
};

enum class SplitGranularity { character, frame };
const char* to_string(SplitGranularity g);
SplitGranularity split_granularity_from_string(const std::string& s);

struct DatasetSplit {
  std::vector<PairedExample> train;
  std::vector<PairedExample> test;
  double ratio = 0.85;
  uint64_t seed = 0;
};

// --- pixel-level ops ------------------------------------------------------

// byte -> [-1, 1]: p / 127.5 - 1, per channel. Works for 3 or 4 channels.
nn::Tensor normalize(const Image8& img);

// [-1, 1] -> byte: round((v + 1) * 127.5) with clamping; halves round up.
Image8 denormalize(const nn::Tensor& t);

// Replace a 3-channel image's key-colored pixels with transparent RGBA
// (alpha 0, RGB zeroed); everything else becomes alpha 255. 4-channel
// input is returned unchanged.
Image8 synthesize_alpha(const Image8& img, std::optional<Rgb> key_color);

// Center a smaller RGBA cell on the transparent 64x64 canvas; offsets are
// floor((64 - size) / 2). Cells larger than the canvas are rejected.
Image8 pad_to_canvas(const Image8& cell);

// --- sprite sheets --------------------------------------------------------

struct SheetLayout {
  int cell_h = 0;
  int cell_w = 0;
  std::vector<Pose> pose_order;  // one row per pose, top to bottom
  int frames_per_pose = 0;       // columns
};

struct SheetCell {
  Image8 cell;
  Pose pose = Pose::front;
  int frame = 0;
};

// Cut a sheet into cells, row r = pose_order[r], column c = frame c.
// Sheet dimensions must equal the layout exactly.
std::vector<SheetCell> slice_sheet(const Image8& sheet,
                                   const SheetLayout& layout);

// --- pairing and splitting ------------------------------------------------

// One example per (character, frame) with both poses present, ordered by
// (character_id, frame). Characters missing either pose are skipped with a
// warning; unequal frame counts pair the common prefix.
BuildPairsResult build_pairs(const std::vector<CharacterRecord>& records,
                             Pose source_pose, Pose target_pose);

// Train-side count for an n-example split: ceil(ratio * n), clamped so both
// sides stay non-empty. Reproduces the published per-source train counts.
int64_t split_train_count(int64_t n, double ratio);

// Shuffle (keyed solely by seed) and split. Character granularity keeps all
// frames of a character on one side, so sizes can deviate from
// split_train_count by up to one character's frame count; frame granularity
// matches it exactly. Fewer than 2 examples (or 2 characters) is rejected.
DatasetSplit split_pairs(const std::vector<PairedExample>& pairs,
                         double ratio, uint64_t seed,
                         SplitGranularity granularity);

// --- dataset descriptors and canonical storage -----------------------------

// Parsed key = value descriptor for one raw source.
struct DatasetDescriptor {
  std::string name;
  std::string mode;  // "sheets" or "directory"
  std::filesystem::path root;
  SheetLayout layout;                // sheets mode
  std::optional<Rgb> key_color;      // required for 3-channel inputs
};

DatasetDescriptor parse_descriptor(const std::filesystem::path& file);

// Read raw sprites per the descriptor. sheets mode: one <character>.png
// sheet per character under root. directory mode: root/<character>/
// <pose>_<frame>.png.
std::vector<CharacterRecord> ingest(const DatasetDescriptor& desc);

// Write records under dir/sprites/<character>/<pose>_<frame>.png with a
// manifest.jsonl line per sprite and a dataset.json summary.
void write_canonical(const std::vector<CharacterRecord>& records,
                     const std::filesystem::path& dir,
                     const std::string& source_name);

std::vector<CharacterRecord> load_canonical(const std::filesystem::path& dir);

}  // namespace sprite
