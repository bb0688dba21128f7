#include "spritegan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sprite {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SplitGranularity g) {
  return g == SplitGranularity::character ? "character" : "frame";
}

SplitGranularity split_granularity_from_string(const std::string& s) {
  if (s == "character") return SplitGranularity::character;
  if (s == "frame") return SplitGranularity::frame;
  throw config_error("unknown split granularity '" + s +
                     "' (expected character or frame)");
}

// --- pixel-level ops ------------------------------------------------------

nn::Tensor normalize(const Image8& img) {
  if (img.h <= 0 || img.w <= 0 || img.c <= 0)
    throw config_error("normalize: empty image");
  nn::Tensor t(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t.at(ch, y, x) = static_cast<float>(img.at(y, x, ch)) / 127.5f - 1.0f;
  return t;
}

Image8 denormalize(const nn::Tensor& t) {
  Image8 img(t.h, t.w, t.c);
  for (int ch = 0; ch < t.c; ++ch)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) {
        double v = (static_cast<double>(t.at(ch, y, x)) + 1.0) * 127.5;
        long b = std::lround(v);  // >= 0 here, so halves round up
        img.at(y, x, ch) = static_cast<uint8_t>(std::clamp(b, 0l, 255l));
      }
  return img;
}

Image8 synthesize_alpha(const Image8& img, std::optional<Rgb> key_color) {
  if (img.c == 4) return img;
  if (img.c != 3)
    throw config_error("synthesize_alpha: expected 3 or 4 channels, got " +
                       std::to_string(img.c));
  if (!key_color)
    throw config_error(
        "3-channel source needs a key_color to mark transparency");
  const Rgb key = *key_color;
  Image8 out(img.h, img.w, 4);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      bool transparent = img.at(y, x, 0) == key[0] &&
                         img.at(y, x, 1) == key[1] && img.at(y, x, 2) == key[2];
      if (!transparent) {
        for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = img.at(y, x, ch);
        out.at(y, x, 3) = 255;
      }
    }
  return out;
}

Image8 pad_to_canvas(const Image8& cell) {
  if (cell.c != 4)
    throw config_error("pad_to_canvas: expected RGBA, got " +
                       std::to_string(cell.c) + " channels");
  if (cell.h > kCanvas || cell.w > kCanvas)
    throw config_error("cell " + std::to_string(cell.h) + "x" +
                       std::to_string(cell.w) + " exceeds the " +
                       std::to_string(kCanvas) + "x" + std::to_string(kCanvas) +
                       " canvas");
  if (cell.h == kCanvas && cell.w == kCanvas) return cell;
  Image8 out(kCanvas, kCanvas, 4);
  int oy = (kCanvas - cell.h) / 2;
  int ox = (kCanvas - cell.w) / 2;
  for (int y = 0; y < cell.h; ++y)
    for (int x = 0; x < cell.w; ++x)
      for (int ch = 0; ch < 4; ++ch)
        out.at(oy + y, ox + x, ch) = cell.at(y, x, ch);
  return out;
}

// --- sprite sheets --------------------------------------------------------

std::vector<SheetCell> slice_sheet(const Image8& sheet,
                                   const SheetLayout& layout) {
  if (layout.cell_h <= 0 || layout.cell_w <= 0)
    throw config_error("sheet layout: cell size must be positive");
  if (layout.pose_order.empty())
    throw config_error("sheet layout: pose_order is empty");
  if (layout.frames_per_pose <= 0)
    throw config_error("sheet layout: frames_per_pose must be positive");
  std::set<Pose> seen(layout.pose_order.begin(), layout.pose_order.end());
  if (seen.size() != layout.pose_order.size())
    throw config_error("sheet layout: duplicate pose in pose_order");
  if (sheet.c != 3 && sheet.c != 4)
    throw config_error("sheet must be RGB or RGBA, got " +
                       std::to_string(sheet.c) + " channels");

  int rows = static_cast<int>(layout.pose_order.size());
  int want_h = rows * layout.cell_h;
  int want_w = layout.frames_per_pose * layout.cell_w;
  if (sheet.h != want_h || sheet.w != want_w)
    throw config_error(
        "sheet is " + std::to_string(sheet.h) + "x" + std::to_string(sheet.w) +
        ", layout expects " + std::to_string(want_h) + "x" +
        std::to_string(want_w) + " (" + std::to_string(rows) + " rows of " +
        std::to_string(layout.cell_h) + "px, " +
        std::to_string(layout.frames_per_pose) + " columns of " +
        std::to_string(layout.cell_w) + "px)");

  std::vector<SheetCell> cells;
  cells.reserve(static_cast<size_t>(rows) * layout.frames_per_pose);
  for (int r = 0; r < rows; ++r)
    for (int col = 0; col < layout.frames_per_pose; ++col) {
      SheetCell sc;
      sc.cell = crop(sheet, r * layout.cell_h, col * layout.cell_w,
                     layout.cell_h, layout.cell_w);
      sc.pose = layout.pose_order[static_cast<size_t>(r)];
      sc.frame = col;
      cells.push_back(std::move(sc));
    }
  return cells;
}

// --- pairing and splitting ------------------------------------------------

BuildPairsResult build_pairs(const std::vector<CharacterRecord>& records,
                             Pose source_pose, Pose target_pose) {
  if (source_pose == target_pose)
    throw config_error("source and target pose are both '" +
                       std::string(to_string(source_pose)) + "'");
  std::vector<const CharacterRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const CharacterRecord* a, const CharacterRecord* b) {
              return a->character_id < b->character_id;
            });

  BuildPairsResult out;
  for (const CharacterRecord* rec : order) {
    int n_src = rec->frames(source_pose);
    int n_tgt = rec->frames(target_pose);
    if (n_src == 0 || n_tgt == 0) {
      ++out.report.skipped_characters;
      out.report.warnings.push_back(
          "character '" + rec->character_id + "' is missing pose '" +
          to_string(n_src == 0 ? source_pose : target_pose) + "'; skipped");
      continue;
    }
    if (n_src != n_tgt)
      out.report.warnings.push_back(
          "character '" + rec->character_id + "' has " +
          std::to_string(n_src) + " '" + to_string(source_pose) + "' vs " +
          std::to_string(n_tgt) + " '" + to_string(target_pose) +
          "' frames; pairing the first " + std::to_string(std::min(n_src, n_tgt)));
    int n = std::min(n_src, n_tgt);
    const auto& src = rec->sprites.at(source_pose);
    const auto& tgt = rec->sprites.at(target_pose);
    for (int f = 0; f < n; ++f)
      out.pairs.push_back({src[static_cast<size_t>(f)],
                           tgt[static_cast<size_t>(f)]});
  }
  out.report.pairs = static_cast<int64_t>(out.pairs.size());
  return out;
}

int64_t split_train_count(int64_t n, double ratio) {
  if (n < 2)
    throw config_error("need at least 2 examples to split, got " +
                       std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0))
    throw config_error("split ratio must be in (0, 1), got " +
                       std::to_string(ratio));
  // ceil with a tiny backoff so exact products are not pushed up by float
  // error; this reproduces the published train counts for all four sources.
  auto k = static_cast<int64_t>(
      std::ceil(ratio * static_cast<double>(n) - 1e-9));
  return std::clamp<int64_t>(k, 1, n - 1);
}

DatasetSplit split_pairs(const std::vector<PairedExample>& pairs, double ratio,
                         uint64_t seed, SplitGranularity granularity) {
  int64_t n = static_cast<int64_t>(pairs.size());
  int64_t k = split_train_count(n, ratio);  // validates n and ratio
  DatasetSplit out;
  out.ratio = ratio;
  out.seed = seed;
  Rng rng(seed);

  if (granularity == SplitGranularity::frame) {
    std::vector<size_t> idx(pairs.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    for (size_t i = 0; i < idx.size(); ++i)
      (static_cast<int64_t>(i) < k ? out.train : out.test)
          .push_back(pairs[idx[i]]);
    return out;
  }

  // Character granularity: shuffle character ids, fill train until it
  // reaches k pairs, always leaving the last character for the test side.
  std::map<std::string, std::vector<size_t>> by_char;
  for (size_t i = 0; i < pairs.size(); ++i)
    by_char[pairs[i].source.character_id].push_back(i);
  if (by_char.size() < 2)
    throw config_error(
        "character-level split needs at least 2 characters, got " +
        std::to_string(by_char.size()));
  std::vector<std::string> ids;
  ids.reserve(by_char.size());
  for (const auto& [id, _] : by_char) ids.push_back(id);
  rng.shuffle(ids);
  for (size_t i = 0; i < ids.size(); ++i) {
    bool last = i + 1 == ids.size();
    bool to_train = static_cast<int64_t>(out.train.size()) < k &&
                    !(last && out.test.empty());
    for (size_t pi : by_char[ids[i]])
      (to_train ? out.train : out.test).push_back(pairs[pi]);
  }
  return out;
}

// --- descriptors ----------------------------------------------------------

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

uint8_t parse_byte(const std::string& where, const std::string& value) {
  int v = parse_int(where, value);
  if (v < 0 || v > 255)
    throw config_error(where + ": expected 0..255, got " + value);
  return static_cast<uint8_t>(v);
}

}  // namespace

DatasetDescriptor parse_descriptor(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw io_error("cannot open descriptor " + file.string());

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
        "name",       "mode",           "root",     "cell_height",
        "cell_width", "frames_per_pose", "pose_order", "key_color"};
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

  DatasetDescriptor d;
  d.name = kv.count("name") ? kv["name"].second : file.stem().string();
  if (!kv.count("mode"))
    throw config_error(file.string() + ": missing required key 'mode'");
  d.mode = kv["mode"].second;
  if (d.mode != "sheets" && d.mode != "directory")
    throw config_error(where_of("mode") + ": expected 'sheets' or 'directory', got '" +
                       d.mode + "'");
  if (!kv.count("root"))
    throw config_error(file.string() + ": missing required key 'root'");
  fs::path root = kv["root"].second;
  d.root = root.is_absolute() ? root : file.parent_path() / root;

  if (kv.count("key_color")) {
    auto parts = split_csv(kv["key_color"].second);
    if (parts.size() != 3)
      throw config_error(where_of("key_color") + ": expected 'r,g,b'");
    d.key_color = Rgb{parse_byte(where_of("key_color"), parts[0]),
                      parse_byte(where_of("key_color"), parts[1]),
                      parse_byte(where_of("key_color"), parts[2])};
  }

  if (d.mode == "sheets") {
    for (const char* req :
         {"cell_height", "cell_width", "pose_order", "frames_per_pose"})
      if (!kv.count(req))
        throw config_error(file.string() + ": sheets mode needs key '" +
                           std::string(req) + "'");
    d.layout.cell_h = parse_int(where_of("cell_height"), kv["cell_height"].second);
    d.layout.cell_w = parse_int(where_of("cell_width"), kv["cell_width"].second);
    d.layout.frames_per_pose =
        parse_int(where_of("frames_per_pose"), kv["frames_per_pose"].second);
    for (const std::string& p : split_csv(kv["pose_order"].second)) {
      try {
        d.layout.pose_order.push_back(pose_from_string(p));
      } catch (const config_error& e) {
        throw config_error(where_of("pose_order") + ": " + e.what());
      }
    }
  }
  return d;
}

// --- ingestion ------------------------------------------------------------

namespace {

Sprite make_sprite(Image8 raw, std::optional<Rgb> key, std::string id, Pose p,
                   int frame) {
  Sprite s;
  s.character_id = std::move(id);
  s.pose = p;
  s.frame = frame;
  s.pixels = normalize(pad_to_canvas(synthesize_alpha(raw, key)));
  return s;
}

std::vector<CharacterRecord> ingest_sheets(const DatasetDescriptor& desc) {
  std::vector<fs::path> sheets;
  for (const auto& e : fs::directory_iterator(desc.root))
    if (e.is_regular_file() && e.path().extension() == ".png")
      sheets.push_back(e.path());
  std::sort(sheets.begin(), sheets.end());
  if (sheets.empty())
    throw io_error("no .png sheets under " + desc.root.string());

  std::vector<CharacterRecord> records;
  for (const fs::path& p : sheets) {
    CharacterRecord rec;
    rec.character_id = p.stem().string();
    Image8 sheet = load_png(p.string());
    for (SheetCell& sc : slice_sheet(sheet, desc.layout)) {
      Sprite s = make_sprite(std::move(sc.cell), desc.key_color,
                             rec.character_id, sc.pose, sc.frame);
      rec.sprites[sc.pose].push_back(std::move(s));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CharacterRecord> ingest_directory(const DatasetDescriptor& desc) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(desc.root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty())
    throw io_error("no character directories under " + desc.root.string());

  std::vector<CharacterRecord> records;
  for (const fs::path& dir : dirs) {
    CharacterRecord rec;
    rec.character_id = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      std::string stem = f.stem().string();
      size_t us = stem.rfind('_');
      if (us == std::string::npos)
        throw config_error("sprite file " + f.string() +
                           " is not named <pose>_<frame>.png");
      Pose pose;
      int frame;
      try {
        pose = pose_from_string(stem.substr(0, us));
        frame = parse_int(f.string(), stem.substr(us + 1));
      } catch (const config_error& e) {
        throw config_error("sprite file " + f.string() + ": " + e.what());
      }
      rec.sprites[pose].push_back(make_sprite(
          load_png(f.string()), desc.key_color, rec.character_id, pose, frame));
    }
    for (auto& [pose, sprites] : rec.sprites)
      std::sort(sprites.begin(), sprites.end(),
                [](const Sprite& a, const Sprite& b) { return a.frame < b.frame; });
    if (!rec.sprites.empty()) records.push_back(std::move(rec));
  }
  if (records.empty())
    throw io_error("no sprites found under " + desc.root.string());
  return records;
}

}  // namespace

std::vector<CharacterRecord> ingest(const DatasetDescriptor& desc) {
  if (!fs::exists(desc.root))
    throw io_error("dataset root does not exist: " + desc.root.string());
  return desc.mode == "sheets" ? ingest_sheets(desc) : ingest_directory(desc);
}

// --- canonical storage ----------------------------------------------------

void write_canonical(const std::vector<CharacterRecord>& records,
                     const fs::path& dir, const std::string& source_name) {
  fs::create_directories(dir / "sprites");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest)
    throw io_error("cannot write " + (dir / "manifest.jsonl").string());

  std::vector<const CharacterRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const CharacterRecord* a, const CharacterRecord* b) {
              return a->character_id < b->character_id;
            });

  int64_t n_sprites = 0;
  for (const CharacterRecord* rec : order) {
    fs::create_directories(dir / "sprites" / rec->character_id);
    for (const auto& [pose, sprites] : rec->sprites)
      for (const Sprite& s : sprites) {
        std::string rel = "sprites/" + rec->character_id + "/" +
                          std::string(to_string(pose)) + "_" +
                          std::to_string(s.frame) + ".png";
        save_png(denormalize(s.pixels), (dir / rel).string());
        json line = {{"character_id", s.character_id},
                     {"pose", to_string(pose)},
                     {"frame", s.frame},
                     {"path", rel},
                     {"source", source_name}};
        manifest << line.dump() << "\n";
        ++n_sprites;
      }
  }

  json summary = {{"version", 1},
                  {"name", source_name},
                  {"characters", order.size()},
                  {"sprites", n_sprites},
                  {"canvas", kCanvas}};
  std::ofstream ds(dir / "dataset.json");
  ds << summary.dump(2) << "\n";
}

std::vector<CharacterRecord> load_canonical(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest)
    throw io_error("cannot open " + (dir / "manifest.jsonl").string() +
                   " (not a canonical dataset directory?)");
  std::map<std::string, CharacterRecord> by_id;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw io_error((dir / "manifest.jsonl").string() + ":" +
                     std::to_string(line_no) + ": " + e.what());
    }
    Sprite s;
    s.character_id = j.at("character_id").get<std::string>();
    s.pose = pose_from_string(j.at("pose").get<std::string>());
    s.frame = j.at("frame").get<int>();
    Image8 img = load_png((dir / j.at("path").get<std::string>()).string());
    if (img.c != 4)
      throw io_error("canonical sprite " + j.at("path").get<std::string>() +
                     " is not RGBA");
    if (img.h != kCanvas || img.w != kCanvas)
      throw io_error("canonical sprite " + j.at("path").get<std::string>() +
                     " is not " + std::to_string(kCanvas) + "x" +
                     std::to_string(kCanvas));
    s.pixels = normalize(img);
    auto& rec = by_id[s.character_id];
    rec.character_id = s.character_id;
    rec.sprites[s.pose].push_back(std::move(s));
  }
  std::vector<CharacterRecord> records;
  for (auto& [id, rec] : by_id) {
    for (auto& [pose, sprites] : rec.sprites)
      std::sort(sprites.begin(), sprites.end(),
                [](const Sprite& a, const Sprite& b) { return a.frame < b.frame; });
    records.push_back(std::move(rec));
  }
  if (records.empty())
    throw io_error("empty manifest in " + dir.string());
  return records;
}

}  // namespace sprite
