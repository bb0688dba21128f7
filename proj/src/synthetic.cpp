#include "spritegan/synthetic.hpp"

#include <string>

#include "spritegan/rng.hpp"

namespace sprite {

namespace {

constexpr Rgb kSkins[] = {
    {245, 207, 173}, {224, 172, 134}, {186, 124, 84}, {130, 84, 54}};
constexpr Rgb kHairColors[] = {{40, 30, 25},   {90, 60, 30},  {150, 100, 40},
                               {205, 175, 60}, {120, 120, 130}, {190, 60, 40}};
constexpr Rgb kPrimaries[] = {{60, 90, 170},  {170, 60, 60},  {60, 140, 80},
                              {150, 110, 50}, {110, 70, 140}, {70, 130, 140},
                              {140, 140, 150}, {90, 90, 60}};
constexpr Rgb kAccents[] = {{230, 200, 80}, {220, 220, 230}, {50, 45, 50},
                            {200, 120, 50}, {120, 40, 40},   {80, 160, 190}};
constexpr Rgb kEye = {25, 25, 30};

// Everything that varies between characters; drawing itself is
// deterministic in (style, pose).
struct Style {
  Rgb skin, hair, primary, accent;
  int body;     // 0 wide, 1 slim
  int head;     // 0 small, 1 large
  int hairdo;   // 0 cap, 1 spiky, 2 long
  int clothes;  // 0 tunic, 1 robe, 2 armor
  int y0;       // top margin jitter
  int body_h;
};

Style sample_style(Rng& rng) {
  Style s;
  s.skin = kSkins[rng.uniform_int(std::size(kSkins))];
  s.hair = kHairColors[rng.uniform_int(std::size(kHairColors))];
  s.primary = kPrimaries[rng.uniform_int(std::size(kPrimaries))];
  s.accent = kAccents[rng.uniform_int(std::size(kAccents))];
  s.body = static_cast<int>(rng.uniform_int(2));
  s.head = static_cast<int>(rng.uniform_int(2));
  s.hairdo = static_cast<int>(rng.uniform_int(3));
  s.clothes = static_cast<int>(rng.uniform_int(3));
  s.y0 = 8 + static_cast<int>(rng.uniform_int(3));
  s.body_h = 16 + static_cast<int>(rng.uniform_int(4));
  return s;
}

void fill(Image8& img, int y, int x, int h, int w, Rgb c) {
  for (int yy = std::max(y, 0); yy < std::min(y + h, img.h); ++yy)
    for (int xx = std::max(x, 0); xx < std::min(x + w, img.w); ++xx) {
      img.at(yy, xx, 0) = c[0];
      img.at(yy, xx, 1) = c[1];
      img.at(yy, xx, 2) = c[2];
      img.at(yy, xx, 3) = 255;
    }
}

// pose here is only front, right or back; left is mirrored from right.
Image8 draw(const Style& s, Pose pose) {
  Image8 img(kCanvas, kCanvas, 4);
  const int cx = kCanvas / 2;
  const bool profile = pose == Pose::right;

  int head_w = (s.head == 0 ? 16 : 18) - (profile ? 2 : 0);
  int head_h = s.head == 0 ? 14 : 16;
  int body_w = (s.body == 0 ? 22 : 16) - (profile ? 6 : 0);
  int y_head = s.y0 + 2;
  int y_torso = y_head + head_h;
  int y_legs = y_torso + s.body_h;
  int head_x = cx - head_w / 2 + (profile ? 1 : 0);
  int torso_x = cx - body_w / 2;

  // legs / lower body
  if (s.clothes == 1) {  // robe: one skirt block instead of legs
    fill(img, y_torso, torso_x, s.body_h + 8, body_w, s.primary);
    fill(img, y_legs + 7, torso_x, 1, body_w, s.accent);
  } else {
    Rgb leg = {static_cast<uint8_t>(s.primary[0] / 2),
               static_cast<uint8_t>(s.primary[1] / 2),
               static_cast<uint8_t>(s.primary[2] / 2)};
    if (profile) {
      fill(img, y_legs, cx - 6, 9, 5, leg);
      fill(img, y_legs, cx + 1, 9, 5, leg);
    } else {
      fill(img, y_legs, torso_x + 2, 9, 5, leg);
      fill(img, y_legs, torso_x + body_w - 7, 9, 5, leg);
    }
  }

  // torso
  fill(img, y_torso, torso_x, s.body_h, body_w, s.primary);
  if (s.clothes == 0)  // tunic belt
    fill(img, y_legs - 3, torso_x, 2, body_w, s.accent);
  if (s.clothes == 2) {  // armor: shoulder pads + chest stripe
    if (profile) {
      fill(img, y_torso, torso_x + body_w - 6, 3, 6, s.accent);
    } else {
      fill(img, y_torso, torso_x - 1, 3, 5, s.accent);
      fill(img, y_torso, torso_x + body_w - 4, 3, 5, s.accent);
    }
    fill(img, y_torso + 4, cx - 1, s.body_h - 6, 2, s.accent);
  }

  // arms
  if (profile) {
    fill(img, y_torso + 2, cx - 2, s.body_h - 4, 4, s.skin);
  } else {
    fill(img, y_torso + 2, torso_x - 3, s.body_h - 4, 3, s.skin);
    fill(img, y_torso + 2, torso_x + body_w, s.body_h - 4, 3, s.skin);
  }

  // head
  fill(img, y_head, head_x, head_h, head_w, s.skin);

  // face: eyes on front, eye + nose on right profile, nothing on back
  int eye_y = y_head + head_h / 2 - 1;
  if (pose == Pose::front) {
    fill(img, eye_y, cx - head_w / 4 - 1, 2, 2, kEye);
    fill(img, eye_y, cx + head_w / 4 - 1, 2, 2, kEye);
  } else if (profile) {
    fill(img, eye_y, head_x + head_w - 5, 2, 2, kEye);
    fill(img, eye_y + 3, head_x + head_w, 3, 2, s.skin);  // nose
  }

  // hair
  int hair_y = y_head - 2;
  fill(img, hair_y, head_x - 1, 4, head_w + 2, s.hair);  // cap for all styles
  if (s.hairdo == 1)  // spiky: teeth above the cap
    for (int x = head_x; x < head_x + head_w; x += 4)
      fill(img, hair_y - 2, x, 2, 2, s.hair);
  if (s.hairdo == 2) {  // long: side curtains
    int drop = head_h + 4;
    if (profile) {
      fill(img, hair_y, head_x - 2, drop, 4, s.hair);
    } else {
      fill(img, hair_y, head_x - 2, drop, 3, s.hair);
      fill(img, hair_y, head_x + head_w - 1, drop, 3, s.hair);
    }
  }
  if (pose == Pose::back) {  // hair covers the whole back of the head
    int drop = s.hairdo == 2 ? head_h + 6 : head_h / 2 + 3;
    fill(img, hair_y, head_x - 1, drop + 2, head_w + 2, s.hair);
  }
  if (profile && s.hairdo != 2)  // back-of-head fringe
    fill(img, y_head, head_x - 1, head_h / 2 + 2, 3, s.hair);

  return img;
}

}  // namespace

std::vector<CharacterRecord> generate_synthetic_dataset(uint64_t seed,
                                                        int n_characters) {
  if (n_characters <= 0)
    throw config_error("n_characters must be positive, got " +
                       std::to_string(n_characters));
  std::vector<CharacterRecord> records;
  records.reserve(static_cast<size_t>(n_characters));
  for (int i = 0; i < n_characters; ++i) {
    Rng rng = Rng::child(seed, static_cast<uint64_t>(i));
    Style style = sample_style(rng);
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04d", i);

    CharacterRecord rec;
    rec.character_id = id;
    Image8 right = draw(style, Pose::right);
    std::map<Pose, Image8> images = {{Pose::front, draw(style, Pose::front)},
                                     {Pose::right, right},
                                     {Pose::back, draw(style, Pose::back)},
                                     {Pose::left, hmirror(right)}};
    for (const auto& [pose, img] : images) {
      Sprite s;
      s.character_id = rec.character_id;
      s.pose = pose;
      s.frame = 0;
      s.pixels = normalize(img);
      rec.sprites[pose].push_back(std::move(s));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace sprite
