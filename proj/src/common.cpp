#include "spritegan/common.hpp"

#include <array>
#include <cstdio>

namespace sprite {

const char* to_string(Pose p) {
  switch (p) {
    case Pose::front: return "front";
    case Pose::right: return "right";
    case Pose::back: return "back";
    case Pose::left: return "left";
  }
  return "?";
}

Pose pose_from_string(const std::string& s) {
  for (Pose p : kAllPoses)
    if (s == to_string(p)) return p;
  throw config_error("unknown pose '" + s +
                     "' (expected front, right, back or left)");
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sprite
