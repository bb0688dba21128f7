#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sprite {

inline constexpr const char* kVersion = "0.1.0";

// Canonical sprite canvas: everything is padded to this size on ingestion.
inline constexpr int kCanvas = 64;

// Bad configuration or bad arguments (CLI exit code 2).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or unreadable resource (CLI exit code 3).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failure at runtime, e.g. diverging training (CLI exit code 4).
struct runtime_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Pose { front = 0, right = 1, back = 2, left = 3 };

inline constexpr Pose kAllPoses[4] = {Pose::front, Pose::right, Pose::back,
                                      Pose::left};

const char* to_string(Pose p);
Pose pose_from_string(const std::string& s);

// FNV-1a, used for stable config hashes written into run manifests.
uint64_t fnv1a64(const void* data, size_t n,
                 uint64_t h = 1469598103934665603ull);
uint64_t fnv1a64(const std::string& s);
std::string hex64(uint64_t v);

}  // namespace sprite
