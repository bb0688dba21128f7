#pragma once

#include <cstdint>
#include <vector>

#include "spritegan/dataset.hpp"

namespace sprite {

// Procedurally drawn blocky humanoids used for self-contained training and
// evaluation runs. Every character is a deterministic function of
// (seed, index): shared palette pools, 2 body x 2 head x 3 hair x 3 clothes
// part variants, one frame per pose, alpha strictly 0 or 255, and the left
// pose is the exact horizontal mirror of the right pose.
std::vector<CharacterRecord> generate_synthetic_dataset(uint64_t seed,
                                                        int n_characters);

}  // namespace sprite
