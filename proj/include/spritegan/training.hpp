#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <vector>

#include "spritegan/dataset.hpp"
#include "spritegan/losses.hpp"
#include "spritegan/model.hpp"
#include "spritegan/rng.hpp"

namespace sprite {

struct TrainConfig {
  int64_t steps = 40000;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  uint64_t seed = 0;
  int64_t checkpoint_every = 4000;  // 0 disables periodic checkpoints
  LossConfig loss;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// How many passes over the training set a step budget amounts to.
double epochs_equivalent(int64_t steps, int64_t train_size);

// Child-stream ids off TrainConfig::seed, so weight init, dropout and the
// epoch schedule draw from independent deterministic streams.
inline constexpr uint64_t kStreamGenInit = 1;
inline constexpr uint64_t kStreamDiscInit = 2;
inline constexpr uint64_t kStreamDropout = 3;

void init_models(Generator& gen, Discriminator& disc, uint64_t seed);

// The shuffled example order for one epoch, a pure function of (seed, epoch)
// so resuming never needs to persist the schedule.
std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, int64_t epoch);

struct StepMetrics {
  int64_t step = 0;
  double g_total = 0, g_adv = 0, g_l1 = 0, d_loss = 0;
  double steps_per_sec = 0;
};

void zero_grad(const std::vector<nn::Param*>& params);

// Bias-corrected Adam. Moment buffers are keyed by parameter name and
// created lazily on the first step.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8);

  void step(const std::vector<nn::Param*>& params);
  int64_t t() const { return t_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

  bool operator==(const Adam& o) const;

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  struct Moments {
    std::vector<float> m, v;
  };
  std::map<std::string, Moments> state_;
};

// One alternating optimization step: discriminator update on the real pair
// and a fresh fake, then a generator update through the refreshed
// discriminator. Owns both optimizers, the dropout stream and the step
// counter; everything round-trips through save/load_checkpoint.
class Trainer {
 public:
  Trainer(Generator& gen, Discriminator& disc, TrainConfig cfg);

  StepMetrics train_step(const PairedExample& ex);
  StepMetrics train_batch(const std::vector<const PairedExample*>& batch);

  int64_t step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Rng& dropout_rng() { return dropout_rng_; }
  const Adam& gen_opt() const { return opt_g_; }
  const Adam& disc_opt() const { return opt_d_; }

  // dir is created; writes weights, optimizer state, rng state, the network
  // spec and the train config.
  void save_checkpoint(const std::filesystem::path& dir);
  // Rejects checkpoints written under a different config or architecture.
  void load_checkpoint(const std::filesystem::path& dir);

 private:
  Generator& gen_;
  Discriminator& disc_;
  TrainConfig cfg_;
  Adam opt_g_, opt_d_;
  Rng dropout_rng_;
  int64_t step_ = 0;
};

struct TrainRunResult {
  int64_t steps = 0;
  std::filesystem::path last_checkpoint;
  StepMetrics final_metrics;
};

using StepCallback = std::function<void(const StepMetrics&)>;

// Full training run under run_dir: cycles a per-epoch reshuffled permutation
// of the training pairs, appends one metrics.csv row per step, checkpoints
// at the configured cadence and at completion. With resume=true, continues
// from the newest checkpoint under run_dir (metric rows past it are
// dropped so the log stays continuous).
TrainRunResult train(Generator& gen, Discriminator& disc,
                     const std::vector<PairedExample>& train_pairs,
                     const TrainConfig& cfg,
                     const std::filesystem::path& run_dir,
                     bool resume = false, const StepCallback& on_step = {});

}  // namespace sprite
