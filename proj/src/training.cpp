#include "spritegan/training.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sprite {

namespace fs = std::filesystem;
using nlohmann::json;

void validate(const TrainConfig& cfg) {
  if (cfg.steps <= 0)
    throw config_error("steps must be positive, got " +
                       std::to_string(cfg.steps));
  if (!(cfg.lr > 0)) throw config_error("lr must be positive");
  if (cfg.batch_size < 1)
    throw config_error("batch_size must be at least 1, got " +
                       std::to_string(cfg.batch_size));
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1))
    throw config_error("adam betas must lie in [0, 1)");
  if (cfg.checkpoint_every < 0)
    throw config_error("checkpoint_every must be >= 0");
}

json to_json(const TrainConfig& cfg) {
  return {{"steps", cfg.steps},
          {"lr", cfg.lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every},
          {"loss", to_json(cfg.loss)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.steps = j.value("steps", cfg.steps);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  if (j.contains("loss")) cfg.loss = loss_config_from_json(j.at("loss"));
  validate(cfg);
  return cfg;
}

double epochs_equivalent(int64_t steps, int64_t train_size) {
  if (train_size <= 0)
    throw config_error("train_size must be positive, got " +
                       std::to_string(train_size));
  return static_cast<double>(steps) / static_cast<double>(train_size);
}

void init_models(Generator& gen, Discriminator& disc, uint64_t seed) {
  Rng rg = Rng::child(seed, kStreamGenInit);
  gen.init(rg);
  Rng rd = Rng::child(seed, kStreamDiscInit);
  disc.init(rd);
}

std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  uint64_t e = static_cast<uint64_t>(epoch);
  uint64_t mix = fnv1a64(&e, sizeof e, fnv1a64(&seed, sizeof seed));
  Rng rng = Rng::child(mix, 4);  // stream 4: the epoch schedule
  rng.shuffle(perm);
  return perm;
}

void zero_grad(const std::vector<nn::Param*>& params) {
  for (nn::Param* p : params) std::fill(p->g.begin(), p->g.end(), 0.f);
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<nn::Param*>& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (nn::Param* p : params) {
    Moments& mo = state_[p->name];
    if (mo.m.empty()) {
      mo.m.assign(p->w.size(), 0.f);
      mo.v.assign(p->w.size(), 0.f);
    }
    if (mo.m.size() != p->w.size())
      throw runtime_failure("optimizer state size mismatch for " + p->name);
    for (size_t i = 0; i < p->w.size(); ++i) {
      double g = p->g[i];
      double m = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
      double v = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
      mo.m[i] = static_cast<float>(m);
      mo.v[i] = static_cast<float>(v);
      p->w[i] -= static_cast<float>(lr_ * (m / bc1) /
                                    (std::sqrt(v / bc2) + eps_));
    }
  }
}

namespace {

void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw io_error("truncated optimizer state");
  return v;
}
void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& is) {
  std::string s(read_u64(is), '\0');
  is.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!is) throw io_error("truncated optimizer state");
  return s;
}
void write_floats(std::ostream& os, const std::vector<float>& v) {
  write_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}
std::vector<float> read_floats(std::istream& is) {
  std::vector<float> v(read_u64(is));
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!is) throw io_error("truncated optimizer state");
  return v;
}

}  // namespace

void Adam::save(std::ostream& os) const {
  os.write("SGAD", 4);
  write_u64(os, 1);  // format version
  write_u64(os, static_cast<uint64_t>(t_));
  write_u64(os, state_.size());
  for (const auto& [name, mo] : state_) {
    write_string(os, name);
    write_floats(os, mo.m);
    write_floats(os, mo.v);
  }
}

void Adam::load(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SGAD")
    throw io_error("not an optimizer state stream");
  if (read_u64(is) != 1) throw io_error("unsupported optimizer state version");
  t_ = static_cast<int64_t>(read_u64(is));
  uint64_t n = read_u64(is);
  state_.clear();
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = read_string(is);
    Moments mo;
    mo.m = read_floats(is);
    mo.v = read_floats(is);
    state_[name] = std::move(mo);
  }
}

bool Adam::operator==(const Adam& o) const {
  if (t_ != o.t_ || state_.size() != o.state_.size()) return false;
  for (const auto& [name, mo] : state_) {
    auto it = o.state_.find(name);
    if (it == o.state_.end() || it->second.m != mo.m || it->second.v != mo.v)
      return false;
  }
  return true;
}

// --- Trainer ----------------------------------------------------------------

Trainer::Trainer(Generator& gen, Discriminator& disc, TrainConfig cfg)
    : gen_(gen),
      disc_(disc),
      cfg_(cfg),
      opt_g_(cfg.lr, cfg.beta1, cfg.beta2),
      opt_d_(cfg.lr, cfg.beta1, cfg.beta2),
      dropout_rng_(Rng::child(cfg.seed, kStreamDropout)) {
  validate(cfg_);
  if (gen_.config().channels != disc_.config().channels)
    throw config_error("generator and discriminator channel counts differ");
}

StepMetrics Trainer::train_step(const PairedExample& ex) {
  return train_batch({&ex});
}

namespace {

void check_finite_metric(double v, const char* what, int64_t step) {
  if (!std::isfinite(v))
    throw runtime_failure(std::string(what) + " is non-finite at step " +
                          std::to_string(step));
}

}  // namespace

StepMetrics Trainer::train_batch(const std::vector<const PairedExample*>& batch) {
  if (batch.empty()) throw config_error("empty training batch");
  auto t0 = std::chrono::steady_clock::now();
  const int ch = gen_.config().channels;
  const float inv_n = 1.0f / static_cast<float>(batch.size());

  StepMetrics m;
  m.step = step_ + 1;

  std::vector<nn::Param*> gp = gen_.params();
  std::vector<nn::Param*> dp = disc_.params();

  // Discriminator update: real pair pulled toward 1, generated fake (cut off
  // from the generator's gradient path) toward 0.
  std::vector<nn::Tensor> fakes;
  fakes.reserve(batch.size());
  zero_grad(dp);
  for (const PairedExample* ex : batch) {
    nn::Tensor src = model_input(ex->source.pixels, ch);
    nn::Tensor real = model_input(ex->target.pixels, ch);
    nn::Tensor fake = gen_.forward(src, true, dropout_rng_);

    nn::Tensor real_grid = disc_.forward(src, real);
    nn::Tensor gr = discriminator_real_grad(real_grid, cfg_.loss);
    for (float& v : gr.v) v *= inv_n;
    disc_.backward(gr);

    nn::Tensor fake_grid = disc_.forward(src, fake);
    nn::Tensor gf = discriminator_fake_grad(fake_grid, cfg_.loss);
    for (float& v : gf.v) v *= inv_n;
    disc_.backward(gf);

    m.d_loss += discriminator_loss(real_grid, fake_grid, cfg_.loss) * inv_n;
    fakes.push_back(std::move(fake));
  }
  opt_d_.step(dp);

  // Generator update, scored by the just-updated discriminator. With batch
  // size 1 the generator's forward cache is still the one that produced the
  // fake, so no re-forward is needed.
  zero_grad(gp);
  for (size_t i = 0; i < batch.size(); ++i) {
    const PairedExample* ex = batch[i];
    nn::Tensor src = model_input(ex->source.pixels, ch);
    nn::Tensor real = model_input(ex->target.pixels, ch);
    const nn::Tensor& fake =
        batch.size() == 1 ? fakes[i]
                          : (fakes[i] = gen_.forward(src, true, dropout_rng_));

    nn::Tensor grid = disc_.forward(src, fake);
    LossBreakdown lb = generator_loss(grid, real, fake, cfg_.loss);
    m.g_total += lb.total * inv_n;
    m.g_adv += lb.adversarial * inv_n;
    m.g_l1 += lb.l1 * inv_n;

    // d(total)/d(fake): adversarial path through D plus the L1 term.
    // disc_.backward also dirties D's parameter gradients; the next
    // discriminator update zeroes them before use.
    nn::Tensor gimg = disc_.backward(generator_adv_grad(grid, cfg_.loss));
    nn::Tensor gl1 = l1_grad(real, fake);
    const float lambda = static_cast<float>(cfg_.loss.lambda_l1);
    for (size_t k = 0; k < gimg.v.size(); ++k)
      gimg.v[k] = (gimg.v[k] + lambda * gl1.v[k]) * inv_n;
    gen_.backward(gimg);
  }
  opt_g_.step(gp);

  check_finite_metric(m.g_total, "generator loss", m.step);
  check_finite_metric(m.d_loss, "discriminator loss", m.step);

  ++step_;
  auto t1 = std::chrono::steady_clock::now();
  double sec = std::chrono::duration<double>(t1 - t0).count();
  m.steps_per_sec = sec > 0 ? 1.0 / sec : 0.0;
  return m;
}

// --- checkpointing ----------------------------------------------------------

void Trainer::save_checkpoint(const fs::path& dir) {
  fs::path tmp = dir;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  try {
    fs::create_directories(tmp);
    nn::write_params((tmp / "gen.params").string(), gen_.params());
    nn::write_params((tmp / "disc.params").string(), disc_.params());

    std::ofstream optim(tmp / "optim.bin", std::ios::binary);
    if (!optim) throw io_error("cannot write optimizer state");
    optim.write("SGTR", 4);
    write_u64(optim, 1);
    write_u64(optim, static_cast<uint64_t>(step_));
    std::ostringstream rng_text;
    dropout_rng_.save(rng_text);
    write_string(optim, rng_text.str());
    opt_g_.save(optim);
    opt_d_.save(optim);
    if (!optim) throw io_error("failed writing optimizer state");
    optim.close();

    json spec = {{"generator", network_spec_json(gen_)},
                 {"discriminator", network_spec_json(disc_)}};
    std::ofstream(tmp / "netspec.json") << spec.dump(2) << "\n";
    std::ofstream(tmp / "train_config.json") << to_json(cfg_).dump(2) << "\n";
    json manifest = {{"version", 1}, {"step", step_}};
    std::ofstream(tmp / "manifest.json") << manifest.dump(2) << "\n";

    fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (...) {
    fs::remove_all(tmp, ec);  // leave any previous checkpoint intact
    throw;
  }
}

void Trainer::load_checkpoint(const fs::path& dir) {
  std::ifstream spec_in(dir / "netspec.json");
  if (!spec_in) throw io_error("no checkpoint at " + dir.string());
  json spec = json::parse(spec_in, nullptr, true, true);
  json want = {{"generator", network_spec_json(gen_)},
               {"discriminator", network_spec_json(disc_)}};
  if (spec != want)
    throw config_error("checkpoint architecture does not match the model: " +
                       dir.string());

  std::ifstream cfg_in(dir / "train_config.json");
  if (!cfg_in) throw io_error("checkpoint missing train_config.json");
  json cfg_json = json::parse(cfg_in, nullptr, true, true);
  // steps and checkpoint cadence may change on resume (e.g. extending a
  // run); the optimization itself must not.
  json a = cfg_json, b = to_json(cfg_);
  for (json* j : {&a, &b}) {
    j->erase("steps");
    j->erase("checkpoint_every");
  }
  if (a != b)
    throw config_error("checkpoint was written under a different training "
                       "config: " + dir.string());

  nn::read_params((dir / "gen.params").string(), gen_.params());
  nn::read_params((dir / "disc.params").string(), disc_.params());

  std::ifstream optim(dir / "optim.bin", std::ios::binary);
  if (!optim) throw io_error("checkpoint missing optim.bin");
  char magic[4] = {};
  optim.read(magic, 4);
  if (!optim || std::string(magic, 4) != "SGTR")
    throw io_error("bad optimizer state in " + dir.string());
  if (read_u64(optim) != 1) throw io_error("unsupported checkpoint version");
  step_ = static_cast<int64_t>(read_u64(optim));
  std::istringstream rng_text(read_string(optim));
  dropout_rng_.load(rng_text);
  opt_g_.load(optim);
  opt_d_.load(optim);
}

// --- full run ---------------------------------------------------------------

namespace {

int64_t checkpoint_step(const fs::path& p) {
  std::string name = p.filename().string();
  if (name.rfind("ckpt-", 0) != 0) return -1;
  if (name.find(".tmp") != std::string::npos) return -1;
  try {
    size_t used = 0;
    int64_t s = std::stoll(name.substr(5), &used);
    return used == name.size() - 5 ? s : -1;
  } catch (const std::exception&) {
    return -1;
  }
}

fs::path latest_checkpoint(const fs::path& run_dir, int64_t* step_out) {
  fs::path best;
  int64_t best_step = -1;
  if (fs::exists(run_dir))
    for (const auto& e : fs::directory_iterator(run_dir)) {
      if (!e.is_directory()) continue;
      int64_t s = checkpoint_step(e.path());
      if (s > best_step) {
        best_step = s;
        best = e.path();
      }
    }
  if (step_out) *step_out = best_step;
  return best;
}

void append_metric_row(std::ofstream& csv, const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%" PRId64 ",%.9g,%.9g,%.9g,%.9g,%.3f\n",
                m.step, m.g_total, m.g_adv, m.g_l1, m.d_loss,
                m.steps_per_sec);
  csv << buf;
}

// Drop rows past the resume step so the log continues without repeats.
void truncate_metrics(const fs::path& csv_path, int64_t keep_up_to) {
  if (!fs::exists(csv_path)) return;
  std::ifstream in(csv_path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (keep.empty() && line.rfind("step,", 0) == 0) {
      keep.push_back(line);
      continue;
    }
    try {
      if (std::stoll(line) <= keep_up_to) keep.push_back(line);
    } catch (const std::exception&) {
    }
  }
  in.close();
  std::ofstream out(csv_path, std::ios::trunc);
  for (const std::string& l : keep) out << l << "\n";
}

}  // namespace

TrainRunResult train(Generator& gen, Discriminator& disc,
                     const std::vector<PairedExample>& train_pairs,
                     const TrainConfig& cfg, const fs::path& run_dir,
                     bool resume, const StepCallback& on_step) {
  validate(cfg);
  if (train_pairs.empty()) throw config_error("training split is empty");

  fs::create_directories(run_dir);
  fs::path csv_path = run_dir / "metrics.csv";
  Trainer trainer(gen, disc, cfg);

  TrainRunResult result;
  if (resume) {
    int64_t at = -1;
    fs::path ckpt = latest_checkpoint(run_dir, &at);
    if (at >= 0) {
      trainer.load_checkpoint(ckpt);
      result.last_checkpoint = ckpt;
      truncate_metrics(csv_path, at);
    }
  }
  if (!fs::exists(csv_path) || trainer.step() == 0) {
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "step,g_total,g_adv,g_l1,d_loss,steps_per_sec\n";
  }

  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw io_error("cannot write " + csv_path.string());

  const size_t n = train_pairs.size();
  std::vector<size_t> perm;
  int64_t perm_epoch = -1;

  auto save_at = [&](int64_t step) {
    fs::path dir = run_dir / ("ckpt-" + std::to_string(step));
    trainer.save_checkpoint(dir);
    result.last_checkpoint = dir;
  };

  while (trainer.step() < cfg.steps) {
    std::vector<const PairedExample*> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      uint64_t cursor = static_cast<uint64_t>(trainer.step()) *
                            static_cast<uint64_t>(cfg.batch_size) +
                        static_cast<uint64_t>(b);
      int64_t epoch = static_cast<int64_t>(cursor / n);
      if (epoch != perm_epoch) {
        perm = epoch_permutation(n, cfg.seed, epoch);
        perm_epoch = epoch;
      }
      batch.push_back(&train_pairs[perm[cursor % n]]);
    }

    StepMetrics m;
    try {
      m = trainer.train_batch(batch);
    } catch (const runtime_failure& e) {
      std::string ref = result.last_checkpoint.empty()
                            ? "none"
                            : result.last_checkpoint.string();
      throw runtime_failure(std::string(e.what()) +
                            "; last good checkpoint: " + ref);
    }
    append_metric_row(csv, m);
    csv.flush();
    result.final_metrics = m;
    if (on_step) on_step(m);

    if (cfg.checkpoint_every > 0 && trainer.step() % cfg.checkpoint_every == 0)
      save_at(trainer.step());
  }

  fs::path final_dir = run_dir / ("ckpt-" + std::to_string(cfg.steps));
  if (result.last_checkpoint != final_dir) save_at(cfg.steps);
  result.steps = trainer.step();
  return result;
}

}  // namespace sprite
