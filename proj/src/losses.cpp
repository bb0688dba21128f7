#include "spritegan/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sprite {

using nn::Tensor;

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw config_error(std::string(who) + ": shape mismatch, " +
                       a.shape_str() + " vs " + b.shape_str());
}

void check_finite(const Tensor& t, const char* who) {
  for (float v : t.v)
    if (!std::isfinite(v))
      throw runtime_failure(std::string(who) +
                            ": non-finite value in loss input");
}

double clamped_log(double v, double eps) {
  return std::log(std::clamp(v, eps, 1.0));
}

void validate(const LossConfig& cfg) {
  if (cfg.lambda_l1 < 0) throw config_error("lambda_l1 must be >= 0");
  if (cfg.epsilon <= 0) throw config_error("loss epsilon must be > 0");
}

}  // namespace

const char* to_string(AdversarialForm f) {
  switch (f) {
    case AdversarialForm::non_saturating: return "non_saturating";
    case AdversarialForm::mean_then_bce: return "mean_then_bce";
    case AdversarialForm::per_patch_bce_mean: return "per_patch_bce_mean";
  }
  return "?";
}

AdversarialForm adversarial_form_from_string(const std::string& s) {
  for (AdversarialForm f :
       {AdversarialForm::non_saturating, AdversarialForm::mean_then_bce,
        AdversarialForm::per_patch_bce_mean})
    if (s == to_string(f)) return f;
  throw config_error("unknown adversarial form '" + s + "'");
}

nlohmann::json to_json(const LossConfig& cfg) {
  return {{"lambda_l1", cfg.lambda_l1},
          {"adversarial_form", to_string(cfg.adversarial_form)},
          {"epsilon", cfg.epsilon}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig cfg;
  cfg.lambda_l1 = j.value("lambda_l1", cfg.lambda_l1);
  if (j.contains("adversarial_form"))
    cfg.adversarial_form = adversarial_form_from_string(
        j.at("adversarial_form").get<std::string>());
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  validate(cfg);
  return cfg;
}

double l1_term(const Tensor& y, const Tensor& y_hat) {
  check_same_shape(y, y_hat, "l1_term");
  double acc = 0;
  for (size_t i = 0; i < y.size(); ++i)
    acc += std::fabs(static_cast<double>(y_hat.v[i]) - y.v[i]);
  return acc / static_cast<double>(y.size());
}

Tensor l1_grad(const Tensor& y, const Tensor& y_hat) {
  check_same_shape(y, y_hat, "l1_grad");
  Tensor g(y.c, y.h, y.w);
  const float inv_n = 1.f / static_cast<float>(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    float d = y_hat.v[i] - y.v[i];
    g.v[i] = d > 0.f ? inv_n : (d < 0.f ? -inv_n : 0.f);
  }
  return g;
}

LossBreakdown generator_loss(const Tensor& d_fake_grid, const Tensor& y,
                             const Tensor& y_hat, const LossConfig& cfg) {
  validate(cfg);
  check_finite(d_fake_grid, "generator_loss");
  check_finite(y_hat, "generator_loss");
  LossBreakdown out;
  double acc = 0;
  for (float v : d_fake_grid.v) acc += clamped_log(v, cfg.epsilon);
  out.adversarial = -acc / static_cast<double>(d_fake_grid.size());
  out.l1 = l1_term(y, y_hat);
  out.total = out.adversarial + cfg.lambda_l1 * out.l1;
  return out;
}

Tensor generator_adv_grad(const Tensor& d_fake_grid, const LossConfig& cfg) {
  validate(cfg);
  Tensor g(d_fake_grid.c, d_fake_grid.h, d_fake_grid.w);
  const double n = static_cast<double>(d_fake_grid.size());
  for (size_t i = 0; i < g.size(); ++i) {
    double f = d_fake_grid.v[i];
    // Zero gradient in the clamped regions.
    g.v[i] = (f > cfg.epsilon && f < 1.0)
                 ? static_cast<float>(-1.0 / (n * f))
                 : 0.f;
  }
  return g;
}

double discriminator_loss(const Tensor& d_real_grid, const Tensor& d_fake_grid,
                          const LossConfig& cfg) {
  validate(cfg);
  check_same_shape(d_real_grid, d_fake_grid, "discriminator_loss");
  check_finite(d_real_grid, "discriminator_loss");
  check_finite(d_fake_grid, "discriminator_loss");
  const double n = static_cast<double>(d_real_grid.size());
  if (cfg.adversarial_form == AdversarialForm::per_patch_bce_mean) {
    double acc = 0;
    for (size_t i = 0; i < d_real_grid.size(); ++i)
      acc += -clamped_log(d_real_grid.v[i], cfg.epsilon) -
             clamped_log(1.0 - d_fake_grid.v[i], cfg.epsilon);
    return acc / n;
  }
  double p_real = 0, p_fake = 0;
  for (float v : d_real_grid.v) p_real += v;
  for (float v : d_fake_grid.v) p_fake += v;
  p_real /= n;
  p_fake /= n;
  return -clamped_log(p_real, cfg.epsilon) -
         clamped_log(1.0 - p_fake, cfg.epsilon);
}

Tensor discriminator_real_grad(const Tensor& d_real_grid,
                               const LossConfig& cfg) {
  validate(cfg);
  Tensor g(d_real_grid.c, d_real_grid.h, d_real_grid.w);
  const double n = static_cast<double>(d_real_grid.size());
  if (cfg.adversarial_form == AdversarialForm::per_patch_bce_mean) {
    for (size_t i = 0; i < g.size(); ++i) {
      double r = d_real_grid.v[i];
      g.v[i] = (r > cfg.epsilon && r < 1.0)
                   ? static_cast<float>(-1.0 / (n * r))
                   : 0.f;
    }
    return g;
  }
  double p_real = 0;
  for (float v : d_real_grid.v) p_real += v;
  p_real /= n;
  float dv = (p_real > cfg.epsilon && p_real < 1.0)
                 ? static_cast<float>(-1.0 / (n * p_real))
                 : 0.f;
  for (float& v : g.v) v = dv;
  return g;
}

Tensor discriminator_fake_grad(const Tensor& d_fake_grid,
                               const LossConfig& cfg) {
  validate(cfg);
  Tensor g(d_fake_grid.c, d_fake_grid.h, d_fake_grid.w);
  const double n = static_cast<double>(d_fake_grid.size());
  if (cfg.adversarial_form == AdversarialForm::per_patch_bce_mean) {
    for (size_t i = 0; i < g.size(); ++i) {
      double keep = 1.0 - d_fake_grid.v[i];
      g.v[i] = (keep > cfg.epsilon && keep < 1.0)
                   ? static_cast<float>(1.0 / (n * keep))
                   : 0.f;
    }
    return g;
  }
  double p_fake = 0;
  for (float v : d_fake_grid.v) p_fake += v;
  p_fake /= n;
  double keep = 1.0 - p_fake;
  float dv = (keep > cfg.epsilon && keep < 1.0)
                 ? static_cast<float>(1.0 / (n * keep))
                 : 0.f;
  for (float& v : g.v) v = dv;
  return g;
}

}  // namespace sprite
