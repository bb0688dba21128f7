#pragma once

#include <string>

#include <json.hpp>

#include "spritegan/nn.hpp"

namespace sprite {

// How the discriminator objective reduces its patch grid. The generator's
// adversarial term is always the non-saturating -log D(G(x)) form.
enum class AdversarialForm {
  non_saturating,           // default; discriminator uses mean_then_bce
  mean_then_bce,            // reduce grid to its mean, then BCE
  per_patch_bce_mean,       // BCE per patch against 1/0 targets, then mean
};

const char* to_string(AdversarialForm f);
AdversarialForm adversarial_form_from_string(const std::string& s);

struct LossConfig {
  double lambda_l1 = 100.0;
  AdversarialForm adversarial_form = AdversarialForm::non_saturating;
  double epsilon = 1e-7;  // log clamp, keeps saturated grids finite
};

nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j);

struct LossBreakdown {
  double total = 0;
  double adversarial = 0;
  double l1 = 0;
};

// Mean absolute difference over all components.
double l1_term(const nn::Tensor& y, const nn::Tensor& y_hat);
// d(l1_term)/d(y_hat): sign(y_hat - y) / n.
nn::Tensor l1_grad(const nn::Tensor& y, const nn::Tensor& y_hat);

// adversarial = -mean(log(clamp(d_fake_grid, eps, 1)));
// total = adversarial + lambda_l1 * l1_term(y, y_hat).
LossBreakdown generator_loss(const nn::Tensor& d_fake_grid,
                             const nn::Tensor& y, const nn::Tensor& y_hat,
                             const LossConfig& cfg);
// d(adversarial)/d(grid).
nn::Tensor generator_adv_grad(const nn::Tensor& d_fake_grid,
                              const LossConfig& cfg);

double discriminator_loss(const nn::Tensor& d_real_grid,
                          const nn::Tensor& d_fake_grid,
                          const LossConfig& cfg);
// The objective separates into a real term and a fake term, so each grid's
// gradient only needs its own grid; the trainer relies on this to backprop
// immediately after each forward.
nn::Tensor discriminator_real_grad(const nn::Tensor& d_real_grid,
                                   const LossConfig& cfg);
nn::Tensor discriminator_fake_grad(const nn::Tensor& d_fake_grid,
                                   const LossConfig& cfg);

}  // namespace sprite
