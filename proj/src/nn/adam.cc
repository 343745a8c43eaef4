// nn/adam.cc

#include "moscope/nn/adam.h"

#include <cmath>

#include <fmt/format.h>

#include "moscope/error.h"

namespace moscope::nn {

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw DataError(fmt::format("learning_rate {} must be >= 0", learning_rate));
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw DataError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw DataError("Adam epsilon must be positive");
}

void adam_step(std::span<const Param> params, AdamState &state,
               const OptimizerConfig &cfg, std::int64_t t) {
  if (t < 1) throw DataError("Adam step index starts at 1");
  for (const Param &p : params)
    if (!p.grad->allFinite())
      throw DataError(fmt::format("non-finite gradient in {} at step {}", p.name, t));
  if (state.m.empty()) {
    for (const Param &p : params) {
      state.m.push_back(Tensor2D::Zero(p.value->rows(), p.value->cols()));
      state.v.push_back(Tensor2D::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("Adam state does not match parameters");

  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor2D &g = *params[i].grad;
    Tensor2D &m = state.m[i];
    Tensor2D &v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    auto m_hat = m.array() / bias1;
    auto v_hat = v.array() / bias2;
    params[i].value->array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
  }
}

void EarlyStopConfig::validate() const {
  if (patience < 1) throw DataError("early-stopping patience must be >= 1");
  if (max_epochs < 1) throw DataError("max_epochs must be >= 1");
  if (!(min_delta >= 0.0)) throw DataError("min_delta must be >= 0");
}

EarlyStopping::EarlyStopping(EarlyStopConfig cfg) : cfg_(cfg) { cfg_.validate(); }

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  if (epoch_ == 1 || val_loss < best_loss_ - cfg_.min_delta) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

bool EarlyStopping::should_stop() const {
  return since_best_ >= cfg_.patience || epoch_ >= cfg_.max_epochs;
}

}  // namespace moscope::nn
