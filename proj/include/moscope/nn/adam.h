// moscope/nn/adam.h

#ifndef MOSCOPE_NN_ADAM_H_
#define MOSCOPE_NN_ADAM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "moscope/nn/tensor.h"

namespace moscope::nn {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // learning_rate >= 0 (0 freezes the weights), 0 <= beta < 1, epsilon > 0.
  void validate() const;
  bool operator==(const OptimizerConfig &) const = default;
};

// First and second moment estimates, one per parameter tensor. Starts
// empty and is zero-filled on the first step.
struct AdamState {
  std::vector<Tensor2D> m;
  std::vector<Tensor2D> v;
};

// One bias-corrected Adam update at step t (t starts at 1):
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   w -= lr * m_hat / (sqrt(v_hat) + eps)
// Throws DataError, leaving parameters untouched, if any gradient is
// non-finite.
void adam_step(std::span<const Param> params, AdamState &state,
               const OptimizerConfig &cfg, std::int64_t t);

struct EarlyStopConfig {
  int patience = 10;
  int max_epochs = 200;
  double min_delta = 0.0;

  void validate() const;
  bool operator==(const EarlyStopConfig &) const = default;
};

// Tracks the best validation loss. An epoch improves when its loss is below
// best - min_delta; training stops after `patience` epochs in a row without
// improvement or at max_epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(EarlyStopConfig cfg);

  // Records the validation loss of the next epoch (1-based). Returns true
  // if this epoch is the new best.
  bool update(double val_loss);
  bool should_stop() const;

  int epoch() const { return epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  EarlyStopConfig cfg_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_loss_ = 0.0;
};

}  // namespace moscope::nn

#endif  // MOSCOPE_NN_ADAM_H_
