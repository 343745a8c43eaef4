// moscope/nn/gradient_check.h
//
// Central-difference verification of analytic gradients.

#ifndef MOSCOPE_NN_GRADIENT_CHECK_H_
#define MOSCOPE_NN_GRADIENT_CHECK_H_

#include <functional>
#include <string>

#include "moscope/nn/sequential.h"

namespace moscope::nn {

// Loss over the network outputs. Must return the loss and, when `grad` is
// non-null, fill it with d loss / d outputs.
using OutputLoss = std::function<double(const Batch &outputs, Batch *grad)>;

struct GradientCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // e.g. "layer2.weights[17]" or "input0[3]"
  std::size_t checked = 0;
};

// Compares backprop against (L(w+h) - L(w-h)) / 2h for every parameter
// entry (and every input entry if `check_inputs`), where L includes the L2
// penalty. Runs in eval mode, so dropout is off and batchnorm uses running
// statistics. Relative error is |a - n| / max(1, |a|, |n|).
GradientCheckReport gradient_check(Sequential &net, const Batch &input,
                                   const OutputLoss &loss, double h = 1e-6,
                                   bool check_inputs = true,
                                   Mode mode = Mode::kEval);

// 0.5 * sum(out * weights) for fixed random weights: a generic probe loss
// whose output gradient is dense and non-degenerate.
OutputLoss linear_probe_loss(const Batch &probe);

}  // namespace moscope::nn

#endif  // MOSCOPE_NN_GRADIENT_CHECK_H_
