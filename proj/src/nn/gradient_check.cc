// nn/gradient_check.cc

#include "moscope/nn/gradient_check.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "moscope/error.h"

namespace moscope::nn {

namespace {

double relative_error(double analytic, double numeric) {
  double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradientCheckReport gradient_check(Sequential &net, const Batch &input,
                                   const OutputLoss &loss, double h,
                                   bool check_inputs, Mode mode) {
  auto total_loss = [&](const Batch &x) {
    return loss(net.forward(x, mode), nullptr) + net.l2_penalty();
  };

  net.zero_grad();
  Batch out = net.forward(input, mode);
  Batch grad_out;
  loss(out, &grad_out);
  Batch grad_in = net.backward(grad_out, check_inputs);

  GradientCheckReport report;
  auto consider = [&](double analytic, double numeric, const std::string &where) {
    double e = relative_error(analytic, numeric);
    if (report.checked++ == 0 || e > report.max_rel_error) {
      report.max_rel_error = e;
      report.worst = where;
    }
  };

  std::vector<Param> params = net.params();
  std::vector<Tensor2D> analytic;
  for (const Param &p : params) analytic.push_back(*p.grad);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor2D &w = *params[k].value;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = total_loss(input);
      w.data()[i] = saved - h;
      const double down = total_loss(input);
      w.data()[i] = saved;
      consider(analytic[k].data()[i], (up - down) / (2.0 * h),
               fmt::format("{}[{}]", params[k].name, i));
    }
  }

  if (check_inputs) {
    Batch x = input;
    for (std::size_t s = 0; s < x.size(); ++s) {
      for (Eigen::Index i = 0; i < x[s].size(); ++i) {
        const double saved = x[s].data()[i];
        x[s].data()[i] = saved + h;
        const double up = total_loss(x);
        x[s].data()[i] = saved - h;
        const double down = total_loss(x);
        x[s].data()[i] = saved;
        consider(grad_in[s].data()[i], (up - down) / (2.0 * h),
                 fmt::format("input{}[{}]", s, i));
      }
    }
  }
  return report;
}

OutputLoss linear_probe_loss(const Batch &probe) {
  return [probe](const Batch &outputs, Batch *grad) {
    if (outputs.size() != probe.size()) throw ShapeError("probe batch size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      if (outputs[i].rows() != probe[i].rows() || outputs[i].cols() != probe[i].cols())
        throw ShapeError("probe shape mismatch");
      total += 0.5 * outputs[i].cwiseProduct(probe[i]).sum();
    }
    if (grad) {
      grad->clear();
      for (const Tensor2D &p : probe) grad->push_back(0.5 * p);
    }
    return total;
  };
}

}  // namespace moscope::nn
