// moscope/nn/layers.h
//
// Layer set for the 1-D convolutional regressors: Conv1D (valid padding,
// stride 1), MaxPool1D, GlobalAvgPool, Dense, ReLU, Dropout, BatchNorm.
//
// Each op exists as a free function on a single tensor (forward and
// backward), and as a Layer that runs it over a Batch and owns parameters.

#ifndef MOSCOPE_NN_LAYERS_H_
#define MOSCOPE_NN_LAYERS_H_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "moscope/nn/tensor.h"

namespace moscope::nn {

// ---- conv1d ---------------------------------------------------------------

// weights: filters x (kernel * c_in), entry (f, k * c_in + c) = w(f, k, c).
// bias: 1 x filters. out(t, f) = bias(f) + sum_{k,c} w(f,k,c) x(t+k, c).
Tensor2D conv1d_forward(const Tensor2D &x, const Tensor2D &weights,
                        const Tensor2D &bias, std::size_t kernel);

struct Conv1DGrads {
  Tensor2D input;    // empty when not requested
  Tensor2D weights;
  Tensor2D bias;
};

// Gradients of a single forward call. The L2 term adds 2 * l2 * w to the
// weight gradient.
Conv1DGrads conv1d_backward(const Tensor2D &x, const Tensor2D &weights,
                            std::size_t kernel, const Tensor2D &grad_out,
                            double l2, bool need_input_grad = true);

// ---- pooling --------------------------------------------------------------

struct MaxPoolResult {
  Tensor2D out;
  std::vector<std::size_t> argmax;  // input row per output cell, row-major
};

// Stride = pool, trailing remainder dropped, first index wins ties.
MaxPoolResult maxpool1d_forward(const Tensor2D &x, std::size_t pool);
Tensor2D maxpool1d_backward(const Tensor2D &grad_out,
                            const std::vector<std::size_t> &argmax,
                            std::size_t in_rows);

// T x C -> 1 x C.
Tensor2D global_avg_pool_forward(const Tensor2D &x);
Tensor2D global_avg_pool_backward(const Tensor2D &grad_out, std::size_t in_rows);

// ---- elementwise / affine -------------------------------------------------

// Row-wise affine map: x is R x n, weights m x n, bias 1 x m -> R x m.
Tensor2D dense_forward(const Tensor2D &x, const Tensor2D &weights,
                       const Tensor2D &bias);

Tensor2D relu(const Tensor2D &x);

// Inverted dropout. In train mode each entry is zeroed with probability
// `rate` and survivors scaled by 1 / (1 - rate); identity in eval mode or
// when rate is 0. `mask` receives the per-entry multiplier.
Tensor2D dropout(const Tensor2D &x, double rate, std::mt19937_64 &rng, Mode mode,
                 Tensor2D *mask = nullptr);

// ---- layers ---------------------------------------------------------------

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string describe() const = 0;
  virtual Batch forward(const Batch &in, Mode mode) = 0;
  // Accumulates parameter gradients (adding the L2 term once per call) and
  // returns d loss / d input, or an empty batch if !need_input_grad.
  virtual Batch backward(const Batch &grad_out, bool need_input_grad) = 0;

  virtual std::vector<Param> params() { return {}; }
  // Serialized, non-trainable state such as batchnorm running statistics.
  virtual std::vector<Tensor2D *> state() { return {}; }
  virtual double l2_penalty() const { return 0.0; }
  virtual std::unique_ptr<Layer> clone() const = 0;

  // Shape walk. Throws ShapeError when the input cannot pass this layer.
  virtual std::size_t output_rows(std::size_t in_rows) const { return in_rows; }
  virtual std::size_t output_cols(std::size_t in_cols) const { return in_cols; }

  void zero_grad();
};

class Conv1D : public Layer {
 public:
  Conv1D(std::size_t in_channels, std::size_t filters, std::size_t kernel,
         double l2 = 0.0);

  // Glorot-uniform weights, zero bias.
  void initialize(std::mt19937_64 &rng);

  std::string describe() const override;
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::vector<Param> params() override;
  double l2_penalty() const override;
  std::unique_ptr<Layer> clone() const override;
  std::size_t output_rows(std::size_t in_rows) const override;
  std::size_t output_cols(std::size_t in_cols) const override;

  Tensor2D &weights() { return weights_; }
  Tensor2D &bias() { return bias_; }
  Tensor2D &weight_grad() { return weight_grad_; }
  Tensor2D &bias_grad() { return bias_grad_; }
  std::size_t kernel() const { return kernel_; }
  double l2() const { return l2_; }

 private:
  std::size_t in_channels_, filters_, kernel_;
  double l2_;
  Tensor2D weights_, bias_, weight_grad_, bias_grad_;
  Batch cached_in_;
};

class MaxPool1D : public Layer {
 public:
  explicit MaxPool1D(std::size_t pool);

  std::string describe() const override;
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override;
  std::size_t output_rows(std::size_t in_rows) const override;

 private:
  std::size_t pool_;
  std::vector<std::vector<std::size_t>> argmax_;
  std::vector<std::size_t> in_rows_;
};

class GlobalAvgPool : public Layer {
 public:
  std::string describe() const override { return "GlobalAvgPool"; }
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override;
  std::size_t output_rows(std::size_t in_rows) const override;

 private:
  std::vector<std::size_t> in_rows_;
};

class Dense : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t units, double l2 = 0.0);

  void initialize(std::mt19937_64 &rng);

  std::string describe() const override;
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::vector<Param> params() override;
  double l2_penalty() const override;
  std::unique_ptr<Layer> clone() const override;
  std::size_t output_cols(std::size_t in_cols) const override;

  Tensor2D &weights() { return weights_; }
  Tensor2D &bias() { return bias_; }

 private:
  std::size_t in_features_, units_;
  double l2_;
  Tensor2D weights_, bias_, weight_grad_, bias_grad_;
  Batch cached_in_;
};

class ReLU : public Layer {
 public:
  std::string describe() const override { return "ReLU"; }
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override;

 private:
  Batch cached_in_;
};

class Dropout : public Layer {
 public:
  Dropout(double rate, std::uint64_t seed);

  std::string describe() const override;
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::mt19937_64 rng_;
  Batch masks_;
  bool last_train_ = false;
};

// Normalizes each channel over every row of every sample in the batch.
// Train mode uses batch statistics and updates the running estimates;
// eval mode uses the running estimates.
class BatchNorm : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.99;

  explicit BatchNorm(std::size_t channels);

  std::string describe() const override;
  Batch forward(const Batch &in, Mode mode) override;
  Batch backward(const Batch &grad_out, bool need_input_grad) override;
  std::vector<Param> params() override;
  std::vector<Tensor2D *> state() override;
  std::unique_ptr<Layer> clone() const override;
  std::size_t output_cols(std::size_t in_cols) const override;

  Tensor2D &running_mean() { return running_mean_; }
  Tensor2D &running_var() { return running_var_; }

 private:
  std::size_t channels_;
  Tensor2D gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor2D running_mean_, running_var_;
  // Cached for backward.
  Batch normalized_;
  Tensor2D inv_std_;
  bool last_train_ = false;
};

}  // namespace moscope::nn

#endif  // MOSCOPE_NN_LAYERS_H_
