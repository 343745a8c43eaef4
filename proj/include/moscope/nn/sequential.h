// moscope/nn/sequential.h

#ifndef MOSCOPE_NN_SEQUENTIAL_H_
#define MOSCOPE_NN_SEQUENTIAL_H_

#include <memory>
#include <string>
#include <vector>

#include "moscope/nn/layers.h"

namespace moscope::nn {

// A chain of layers. Copying deep-copies every layer.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential &other);
  Sequential &operator=(const Sequential &other);
  Sequential(Sequential &&) noexcept = default;
  Sequential &operator=(Sequential &&) noexcept = default;

  Layer &add(std::unique_ptr<Layer> layer);

  template <typename L, typename... Args>
  L &emplace(Args &&...args) {
    return static_cast<L &>(add(std::make_unique<L>(std::forward<Args>(args)...)));
  }

  Batch forward(const Batch &in, Mode mode);
  // Parameter gradients accumulate; call zero_grad() between steps. The
  // input gradient of the first layer is only computed when asked for.
  Batch backward(const Batch &grad_out, bool need_input_grad = false);

  void zero_grad();
  std::vector<Param> params();
  double l2_penalty() const;
  std::size_t parameter_count();

  // Every trainable tensor followed by every state tensor, layer by layer.
  std::vector<Tensor2D *> tensors_of(std::size_t layer);
  std::vector<Tensor2D> snapshot();
  void restore(const std::vector<Tensor2D> &snapshot);

  // Walks (rows, cols) through every layer; throws ShapeError on failure.
  std::pair<std::size_t, std::size_t> output_shape(std::size_t rows,
                                                   std::size_t cols) const;

  std::size_t size() const { return layers_.size(); }
  Layer &layer(std::size_t i) { return *layers_[i]; }
  const Layer &layer(std::size_t i) const { return *layers_[i]; }
  std::string describe() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace moscope::nn

#endif  // MOSCOPE_NN_SEQUENTIAL_H_
