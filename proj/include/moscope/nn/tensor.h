// moscope/nn/tensor.h

#ifndef MOSCOPE_NN_TENSOR_H_
#define MOSCOPE_NN_TENSOR_H_

#include <string>
#include <vector>

#include <Eigen/Core>

namespace moscope::nn {

// rows = positions (time or embedding index), cols = channels. Always
// 64-bit internally.
using Tensor2D = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One tensor per utterance. Samples may differ in row count.
using Batch = std::vector<Tensor2D>;

enum class Mode { kTrain, kEval };

// A trainable tensor and its gradient accumulator, owned by a layer.
struct Param {
  std::string name;
  Tensor2D *value = nullptr;
  Tensor2D *grad = nullptr;
};

}  // namespace moscope::nn

#endif  // MOSCOPE_NN_TENSOR_H_
