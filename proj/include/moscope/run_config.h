// moscope/run_config.h
//
// INI run configurations for training and grid search. Sections:
//
//   [model]      architecture, filters, kernel, pool, dropout_rate, l2,
//                input_batchnorm, batch_size, alpha, normalize, seed,
//                initial_output, learning_rate
//   [optimizer]  learning_rate, beta1, beta2, epsilon
//   [early_stop] patience, max_epochs, min_delta
//   [features]   fft_size, hop, window, log_magnitude
//   [scale]      min, max
//   [grid]       comma-separated lists: filters, dropout_rate, l2,
//                input_batchnorm, batch_size, learning_rate ("none" keeps
//                the optimizer rate)
//
// Missing keys take their defaults; unknown sections and keys are errors.

#ifndef MOSCOPE_RUN_CONFIG_H_
#define MOSCOPE_RUN_CONFIG_H_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moscope/features.h"
#include "moscope/models.h"
#include "moscope/nn/adam.h"

namespace moscope {

struct GridAxes {
  std::vector<std::size_t> filters{16, 32, 64, 128};
  std::vector<double> dropout_rate{0.1, 0.2, 0.3};
  std::vector<double> l2{0.0001, 0.001, 0.01, 0.1};
  std::vector<bool> input_batchnorm{false, true};
  std::vector<std::size_t> batch_size{16, 64, 128};
  std::vector<std::optional<double>> learning_rate{std::nullopt};
};

struct RunConfig {
  Architecture architecture = Architecture::kLowCapacity;
  LowCapacityCNNConfig low_capacity;
  FrameModelConfig frame;
  // Unset means the midpoint of the MOS scale.
  std::optional<double> initial_output;
  nn::OptimizerConfig optimizer;
  nn::EarlyStopConfig early_stop;
  StftConfig stft;
  double scale_min = kDefaultScaleMin;
  double scale_max = kDefaultScaleMax;
  GridAxes grid;

  // Model config with initial_output resolved.
  ModelConfig model_config() const;
  // Cartesian product of the grid axes over the low-capacity base config,
  // learning_rate varying fastest and filters slowest.
  std::vector<LowCapacityCNNConfig> expand_grid() const;
};

RunConfig parse_run_config(std::string_view text, const std::string &source = "<config>");
RunConfig load_run_config(const std::filesystem::path &path);

}  // namespace moscope

#endif  // MOSCOPE_RUN_CONFIG_H_
