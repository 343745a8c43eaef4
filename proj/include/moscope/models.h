// moscope/models.h
//
// The two MOS regressors, their loss, training loop, grid search and model
// files.
//
//   low-capacity CNN (embedding input, D x 1):
//     [BatchNorm] -> Conv1D -> Conv1D -> MaxPool -> Conv1D -> Conv1D
//       -> GlobalAvgPool -> Dropout -> Dense(1)
//   frame model (spectrogram input, T x F):
//     Conv1D -> Conv1D -> MaxPool -> Conv1D -> Conv1D -> per-frame Dense(1),
//     utterance score = mean of the frame scores.
//
// Every Conv1D is followed by ReLU and uses valid padding with stride 1.

#ifndef MOSCOPE_MODELS_H_
#define MOSCOPE_MODELS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "moscope/corpus.h"
#include "moscope/features.h"
#include "moscope/nn/adam.h"
#include "moscope/nn/gradient_check.h"
#include "moscope/nn/sequential.h"

namespace moscope {

enum class Architecture : std::uint8_t { kLowCapacity = 0, kFrame = 1 };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

struct LowCapacityCNNConfig {
  std::size_t filters = 16;      // grid: 16, 32, 64, 128
  std::size_t kernel = 10;
  std::size_t pool = 3;
  double dropout_rate = 0.2;     // grid: 0.1, 0.2, 0.3
  double l2 = 0.0001;            // grid: 0.0001, 0.001, 0.01, 0.1
  bool input_batchnorm = false;
  std::size_t batch_size = 1;    // grid: 16, 64, 128 (best reported run used 1)
  std::uint64_t seed = 7;
  double alpha = 0.0;            // no frame term; a warning is logged if set
  bool normalize = true;
  double initial_output = 0.0;   // bias of the output unit at build time
  std::optional<double> learning_rate;  // per-config override

  void validate() const;
  bool operator==(const LowCapacityCNNConfig &) const = default;
};

struct FrameModelConfig {
  std::size_t filters = 32;
  std::size_t kernel = 10;
  std::size_t pool = 3;
  double alpha = 1.0;            // frame-term weight, in [0, 1]
  double l2 = 0.0;
  std::size_t batch_size = 1;
  std::uint64_t seed = 7;
  bool normalize = false;
  double initial_output = 0.0;

  void validate() const;
  bool operator==(const FrameModelConfig &) const = default;
};

using ModelConfig = std::variant<LowCapacityCNNConfig, FrameModelConfig>;

struct ModelOutput {
  double utterance = 0.0;
  std::vector<double> frames;  // empty for the low-capacity CNN
};

struct TrainedModel {
  Architecture architecture = Architecture::kLowCapacity;
  ModelConfig config;
  std::size_t input_dim = 0;  // embedding length D, or spectrogram bins F
  nn::Sequential net;
  std::optional<Normalizer> normalizer;
  std::optional<StftConfig> stft;
  double scale_min = kDefaultScaleMin;
  double scale_max = kDefaultScaleMax;

  double alpha() const;
  std::size_t batch_size() const;
  std::uint64_t seed() const;
  bool wants_normalizer() const;
  FeatureKind input_kind() const;
  // Shortest accepted input (rows) for the frame model, or input_dim.
  std::size_t min_rows() const;

  // Checks kind and shape and applies the normalizer.
  nn::Tensor2D prepare_input(const FeatureMatrix &features) const;
  // Splits raw network outputs into utterance and frame scores.
  ModelOutput interpret(const nn::Tensor2D &output) const;

  // Rounds every weight, state tensor and normalizer entry to float32, the
  // precision of the model file.
  void quantize();
};

// Throws ShapeError if input_dim cannot survive the layer stack.
TrainedModel build_low_capacity_cnn(const LowCapacityCNNConfig &cfg,
                                    std::size_t input_dim);
TrainedModel build_frame_model(const FrameModelConfig &cfg, std::size_t n_bins);

// (utt - target)^2 + alpha * mean_t (frame_t - target)^2. With alpha == 0
// or no frames the frame term is skipped entirely.
double dual_loss(double utt_pred, std::span<const double> frame_preds,
                 double target, double alpha);

struct DualLossGrad {
  double loss = 0.0;
  double d_utterance = 0.0;
  std::vector<double> d_frames;  // partials holding the utterance score fixed
};

DualLossGrad dual_loss_grad(double utt_pred, std::span<const double> frame_preds,
                            double target, double alpha);

// Mean dual loss over a batch of network outputs; fills d loss / d outputs
// (with the frame model's utterance-mean folded in).
double batch_loss(const TrainedModel &model, const nn::Batch &outputs,
                  std::span<const double> targets, nn::Batch *grad);

struct Example {
  std::string utt_id;
  FeatureMatrix features;
  double target = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean batch loss including the L2 penalty
  double val_mse = 0.0;
};

struct TrainResult {
  TrainedModel model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Adam with early stopping on validation MSE; returns the weights of the
// best epoch, rounded to float32. Train order is reshuffled every epoch
// from the model seed.
TrainResult train(TrainedModel model, std::span<const Example> train_set,
                  std::span<const Example> val_set, const nn::OptimizerConfig &opt,
                  const nn::EarlyStopConfig &stop);

// Deterministic eval-mode score; not clamped to the MOS scale.
double predict(const TrainedModel &model, const FeatureMatrix &features);
ModelOutput predict_detailed(const TrainedModel &model, const FeatureMatrix &features);

// Gradient check of the full model under the training loss.
nn::GradientCheckReport gradient_check(TrainedModel &model,
                                       std::span<const Example> examples,
                                       double h = 1e-6);

struct LeaderboardEntry {
  std::size_t config_index = 0;
  LowCapacityCNNConfig config;
  std::optional<double> val_speaker_srcc;
  double val_mse = 0.0;
  int epochs = 0;
  int best_epoch = 0;
};

struct GridSearchResult {
  TrainedModel best;
  std::vector<LeaderboardEntry> leaderboard;  // best first
};

// Trains every configuration (seed + index) and ranks them by speaker-level
// SRCC on the validation set; ties go to lower val MSE, then grid order.
// `manifest` supplies the speaker of every validation utterance.
GridSearchResult grid_search(std::span<const LowCapacityCNNConfig> grid,
                             std::span<const Example> train_set,
                             std::span<const Example> val_set,
                             const CorpusManifest &manifest,
                             const nn::OptimizerConfig &opt,
                             const nn::EarlyStopConfig &stop,
                             std::size_t workers = 1);

std::string format_leaderboard_csv(std::span<const LeaderboardEntry> leaderboard);

// ---- model files ----------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Config block as "key=value" lines.
std::string model_config_text(const TrainedModel &model);

std::vector<std::uint8_t> encode_model(const TrainedModel &model);
TrainedModel decode_model(std::span<const std::uint8_t> bytes,
                          const std::string &source = "<model>");
void save_model(const std::filesystem::path &path, const TrainedModel &model);
TrainedModel load_model(const std::filesystem::path &path);

}  // namespace moscope

#endif  // MOSCOPE_MODELS_H_
