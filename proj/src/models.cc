// models.cc

#include "moscope/models.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "moscope/error.h"
#include "moscope/metrics.h"
#include "moscope/parallel.h"

namespace moscope {

namespace {

void check_positive(std::size_t v, const char *name) {
  if (v < 1) throw DataError(fmt::format("{} must be at least 1", name));
}

// Draws from [0, n) using raw engine output, so shuffles are identical
// across standard libraries.
std::size_t uniform_index(std::mt19937_64 &rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

void shuffle_indices(std::vector<std::size_t> &idx, std::mt19937_64 &rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
}

void initialize_layers(nn::Sequential &net, std::uint64_t seed, double initial_output) {
  std::mt19937_64 rng(seed);
  nn::Dense *last_dense = nullptr;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (auto *conv = dynamic_cast<nn::Conv1D *>(&net.layer(i))) conv->initialize(rng);
    if (auto *dense = dynamic_cast<nn::Dense *>(&net.layer(i))) {
      dense->initialize(rng);
      last_dense = dense;
    }
  }
  if (last_dense) last_dense->bias().setConstant(initial_output);
}

void add_conv_block(nn::Sequential &net, std::size_t in, std::size_t filters,
                    std::size_t kernel, double l2) {
  net.emplace<nn::Conv1D>(in, filters, kernel, l2);
  net.emplace<nn::ReLU>();
}

}  // namespace

std::string_view to_string(Architecture a) {
  return a == Architecture::kLowCapacity ? "low_capacity" : "frame";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "low_capacity") return Architecture::kLowCapacity;
  if (s == "frame") return Architecture::kFrame;
  throw DataError(fmt::format("unknown architecture '{}'", s));
}

void LowCapacityCNNConfig::validate() const {
  check_positive(filters, "filters");
  check_positive(kernel, "kernel");
  check_positive(pool, "pool");
  check_positive(batch_size, "batch_size");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw DataError(fmt::format("dropout rate {} outside [0, 1)", dropout_rate));
  if (!(l2 >= 0.0)) throw DataError("l2 must be non-negative");
  if (learning_rate && !(*learning_rate >= 0.0))
    throw DataError("learning_rate override must be non-negative");
}

void FrameModelConfig::validate() const {
  check_positive(filters, "filters");
  check_positive(kernel, "kernel");
  check_positive(pool, "pool");
  check_positive(batch_size, "batch_size");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw DataError(fmt::format("alpha {} outside [0, 1]", alpha));
  if (!(l2 >= 0.0)) throw DataError("l2 must be non-negative");
}

double TrainedModel::alpha() const {
  return std::visit([](const auto &c) { return c.alpha; }, config);
}

std::size_t TrainedModel::batch_size() const {
  return std::visit([](const auto &c) { return c.batch_size; }, config);
}

std::uint64_t TrainedModel::seed() const {
  return std::visit([](const auto &c) { return c.seed; }, config);
}

bool TrainedModel::wants_normalizer() const {
  return std::visit([](const auto &c) { return c.normalize; }, config);
}

FeatureKind TrainedModel::input_kind() const {
  return architecture == Architecture::kFrame ? FeatureKind::kSpectrogram
                                              : FeatureKind::kEmbedding;
}

std::size_t TrainedModel::min_rows() const {
  if (architecture == Architecture::kLowCapacity) return input_dim;
  // Smallest T that survives the shape walk.
  std::size_t lo = 1, hi = 1;
  auto ok = [&](std::size_t t) {
    try {
      net.output_shape(t, input_dim);
      return true;
    } catch (const ShapeError &) {
      return false;
    }
  };
  while (!ok(hi)) hi *= 2;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (ok(mid)) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

nn::Tensor2D TrainedModel::prepare_input(const FeatureMatrix &features) const {
  if (features.kind() != input_kind())
    throw ShapeError(fmt::format("{} model expects {} features, got {}",
                                 to_string(architecture), to_string(input_kind()),
                                 to_string(features.kind())));
  if (architecture == Architecture::kLowCapacity) {
    if (features.rows() != input_dim)
      throw ShapeError(fmt::format("model expects {}-dimensional embeddings, got {}",
                                   input_dim, features.rows()));
  } else {
    if (features.cols() != input_dim)
      throw ShapeError(fmt::format("model expects {} frequency bins, got {}", input_dim,
                                   features.cols()));
    const std::size_t need = min_rows();
    if (features.rows() < need)
      throw ShapeError(fmt::format("{} frames is shorter than the receptive field ({})",
                                   features.rows(), need));
  }
  const FeatureMatrix &src = features;
  std::optional<FeatureMatrix> normalized;
  if (normalizer) normalized = apply_normalizer(*normalizer, features);
  const FeatureMatrix &m = normalized ? *normalized : src;
  nn::Tensor2D t(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  std::copy(m.data().begin(), m.data().end(), t.data());
  return t;
}

ModelOutput TrainedModel::interpret(const nn::Tensor2D &output) const {
  ModelOutput out;
  if (architecture == Architecture::kLowCapacity) {
    out.utterance = output(0, 0);
    return out;
  }
  out.frames.assign(output.data(), output.data() + output.size());
  out.utterance = std::accumulate(out.frames.begin(), out.frames.end(), 0.0) /
                  static_cast<double>(out.frames.size());
  return out;
}

void TrainedModel::quantize() {
  auto round_tensor = [](nn::Tensor2D &t) {
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<double>(static_cast<float>(t.data()[i]));
  };
  for (std::size_t i = 0; i < net.size(); ++i)
    for (nn::Tensor2D *t : net.tensors_of(i)) round_tensor(*t);
  if (normalizer) {
    for (double &v : normalizer->mean) v = static_cast<double>(static_cast<float>(v));
    for (double &v : normalizer->sd) v = static_cast<double>(static_cast<float>(v));
  }
}

TrainedModel build_low_capacity_cnn(const LowCapacityCNNConfig &cfg,
                                    std::size_t input_dim) {
  cfg.validate();
  TrainedModel m;
  m.architecture = Architecture::kLowCapacity;
  m.config = cfg;
  m.input_dim = input_dim;
  if (cfg.input_batchnorm) m.net.emplace<nn::BatchNorm>(1);
  add_conv_block(m.net, 1, cfg.filters, cfg.kernel, cfg.l2);
  add_conv_block(m.net, cfg.filters, cfg.filters, cfg.kernel, cfg.l2);
  m.net.emplace<nn::MaxPool1D>(cfg.pool);
  add_conv_block(m.net, cfg.filters, cfg.filters, cfg.kernel, cfg.l2);
  add_conv_block(m.net, cfg.filters, cfg.filters, cfg.kernel, cfg.l2);
  m.net.emplace<nn::GlobalAvgPool>();
  m.net.emplace<nn::Dropout>(cfg.dropout_rate, cfg.seed ^ 0x5DEECE66DULL);
  m.net.emplace<nn::Dense>(cfg.filters, 1);
  try {
    m.net.output_shape(input_dim, 1);
  } catch (const ShapeError &e) {
    throw ShapeError(fmt::format("input_dim {} too small for the low-capacity CNN: {}",
                                 input_dim, e.what()));
  }
  initialize_layers(m.net, cfg.seed, cfg.initial_output);
  if (cfg.alpha != 0.0)
    spdlog::warn("alpha={} ignored: the low-capacity CNN has no frame-level term", cfg.alpha);
  return m;
}

TrainedModel build_frame_model(const FrameModelConfig &cfg, std::size_t n_bins) {
  cfg.validate();
  if (n_bins < 1) throw ShapeError("frame model needs at least one frequency bin");
  TrainedModel m;
  m.architecture = Architecture::kFrame;
  m.config = cfg;
  m.input_dim = n_bins;
  add_conv_block(m.net, n_bins, cfg.filters, cfg.kernel, cfg.l2);
  add_conv_block(m.net, cfg.filters, cfg.filters, cfg.kernel, cfg.l2);
  m.net.emplace<nn::MaxPool1D>(cfg.pool);
  add_conv_block(m.net, cfg.filters, cfg.filters, cfg.kernel, cfg.l2);
  add_conv_block(m.net, cfg.filters, cfg.filters, cfg.kernel, cfg.l2);
  m.net.emplace<nn::Dense>(cfg.filters, 1);
  initialize_layers(m.net, cfg.seed, cfg.initial_output);
  return m;
}

double dual_loss(double utt_pred, std::span<const double> frame_preds, double target,
                 double alpha) {
  const double d = utt_pred - target;
  const double utterance_term = d * d;
  if (alpha == 0.0 || frame_preds.empty()) return utterance_term;
  double frame_term = 0.0;
  for (double f : frame_preds) frame_term += (f - target) * (f - target);
  frame_term /= static_cast<double>(frame_preds.size());
  return utterance_term + alpha * frame_term;
}

DualLossGrad dual_loss_grad(double utt_pred, std::span<const double> frame_preds,
                            double target, double alpha) {
  DualLossGrad g;
  g.loss = dual_loss(utt_pred, frame_preds, target, alpha);
  g.d_utterance = 2.0 * (utt_pred - target);
  g.d_frames.assign(frame_preds.size(), 0.0);
  if (alpha != 0.0 && !frame_preds.empty()) {
    const double scale = 2.0 * alpha / static_cast<double>(frame_preds.size());
    for (std::size_t t = 0; t < frame_preds.size(); ++t)
      g.d_frames[t] = scale * (frame_preds[t] - target);
  }
  return g;
}

double batch_loss(const TrainedModel &model, const nn::Batch &outputs,
                  std::span<const double> targets, nn::Batch *grad) {
  if (outputs.size() != targets.size() || outputs.empty())
    throw ShapeError("batch loss: outputs and targets differ in size");
  const double inv_b = 1.0 / static_cast<double>(outputs.size());
  const bool frames = model.architecture == Architecture::kFrame;
  const double alpha = frames ? model.alpha() : 0.0;
  double total = 0.0;
  if (grad) grad->clear();
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    ModelOutput out = model.interpret(outputs[i]);
    DualLossGrad g = dual_loss_grad(out.utterance, out.frames, targets[i], alpha);
    total += g.loss;
    if (!grad) continue;
    nn::Tensor2D d(outputs[i].rows(), outputs[i].cols());
    if (frames) {
      // utterance = mean(frames): each frame also receives d_utt / T.
      const double via_mean = g.d_utterance / static_cast<double>(out.frames.size());
      for (std::size_t t = 0; t < out.frames.size(); ++t)
        d.data()[t] = (via_mean + g.d_frames[t]) * inv_b;
    } else {
      d(0, 0) = g.d_utterance * inv_b;
    }
    grad->push_back(std::move(d));
  }
  return total * inv_b;
}

namespace {

void check_disjoint(std::span<const Example> a, std::span<const Example> b) {
  std::unordered_set<std::string> ids;
  for (const Example &e : a) ids.insert(e.utt_id);
  for (const Example &e : b)
    if (ids.count(e.utt_id))
      throw DataError(fmt::format("utt_id '{}' is in both the train and val sets", e.utt_id));
}

double validation_mse(TrainedModel &model, const std::vector<nn::Tensor2D> &inputs,
                      std::span<const Example> val_set) {
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    nn::Batch out = model.net.forward({inputs[i]}, nn::Mode::kEval);
    const double d = model.interpret(out[0]).utterance - val_set[i].target;
    total += d * d;
  }
  return total / static_cast<double>(inputs.size());
}

}  // namespace

TrainResult train(TrainedModel model, std::span<const Example> train_set,
                  std::span<const Example> val_set, const nn::OptimizerConfig &opt_in,
                  const nn::EarlyStopConfig &stop) {
  if (train_set.empty()) throw DataError("empty training set");
  if (val_set.empty()) throw DataError("empty validation set");
  check_disjoint(train_set, val_set);
  nn::OptimizerConfig opt = opt_in;
  if (const auto *lc = std::get_if<LowCapacityCNNConfig>(&model.config))
    if (lc->learning_rate) opt.learning_rate = *lc->learning_rate;
  opt.validate();
  stop.validate();

  if (model.wants_normalizer()) {
    std::vector<FeatureMatrix> feats;
    feats.reserve(train_set.size());
    for (const Example &e : train_set) feats.push_back(e.features);
    model.normalizer = fit_normalizer(feats);
    model.quantize();
  }

  std::vector<nn::Tensor2D> train_in, val_in;
  train_in.reserve(train_set.size());
  for (const Example &e : train_set) train_in.push_back(model.prepare_input(e.features));
  for (const Example &e : val_set) val_in.push_back(model.prepare_input(e.features));

  std::mt19937_64 rng(model.seed() * 0x9E3779B97F4A7C15ULL + 1);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = model.batch_size();
  std::vector<nn::Param> params = model.net.params();
  nn::AdamState adam;
  std::int64_t step = 0;
  nn::EarlyStopping stopper(stop);

  TrainResult result;
  std::vector<nn::Tensor2D> best = model.net.snapshot();
  while (true) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      nn::Batch inputs;
      std::vector<double> targets;
      for (std::size_t k = start; k < end; ++k) {
        inputs.push_back(train_in[order[k]]);
        targets.push_back(train_set[order[k]].target);
      }
      model.net.zero_grad();
      nn::Batch outputs = model.net.forward(inputs, nn::Mode::kTrain);
      nn::Batch grad;
      double loss = batch_loss(model, outputs, targets, &grad) + model.net.l2_penalty();
      if (!std::isfinite(loss))
        throw DataError(fmt::format("epoch {}: non-finite training loss", stopper.epoch() + 1));
      model.net.backward(grad);
      adam_step(params, adam, opt, ++step);
      loss_sum += loss;
      ++batches;
    }
    const double val = validation_mse(model, val_in, val_set);
    if (!std::isfinite(val))
      throw DataError(fmt::format("epoch {}: non-finite validation MSE", stopper.epoch() + 1));
    const bool improved = stopper.update(val);
    result.history.push_back({stopper.epoch(), loss_sum / static_cast<double>(batches), val});
    spdlog::debug("epoch {} train_loss={:.5f} val_mse={:.5f}{}", stopper.epoch(),
                  result.history.back().train_loss, val, improved ? " *" : "");
    if (improved) best = model.net.snapshot();
    if (stopper.should_stop()) break;
  }
  model.net.restore(best);
  model.quantize();
  result.best_epoch = stopper.best_epoch();
  result.model = std::move(model);
  return result;
}

ModelOutput predict_detailed(const TrainedModel &model, const FeatureMatrix &features) {
  nn::Tensor2D input = model.prepare_input(features);
  nn::Sequential net = model.net;
  nn::Batch out = net.forward({input}, nn::Mode::kEval);
  return model.interpret(out[0]);
}

double predict(const TrainedModel &model, const FeatureMatrix &features) {
  return predict_detailed(model, features).utterance;
}

nn::GradientCheckReport gradient_check(TrainedModel &model,
                                       std::span<const Example> examples, double h) {
  nn::Batch inputs;
  std::vector<double> targets;
  for (const Example &e : examples) {
    inputs.push_back(model.prepare_input(e.features));
    targets.push_back(e.target);
  }
  nn::OutputLoss loss = [&](const nn::Batch &outputs, nn::Batch *grad) {
    return batch_loss(model, outputs, targets, grad);
  };
  return nn::gradient_check(model.net, inputs, loss, h, false);
}

GridSearchResult grid_search(std::span<const LowCapacityCNNConfig> grid,
                             std::span<const Example> train_set,
                             std::span<const Example> val_set,
                             const CorpusManifest &manifest,
                             const nn::OptimizerConfig &opt,
                             const nn::EarlyStopConfig &stop, std::size_t workers) {
  if (grid.empty()) throw DataError("empty hyperparameter grid");
  if (train_set.empty() || val_set.empty()) throw DataError("empty train or val set");
  std::set<std::string> val_speakers;
  for (const Example &e : val_set) {
    const UtteranceRecord *r = manifest.find(e.utt_id);
    if (!r) throw DataError(fmt::format("val utterance '{}' not in the manifest", e.utt_id));
    if (r->mos) val_speakers.insert(r->speaker_id);
  }
  if (val_speakers.size() < 2)
    throw DegenerateError(fmt::format(
        "grid search needs at least 2 labeled validation speakers, found {}",
        val_speakers.size()));
  const std::size_t input_dim = val_set.front().features.rows();

  std::vector<TrainResult> results(grid.size());
  std::vector<LeaderboardEntry> board(grid.size());
  parallel_for(
      grid.size(),
      [&](std::size_t i) {
        LowCapacityCNNConfig cfg = grid[i];
        cfg.seed = grid[i].seed + i;
        TrainedModel model = build_low_capacity_cnn(cfg, input_dim);
        model.scale_min = manifest.scale_min();
        model.scale_max = manifest.scale_max();
        results[i] = train(std::move(model), train_set, val_set, opt, stop);
        PredictionSet preds;
        for (const Example &e : val_set) preds[e.utt_id] = predict(results[i].model, e.features);
        LeaderboardEntry &entry = board[i];
        entry.config_index = i;
        entry.config = cfg;
        entry.val_speaker_srcc = evaluate(preds, manifest, Level::kSpeaker, Split::kVal).srcc;
        entry.val_mse = results[i].history[static_cast<std::size_t>(results[i].best_epoch) - 1].val_mse;
        entry.epochs = static_cast<int>(results[i].history.size());
        entry.best_epoch = results[i].best_epoch;
        spdlog::info("grid config {}: filters={} dropout={} l2={} bn={} batch={} -> "
                     "speaker SRCC {} val MSE {:.4f} ({} epochs)",
                     i, cfg.filters, cfg.dropout_rate, cfg.l2, cfg.input_batchnorm,
                     cfg.batch_size,
                     entry.val_speaker_srcc ? fmt::format("{:.4f}", *entry.val_speaker_srcc)
                                            : "undefined",
                     entry.val_mse, entry.epochs);
      },
      workers);

  std::stable_sort(board.begin(), board.end(),
                   [](const LeaderboardEntry &a, const LeaderboardEntry &b) {
                     // Undefined SRCC ranks below every defined value.
                     if (a.val_speaker_srcc.has_value() != b.val_speaker_srcc.has_value())
                       return a.val_speaker_srcc.has_value();
                     if (a.val_speaker_srcc && *a.val_speaker_srcc != *b.val_speaker_srcc)
                       return *a.val_speaker_srcc > *b.val_speaker_srcc;
                     if (a.val_mse != b.val_mse) return a.val_mse < b.val_mse;
                     return a.config_index < b.config_index;
                   });
  GridSearchResult out;
  out.best = std::move(results[board.front().config_index].model);
  out.leaderboard = std::move(board);
  return out;
}

std::string format_leaderboard_csv(std::span<const LeaderboardEntry> leaderboard) {
  std::string out =
      "rank,config_index,filters,dropout_rate,l2,input_batchnorm,batch_size,learning_rate,"
      "seed,val_speaker_srcc,val_mse,epochs,best_epoch\n";
  for (std::size_t r = 0; r < leaderboard.size(); ++r) {
    const LeaderboardEntry &e = leaderboard[r];
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r + 1, e.config_index,
                       e.config.filters, e.config.dropout_rate, e.config.l2,
                       e.config.input_batchnorm ? "true" : "false", e.config.batch_size,
                       e.config.learning_rate ? fmt::format("{}", *e.config.learning_rate) : "",
                       e.config.seed,
                       e.val_speaker_srcc ? fmt::format("{}", *e.val_speaker_srcc) : "",
                       e.val_mse, e.epochs, e.best_epoch);
  }
  return out;
}

}  // namespace moscope
