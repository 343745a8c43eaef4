// models_test.cc

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "moscope/error.h"
#include "moscope/models.h"
#include "test_util.h"

namespace moscope {
namespace {

// Embedding whose level tracks the target, plus noise.
std::vector<Example> embedding_set(std::size_t n, std::size_t dim, std::uint64_t seed,
                                   const std::string &prefix, double constant_target = -1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = constant_target > 0 ? constant_target : u(rng);
    std::vector<double> v(dim);
    for (std::size_t d = 0; d < dim; ++d)
      v[d] = y * std::sin(0.1 * double(d) + 1.0) + g(rng);
    out.push_back({prefix + std::to_string(i), FeatureMatrix::embedding(v), y});
  }
  return out;
}

std::vector<Example> spectrogram_set(std::size_t n, std::size_t frames, std::size_t bins,
                                     std::uint64_t seed, const std::string &prefix) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  std::normal_distribution<double> g(0.0, 0.2);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = u(rng);
    std::vector<double> v(frames * bins);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = 0.1 * y * double(k % bins + 1) / double(bins) + g(rng);
    out.push_back({prefix + std::to_string(i),
                   FeatureMatrix(FeatureKind::kSpectrogram, frames, bins, v), y});
  }
  return out;
}

LowCapacityCNNConfig small_cnn() {
  LowCapacityCNNConfig c;
  c.filters = 4;
  c.initial_output = 5.5;
  return c;
}

TEST(BuildLowCapacity, ShapeChain) {
  TrainedModel m = build_low_capacity_cnn(LowCapacityCNNConfig{}, 512);
  EXPECT_EQ(m.net.output_shape(512, 1), (std::pair<std::size_t, std::size_t>{1, 1}));
  // The dense head sees the 16 pooled channels.
  auto params = m.net.params();
  EXPECT_EQ(params[params.size() - 2].value->cols(), 16);
  EXPECT_THROW(build_low_capacity_cnn(LowCapacityCNNConfig{}, 20), ShapeError);
  EXPECT_THROW(build_low_capacity_cnn(LowCapacityCNNConfig{}, 74), ShapeError);
  EXPECT_NO_THROW(build_low_capacity_cnn(LowCapacityCNNConfig{}, 75));
  EXPECT_EQ(m.input_kind(), FeatureKind::kEmbedding);
}

TEST(BuildLowCapacity, BestReportedConfigIsTheDefault) {
  LowCapacityCNNConfig c;
  EXPECT_EQ(c.batch_size, 1u);
  EXPECT_EQ(c.filters, 16u);
  EXPECT_DOUBLE_EQ(c.dropout_rate, 0.2);
  EXPECT_DOUBLE_EQ(c.l2, 0.0001);
  EXPECT_FALSE(c.input_batchnorm);
  EXPECT_EQ(c.kernel, 10u);
  EXPECT_EQ(c.pool, 3u);
}

TEST(BuildLowCapacity, OptionalInputBatchNorm) {
  LowCapacityCNNConfig c;
  const std::size_t plain = build_low_capacity_cnn(c, 100).net.size();
  c.input_batchnorm = true;
  TrainedModel m = build_low_capacity_cnn(c, 100);
  EXPECT_EQ(m.net.size(), plain + 1);
  EXPECT_NE(dynamic_cast<nn::BatchNorm *>(&m.net.layer(0)), nullptr);
}

TEST(BuildLowCapacity, InitialOutputSetsBiasAndSeedFixesWeights) {
  LowCapacityCNNConfig c = small_cnn();
  TrainedModel a = build_low_capacity_cnn(c, 80), b = build_low_capacity_cnn(c, 80);
  EXPECT_EQ(a.net.snapshot(), b.net.snapshot());
  auto params = a.net.params();
  EXPECT_EQ((*params.back().value)(0, 0), 5.5);
  c.seed = 8;
  EXPECT_NE(build_low_capacity_cnn(c, 80).net.snapshot(), a.net.snapshot());
}

TEST(BuildLowCapacity, ConfigValidation) {
  LowCapacityCNNConfig c;
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), DataError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), DataError);
  FrameModelConfig f;
  f.alpha = 1.5;
  EXPECT_THROW(f.validate(), DataError);
}

TEST(FrameModel, MinimumFramesAndUtteranceMean) {
  TrainedModel m = build_frame_model(FrameModelConfig{}, 257);
  EXPECT_EQ(m.min_rows(), 75u);
  EXPECT_EQ(m.input_kind(), FeatureKind::kSpectrogram);
  ModelOutput out = m.interpret((nn::Tensor2D(3, 1) << 1.0, 2.0, 6.0).finished());
  EXPECT_DOUBLE_EQ(out.utterance, 3.0);
  ModelOutput flat = m.interpret(nn::Tensor2D::Constant(4, 1, 2.5));
  EXPECT_EQ(flat.utterance, 2.5);

  std::vector<double> v(74 * 257, 0.1);
  EXPECT_THROW(predict(m, FeatureMatrix(FeatureKind::kSpectrogram, 74, 257, v)), ShapeError);
}

TEST(FrameModel, ZeroHeadPredictsBias) {
  FrameModelConfig c;
  c.filters = 4;
  TrainedModel m = build_frame_model(c, 20);
  auto params = m.net.params();
  params[params.size() - 2].value->setZero();
  params.back().value->setConstant(3.0);
  auto data = spectrogram_set(2, 90, 20, 1, "u");
  ModelOutput out = predict_detailed(m, data[0].features);
  EXPECT_EQ(out.frames.size(), ((90u - 18u) / 3u) - 18u);
  for (double f : out.frames) EXPECT_EQ(f, 3.0);
  EXPECT_EQ(predict(m, data[1].features), 3.0);
}

TEST(LowCapacity, ZeroHeadPredictsBias) {
  TrainedModel m = build_low_capacity_cnn(small_cnn(), 80);
  auto params = m.net.params();
  params[params.size() - 2].value->setZero();
  params.back().value->setConstant(3.0);
  for (const Example &e : embedding_set(3, 80, 2, "u")) EXPECT_EQ(predict(m, e.features), 3.0);
}

TEST(Predict, DeterministicAndKindChecked) {
  TrainedModel m = build_low_capacity_cnn(small_cnn(), 80);
  auto data = embedding_set(1, 80, 3, "u");
  EXPECT_EQ(predict(m, data[0].features), predict(m, data[0].features));
  EXPECT_THROW(predict(m, FeatureMatrix(FeatureKind::kSpectrogram, 80, 1, std::vector<double>(80))),
               ShapeError);
  EXPECT_THROW(predict(m, FeatureMatrix::embedding(std::vector<double>(81))), ShapeError);
  TrainedModel f = build_frame_model(FrameModelConfig{}, 30);
  EXPECT_THROW(predict(f, data[0].features), ShapeError);
}

// ---- loss ---------------------------------------------------------------------

TEST(DualLoss, HandValues) {
  const std::vector<double> same{5, 5};
  for (double a : {0.0, 0.5, 1.0}) EXPECT_EQ(dual_loss(5, same, 5, a), 0.0);
  const std::vector<double> frames{3, 5};
  EXPECT_EQ(dual_loss(4, frames, 5, 0.0), 1.0);
  EXPECT_EQ(dual_loss(4, frames, 5, 1.0), 3.0);
  EXPECT_EQ(dual_loss(4, {}, 5, 1.0), 1.0);
}

TEST(DualLoss, AlphaZeroIsBitwiseSquaredError) {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const double utt = u(rng), target = u(rng);
    std::vector<double> frames(1 + rng() % 5);
    for (double &f : frames) f = u(rng);
    const double d = utt - target;
    EXPECT_EQ(dual_loss(utt, frames, target, 0.0), d * d);
  }
}

TEST(DualLoss, NonDecreasingInAlpha) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> frames(1 + rng() % 6);
    for (double &f : frames) f = u(rng);
    const double utt = u(rng), target = u(rng);
    const double l0 = dual_loss(utt, frames, target, 0.0),
                 l5 = dual_loss(utt, frames, target, 0.5),
                 l1 = dual_loss(utt, frames, target, 1.0);
    EXPECT_GE(l0, 0.0);
    EXPECT_LE(l0, l5);
    EXPECT_LE(l5, l1);
  }
}

TEST(DualLoss, GradientMatchesFiniteDifferences) {
  const std::vector<double> frames{3.0, 5.5, 4.2};
  const double alpha = 0.5, target = 4.0, utt = 3.7, h = 1e-6;
  DualLossGrad g = dual_loss_grad(utt, frames, target, alpha);
  EXPECT_EQ(g.loss, dual_loss(utt, frames, target, alpha));
  EXPECT_NEAR(g.d_utterance,
              (dual_loss(utt + h, frames, target, alpha) - dual_loss(utt - h, frames, target, alpha)) / (2 * h),
              1e-8);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    std::vector<double> up = frames, down = frames;
    up[t] += h;
    down[t] -= h;
    EXPECT_NEAR(g.d_frames[t],
                (dual_loss(utt, up, target, alpha) - dual_loss(utt, down, target, alpha)) / (2 * h),
                1e-8);
  }
}

TEST(GradientCheck, FullLowCapacityModel) {
  LowCapacityCNNConfig c = small_cnn();
  c.input_batchnorm = true;
  c.l2 = 0.01;
  TrainedModel m = build_low_capacity_cnn(c, 78);
  std::mt19937_64 rng(40);
  testing::jitter_biases(m.net, rng);
  auto data = embedding_set(3, 78, 4, "u");
  // Move batchnorm running stats off their defaults.
  m.net.forward({m.prepare_input(data[0].features)}, nn::Mode::kTrain);
  EXPECT_LT(gradient_check(m, data).max_rel_error, 1e-5);
}

TEST(GradientCheck, FullFrameModel) {
  FrameModelConfig c;
  c.filters = 3;
  c.alpha = 0.5;
  c.l2 = 0.001;
  TrainedModel m = build_frame_model(c, 6);
  std::mt19937_64 rng(41);
  testing::jitter_biases(m.net, rng);
  auto data = spectrogram_set(2, 80, 6, 5, "u");
  EXPECT_LT(gradient_check(m, data).max_rel_error, 1e-5);
}

// ---- training -------------------------------------------------------------------

nn::EarlyStopConfig epochs(int n, int patience = 10) { return {patience, n, 0.0}; }

TEST(Train, ZeroLearningRateKeepsWeights) {
  LowCapacityCNNConfig c = small_cnn();
  c.normalize = false;
  TrainedModel m = build_low_capacity_cnn(c, 80);
  TrainedModel initial = m;
  initial.quantize();
  nn::OptimizerConfig opt;
  opt.learning_rate = 0.0;
  TrainResult r = train(m, embedding_set(8, 80, 6, "t"), embedding_set(4, 80, 7, "v"), opt,
                        epochs(1));
  EXPECT_EQ(r.model.net.snapshot(), initial.net.snapshot());
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(Train, ConstantTargetConverges) {
  LowCapacityCNNConfig c = small_cnn();
  c.initial_output = 1.0;
  nn::OptimizerConfig opt;
  opt.learning_rate = 0.01;
  auto tr = embedding_set(30, 80, 8, "t", 5.0), va = embedding_set(10, 80, 9, "v", 5.0);
  TrainResult r = train(build_low_capacity_cnn(c, 80), tr, va, opt, epochs(30));
  for (const Example &e : tr) EXPECT_NEAR(predict(r.model, e.features), 5.0, 0.5);
}

TEST(Train, LearnsAndReturnsBestEpoch) {
  LowCapacityCNNConfig c = small_cnn();
  nn::OptimizerConfig opt;
  opt.learning_rate = 0.003;
  auto tr = embedding_set(60, 80, 10, "t"), va = embedding_set(20, 80, 11, "v");
  TrainResult r = train(build_low_capacity_cnn(c, 80), tr, va, opt, epochs(40, 5));
  ASSERT_GE(r.best_epoch, 1);
  const double best = r.history[static_cast<std::size_t>(r.best_epoch) - 1].val_mse;
  for (const EpochRecord &e : r.history) EXPECT_GE(e.val_mse, best);
  double mse = 0.0;
  for (const Example &e : va) mse += std::pow(predict(r.model, e.features) - e.target, 2);
  mse /= double(va.size());
  EXPECT_NEAR(mse, best, 1e-3 * (1.0 + best));
  EXPECT_LT(best, r.history.front().val_mse);
}

TEST(Train, BitDeterministic) {
  FrameModelConfig c;
  c.filters = 3;
  c.initial_output = 5.5;
  auto tr = spectrogram_set(6, 80, 8, 12, "t"), va = spectrogram_set(3, 80, 8, 13, "v");
  nn::OptimizerConfig opt;
  opt.learning_rate = 0.001;
  TrainResult a = train(build_frame_model(c, 8), tr, va, opt, epochs(3));
  TrainResult b = train(build_frame_model(c, 8), tr, va, opt, epochs(3));
  EXPECT_EQ(a.model.net.snapshot(), b.model.net.snapshot());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
}

TEST(Train, Errors) {
  TrainedModel m = build_low_capacity_cnn(small_cnn(), 80);
  auto tr = embedding_set(4, 80, 14, "t");
  EXPECT_THROW(train(m, {}, tr, nn::OptimizerConfig{}, epochs(1)), DataError);
  EXPECT_THROW(train(m, tr, {}, nn::OptimizerConfig{}, epochs(1)), DataError);
  EXPECT_THROW(train(m, tr, tr, nn::OptimizerConfig{}, epochs(1)), DataError);
  auto bad = embedding_set(2, 80, 15, "v");
  std::vector<double> v(80, 1.0);
  v[0] = 1e300;
  bad[0].features = FeatureMatrix::embedding(v);
  LowCapacityCNNConfig c = small_cnn();
  c.normalize = false;
  EXPECT_THROW(train(build_low_capacity_cnn(c, 80), tr, bad, nn::OptimizerConfig{}, epochs(2)),
               DataError);
}

TEST(Train, NormalizerFittedOnTrainingData) {
  auto tr = embedding_set(10, 80, 16, "t"), va = embedding_set(4, 80, 17, "v");
  nn::OptimizerConfig opt;
  TrainResult r = train(build_low_capacity_cnn(small_cnn(), 80), tr, va, opt, epochs(1));
  ASSERT_TRUE(r.model.normalizer.has_value());
  std::vector<FeatureMatrix> feats;
  for (const Example &e : tr) feats.push_back(e.features);
  Normalizer n = fit_normalizer(feats);
  for (std::size_t i = 0; i < n.mean.size(); ++i)
    EXPECT_EQ(r.model.normalizer->mean[i], static_cast<double>(static_cast<float>(n.mean[i])));
}

// ---- grid search ---------------------------------------------------------------

CorpusManifest manifest_for(const std::vector<Example> &tr, const std::vector<Example> &va,
                            std::size_t val_speakers) {
  std::vector<UtteranceRecord> recs;
  for (const Example &e : tr) recs.push_back({e.utt_id, "train_spk", "s", e.target, Split::kTrain, "x"});
  for (std::size_t i = 0; i < va.size(); ++i)
    recs.push_back({va[i].utt_id, "spk" + std::to_string(i % val_speakers), "s", va[i].target,
                    Split::kVal, "x"});
  return CorpusManifest(recs);
}

TEST(GridSearch, ContractOnSmallGrid) {
  auto tr = embedding_set(40, 80, 18, "t"), va = embedding_set(24, 80, 19, "v");
  // Speaker i%6 gets a distinct mean target so speaker SRCC is informative.
  for (std::size_t i = 0; i < va.size(); ++i) {
    va[i] = embedding_set(1, 80, 100 + i, "v", 2.0 + double(i % 6))[0];
    va[i].utt_id = "v" + std::to_string(i);
  }
  CorpusManifest m = manifest_for(tr, va, 6);
  LowCapacityCNNConfig learn = small_cnn(), frozen = small_cnn();
  learn.learning_rate = 0.003;
  frozen.learning_rate = 0.0;
  std::vector<LowCapacityCNNConfig> grid{frozen, learn};
  GridSearchResult r = grid_search(grid, tr, va, m, nn::OptimizerConfig{}, epochs(15, 5), 2);
  ASSERT_EQ(r.leaderboard.size(), 2u);
  EXPECT_EQ(r.leaderboard.front().config_index, 1u);
  EXPECT_EQ(r.leaderboard.front().config.seed, learn.seed + 1);
  ASSERT_TRUE(r.leaderboard.front().val_speaker_srcc.has_value());
  for (std::size_t i = 1; i < r.leaderboard.size(); ++i) {
    if (r.leaderboard[i].val_speaker_srcc) {
      EXPECT_GE(*r.leaderboard[i - 1].val_speaker_srcc, *r.leaderboard[i].val_speaker_srcc);
    }
  }
  const std::string csv = format_leaderboard_csv(r.leaderboard);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "rank,config_index,filters,dropout_rate,l2,input_batchnorm,batch_size,learning_rate,"
            "seed,val_speaker_srcc,val_mse,epochs,best_epoch");

  GridSearchResult single = grid_search(std::vector<LowCapacityCNNConfig>{learn}, tr, va, m,
                                        nn::OptimizerConfig{}, epochs(2), 1);
  EXPECT_EQ(single.leaderboard.size(), 1u);
  EXPECT_EQ(single.leaderboard[0].config_index, 0u);
}

TEST(GridSearch, NeedsTwoValidationSpeakers) {
  auto tr = embedding_set(6, 80, 20, "t"), va = embedding_set(4, 80, 21, "v");
  CorpusManifest m = manifest_for(tr, va, 1);
  EXPECT_THROW(grid_search(std::vector<LowCapacityCNNConfig>{small_cnn()}, tr, va, m,
                           nn::OptimizerConfig{}, epochs(1)),
               DegenerateError);
  EXPECT_THROW(grid_search({}, tr, va, m, nn::OptimizerConfig{}, epochs(1)), DataError);
}

}  // namespace
}  // namespace moscope
