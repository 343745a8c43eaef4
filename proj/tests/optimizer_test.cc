// optimizer_test.cc

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "moscope/error.h"
#include "moscope/nn/adam.h"

namespace moscope::nn {
namespace {

struct Slot {
  Tensor2D w, g;
  std::vector<Param> params() { return {{"w", &w, &g}}; }
};

Slot make(std::initializer_list<double> w, std::initializer_list<double> g) {
  Slot s;
  s.w.resize(1, static_cast<Eigen::Index>(w.size()));
  s.g.resize(1, static_cast<Eigen::Index>(g.size()));
  Eigen::Index i = 0;
  for (double v : w) s.w(0, i++) = v;
  i = 0;
  for (double v : g) s.g(0, i++) = v;
  return s;
}

TEST(Adam, ZeroGradientFirstStepLeavesParameters) {
  Slot s = make({1.0, -2.0}, {0.0, 0.0});
  AdamState st;
  adam_step(s.params(), st, OptimizerConfig{}, 1);
  EXPECT_EQ(s.w(0, 0), 1.0);
  EXPECT_EQ(s.w(0, 1), -2.0);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  OptimizerConfig cfg;
  for (double g : {3.0, -0.25, 1e-3}) {
    Slot s = make({0.5}, {g});
    AdamState st;
    adam_step(s.params(), st, cfg, 1);
    const double expect = 0.5 - cfg.learning_rate * g / (std::abs(g) + cfg.epsilon);
    EXPECT_NEAR(s.w(0, 0), expect, 1e-15);
    EXPECT_NEAR(s.w(0, 0) - 0.5, -cfg.learning_rate * (g > 0 ? 1 : -1), 1e-8);
  }
}

TEST(Adam, MomentumDecaysAfterGradientStops) {
  Slot s = make({0.0}, {1.0});
  AdamState st;
  OptimizerConfig cfg;
  adam_step(s.params(), st, cfg, 1);
  s.g(0, 0) = 0.0;
  double prev = s.w(0, 0);
  double last_delta = std::numeric_limits<double>::infinity();
  for (int t = 2; t <= 3; ++t) {
    adam_step(s.params(), st, cfg, t);
    const double delta = std::abs(s.w(0, 0) - prev);
    EXPECT_GT(delta, 0.0);
    EXPECT_LT(delta, last_delta);
    last_delta = delta;
    prev = s.w(0, 0);
  }
}

TEST(Adam, MatchesHandRolledUpdate) {
  Slot s = make({0.3, -0.7}, {0.0, 0.0});
  AdamState st;
  OptimizerConfig cfg;
  cfg.learning_rate = 0.01;
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {0.3, -0.7};
  const double grads[3][2] = {{0.5, -1.0}, {0.2, 0.1}, {-0.4, 0.3}};
  for (int t = 1; t <= 3; ++t) {
    for (int i = 0; i < 2; ++i) {
      s.g(0, i) = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam_step(s.params(), st, cfg, t);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(s.w(0, i), w[i], 1e-14);
  }
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdate) {
  Slot s = make({1.0, 2.0}, {0.5, std::numeric_limits<double>::quiet_NaN()});
  AdamState st;
  EXPECT_THROW(adam_step(s.params(), st, OptimizerConfig{}, 1), DataError);
  EXPECT_EQ(s.w(0, 0), 1.0);
  EXPECT_EQ(s.w(0, 1), 2.0);
}

TEST(Adam, ZeroLearningRateFreezes) {
  Slot s = make({1.0}, {5.0});
  AdamState st;
  OptimizerConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_NO_THROW(cfg.validate());
  adam_step(s.params(), st, cfg, 1);
  EXPECT_EQ(s.w(0, 0), 1.0);
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig c;
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), DataError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), DataError);
  c = {};
  c.epsilon = 0;
  EXPECT_THROW(c.validate(), DataError);
  EarlyStopConfig e;
  e.patience = 0;
  EXPECT_THROW(e.validate(), DataError);
  e = {};
  e.max_epochs = 0;
  EXPECT_THROW(e.validate(), DataError);
}

TEST(EarlyStopping, IncreasingLossStopsAfterPatience) {
  EarlyStopping es({3, 200, 0.0});
  EXPECT_TRUE(es.update(1.0));
  EXPECT_FALSE(es.should_stop());
  EXPECT_FALSE(es.update(1.1));
  EXPECT_FALSE(es.update(1.2));
  EXPECT_FALSE(es.should_stop());
  EXPECT_FALSE(es.update(1.3));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.epoch(), 4);
  EXPECT_EQ(es.best_epoch(), 1);
  EXPECT_EQ(es.best_loss(), 1.0);
}

TEST(EarlyStopping, MinDeltaAndMaxEpochs) {
  EarlyStopping es({2, 200, 0.1});
  es.update(1.0);
  EXPECT_FALSE(es.update(0.95));  // not better by more than min_delta
  EXPECT_TRUE(es.update(0.85));
  EXPECT_EQ(es.best_epoch(), 3);
  EarlyStopping capped({10, 2, 0.0});
  capped.update(3.0);
  EXPECT_FALSE(capped.should_stop());
  capped.update(2.0);
  EXPECT_TRUE(capped.should_stop());
}

}  // namespace
}  // namespace moscope::nn
