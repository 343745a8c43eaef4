// nn/layers.cc

#include "moscope/nn/layers.h"

#include <cmath>

#include <fmt/format.h>

#include "moscope/error.h"

namespace moscope::nn {

namespace {

using StridedConstMap = Eigen::Map<const Tensor2D, 0, Eigen::OuterStride<>>;

// Uniform in [-limit, limit) from raw engine output, so initial weights do
// not depend on the standard library's distribution implementation.
double uniform_symmetric(std::mt19937_64 &rng, double limit) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * limit;
}

void glorot_fill(Tensor2D &w, std::size_t fan_in, std::size_t fan_out,
                 std::mt19937_64 &rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform_symmetric(rng, limit);
}

// Row window view: row t covers x rows t .. t+kernel-1 laid end to end.
StridedConstMap windows(const Tensor2D &x, std::size_t kernel) {
  const Eigen::Index c = x.cols();
  const Eigen::Index rows = x.rows() - static_cast<Eigen::Index>(kernel) + 1;
  return StridedConstMap(x.data(), rows, c * static_cast<Eigen::Index>(kernel),
                         Eigen::OuterStride<>(c));
}

void check_batch_sizes(const Batch &a, std::size_t expected, const char *layer) {
  if (a.size() != expected)
    throw ShapeError(fmt::format("{}: backward batch of {} after forward of {}",
                                 layer, a.size(), expected));
}

}  // namespace

// ---- free functions -------------------------------------------------------

Tensor2D conv1d_forward(const Tensor2D &x, const Tensor2D &weights,
                        const Tensor2D &bias, std::size_t kernel) {
  if (kernel == 0) throw ShapeError("conv1d: kernel must be at least 1");
  if (static_cast<std::size_t>(x.rows()) < kernel)
    throw ShapeError(fmt::format("conv1d: input length {} shorter than kernel {}",
                                 x.rows(), kernel));
  if (weights.cols() != x.cols() * static_cast<Eigen::Index>(kernel))
    throw ShapeError(fmt::format("conv1d: weights have {} columns, expected {} x {}",
                                 weights.cols(), kernel, x.cols()));
  if (bias.rows() != 1 || bias.cols() != weights.rows())
    throw ShapeError("conv1d: bias shape does not match filter count");
  Tensor2D out = windows(x, kernel) * weights.transpose();
  out.rowwise() += bias.row(0);
  return out;
}

Conv1DGrads conv1d_backward(const Tensor2D &x, const Tensor2D &weights,
                            std::size_t kernel, const Tensor2D &grad_out,
                            double l2, bool need_input_grad) {
  const Eigen::Index out_rows = x.rows() - static_cast<Eigen::Index>(kernel) + 1;
  if (grad_out.rows() != out_rows || grad_out.cols() != weights.rows())
    throw ShapeError(fmt::format("conv1d backward: upstream {}x{}, expected {}x{}",
                                 grad_out.rows(), grad_out.cols(), out_rows,
                                 weights.rows()));
  Conv1DGrads g;
  g.weights = grad_out.transpose() * windows(x, kernel);
  if (l2 != 0.0) g.weights += (2.0 * l2) * weights;
  g.bias = grad_out.colwise().sum();
  if (need_input_grad) {
    const Eigen::Index c = x.cols();
    const Eigen::Index span = c * static_cast<Eigen::Index>(kernel);
    Tensor2D window_grad = grad_out * weights;
    g.input = Tensor2D::Zero(x.rows(), c);
    for (Eigen::Index t = 0; t < out_rows; ++t) {
      Eigen::Map<Eigen::RowVectorXd>(g.input.data() + t * c, span) += window_grad.row(t);
    }
  }
  return g;
}

MaxPoolResult maxpool1d_forward(const Tensor2D &x, std::size_t pool) {
  if (pool == 0) throw ShapeError("maxpool: pool must be at least 1");
  const auto t_in = static_cast<std::size_t>(x.rows());
  if (t_in < pool)
    throw ShapeError(fmt::format("maxpool: input length {} shorter than pool {}", t_in, pool));
  const std::size_t t_out = t_in / pool;
  MaxPoolResult r;
  r.out.resize(static_cast<Eigen::Index>(t_out), x.cols());
  r.argmax.resize(t_out * static_cast<std::size_t>(x.cols()));
  for (std::size_t t = 0; t < t_out; ++t) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      std::size_t best = t * pool;
      double best_v = x(static_cast<Eigen::Index>(best), c);
      for (std::size_t j = 1; j < pool; ++j) {
        double v = x(static_cast<Eigen::Index>(t * pool + j), c);
        if (v > best_v) {
          best_v = v;
          best = t * pool + j;
        }
      }
      r.out(static_cast<Eigen::Index>(t), c) = best_v;
      r.argmax[t * static_cast<std::size_t>(x.cols()) + static_cast<std::size_t>(c)] = best;
    }
  }
  return r;
}

Tensor2D maxpool1d_backward(const Tensor2D &grad_out,
                            const std::vector<std::size_t> &argmax,
                            std::size_t in_rows) {
  if (argmax.size() != static_cast<std::size_t>(grad_out.size()))
    throw ShapeError("maxpool backward: upstream shape does not match forward");
  Tensor2D g = Tensor2D::Zero(static_cast<Eigen::Index>(in_rows), grad_out.cols());
  const auto cols = static_cast<std::size_t>(grad_out.cols());
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    const std::size_t c = i % cols;
    g(static_cast<Eigen::Index>(argmax[i]), static_cast<Eigen::Index>(c)) +=
        grad_out.data()[i];
  }
  return g;
}

Tensor2D global_avg_pool_forward(const Tensor2D &x) {
  if (x.rows() < 1) throw ShapeError("global average pool over empty input");
  return x.colwise().mean();
}

Tensor2D global_avg_pool_backward(const Tensor2D &grad_out, std::size_t in_rows) {
  if (grad_out.rows() != 1) throw ShapeError("global average pool backward expects 1 row");
  Tensor2D g(static_cast<Eigen::Index>(in_rows), grad_out.cols());
  g.rowwise() = grad_out.row(0) / static_cast<double>(in_rows);
  return g;
}

Tensor2D dense_forward(const Tensor2D &x, const Tensor2D &weights,
                       const Tensor2D &bias) {
  if (x.cols() != weights.cols())
    throw ShapeError(fmt::format("dense: input has {} features, weights expect {}",
                                 x.cols(), weights.cols()));
  if (bias.rows() != 1 || bias.cols() != weights.rows())
    throw ShapeError("dense: bias shape does not match unit count");
  Tensor2D out = x * weights.transpose();
  out.rowwise() += bias.row(0);
  return out;
}

Tensor2D relu(const Tensor2D &x) { return x.cwiseMax(0.0); }

Tensor2D dropout(const Tensor2D &x, double rate, std::mt19937_64 &rng, Mode mode,
                 Tensor2D *mask) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw DataError(fmt::format("dropout rate {} outside [0, 1)", rate));
  if (mode == Mode::kEval || rate == 0.0) {
    if (mask) *mask = Tensor2D::Ones(x.rows(), x.cols());
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor2D m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m.data()[i] = u < rate ? 0.0 : keep_scale;
  }
  Tensor2D out = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return out;
}

// ---- Layer ----------------------------------------------------------------

void Layer::zero_grad() {
  for (Param &p : params()) p.grad->setZero();
}

Conv1D::Conv1D(std::size_t in_channels, std::size_t filters, std::size_t kernel,
               double l2)
    : in_channels_(in_channels), filters_(filters), kernel_(kernel), l2_(l2) {
  if (in_channels < 1 || filters < 1 || kernel < 1)
    throw ShapeError("Conv1D needs channels, filters and kernel >= 1");
  if (l2 < 0.0) throw DataError("Conv1D l2 must be non-negative");
  const auto f = static_cast<Eigen::Index>(filters);
  const auto span = static_cast<Eigen::Index>(kernel * in_channels);
  weights_ = Tensor2D::Zero(f, span);
  weight_grad_ = Tensor2D::Zero(f, span);
  bias_ = Tensor2D::Zero(1, f);
  bias_grad_ = Tensor2D::Zero(1, f);
}

void Conv1D::initialize(std::mt19937_64 &rng) {
  glorot_fill(weights_, kernel_ * in_channels_, kernel_ * filters_, rng);
  bias_.setZero();
}

std::string Conv1D::describe() const {
  return fmt::format("Conv1D(filters={}, kernel={}, in={}, l2={})", filters_,
                     kernel_, in_channels_, l2_);
}

Batch Conv1D::forward(const Batch &in, Mode) {
  cached_in_ = in;
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) out.push_back(conv1d_forward(x, weights_, bias_, kernel_));
  return out;
}

Batch Conv1D::backward(const Batch &grad_out, bool need_input_grad) {
  check_batch_sizes(grad_out, cached_in_.size(), "Conv1D");
  Batch grad_in;
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    Conv1DGrads g = conv1d_backward(cached_in_[i], weights_, kernel_, grad_out[i],
                                    0.0, need_input_grad);
    weight_grad_ += g.weights;
    bias_grad_ += g.bias;
    if (need_input_grad) grad_in.push_back(std::move(g.input));
  }
  if (l2_ != 0.0) weight_grad_ += (2.0 * l2_) * weights_;
  return grad_in;
}

std::vector<Param> Conv1D::params() {
  return {{"weights", &weights_, &weight_grad_}, {"bias", &bias_, &bias_grad_}};
}

double Conv1D::l2_penalty() const { return l2_ * weights_.squaredNorm(); }

std::unique_ptr<Layer> Conv1D::clone() const { return std::make_unique<Conv1D>(*this); }

std::size_t Conv1D::output_rows(std::size_t in_rows) const {
  if (in_rows < kernel_)
    throw ShapeError(fmt::format("Conv1D(kernel={}) cannot take input length {}",
                                 kernel_, in_rows));
  return in_rows - kernel_ + 1;
}

std::size_t Conv1D::output_cols(std::size_t in_cols) const {
  if (in_cols != in_channels_)
    throw ShapeError(fmt::format("Conv1D expects {} channels, got {}", in_channels_, in_cols));
  return filters_;
}

MaxPool1D::MaxPool1D(std::size_t pool) : pool_(pool) {
  if (pool < 1) throw ShapeError("MaxPool1D pool must be at least 1");
}

std::string MaxPool1D::describe() const { return fmt::format("MaxPool1D(pool={})", pool_); }

Batch MaxPool1D::forward(const Batch &in, Mode) {
  argmax_.clear();
  in_rows_.clear();
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) {
    MaxPoolResult r = maxpool1d_forward(x, pool_);
    out.push_back(std::move(r.out));
    argmax_.push_back(std::move(r.argmax));
    in_rows_.push_back(static_cast<std::size_t>(x.rows()));
  }
  return out;
}

Batch MaxPool1D::backward(const Batch &grad_out, bool need_input_grad) {
  check_batch_sizes(grad_out, argmax_.size(), "MaxPool1D");
  Batch grad_in;
  if (!need_input_grad) return grad_in;
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_in.push_back(maxpool1d_backward(grad_out[i], argmax_[i], in_rows_[i]));
  return grad_in;
}

std::unique_ptr<Layer> MaxPool1D::clone() const { return std::make_unique<MaxPool1D>(*this); }

std::size_t MaxPool1D::output_rows(std::size_t in_rows) const {
  if (in_rows < pool_)
    throw ShapeError(fmt::format("MaxPool1D(pool={}) cannot take input length {}",
                                 pool_, in_rows));
  return in_rows / pool_;
}

Batch GlobalAvgPool::forward(const Batch &in, Mode) {
  in_rows_.clear();
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) {
    out.push_back(global_avg_pool_forward(x));
    in_rows_.push_back(static_cast<std::size_t>(x.rows()));
  }
  return out;
}

Batch GlobalAvgPool::backward(const Batch &grad_out, bool need_input_grad) {
  check_batch_sizes(grad_out, in_rows_.size(), "GlobalAvgPool");
  Batch grad_in;
  if (!need_input_grad) return grad_in;
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_in.push_back(global_avg_pool_backward(grad_out[i], in_rows_[i]));
  return grad_in;
}

std::unique_ptr<Layer> GlobalAvgPool::clone() const {
  return std::make_unique<GlobalAvgPool>(*this);
}

std::size_t GlobalAvgPool::output_rows(std::size_t in_rows) const {
  if (in_rows < 1) throw ShapeError("GlobalAvgPool over empty input");
  return 1;
}

Dense::Dense(std::size_t in_features, std::size_t units, double l2)
    : in_features_(in_features), units_(units), l2_(l2) {
  if (in_features < 1 || units < 1) throw ShapeError("Dense needs in/units >= 1");
  if (l2 < 0.0) throw DataError("Dense l2 must be non-negative");
  const auto m = static_cast<Eigen::Index>(units);
  const auto n = static_cast<Eigen::Index>(in_features);
  weights_ = Tensor2D::Zero(m, n);
  weight_grad_ = Tensor2D::Zero(m, n);
  bias_ = Tensor2D::Zero(1, m);
  bias_grad_ = Tensor2D::Zero(1, m);
}

void Dense::initialize(std::mt19937_64 &rng) {
  glorot_fill(weights_, in_features_, units_, rng);
  bias_.setZero();
}

std::string Dense::describe() const {
  return fmt::format("Dense(units={}, in={}, l2={})", units_, in_features_, l2_);
}

Batch Dense::forward(const Batch &in, Mode) {
  cached_in_ = in;
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) out.push_back(dense_forward(x, weights_, bias_));
  return out;
}

Batch Dense::backward(const Batch &grad_out, bool need_input_grad) {
  check_batch_sizes(grad_out, cached_in_.size(), "Dense");
  Batch grad_in;
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const Tensor2D &g = grad_out[i];
    if (g.rows() != cached_in_[i].rows() || g.cols() != weights_.rows())
      throw ShapeError("Dense backward: upstream shape does not match forward");
    weight_grad_.noalias() += g.transpose() * cached_in_[i];
    bias_grad_ += g.colwise().sum();
    if (need_input_grad) grad_in.push_back(g * weights_);
  }
  if (l2_ != 0.0) weight_grad_ += (2.0 * l2_) * weights_;
  return grad_in;
}

std::vector<Param> Dense::params() {
  return {{"weights", &weights_, &weight_grad_}, {"bias", &bias_, &bias_grad_}};
}

double Dense::l2_penalty() const { return l2_ * weights_.squaredNorm(); }

std::unique_ptr<Layer> Dense::clone() const { return std::make_unique<Dense>(*this); }

std::size_t Dense::output_cols(std::size_t in_cols) const {
  if (in_cols != in_features_)
    throw ShapeError(fmt::format("Dense expects {} features, got {}", in_features_, in_cols));
  return units_;
}

Batch ReLU::forward(const Batch &in, Mode) {
  cached_in_ = in;
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) out.push_back(relu(x));
  return out;
}

Batch ReLU::backward(const Batch &grad_out, bool need_input_grad) {
  check_batch_sizes(grad_out, cached_in_.size(), "ReLU");
  Batch grad_in;
  if (!need_input_grad) return grad_in;
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_in.push_back(
        (cached_in_[i].array() > 0.0).select(grad_out[i].array(), 0.0).matrix());
  return grad_in;
}

std::unique_ptr<Layer> ReLU::clone() const { return std::make_unique<ReLU>(*this); }

Dropout::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw DataError(fmt::format("dropout rate {} outside [0, 1)", rate));
}

std::string Dropout::describe() const { return fmt::format("Dropout(rate={})", rate_); }

Batch Dropout::forward(const Batch &in, Mode mode) {
  masks_.clear();
  last_train_ = mode == Mode::kTrain && rate_ > 0.0;
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) {
    if (!last_train_) {
      out.push_back(x);
      continue;
    }
    Tensor2D mask;
    out.push_back(dropout(x, rate_, rng_, mode, &mask));
    masks_.push_back(std::move(mask));
  }
  return out;
}

Batch Dropout::backward(const Batch &grad_out, bool need_input_grad) {
  Batch grad_in;
  if (!need_input_grad) return grad_in;
  if (!last_train_) return grad_out;
  check_batch_sizes(grad_out, masks_.size(), "Dropout");
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_in.push_back(grad_out[i].cwiseProduct(masks_[i]));
  return grad_in;
}

std::unique_ptr<Layer> Dropout::clone() const { return std::make_unique<Dropout>(*this); }

BatchNorm::BatchNorm(std::size_t channels) : channels_(channels) {
  if (channels < 1) throw ShapeError("BatchNorm needs at least one channel");
  const auto c = static_cast<Eigen::Index>(channels);
  gamma_ = Tensor2D::Ones(1, c);
  beta_ = Tensor2D::Zero(1, c);
  gamma_grad_ = Tensor2D::Zero(1, c);
  beta_grad_ = Tensor2D::Zero(1, c);
  running_mean_ = Tensor2D::Zero(1, c);
  running_var_ = Tensor2D::Ones(1, c);
}

std::string BatchNorm::describe() const { return fmt::format("BatchNorm(channels={})", channels_); }

Batch BatchNorm::forward(const Batch &in, Mode mode) {
  const auto c = static_cast<Eigen::Index>(channels_);
  for (const Tensor2D &x : in)
    if (x.cols() != c)
      throw ShapeError(fmt::format("BatchNorm expects {} channels, got {}", c, x.cols()));
  last_train_ = mode == Mode::kTrain;
  Eigen::RowVectorXd mean, var;
  if (last_train_) {
    double n = 0.0;
    mean = Eigen::RowVectorXd::Zero(c);
    for (const Tensor2D &x : in) {
      mean += x.colwise().sum();
      n += static_cast<double>(x.rows());
    }
    if (n < 1.0) throw ShapeError("BatchNorm over an empty batch");
    mean /= n;
    var = Eigen::RowVectorXd::Zero(c);
    for (const Tensor2D &x : in)
      var += (x.rowwise() - mean).array().square().matrix().colwise().sum();
    var /= n;
    running_mean_.row(0) = kMomentum * running_mean_.row(0) + (1.0 - kMomentum) * mean;
    running_var_.row(0) = kMomentum * running_var_.row(0) + (1.0 - kMomentum) * var;
  } else {
    mean = running_mean_.row(0);
    var = running_var_.row(0);
  }
  inv_std_ = (var.array() + kEpsilon).rsqrt().matrix();
  normalized_.clear();
  Batch out;
  out.reserve(in.size());
  for (const Tensor2D &x : in) {
    Tensor2D xhat = ((x.rowwise() - mean).array().rowwise() * inv_std_.row(0).array()).matrix();
    Tensor2D y = (xhat.array().rowwise() * gamma_.row(0).array()).matrix();
    y.rowwise() += beta_.row(0);
    normalized_.push_back(std::move(xhat));
    out.push_back(std::move(y));
  }
  return out;
}

Batch BatchNorm::backward(const Batch &grad_out, bool need_input_grad) {
  check_batch_sizes(grad_out, normalized_.size(), "BatchNorm");
  const auto c = static_cast<Eigen::Index>(channels_);
  Eigen::RowVectorXd sum_g = Eigen::RowVectorXd::Zero(c);
  Eigen::RowVectorXd sum_gx = Eigen::RowVectorXd::Zero(c);
  double n = 0.0;
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    sum_g += grad_out[i].colwise().sum();
    sum_gx += grad_out[i].cwiseProduct(normalized_[i]).colwise().sum();
    n += static_cast<double>(grad_out[i].rows());
  }
  gamma_grad_.row(0) += sum_gx;
  beta_grad_.row(0) += sum_g;
  Batch grad_in;
  if (!need_input_grad) return grad_in;
  const Eigen::RowVectorXd scale = gamma_.row(0).cwiseProduct(inv_std_.row(0));
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    if (last_train_) {
      // dx = gamma * inv_std / n * (n * g - sum(g) - xhat * sum(g * xhat))
      Tensor2D centred = (grad_out[i] * n).rowwise() - sum_g;
      centred -= (normalized_[i].array().rowwise() * sum_gx.array()).matrix();
      grad_in.push_back(((centred.array().rowwise() * scale.array()) / n).matrix());
    } else {
      grad_in.push_back((grad_out[i].array().rowwise() * scale.array()).matrix());
    }
  }
  return grad_in;
}

std::vector<Param> BatchNorm::params() {
  return {{"gamma", &gamma_, &gamma_grad_}, {"beta", &beta_, &beta_grad_}};
}

std::vector<Tensor2D *> BatchNorm::state() { return {&running_mean_, &running_var_}; }

std::unique_ptr<Layer> BatchNorm::clone() const { return std::make_unique<BatchNorm>(*this); }

std::size_t BatchNorm::output_cols(std::size_t in_cols) const {
  if (in_cols != channels_)
    throw ShapeError(fmt::format("BatchNorm expects {} channels, got {}", channels_, in_cols));
  return in_cols;
}

}  // namespace moscope::nn
