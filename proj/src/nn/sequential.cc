// nn/sequential.cc

#include "moscope/nn/sequential.h"

#include "moscope/error.h"

namespace moscope::nn {

Sequential::Sequential(const Sequential &other) {
  layers_.reserve(other.layers_.size());
  for (const auto &l : other.layers_) layers_.push_back(l->clone());
}

Sequential &Sequential::operator=(const Sequential &other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Layer &Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

Batch Sequential::forward(const Batch &in, Mode mode) {
  Batch x = in;
  for (auto &l : layers_) x = l->forward(x, mode);
  return x;
}

Batch Sequential::backward(const Batch &grad_out, bool need_input_grad) {
  Batch g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want = i > 0 || need_input_grad;
    g = layers_[i]->backward(g, want);
  }
  return g;
}

void Sequential::zero_grad() {
  for (auto &l : layers_) l->zero_grad();
}

std::vector<Param> Sequential::params() {
  std::vector<Param> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Param p : layers_[i]->params()) {
      p.name = "layer" + std::to_string(i) + "." + p.name;
      out.push_back(p);
    }
  return out;
}

double Sequential::l2_penalty() const {
  double total = 0.0;
  for (const auto &l : layers_) total += l->l2_penalty();
  return total;
}

std::size_t Sequential::parameter_count() {
  std::size_t n = 0;
  for (const Param &p : params()) n += static_cast<std::size_t>(p.value->size());
  return n;
}

std::vector<Tensor2D *> Sequential::tensors_of(std::size_t layer) {
  std::vector<Tensor2D *> out;
  for (Param &p : layers_[layer]->params()) out.push_back(p.value);
  for (Tensor2D *s : layers_[layer]->state()) out.push_back(s);
  return out;
}

std::vector<Tensor2D> Sequential::snapshot() {
  std::vector<Tensor2D> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Tensor2D *t : tensors_of(i)) out.push_back(*t);
  return out;
}

void Sequential::restore(const std::vector<Tensor2D> &snapshot) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Tensor2D *t : tensors_of(i)) {
      if (k >= snapshot.size() || snapshot[k].rows() != t->rows() ||
          snapshot[k].cols() != t->cols())
        throw ShapeError("snapshot does not match the network");
      *t = snapshot[k++];
    }
  if (k != snapshot.size()) throw ShapeError("snapshot does not match the network");
}

std::pair<std::size_t, std::size_t> Sequential::output_shape(std::size_t rows,
                                                             std::size_t cols) const {
  for (const auto &l : layers_) {
    rows = l->output_rows(rows);
    cols = l->output_cols(cols);
  }
  return {rows, cols};
}

std::string Sequential::describe() const {
  std::string out;
  for (const auto &l : layers_) {
    if (!out.empty()) out += " -> ";
    out += l->describe();
  }
  return out;
}

}  // namespace moscope::nn
