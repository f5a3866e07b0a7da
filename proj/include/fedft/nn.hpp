#pragma once

// Minimal feed-forward network: dense and ReLU layers, exact backprop of the
// mean cross-entropy, heavy-ball SGD, and a split between a frozen prefix
// (the feature extractor) and a trainable suffix (the head).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedft/errors.hpp"
#include "fedft/random.hpp"
#include "fedft/tensor.hpp"

namespace fedft {

inline constexpr double kProbabilityFloor = 1e-12;

enum class LayerKind : std::uint8_t { kDense = 0, kRelu = 1 };

struct Layer {
  LayerKind kind = LayerKind::kRelu;
  Tensor2 weights;           // out x in, dense only
  std::vector<double> bias;  // length out, dense only

  static Layer dense(Tensor2 w, std::vector<double> b) {
    if (b.size() != w.rows()) throw ShapeError("dense layer: bias length != weight rows");
    return Layer{LayerKind::kDense, std::move(w), std::move(b)};
  }
  static Layer dense(std::size_t in, std::size_t out) {
    return dense(Tensor2(out, in), std::vector<double>(out, 0.0));
  }
  static Layer relu() { return Layer{}; }

  bool is_dense() const noexcept { return kind == LayerKind::kDense; }
  std::size_t in_width() const noexcept { return weights.cols(); }
  std::size_t out_width() const noexcept { return weights.rows(); }
  std::size_t param_count() const noexcept { return is_dense() ? weights.size() + bias.size() : 0; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Counts multiply-accumulates spent in forward/backward. Used to model
// device time deterministically.
struct CostMeter {
  std::uint64_t macs = 0;
};

// Nominal edge-device throughput for the modeled clock.
inline constexpr double kNominalMacsPerSecond = 1e9;

inline double modeled_seconds(const CostMeter& meter) {
  return static_cast<double>(meter.macs) / kNominalMacsPerSecond;
}

// Read-only view over a contiguous run of layers.
struct ParamView {
  std::span<const Layer> layers;
  std::size_t first_layer = 0;

  std::size_t param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }
  bool empty() const noexcept { return param_count() == 0; }

  // W row-major then bias, layer by layer.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const auto& l : layers) {
      if (!l.is_dense()) continue;
      out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }
};

class Model {
 public:
  Model() = default;

  Model(std::vector<Layer> layers, std::size_t split_index, std::size_t num_classes)
      : layers_(std::move(layers)), split_index_(split_index), num_classes_(num_classes) {
    validate();
  }

  std::span<const Layer> layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t split_index() const noexcept { return split_index_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  std::size_t input_width() const {
    for (const auto& l : layers_)
      if (l.is_dense()) return l.in_width();
    return 0;
  }

  // Bumped by every parameter mutation; forward passes remember it so a
  // backward against a changed model is detected.
  std::uint64_t generation() const noexcept { return generation_; }

  void set_split_index(std::size_t split) {
    if (split > layers_.size()) throw ParameterError("split_index beyond layer count");
    split_index_ = split;
  }

  ParamView phi() const { return {std::span(layers_).first(split_index_), 0}; }
  ParamView theta() const { return {std::span(layers_).subspan(split_index_), split_index_}; }

  std::size_t param_count() const { return phi().param_count() + theta().param_count(); }

  // Overwrites the trainable suffix from a flat vector in ParamView::flatten order.
  void set_theta(std::span<const double> flat) {
    if (flat.size() != theta().param_count()) {
      throw ShapeError("set_theta: expected " + std::to_string(theta().param_count()) +
                       " values, got " + std::to_string(flat.size()));
    }
    std::size_t off = 0;
    for (std::size_t l = split_index_; l < layers_.size(); ++l) {
      auto& layer = layers_[l];
      if (!layer.is_dense()) continue;
      auto w = layer.weights.values();
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), w.size(), w.begin());
      off += w.size();
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), layer.bias.size(),
                  layer.bias.begin());
      off += layer.bias.size();
    }
    ++generation_;
  }

  // Direct mutable access. Invalidates outstanding forward passes.
  Layer& mutable_layer(std::size_t i) {
    ++generation_;
    return layers_.at(i);
  }

  friend bool operator==(const Model& a, const Model& b) {
    return a.layers_ == b.layers_ && a.split_index_ == b.split_index_ &&
           a.num_classes_ == b.num_classes_;
  }

 private:
  void validate() const {
    if (split_index_ > layers_.size()) throw ParameterError("split_index beyond layer count");
    std::size_t width = 0;
    bool seen_dense = false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (!l.is_dense()) {
        if (!l.weights.empty() || !l.bias.empty())
          throw ShapeError("relu layer " + std::to_string(i) + " carries parameters");
        continue;
      }
      if (l.bias.size() != l.out_width())
        throw ShapeError("dense layer " + std::to_string(i) + ": bias length mismatch");
      if (seen_dense && l.in_width() != width)
        throw ShapeError("dense layer " + std::to_string(i) + ": input width " +
                         std::to_string(l.in_width()) + " != previous output " +
                         std::to_string(width));
      width = l.out_width();
      seen_dense = true;
    }
    if (!seen_dense) throw ShapeError("model has no dense layer");
    if (width != num_classes_)
      throw ShapeError("final dense width " + std::to_string(width) + " != num_classes " +
                       std::to_string(num_classes_));
  }

  std::vector<Layer> layers_;
  std::size_t split_index_ = 0;
  std::size_t num_classes_ = 0;
  std::uint64_t generation_ = 0;
};

inline std::pair<ParamView, ParamView> split_params(const Model& model) {
  return {model.phi(), model.theta()};
}

// Index of the last dense layer: the default split trains only the classifier.
inline std::size_t last_dense_index(const Model& model) {
  auto layers = model.layers();
  for (std::size_t i = layers.size(); i-- > 0;)
    if (layers[i].is_dense()) return i;
  return 0;
}

struct MlpSpec {
  std::size_t input_width = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t num_classes = 10;
};

// dense, relu, dense, relu, ..., dense. He-normal weights, zero biases.
// The split defaults to the last dense layer.
inline Model make_mlp(const MlpSpec& spec, std::uint64_t seed) {
  if (spec.input_width == 0 || spec.num_classes == 0)
    throw ParameterError("make_mlp: widths must be positive");
  Rng rng(seed);
  std::vector<Layer> layers;
  std::size_t in = spec.input_width;
  auto add_dense = [&](std::size_t out) {
    Layer l = Layer::dense(in, out);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    for (double& w : l.weights.values()) w = normal(rng);
    layers.push_back(std::move(l));
    in = out;
  };
  for (std::size_t h : spec.hidden) {
    if (h == 0) throw ParameterError("make_mlp: hidden width must be positive");
    add_dense(h);
    layers.push_back(Layer::relu());
  }
  add_dense(spec.num_classes);
  Model m(std::move(layers), 0, spec.num_classes);
  m.set_split_index(last_dense_index(m));
  return m;
}

// Cached activations of one forward pass: activations[0] is the input,
// activations[i + 1] the output of layer i.
struct ForwardPass {
  std::vector<Tensor2> activations;
  std::uint64_t model_generation = 0;

  const Tensor2& logits() const { return activations.back(); }
};

inline ForwardPass forward(const Model& model, const Tensor2& batch, CostMeter* meter = nullptr) {
  if (batch.cols() != model.input_width())
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                     " columns, model expects " + std::to_string(model.input_width()));
  ForwardPass pass;
  pass.model_generation = model.generation();
  pass.activations.reserve(model.layer_count() + 1);
  pass.activations.push_back(batch);
  for (const auto& layer : model.layers()) {
    const Tensor2& in = pass.activations.back();
    if (layer.is_dense()) {
      const std::size_t n = in.rows(), ni = layer.in_width(), no = layer.out_width();
      Tensor2 out(n, no);
      for (std::size_t r = 0; r < n; ++r) {
        auto x = in.row(r);
        auto y = out.row(r);
        for (std::size_t o = 0; o < no; ++o) {
          auto w = layer.weights.row(o);
          double acc = layer.bias[o];
          for (std::size_t i = 0; i < ni; ++i) acc += w[i] * x[i];
          y[o] = acc;
        }
      }
      if (meter) meter->macs += static_cast<std::uint64_t>(n * ni * no);
      pass.activations.push_back(std::move(out));
    } else {
      Tensor2 out = in;
      for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
      pass.activations.push_back(std::move(out));
    }
  }
  if (!pass.logits().all_finite()) throw NumericError("forward: non-finite activation");
  return pass;
}

// p_i = exp(z_i / rho) / sum_j exp(z_j / rho), evaluated after subtracting max(z) / rho.
inline std::vector<double> softmax_with_temperature(std::span<const double> logits, double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho))
    throw ParameterError("softmax temperature must be positive, got " + std::to_string(rho));
  if (logits.empty()) return {};
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - top) / rho);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline Tensor2 softmax_rows(const Tensor2& logits, double rho = 1.0) {
  Tensor2 out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto p = softmax_with_temperature(logits.row(r), rho);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

inline double cross_entropy_loss(const Tensor2& probs, std::span<const std::size_t> labels) {
  if (probs.rows() != labels.size())
    throw ShapeError("cross_entropy_loss: rows != label count");
  if (probs.rows() == 0) throw ParameterError("cross_entropy_loss: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    if (labels[r] >= probs.cols())
      throw ParameterError("cross_entropy_loss: label " + std::to_string(labels[r]) +
                           " out of range for " + std::to_string(probs.cols()) + " classes");
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9)
      throw ParameterError("cross_entropy_loss: row " + std::to_string(r) + " sums to " +
                           std::to_string(s));
    total -= std::log(std::max(row[labels[r]], kProbabilityFloor));
  }
  return total / static_cast<double>(probs.rows());
}

// Gradient of the trainable suffix, flattened in ParamView::flatten order.
struct Gradients {
  std::vector<double> values;

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

// Exact gradient of the mean cross-entropy (standard softmax) with respect
// to the layers at and after split_index. The frozen prefix gets nothing.
inline Gradients backward(const Model& model, const ForwardPass& pass,
                          std::span<const std::size_t> labels, CostMeter* meter = nullptr) {
  const auto layers = model.layers();
  if (pass.model_generation != model.generation() ||
      pass.activations.size() != layers.size() + 1)
    throw StateError("backward: forward cache does not belong to this model state");
  const Tensor2& logits = pass.logits();
  const std::size_t n = logits.rows();
  if (labels.size() != n) throw ShapeError("backward: label count != batch rows");
  if (n == 0) throw ParameterError("backward: empty batch");

  const std::size_t split = model.split_index();
  std::vector<std::size_t> offset(layers.size() + 1, 0);
  for (std::size_t l = split; l < layers.size(); ++l)
    offset[l + 1] = offset[l] + layers[l].param_count();
  Gradients grads{std::vector<double>(offset[layers.size()], 0.0)};
  if (split == layers.size()) return grads;

  // dL/dz = (softmax(z) - onehot) / n
  Tensor2 delta = softmax_rows(logits, 1.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= model.num_classes())
      throw ParameterError("backward: label " + std::to_string(labels[r]) + " out of range");
    auto d = delta.row(r);
    d[labels[r]] -= 1.0;
    for (double& v : d) v *= inv_n;
  }

  for (std::size_t l = layers.size(); l-- > split;) {
    const Layer& layer = layers[l];
    const bool need_input_grad = l > split;
    if (layer.is_dense()) {
      const Tensor2& a_in = pass.activations[l];
      const std::size_t ni = layer.in_width(), no = layer.out_width();
      double* dw = grads.values.data() + offset[l];
      double* db = dw + ni * no;
      for (std::size_t r = 0; r < n; ++r) {
        auto d = delta.row(r);
        auto x = a_in.row(r);
        for (std::size_t o = 0; o < no; ++o) {
          const double g = d[o];
          db[o] += g;
          double* dw_row = dw + o * ni;
          for (std::size_t i = 0; i < ni; ++i) dw_row[i] += g * x[i];
        }
      }
      if (meter) meter->macs += static_cast<std::uint64_t>(n * ni * no);
      if (need_input_grad) {
        Tensor2 prev(n, ni);
        for (std::size_t r = 0; r < n; ++r) {
          auto d = delta.row(r);
          auto p = prev.row(r);
          for (std::size_t o = 0; o < no; ++o) {
            const double g = d[o];
            auto w = layer.weights.row(o);
            for (std::size_t i = 0; i < ni; ++i) p[i] += g * w[i];
          }
        }
        if (meter) meter->macs += static_cast<std::uint64_t>(n * ni * no);
        delta = std::move(prev);
      }
    } else if (need_input_grad) {
      const Tensor2& a_out = pass.activations[l + 1];
      auto d = delta.values();
      auto a = a_out.values();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(a[i] > 0.0)) d[i] = 0.0;
    }
  }
  return grads;
}

struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.5;
  std::vector<double> velocity;

  OptimizerState() = default;
  OptimizerState(double lr, double m, std::size_t param_count = 0)
      : learning_rate(lr), momentum(m), velocity(param_count, 0.0) {
    if (!(lr >= 0.0) || !std::isfinite(lr))
      throw ParameterError("learning rate must be non-negative and finite");
    if (!(m >= 0.0 && m < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  }
};

// Heavy-ball step: v <- m v + g; theta <- theta - lr v.
inline void sgd_step(std::span<double> theta, std::span<const double> grads, OptimizerState& opt) {
  if (grads.size() != theta.size())
    throw ShapeError("sgd_step: gradient size " + std::to_string(grads.size()) +
                     " != parameter size " + std::to_string(theta.size()));
  if (opt.velocity.empty()) opt.velocity.assign(theta.size(), 0.0);
  if (opt.velocity.size() != theta.size()) throw ShapeError("sgd_step: velocity size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    opt.velocity[i] = opt.momentum * opt.velocity[i] + grads[i];
    theta[i] -= opt.learning_rate * opt.velocity[i];
  }
}

// Same rule applied in place to the trainable suffix of a model.
inline void sgd_step(Model& model, const Gradients& grads, OptimizerState& opt) {
  std::vector<double> theta = model.theta().flatten();
  sgd_step(std::span<double>(theta), std::span<const double>(grads.values), opt);
  model.set_theta(theta);
}

// Hook that may modify the gradient before the step (e.g. a proximal term).
// Receives the current trainable parameters and the gradient to adjust.
using GradientHook = std::function<void(std::span<const double>, std::span<double>)>;

// One pass of mini-batch SGD over `order` (indices into features/labels, in
// visiting order). Returns the mean training loss over the epoch.
inline double train_epoch(Model& model, const Tensor2& features,
                          std::span<const std::size_t> labels,
                          std::span<const std::size_t> order, std::size_t batch_size,
                          OptimizerState& opt, const GradientHook& hook = {},
                          CostMeter* meter = nullptr) {
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (order.empty()) throw ParameterError("train_epoch: no samples");
  double loss_sum = 0.0;
  std::vector<std::size_t> batch_labels;
  std::vector<double> theta = model.theta().flatten();
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    auto idx = order.subspan(start, count);
    Tensor2 batch = features.gather_rows(idx);
    batch_labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) batch_labels[i] = labels[idx[i]];

    ForwardPass pass = forward(model, batch, meter);
    loss_sum += cross_entropy_loss(softmax_rows(pass.logits()), batch_labels) *
                static_cast<double>(count);
    Gradients g = backward(model, pass, batch_labels, meter);
    if (hook) hook(theta, g.values);
    sgd_step(std::span<double>(theta), std::span<const double>(g.values), opt);
    model.set_theta(theta);
  }
  return loss_sum / static_cast<double>(order.size());
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Accuracy (fraction in [0, 1]) and mean cross-entropy of the model.
inline Evaluation evaluate(const Model& model, const Tensor2& features,
                           std::span<const std::size_t> labels, std::size_t chunk = 1024) {
  if (features.rows() != labels.size()) throw ShapeError("evaluate: rows != label count");
  if (features.rows() == 0) throw ParameterError("evaluate: empty data");
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < features.rows(); start += chunk) {
    const std::size_t count = std::min(chunk, features.rows() - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    ForwardPass pass = forward(model, features.gather_rows(idx));
    Tensor2 probs = softmax_rows(pass.logits());
    for (std::size_t r = 0; r < count; ++r) {
      auto row = probs.row(r);
      const auto best =
          static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == labels[start + r]) ++correct;
    }
    loss += cross_entropy_loss(probs, labels.subspan(start, count)) * static_cast<double>(count);
  }
  const auto n = static_cast<double>(features.rows());
  return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace fedft
