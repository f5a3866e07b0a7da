#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedft/data.hpp"
#include "fedft/errors.hpp"
#include "fedft/federation.hpp"
#include "fedft/nn.hpp"
#include "fedft/selection.hpp"

namespace fedft {

namespace detail {

inline Tensor2 center_columns(const Tensor2& x) {
  Tensor2 c = x;
  const auto n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, j);
    mean /= n;
    for (std::size_t r = 0; r < x.rows(); ++r) c(r, j) -= mean;
  }
  return c;
}

// ||A^T B||_F^2 for A (n x p), B (n x q).
inline double cross_gram_sq(const Tensor2& a, const Tensor2& b) {
  double total = 0.0;
  std::vector<double> col(b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double ai = a(r, i);
      auto br = b.row(r);
      for (std::size_t j = 0; j < b.cols(); ++j) col[j] += ai * br[j];
    }
    for (double v : col) total += v * v;
  }
  return total;
}

}  // namespace detail

// Linear CKA: ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) on column-centred
// inputs. Empty when either input has no variance after centring.
inline std::optional<double> linear_cka(const Tensor2& x, const Tensor2& y) {
  if (x.rows() != y.rows()) throw ShapeError("linear_cka: row counts differ");
  if (x.rows() < 2) throw ParameterError("linear_cka: need at least two rows");
  const Tensor2 xc = detail::center_columns(x);
  const Tensor2 yc = detail::center_columns(y);
  const double xx = std::sqrt(detail::cross_gram_sq(xc, xc));
  const double yy = std::sqrt(detail::cross_gram_sq(yc, yc));
  if (!(xx > 0.0) || !(yy > 0.0)) return std::nullopt;
  const double xy = detail::cross_gram_sq(xc, yc);
  return xy / (xx * yy);
}

enum class LayerLevel { kLow, kMid, kUp };

inline std::string_view to_string(LayerLevel l) {
  switch (l) {
    case LayerLevel::kLow: return "low";
    case LayerLevel::kMid: return "mid";
    case LayerLevel::kUp: return "up";
  }
  return "?";
}

inline LayerLevel parse_layer_level(std::string_view s) {
  for (LayerLevel l : {LayerLevel::kLow, LayerLevel::kMid, LayerLevel::kUp})
    if (to_string(l) == s) return l;
  throw ParameterError("unknown layer level '" + std::string(s) + "'");
}

// Index into ForwardPass::activations for a level.
//   low: output of the first ReLU
//   mid: output of the middle ReLU (the second one in the default MLP)
//   up:  logits
inline std::size_t activation_index(const Model& model, LayerLevel level) {
  std::vector<std::size_t> relus;
  const auto layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (!layers[i].is_dense()) relus.push_back(i + 1);
  if (level == LayerLevel::kUp || relus.empty()) return layers.size();
  if (level == LayerLevel::kLow) return relus.front();
  return relus[relus.size() / 2];
}

inline Tensor2 probe_activations(const Model& model, const Tensor2& probe, LayerLevel level) {
  ForwardPass pass = forward(model, probe);
  return std::move(pass.activations[activation_index(model, level)]);
}

struct CkaMatrix {
  LayerLevel level = LayerLevel::kUp;
  std::size_t size = 0;
  std::vector<double> values;  // size x size, row-major; NaN where undefined

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }

  // Mean over i != j, skipping undefined entries.
  double mean_off_diagonal() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        if (i != j && !std::isnan((*this)(i, j))) {
          s += (*this)(i, j);
          ++n;
        }
    return n ? s / static_cast<double>(n) : std::nan("");
  }
};

inline CkaMatrix pairwise_cka(std::span<const Model> models, const Tensor2& probe, LayerLevel level) {
  if (models.size() < 2) throw ParameterError("pairwise_cka: need at least two models");
  for (const auto& m : models) {
    if (m.layer_count() != models[0].layer_count())
      throw ParameterError("pairwise_cka: architectures differ");
    for (std::size_t l = 0; l < m.layer_count(); ++l)
      if (m.layers()[l].kind != models[0].layers()[l].kind ||
          m.layers()[l].weights.rows() != models[0].layers()[l].weights.rows() ||
          m.layers()[l].weights.cols() != models[0].layers()[l].weights.cols())
        throw ParameterError("pairwise_cka: architectures differ at layer " + std::to_string(l));
  }
  std::vector<Tensor2> acts;
  for (const auto& m : models) acts.push_back(probe_activations(m, probe, level));

  CkaMatrix out{level, models.size(), std::vector<double>(models.size() * models.size())};
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i; j < models.size(); ++j) {
      const auto c = linear_cka(acts[i], acts[j]);
      const double v = c ? *c : std::nan("");
      out.values[i * out.size + j] = v;
      out.values[j * out.size + i] = v;
    }
  }
  return out;
}

// Best test accuracy in percentage points per second of summed client time.
// Empty when no client time was spent.
inline std::optional<double> learning_efficiency(std::span<const RoundReport> reports) {
  if (reports.empty()) throw ParameterError("learning_efficiency: no rounds");
  double best = 0.0;
  for (const auto& r : reports) best = std::max(best, r.global_test_accuracy);
  const double time = reports.back().cumulative_client_train_time;
  if (!(time > 0.0)) return std::nullopt;
  return 100.0 * best / time;
}

struct EntropyHistogram {
  std::vector<double> edges;  // num_bins + 1, from 0 to ln(num_classes)
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

// Sample entropies under softmax(., rho), binned uniformly over [0, ln C].
inline EntropyHistogram entropy_histogram(const Model& model, const Dataset& data,
                                          std::span<const std::size_t> indices, double rho,
                                          std::size_t num_bins) {
  if (num_bins < 2) throw ParameterError("entropy_histogram: need at least two bins");
  const double top = std::log(static_cast<double>(model.num_classes()));
  EntropyHistogram h;
  h.counts.assign(num_bins, 0);
  for (std::size_t b = 0; b <= num_bins; ++b)
    h.edges.push_back(top * static_cast<double>(b) / static_cast<double>(num_bins));
  if (indices.empty()) return h;
  for (const auto& s : score_entropy(model, data, indices, rho)) {
    const double pos = top > 0.0 ? s.entropy / top * static_cast<double>(num_bins) : 0.0;
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(num_bins - 1)));
    ++h.counts[bin];
  }
  return h;
}

inline EntropyHistogram entropy_histogram(const Model& model, const Dataset& data, double rho,
                                          std::size_t num_bins) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return entropy_histogram(model, data, all, rho, num_bins);
}

}  // namespace fedft
