#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedft/data.hpp"
#include "fedft/errors.hpp"
#include "fedft/nn.hpp"
#include "fedft/random.hpp"

namespace fedft {

enum class SelectionStrategy { kEntropy, kRandom, kAll };

inline const char* to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::kEntropy: return "entropy";
    case SelectionStrategy::kRandom: return "random";
    case SelectionStrategy::kAll: return "all";
  }
  return "?";
}

struct EntropyScore {
  std::size_t sample_index = 0;
  double entropy = 0.0;  // nats
};

struct SelectionResult {
  std::vector<std::size_t> selected_indices;  // ascending, subset of the client's indices
  std::vector<EntropyScore> scores;           // entropy strategy only, in client index order
  SelectionStrategy strategy = SelectionStrategy::kAll;
  double p_ds = 1.0;
};

// Shannon entropy in nats, with 0 log 0 := 0.
inline double compute_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p < 0.0 || !std::isfinite(p))
      throw ParameterError("compute_entropy: invalid probability " + std::to_string(p));
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// k = max(1, floor(p_ds * n)).
inline std::size_t selection_count(double p_ds, std::size_t n) {
  if (!(p_ds > 0.0 && p_ds <= 1.0))
    throw ParameterError("p_ds must lie in (0, 1], got " + std::to_string(p_ds));
  if (n == 0) throw ParameterError("cannot select from an empty client");
  // The epsilon keeps products such as 0.3 * 10 = 2.9999999999999996 at 3.
  const auto k = static_cast<std::size_t>(std::floor(p_ds * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

// Per-sample entropy under the temperature-scaled softmax.
inline std::vector<EntropyScore> score_entropy(const Model& model, const Dataset& dataset,
                                               std::span<const std::size_t> indices, double rho,
                                               CostMeter* meter = nullptr) {
  ForwardPass pass = forward(model, dataset.features.gather_rows(indices), meter);
  const Tensor2& logits = pass.logits();
  std::vector<EntropyScore> scores(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r)
    scores[r] = {indices[r], compute_entropy(softmax_with_temperature(logits.row(r), rho))};
  return scores;
}

// The k highest-entropy samples, ties broken by ascending sample index.
inline std::vector<std::size_t> top_entropy(std::span<const EntropyScore> scores, std::size_t k) {
  std::vector<EntropyScore> ranked(scores.begin(), scores.end());
  k = std::min(k, ranked.size());
  auto by_rank = [](const EntropyScore& a, const EntropyScore& b) {
    if (a.entropy != b.entropy) return a.entropy > b.entropy;
    return a.sample_index < b.sample_index;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    by_rank);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = ranked[i].sample_index;
  std::sort(out.begin(), out.end());
  return out;
}

inline SelectionResult select_by_entropy(const Model& model, const Dataset& dataset,
                                         const ClientPartition& client, double p_ds, double rho,
                                         CostMeter* meter = nullptr) {
  const std::size_t k = selection_count(p_ds, client.sample_indices.size());
  SelectionResult result;
  result.strategy = SelectionStrategy::kEntropy;
  result.p_ds = p_ds;
  result.scores = score_entropy(model, dataset, client.sample_indices, rho, meter);
  result.selected_indices = top_entropy(result.scores, k);
  return result;
}

// Uniform sample without replacement; seeded by (round_seed, client_id).
inline SelectionResult select_random(const ClientPartition& client, double p_ds,
                                     std::uint64_t round_seed) {
  const std::size_t n = client.sample_indices.size();
  const std::size_t k = selection_count(p_ds, n);
  Rng rng(derive_seed(round_seed, Stream::kRandomSelection, {client.client_id}));
  SelectionResult result;
  result.strategy = SelectionStrategy::kRandom;
  result.p_ds = p_ds;
  for (std::size_t pos : sample_without_replacement(n, k, rng))
    result.selected_indices.push_back(client.sample_indices[pos]);
  std::sort(result.selected_indices.begin(), result.selected_indices.end());
  return result;
}

inline SelectionResult select_all(const ClientPartition& client) {
  SelectionResult result;
  result.strategy = SelectionStrategy::kAll;
  result.p_ds = 1.0;
  result.selected_indices = client.sample_indices;
  std::sort(result.selected_indices.begin(), result.selected_indices.end());
  return result;
}

}  // namespace fedft
