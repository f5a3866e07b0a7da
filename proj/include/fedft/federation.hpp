#pragma once

// Server-side round loop: pretraining, participant sampling, per-client data
// selection and local updates, and selected-count weighted aggregation of
// the trainable head.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "fedft/data.hpp"
#include "fedft/errors.hpp"
#include "fedft/nn.hpp"
#include "fedft/random.hpp"
#include "fedft/selection.hpp"

namespace fedft {

enum class Strategy { kFedAvg, kFedProx, kFedFtRds, kFedFtEds, kFedFtAll };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kFedProx: return "fedprox";
    case Strategy::kFedFtRds: return "fedft_rds";
    case Strategy::kFedFtEds: return "fedft_eds";
    case Strategy::kFedFtAll: return "fedft_all";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kFedAvg, Strategy::kFedProx, Strategy::kFedFtRds,
                     Strategy::kFedFtEds, Strategy::kFedFtAll})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

// Fine-tuning strategies freeze the feature extractor.
inline bool freezes_features(Strategy s) {
  return s == Strategy::kFedFtRds || s == Strategy::kFedFtEds || s == Strategy::kFedFtAll;
}

// Which clock feeds RoundReport::cumulative_client_time.
//   modeled:  counted multiply-accumulates / kNominalMacsPerSecond (reproducible)
//   measured: steady_clock wall time spent in client work
enum class ClientClock { kModeled, kMeasured };

inline std::string_view to_string(ClientClock c) {
  return c == ClientClock::kModeled ? "modeled" : "measured";
}

inline ClientClock parse_clock(std::string_view name) {
  if (name == "modeled") return ClientClock::kModeled;
  if (name == "measured") return ClientClock::kMeasured;
  throw ConfigError("unknown clock '" + std::string(name) + "'");
}

struct FederationConfig {
  Strategy strategy = Strategy::kFedFtEds;
  std::size_t rounds = 30;
  std::size_t local_epochs = 5;
  std::size_t num_clients = 20;
  double participation_fraction = 1.0;
  double p_ds = 1.0;
  double rho = 0.1;
  double learning_rate = 0.1;
  double momentum = 0.5;
  double prox_mu = 0.01;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 20;
  std::optional<std::size_t> split_index;  // default: last dense layer
  std::vector<std::size_t> hidden = {64, 64};
  double test_fraction = 0.2;
  ClientClock clock = ClientClock::kModeled;
  std::uint64_t master_seed = 0;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (local_epochs < 1) fail("local_epochs must be >= 1");
    if (num_clients < 1) fail("num_clients must be >= 1");
    if (!(participation_fraction > 0.0 && participation_fraction <= 1.0))
      fail("participation_fraction must lie in (0, 1]");
    if (std::llround(participation_fraction * static_cast<double>(num_clients)) < 1)
      fail("participation_fraction * num_clients rounds to zero participants");
    if (!(p_ds > 0.0 && p_ds <= 1.0)) fail("p_ds must lie in (0, 1]");
    if (!(rho > 0.0) || !std::isfinite(rho)) fail("rho must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      fail("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) fail("prox_mu must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0, 1)");
    for (std::size_t h : hidden)
      if (h == 0) fail("hidden widths must be positive");
  }

  // Selection actually applied by this strategy.
  SelectionStrategy selection() const {
    switch (strategy) {
      // Scoring is skipped when every sample would be kept anyway.
      case Strategy::kFedFtEds: return p_ds < 1.0 ? SelectionStrategy::kEntropy
                                                  : SelectionStrategy::kAll;
      case Strategy::kFedFtAll: return SelectionStrategy::kAll;
      default: return p_ds < 1.0 ? SelectionStrategy::kRandom : SelectionStrategy::kAll;
    }
  }

  double effective_p_ds() const { return strategy == Strategy::kFedFtAll ? 1.0 : p_ds; }
};

// The global model {phi, theta_g} after `round` aggregations.
struct GlobalModel {
  Model model;
  std::size_t round = 0;

  std::vector<double> theta() const { return model.theta().flatten(); }
};

struct ClientUpdate {
  std::size_t client_id = 0;
  std::vector<double> theta;
  std::size_t selected_count = 0;
  double train_time_seconds = 0.0;  // on the configured clock
  double modeled_seconds = 0.0;
  double measured_seconds = 0.0;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<std::size_t> participating_clients;
  double global_test_accuracy = 0.0;  // fraction in [0, 1]
  double global_test_loss = 0.0;
  double cumulative_client_train_time = 0.0;  // seconds, configured clock
  double cumulative_modeled_seconds = 0.0;
  double cumulative_measured_seconds = 0.0;
  std::vector<std::size_t> selected_counts;  // aligned with participating_clients
  std::size_t total_selected = 0;
  std::uint64_t bytes_exchanged = 0;  // both directions, 8-byte parameters
  double weight_sum = 0.0;
};

// ---------------------------------------------------------------------------

// Centralized mini-batch SGD over all layers (the split is ignored).
inline Model pretrain(const Model& model, const Dataset& source, std::size_t epochs,
                      double learning_rate, double momentum, std::size_t batch_size,
                      std::uint64_t seed, std::vector<double>* epoch_losses = nullptr) {
  if (source.size() == 0) throw ParameterError("pretrain: empty source dataset");
  Model trained = model;
  if (epochs == 0) return trained;
  const std::size_t split = trained.split_index();
  trained.set_split_index(0);
  OptimizerState opt(learning_rate, momentum, trained.theta().param_count());
  std::vector<std::size_t> order(source.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, Stream::kPretrain, {e}));
    std::shuffle(order.begin(), order.end(), rng);
    const double loss = train_epoch(trained, source.features, source.labels, order, batch_size, opt);
    if (epoch_losses) epoch_losses->push_back(loss);
  }
  trained.set_split_index(split);
  return trained;
}

// Replace the classifier (last dense layer) with a freshly initialised one of
// `num_classes` outputs. Used when source and target label spaces differ.
inline Model replace_head(const Model& model, std::size_t num_classes, std::uint64_t seed) {
  std::vector<Layer> layers(model.layers().begin(), model.layers().end());
  const std::size_t head = last_dense_index(model);
  const std::size_t in = layers[head].in_width();
  Layer fresh = Layer::dense(in, num_classes);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  for (double& w : fresh.weights.values()) w = normal(rng);
  layers[head] = std::move(fresh);
  return Model(std::move(layers), model.split_index(), num_classes);
}

struct LocalTrainingSpec {
  std::size_t epochs = 5;
  double learning_rate = 0.1;
  double momentum = 0.5;
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;  // per (round, client); epochs derive from it
};

namespace detail {

// Runs task(0..count-1) on `workers` threads; returns once all are done.
// A named functor keeps std::jthread away from lambda types local to
// inline functions, which some compilers fail to instantiate.
struct WorkQueue {
  std::atomic<std::size_t>* next;
  std::size_t count;
  const std::function<void(std::size_t)>* task;
  void operator()() const {
    for (std::size_t s; (s = next->fetch_add(1)) < count;) (*task)(s);
  }
};

inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& task) {
  if (workers <= 1) {
    for (std::size_t s = 0; s < count; ++s) task(s);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(WorkQueue{&next, count, &task});
}

inline ClientUpdate local_sgd(const Model& global, const Dataset& data,
                              std::span<const std::size_t> selected, const LocalTrainingSpec& spec,
                              std::size_t client_id, const GradientHook& hook, CostMeter* meter) {
  if (selected.empty()) throw ParameterError("local update: no selected samples");
  if (spec.epochs < 1) throw ParameterError("local update: epochs must be >= 1");
  const auto started = std::chrono::steady_clock::now();
  CostMeter local;
  Model model = global;
  // Fresh momentum every round.
  OptimizerState opt(spec.learning_rate, spec.momentum, model.theta().param_count());
  std::vector<std::size_t> order;
  for (std::size_t e = 0; e < spec.epochs; ++e) {
    order.assign(selected.begin(), selected.end());
    Rng rng(derive_seed(spec.shuffle_seed, Stream::kClientShuffle, {e}));
    std::shuffle(order.begin(), order.end(), rng);
    train_epoch(model, data.features, data.labels, order, spec.batch_size, opt, hook, &local);
  }
  ClientUpdate update;
  update.client_id = client_id;
  update.theta = model.theta().flatten();
  update.selected_count = selected.size();
  update.modeled_seconds = modeled_seconds(local);
  update.measured_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  update.train_time_seconds = update.modeled_seconds;
  if (meter) meter->macs += local.macs;
  return update;
}

}  // namespace detail

// E epochs of mini-batch SGD on the selected samples, trainable suffix only.
inline ClientUpdate client_local_update(const Model& global, const Dataset& data,
                                        std::span<const std::size_t> selected,
                                        const LocalTrainingSpec& spec, std::size_t client_id = 0,
                                        CostMeter* meter = nullptr) {
  return detail::local_sgd(global, data, selected, spec, client_id, {}, meter);
}

// As client_local_update with g + mu (theta - theta_t) as the step gradient.
inline ClientUpdate fedprox_local_update(const Model& global, const Dataset& data,
                                         std::span<const std::size_t> selected,
                                         const LocalTrainingSpec& spec, double mu,
                                         std::size_t client_id = 0, CostMeter* meter = nullptr) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ParameterError("fedprox: mu must be >= 0");
  if (mu == 0.0) return detail::local_sgd(global, data, selected, spec, client_id, {}, meter);
  const std::vector<double> anchor = global.theta().flatten();
  GradientHook proximal = [&anchor, mu](std::span<const double> theta, std::span<double> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += mu * (theta[i] - anchor[i]);
  };
  return detail::local_sgd(global, data, selected, spec, client_id, proximal, meter);
}

// p_k = selected_count_k / sum_j selected_count_j, in ascending client id order.
inline std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates) {
  std::vector<const ClientUpdate*> ordered;
  for (const auto& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });
  double total = 0.0;
  for (const auto* u : ordered) {
    if (u->selected_count == 0) throw ProtocolError("client update with zero selected samples");
    total += static_cast<double>(u->selected_count);
  }
  std::vector<double> w;
  for (const auto* u : ordered) w.push_back(static_cast<double>(u->selected_count) / total);
  return w;
}

// theta_g = sum_k p_k theta_k, summed in ascending client id order.
inline std::vector<double> aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ProtocolError("aggregate: no client updates");
  std::vector<const ClientUpdate*> ordered;
  for (const auto& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });
  const std::size_t width = ordered.front()->theta.size();
  for (const auto* u : ordered)
    if (u->theta.size() != width)
      throw ProtocolError("aggregate: client " + std::to_string(u->client_id) + " sent " +
                          std::to_string(u->theta.size()) + " parameters, expected " +
                          std::to_string(width));
  const auto weights = aggregation_weights(updates);
  std::vector<double> theta(width, 0.0);
  for (std::size_t k = 0; k < ordered.size(); ++k)
    for (std::size_t i = 0; i < width; ++i) theta[i] += weights[k] * ordered[k]->theta[i];
  return theta;
}

// K = max(1, round(f_n * N)) distinct client ids, ascending.
inline std::vector<std::size_t> sample_participants(std::size_t num_clients,
                                                    double participation_fraction,
                                                    std::uint64_t round_seed) {
  if (!(participation_fraction > 0.0 && participation_fraction <= 1.0))
    throw ParameterError("participation fraction must lie in (0, 1]");
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(participation_fraction * static_cast<double>(num_clients))));
  Rng rng(round_seed);
  return sample_without_replacement(num_clients, k, rng);
}

// ---------------------------------------------------------------------------

// Thrown when a client fails mid-round; carries where it happened.
class ClientFailure : public Error {
 public:
  ClientFailure(std::size_t round, std::size_t client, const std::string& what)
      : Error("round " + std::to_string(round) + ", client " + std::to_string(client) + ": " +
              what),
        round_(round),
        client_(client) {}
  std::size_t round() const noexcept { return round_; }
  std::size_t client() const noexcept { return client_; }

 private:
  std::size_t round_;
  std::size_t client_;
};

struct FederationData {
  Dataset train;
  Dataset test;
  std::vector<ClientPartition> partitions;
};

// Stratified held-out split first, then Dirichlet partition of the rest.
inline FederationData prepare_federation_data(const Dataset& target, std::size_t num_clients,
                                              double alpha, double test_fraction,
                                              std::uint64_t master_seed) {
  target.validate();
  auto split = stratified_split(target, test_fraction, derive_seed(master_seed, Stream::kTestSplit));
  PartitionSpec spec{num_clients, alpha, derive_seed(master_seed, Stream::kPartition)};
  auto parts = dirichlet_partition(split.train, spec);
  return {std::move(split.train), std::move(split.test), std::move(parts)};
}

struct RunOptions {
  std::size_t threads = 1;
  // When set, used as the starting global model instead of init + pretrain.
  const Model* initial_model = nullptr;
  std::function<void(std::size_t round, std::size_t client, const SelectionResult&)> on_selection;
  // Client models of a round before aggregation, in participant order.
  std::function<void(std::size_t round, const std::vector<Model>&)> on_client_models;
};

struct FederationResult {
  std::vector<RoundReport> reports;
  GlobalModel final_model;
  Model initial_model;  // the global model entering round 1
};

// Initial global model: pretrained on `source` when pretrain_epochs > 0
// (classifier re-initialised if the label spaces differ), random otherwise.
// The split follows the strategy.
inline Model build_initial_model(const FederationConfig& config, const Dataset& source,
                                 const Dataset& train) {
  const std::uint64_t master = config.master_seed;
  Model model;
  if (config.pretrain_epochs > 0) {
    source.validate();
    if (source.feature_dim() != train.feature_dim())
      throw ConfigError("source and target feature widths differ");
    model = make_mlp({train.feature_dim(), config.hidden, source.num_classes},
                     derive_seed(master, Stream::kModelInit, {0}));
    model = pretrain(model, source, config.pretrain_epochs, config.learning_rate, config.momentum,
                     config.batch_size, derive_seed(master, Stream::kPretrain));
    if (source.num_classes != train.num_classes)
      model = replace_head(model, train.num_classes, derive_seed(master, Stream::kModelInit, {2}));
  } else {
    model = make_mlp({train.feature_dim(), config.hidden, train.num_classes},
                     derive_seed(master, Stream::kModelInit, {1}));
  }
  return model;
}

inline void apply_strategy_split(const FederationConfig& config, Model& model) {
  if (!freezes_features(config.strategy)) {
    model.set_split_index(0);
    return;
  }
  const std::size_t split = config.split_index.value_or(last_dense_index(model));
  if (split >= model.layer_count())
    throw ConfigError("split_index " + std::to_string(split) + " leaves nothing trainable");
  model.set_split_index(split);
  if (model.theta().param_count() == 0)
    throw ConfigError("split_index " + std::to_string(split) + " leaves no trainable parameters");
}

inline FederationResult run_federation(const FederationConfig& config, const Dataset& source,
                                       const Dataset& train, const Dataset& test,
                                       std::span<const ClientPartition> partitions,
                                       const RunOptions& options = {}) {
  config.validate();
  train.validate();
  test.validate();
  if (partitions.size() != config.num_clients)
    throw ConfigError("expected " + std::to_string(config.num_clients) + " partitions, got " +
                      std::to_string(partitions.size()));
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    if (partitions[k].client_id != k) throw ConfigError("partitions must be ordered by client id");
    if (partitions[k].sample_indices.empty())
      throw ConfigError("client " + std::to_string(k) + " holds no data");
  }

  Model model = options.initial_model ? *options.initial_model
                                      : build_initial_model(config, source, train);
  if (model.input_width() != train.feature_dim() || model.num_classes() != train.num_classes)
    throw ConfigError("initial model does not match the target data");
  apply_strategy_split(config, model);

  FederationResult result;
  result.initial_model = model;
  const std::uint64_t master = config.master_seed;
  const SelectionStrategy selection = config.selection();
  const double p_ds = config.effective_p_ds();
  const std::size_t theta_count = model.theta().param_count();
  double cum_time = 0.0, cum_modeled = 0.0, cum_measured = 0.0;

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const auto participants = sample_participants(
        config.num_clients, config.participation_fraction,
        derive_seed(master, Stream::kParticipants, {round}));

    std::vector<ClientUpdate> updates(participants.size());
    std::vector<std::exception_ptr> failures(participants.size());
    std::vector<SelectionResult> selections(participants.size());
    std::vector<Model> client_models(options.on_client_models ? participants.size() : 0);

    auto run_client = [&](std::size_t slot) {
      const std::size_t id = participants[slot];
      const ClientPartition& part = partitions[id];
      try {
        const auto started = std::chrono::steady_clock::now();
        CostMeter meter;
        SelectionResult chosen;
        switch (selection) {
          case SelectionStrategy::kEntropy:
            chosen = select_by_entropy(model, train, part, p_ds, config.rho, &meter);
            break;
          case SelectionStrategy::kRandom:
            chosen = select_random(part, p_ds, derive_seed(master, Stream::kRandomSelection, {round}));
            break;
          case SelectionStrategy::kAll:
            chosen = select_all(part);
            break;
        }
        LocalTrainingSpec spec{config.local_epochs, config.learning_rate, config.momentum,
                               config.batch_size,
                               derive_seed(master, Stream::kClientShuffle, {round, id})};
        ClientUpdate u =
            config.strategy == Strategy::kFedProx
                ? fedprox_local_update(model, train, chosen.selected_indices, spec,
                                       config.prox_mu, id, &meter)
                : client_local_update(model, train, chosen.selected_indices, spec, id, &meter);
        u.modeled_seconds = modeled_seconds(meter);
        u.measured_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        u.train_time_seconds =
            config.clock == ClientClock::kModeled ? u.modeled_seconds : u.measured_seconds;
        if (!client_models.empty()) {
          client_models[slot] = model;
          client_models[slot].set_theta(u.theta);
        }
        updates[slot] = std::move(u);
        selections[slot] = std::move(chosen);
      } catch (...) {
        failures[slot] = std::current_exception();
      }
    };

    const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, participants.size());
    detail::parallel_for(participants.size(), workers, run_client);

    for (std::size_t s = 0; s < participants.size(); ++s) {
      if (!failures[s]) continue;
      try {
        std::rethrow_exception(failures[s]);
      } catch (const std::exception& e) {
        throw ClientFailure(round, participants[s], e.what());
      }
    }

    if (options.on_selection)
      for (std::size_t s = 0; s < participants.size(); ++s)
        options.on_selection(round, participants[s], selections[s]);
    if (options.on_client_models) options.on_client_models(round, client_models);

    RoundReport report;
    report.round = round;
    report.participating_clients = participants;
    for (const auto& u : updates) {
      report.selected_counts.push_back(u.selected_count);
      report.total_selected += u.selected_count;
      cum_time += u.train_time_seconds;
      cum_modeled += u.modeled_seconds;
      cum_measured += u.measured_seconds;
    }
    const auto weights = aggregation_weights(updates);
    for (double w : weights) report.weight_sum += w;

    const std::vector<double> theta_g = aggregate(updates);
    for (double v : theta_g)
      if (!std::isfinite(v))
        throw NumericError("round " + std::to_string(round) + ": aggregated model is not finite");
    model.set_theta(theta_g);

    const Evaluation eval = evaluate(model, test.features, test.labels);
    report.global_test_accuracy = eval.accuracy;
    report.global_test_loss = eval.loss;
    report.cumulative_client_train_time = cum_time;
    report.cumulative_modeled_seconds = cum_modeled;
    report.cumulative_measured_seconds = cum_measured;
    report.bytes_exchanged = 2ULL * participants.size() * theta_count * sizeof(double);
    result.reports.push_back(std::move(report));
  }

  result.final_model = {std::move(model), config.rounds};
  return result;
}

}  // namespace fedft
