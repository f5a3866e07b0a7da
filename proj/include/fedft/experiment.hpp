#pragma once

// Named experiment presets and the glue that turns one into data plus a
// federation run. Shared by the command-line driver and the acceptance suite
// so both exercise exactly the same configurations.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedft/analysis.hpp"
#include "fedft/data.hpp"
#include "fedft/errors.hpp"
#include "fedft/federation.hpp"
#include "fedft/random.hpp"

namespace fedft {

struct ExperimentConfig {
  FederationConfig federation;
  DomainPairSpec synthetic;  // used when no dataset paths are given
  double alpha = 0.1;        // Dirichlet concentration of the client split
  std::string source_path;
  std::string target_path;
  bool cka = false;
  bool entropy_histogram = false;
  bool selection_dump = false;
  std::size_t histogram_bins = 20;
  double histogram_rho = 0.1;

  void validate() const {
    federation.validate();
    synthetic.validate();
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("partition.alpha must be positive");
    if (source_path.empty() != target_path.empty())
      throw ConfigError("data.source and data.target must be given together");
    if (histogram_bins < 2) throw ConfigError("analysis.histogram_bins must be >= 2");
    if (!(histogram_rho > 0.0)) throw ConfigError("analysis.histogram_rho must be positive");
  }
};

inline constexpr std::array<std::string_view, 3> kPresetNames{"desk-default", "desk-alpha05",
                                                              "smoke"};

// Scaled-down defaults: E=5, lr=0.1, momentum=0.5, rho=0.1 with N=20, T=30.
inline ExperimentConfig make_preset(std::string_view name) {
  ExperimentConfig c;
  c.federation.strategy = Strategy::kFedFtEds;
  c.federation.p_ds = 0.5;
  if (name == "desk-default") return c;
  if (name == "desk-alpha05") {
    c.alpha = 0.5;
    return c;
  }
  if (name == "smoke") {
    c.federation.rounds = 5;
    c.federation.local_epochs = 2;
    c.federation.num_clients = 4;
    c.federation.pretrain_epochs = 10;
    c.federation.hidden = {16, 16};
    c.synthetic.source_samples_per_cluster = 10;
    c.synthetic.target_samples_per_class = 30;
    c.alpha = 0.5;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

struct ExperimentData {
  Dataset source;
  Dataset target;
  FederationData federation;
};

// Synthetic pair seeded from the master seed, then the held-out split and
// the client partition.
inline ExperimentData synthesize(const ExperimentConfig& config) {
  DomainPairSpec spec = config.synthetic;
  spec.seed = derive_seed(config.federation.master_seed, Stream::kDataGeneration);
  DomainPair pair = generate_domain_pair(spec);
  pair.source.name = "source";
  pair.target.name = "target";
  return {std::move(pair.source), std::move(pair.target), {}};
}

inline void partition(const ExperimentConfig& config, ExperimentData& data) {
  const auto& f = config.federation;
  data.federation =
      prepare_federation_data(data.target, f.num_clients, config.alpha, f.test_fraction, f.master_seed);
}

inline FederationResult run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                       const RunOptions& options = {}) {
  const auto& fd = data.federation;
  return run_federation(config.federation, data.source, fd.train, fd.test, fd.partitions, options);
}

struct ClientCka {
  std::vector<std::size_t> clients;
  std::vector<CkaMatrix> matrices;  // low, mid, up
};

// Pairwise CKA of the client models produced by the first round, probed on
// the held-out split.
inline ClientCka first_round_cka(ExperimentConfig config, const ExperimentData& data,
                                 const RunOptions& base = {}) {
  config.federation.rounds = 1;
  ClientCka out;
  std::vector<Model> models;
  RunOptions options = base;
  options.on_client_models = [&](std::size_t, const std::vector<Model>& m) { models = m; };
  auto result = run_experiment(config, data, options);
  out.clients = result.reports.front().participating_clients;
  for (LayerLevel level : {LayerLevel::kLow, LayerLevel::kMid, LayerLevel::kUp})
    out.matrices.push_back(pairwise_cka(models, data.federation.test.features, level));
  return out;
}

}  // namespace fedft
