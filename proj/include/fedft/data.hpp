#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedft/binary_io.hpp"
#include "fedft/errors.hpp"
#include "fedft/random.hpp"
#include "fedft/tensor.hpp"

namespace fedft {

struct Dataset {
  Tensor2 features;                 // n x d
  std::vector<std::size_t> labels;  // length n, each < num_classes
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }

  void validate() const {
    if (labels.empty()) throw ParameterError("dataset '" + name + "' is empty");
    if (features.rows() != labels.size())
      throw ShapeError("dataset '" + name + "': feature rows != label count");
    if (num_classes == 0) throw ParameterError("dataset '" + name + "': zero classes");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= num_classes)
        throw ParameterError("dataset '" + name + "': label " + std::to_string(labels[i]) +
                             " at row " + std::to_string(i) + " >= num_classes");
    if (!features.all_finite()) throw NumericError("dataset '" + name + "': non-finite feature");
  }

  // Name is descriptive only.
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.features == b.features && a.labels == b.labels && a.num_classes == b.num_classes;
  }
};

// Rows of `parent` at `indices`, in that order.
inline Dataset subset(const Dataset& parent, std::span<const std::size_t> indices,
                      std::string name = {}) {
  Dataset out;
  out.features = parent.features.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(parent.labels.at(i));
  out.num_classes = parent.num_classes;
  out.name = name.empty() ? parent.name : std::move(name);
  return out;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

namespace detail {

inline std::vector<double> random_on_sphere(std::size_t dim, double radius, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x *= radius / norm;
  return v;
}

}  // namespace detail

// One unit-covariance Gaussian blob per class; class means uniform on the
// sphere of radius `class_separation`. Rows are grouped by class.
inline Dataset generate_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                                  std::size_t feature_dim, double class_separation,
                                  std::uint64_t seed) {
  if (num_classes == 0 || samples_per_class == 0 || feature_dim == 0)
    throw ParameterError("generate_synthetic: counts must be >= 1");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation))
    throw ParameterError("generate_synthetic: separation must be >= 0");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < num_classes; ++c)
    means.push_back(detail::random_on_sphere(feature_dim, class_separation, rng));

  Dataset ds;
  ds.num_classes = num_classes;
  ds.name = "synthetic";
  ds.features = Tensor2(num_classes * samples_per_class, feature_dim);
  ds.labels.reserve(num_classes * samples_per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      auto row = ds.features.row(ds.labels.size());
      for (std::size_t j = 0; j < feature_dim; ++j) row[j] = means[c][j] + normal(rng);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

// A related pair of domains for pretrain-then-fine-tune experiments.
//
// Both domains are built from one set of latent clusters embedded in
// feature space through a shared random linear map plus isotropic noise.
// The source labels every cluster separately (fine-grained); the target
// groups `clusters_per_class` clusters into each of its classes (coarse,
// not linearly separable in the raw input) and sees every cluster centre
// displaced by a random offset of norm `domain_shift`.
struct DomainPairSpec {
  std::size_t target_classes = 10;
  std::size_t clusters_per_class = 3;
  std::size_t source_clusters = 40;
  std::size_t latent_dim = 4;
  std::size_t feature_dim = 32;
  double cluster_spread = 2.5;  // std-dev of cluster centres in latent space
  double within_cluster = 0.6;   // std-dev of samples around their centre
  double feature_noise = 0.2;    // isotropic noise added after embedding
  double domain_shift = 0.3;
  std::size_t source_samples_per_cluster = 150;
  std::size_t target_samples_per_class = 150;
  std::uint64_t seed = 0;

  void validate() const {
    if (target_classes == 0 || clusters_per_class == 0 || latent_dim == 0 || feature_dim == 0 ||
        source_samples_per_cluster == 0 || target_samples_per_class == 0)
      throw ParameterError("domain pair: counts must be >= 1");
    if (target_classes * clusters_per_class > source_clusters)
      throw ParameterError("domain pair: target needs " +
                           std::to_string(target_classes * clusters_per_class) +
                           " clusters but the source has " + std::to_string(source_clusters));
    for (double v : {cluster_spread, within_cluster, feature_noise, domain_shift})
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ParameterError("domain pair: scales must be finite and >= 0");
  }
};

struct DomainPair {
  Dataset source;
  Dataset target;
};

inline DomainPair generate_domain_pair(const DomainPairSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal;

  Tensor2 embed(spec.feature_dim, spec.latent_dim);
  for (double& v : embed.values()) v = normal(rng) / std::sqrt(static_cast<double>(spec.latent_dim));

  std::vector<std::vector<double>> centres(spec.source_clusters,
                                           std::vector<double>(spec.latent_dim));
  for (auto& c : centres)
    for (double& v : c) v = spec.cluster_spread * normal(rng);

  std::vector<std::size_t> cluster_order(spec.source_clusters);
  std::iota(cluster_order.begin(), cluster_order.end(), std::size_t{0});
  std::shuffle(cluster_order.begin(), cluster_order.end(), rng);

  std::vector<double> latent(spec.latent_dim);
  auto emit = [&](std::span<double> row, const std::vector<double>& centre,
                  const std::vector<double>* shift) {
    for (std::size_t k = 0; k < spec.latent_dim; ++k)
      latent[k] = centre[k] + (shift ? (*shift)[k] : 0.0) + spec.within_cluster * normal(rng);
    for (std::size_t j = 0; j < spec.feature_dim; ++j) {
      double acc = spec.feature_noise * normal(rng);
      auto e = embed.row(j);
      for (std::size_t k = 0; k < spec.latent_dim; ++k) acc += e[k] * latent[k];
      row[j] = acc;
    }
  };

  DomainPair pair;
  Dataset& src = pair.source;
  src.name = "source";
  src.num_classes = spec.source_clusters;
  src.features = Tensor2(spec.source_clusters * spec.source_samples_per_cluster, spec.feature_dim);
  for (std::size_t c = 0; c < spec.source_clusters; ++c)
    for (std::size_t s = 0; s < spec.source_samples_per_cluster; ++s) {
      emit(src.features.row(src.labels.size()), centres[c], nullptr);
      src.labels.push_back(c);
    }

  std::vector<std::vector<double>> shifts;
  for (std::size_t c = 0; c < spec.source_clusters; ++c)
    shifts.push_back(detail::random_on_sphere(spec.latent_dim, spec.domain_shift, rng));

  Dataset& tgt = pair.target;
  tgt.name = "target";
  tgt.num_classes = spec.target_classes;
  tgt.features = Tensor2(spec.target_classes * spec.target_samples_per_class, spec.feature_dim);
  std::uniform_int_distribution<std::size_t> pick(0, spec.clusters_per_class - 1);
  for (std::size_t c = 0; c < spec.target_classes; ++c)
    for (std::size_t s = 0; s < spec.target_samples_per_class; ++s) {
      const std::size_t cluster = cluster_order[c * spec.clusters_per_class + pick(rng)];
      emit(tgt.features.row(tgt.labels.size()), centres[cluster], &shifts[cluster]);
      tgt.labels.push_back(c);
    }
  return pair;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Per-class split: round(test_fraction * n_c) samples of each class go to test.
inline TrainTestSplit stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ParameterError("test_fraction must lie in [0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& members : indices_by_class(ds)) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(members.size())));
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + n_test);
    train_idx.insert(train_idx.end(), members.begin() + n_test, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {subset(ds, train_idx, ds.name + "-train"), subset(ds, test_idx, ds.name + "-test")};
}

struct ClientPartition {
  std::size_t client_id = 0;
  std::vector<std::size_t> sample_indices;  // ascending, into the parent dataset

  friend bool operator==(const ClientPartition&, const ClientPartition&) = default;
};

struct PartitionSpec {
  std::size_t num_clients = 1;
  double alpha = 0.5;
  std::uint64_t seed = 0;
};

// Largest-remainder apportionment of `total` items by `weights` (sum > 0).
// Ties in the fractional part go to the lower index.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = static_cast<double>(total) * weights[k] / sum;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned)
    ++counts[remainders[i % remainders.size()].second];
  return counts;
}

// Per class, draw shares q ~ Dir(alpha * 1_N) over the clients and deal the
// (shuffled) class members out in client order by largest-remainder counts.
// A client left empty receives one sample from the currently largest client.
inline std::vector<ClientPartition> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
  if (ds.size() == 0) throw ParameterError("dirichlet_partition: empty dataset");
  if (spec.num_clients == 0) throw ParameterError("dirichlet_partition: need at least one client");
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha))
    throw ParameterError("dirichlet_partition: alpha must be positive");
  if (spec.num_clients > ds.size())
    throw ParameterError("dirichlet_partition: " + std::to_string(spec.num_clients) +
                         " clients cannot all be nonempty with " + std::to_string(ds.size()) +
                         " samples");

  const std::size_t n_clients = spec.num_clients;
  Rng rng(spec.seed);
  std::gamma_distribution<double> gamma(spec.alpha, 1.0);
  std::vector<std::vector<std::size_t>> owned(n_clients);
  std::vector<double> shares(n_clients);

  for (auto& members : indices_by_class(ds)) {
    std::shuffle(members.begin(), members.end(), rng);
    double sum = 0.0;
    for (double& q : shares) sum += (q = gamma(rng));
    if (!(sum > 0.0)) {
      // Every draw underflowed; the limit of Dir(alpha -> 0) is a single vertex.
      std::fill(shares.begin(), shares.end(), 0.0);
      shares[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(rng)] = 1.0;
    }
    const auto counts = apportion(members.size(), shares);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      owned[k].insert(owned[k].end(), members.begin() + static_cast<std::ptrdiff_t>(cursor),
                      members.begin() + static_cast<std::ptrdiff_t>(cursor + counts[k]));
      cursor += counts[k];
    }
  }

  for (std::size_t k = 0; k < n_clients; ++k) {
    if (!owned[k].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t j = 1; j < n_clients; ++j)
      if (owned[j].size() > owned[donor].size()) donor = j;
    owned[k].push_back(owned[donor].back());
    owned[donor].pop_back();
  }

  std::vector<ClientPartition> parts(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) {
    parts[k].client_id = k;
    parts[k].sample_indices = std::move(owned[k]);
    std::sort(parts[k].sample_indices.begin(), parts[k].sample_indices.end());
  }
  return parts;
}

// Empirical label distribution of `indices` within `ds`.
inline std::vector<double> label_distribution(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<double> p(ds.num_classes, 0.0);
  if (indices.empty()) return p;
  for (std::size_t i : indices) p[ds.labels.at(i)] += 1.0;
  for (double& v : p) v /= static_cast<double>(indices.size());
  return p;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Binary dataset file:
//   "FEDDS1"  6 bytes
//   n, d, num_classes     u64 each
//   features  n*d f64, row-major
//   labels    n u16

inline constexpr std::string_view kDatasetMagic = "FEDDS1";

inline std::vector<char> encode_dataset(const Dataset& ds) {
  ds.validate();
  if (ds.num_classes > 65536) throw ParameterError("dataset: labels must fit in 16 bits");
  io::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u64(ds.size());
  w.u64(ds.feature_dim());
  w.u64(ds.num_classes);
  w.f64s(ds.features.values());
  for (std::size_t l : ds.labels) w.u16(static_cast<std::uint16_t>(l));
  return w.buffer();
}

inline Dataset decode_dataset(std::span<const char> bytes, std::string name = "dataset") {
  io::ByteReader r(bytes);
  r.expect_magic(kDatasetMagic);
  const auto n = r.u64("sample_count");
  const auto d = r.u64("feature_dim");
  const std::size_t classes_at = r.offset();
  const auto k = r.u64("num_classes");
  if (n == 0) throw FormatError("sample_count", 6, "dataset must hold at least one sample");
  if (d == 0) throw FormatError("feature_dim", 14, "feature dimension must be >= 1");
  if (k == 0 || k > 65536) throw FormatError("num_classes", classes_at, "out of range");
  if (d > r.remaining()) throw FormatError("features", r.offset(), "truncated payload");
  r.require_elements(n, d * 8 + 2, "features");

  Dataset ds;
  ds.name = std::move(name);
  ds.num_classes = k;
  std::vector<double> values(n * d);
  for (double& v : values) v = r.f64("features");
  ds.features = Tensor2(n, d, std::move(values));
  ds.labels.resize(n);
  for (auto& l : ds.labels) {
    const std::size_t at = r.offset();
    l = r.u16("labels");
    if (l >= k)
      throw FormatError("labels", at, "label " + std::to_string(l) + " >= num_classes " +
                                          std::to_string(k));
  }
  r.expect_end();
  if (!ds.features.all_finite()) throw FormatError("features", 30, "non-finite feature value");
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  io::write_file(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) {
  return decode_dataset(io::read_file(path), std::filesystem::path(path).stem().string());
}

// CSV import with header `f0,...,fD,label`. When num_classes is 0 it is
// inferred as max(label) + 1.
inline Dataset load_dataset_csv(const std::string& path, std::size_t num_classes = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw FormatError("header", 0, "empty file");
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (columns < 2 || line.substr(line.rfind(',') + 1) != "label")
    throw FormatError("header", 0, "expected f0,...,fD,label");
  offset += line.size() + 1;

  const std::size_t d = columns - 1;
  std::vector<double> values;
  Dataset ds;
  ds.name = std::filesystem::path(path).stem().string();
  while (std::getline(in, line)) {
    const std::size_t line_len = line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += line_len;
      continue;
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t c = 0; c < columns; ++c) {
      const char* stop = std::find(p, end, ',');
      const std::size_t at = offset + static_cast<std::size_t>(p - line.data());
      if (c + 1 < columns && stop == end)
        throw FormatError("row", at, "expected " + std::to_string(columns) + " fields");
      if (c + 1 == columns && stop != end) throw FormatError("row", at, "too many fields");
      if (c < d) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(p, stop, v);
        if (ec != std::errc() || ptr != stop || !std::isfinite(v))
          throw FormatError("feature", at, "not a finite number");
        values.push_back(v);
      } else {
        std::size_t label = 0;
        auto [ptr, ec] = std::from_chars(p, stop, label);
        if (ec != std::errc() || ptr != stop) throw FormatError("label", at, "not a class index");
        if (num_classes != 0 && label >= num_classes)
          throw FormatError("label", at, "label >= num_classes");
        ds.labels.push_back(label);
      }
      p = stop + 1;
    }
    offset += line_len;
  }
  if (ds.labels.empty()) throw FormatError("rows", offset, "no data rows");
  ds.num_classes =
      num_classes != 0 ? num_classes : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.features = Tensor2(ds.labels.size(), d, std::move(values));
  return ds;
}

}  // namespace fedft
