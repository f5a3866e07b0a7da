// fedsim: command-line driver for the federated fine-tuning simulator.
//
// Settings are layered: preset, then the --config file, then flags. Every
// setting has a dotted key (federation.p_ds) usable both as an INI entry
// under its section and as a --federation.p_ds flag.

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedft/fedft.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fedft;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------- parsing

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end)
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_widths(const std::string& key, std::string text) {
  std::vector<std::size_t> out;
  std::replace(text.begin(), text.end(), ';', ',');
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

// --------------------------------------------------------------- settings

struct Setting {
  std::string key;
  std::string aliases;  // extra CLI11 names, comma separated
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

std::vector<Setting> make_settings() {
  std::vector<Setting> s;
  auto add_size = [&](std::string key, std::string help, auto field) {
    s.push_back({key, "", std::move(help),
                 [key, field](ExperimentConfig& c, const std::string& v) {
                   field(c) = parse_number<std::size_t>(key, v);
                 },
                 [field](const ExperimentConfig& c) { return json(field(c)); }});
  };
  auto add_real = [&](std::string key, std::string help, auto field, std::string aliases = {}) {
    s.push_back({key, std::move(aliases), std::move(help),
                 [key, field](ExperimentConfig& c, const std::string& v) {
                   field(c) = parse_number<double>(key, v);
                 },
                 [field](const ExperimentConfig& c) { return json(field(c)); }});
  };
  auto add_bool = [&](std::string key, std::string help, auto field) {
    s.push_back({key, "", std::move(help),
                 [key, field](ExperimentConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
                 [field](const ExperimentConfig& c) { return json(field(c)); }});
  };

  s.push_back({"federation.strategy", "--strategy",
               "fedavg | fedprox | fedft_rds | fedft_eds | fedft_all",
               [](ExperimentConfig& c, const std::string& v) { c.federation.strategy = parse_strategy(v); },
               [](const ExperimentConfig& c) { return json(std::string(to_string(c.federation.strategy))); }});
  add_size("federation.rounds", "communication rounds T", [](auto& c) -> auto& { return c.federation.rounds; });
  add_size("federation.local_epochs", "local epochs E", [](auto& c) -> auto& { return c.federation.local_epochs; });
  add_size("federation.num_clients", "number of clients N", [](auto& c) -> auto& { return c.federation.num_clients; });
  add_real("federation.participation_fraction", "fraction of clients per round",
           [](auto& c) -> auto& { return c.federation.participation_fraction; }, "--f-n");
  add_real("federation.p_ds", "fraction of local data selected per round",
           [](auto& c) -> auto& { return c.federation.p_ds; }, "--p-ds");
  add_real("federation.rho", "softmax temperature for entropy scoring",
           [](auto& c) -> auto& { return c.federation.rho; }, "--rho");
  add_real("federation.learning_rate", "SGD step size", [](auto& c) -> auto& { return c.federation.learning_rate; });
  add_real("federation.momentum", "heavy-ball momentum", [](auto& c) -> auto& { return c.federation.momentum; });
  add_real("federation.prox_mu", "FedProx proximal weight", [](auto& c) -> auto& { return c.federation.prox_mu; });
  add_size("federation.batch_size", "mini-batch size", [](auto& c) -> auto& { return c.federation.batch_size; });
  add_size("federation.pretrain_epochs", "source-domain pretraining epochs (0 = scratch)",
           [](auto& c) -> auto& { return c.federation.pretrain_epochs; });
  s.push_back({"federation.split_index", "", "first trainable layer for fedft_* (default: classifier)",
               [](ExperimentConfig& c, const std::string& v) {
                 if (v == "auto" || v.empty()) c.federation.split_index.reset();
                 else c.federation.split_index = parse_number<std::size_t>("federation.split_index", v);
               },
               [](const ExperimentConfig& c) {
                 return c.federation.split_index ? json(*c.federation.split_index) : json("auto");
               }});
  s.push_back({"federation.hidden", "", "hidden layer widths, comma separated",
               [](ExperimentConfig& c, const std::string& v) { c.federation.hidden = parse_widths("federation.hidden", v); },
               [](const ExperimentConfig& c) { return json(join_widths(c.federation.hidden)); }});
  add_real("federation.test_fraction", "held-out share of the target data",
           [](auto& c) -> auto& { return c.federation.test_fraction; });
  s.push_back({"federation.clock", "", "modeled | measured client time in reports",
               [](ExperimentConfig& c, const std::string& v) { c.federation.clock = parse_clock(v); },
               [](const ExperimentConfig& c) {
                 return json(c.federation.clock == ClientClock::kModeled ? "modeled" : "measured");
               }});

  s.push_back({"data.source", "", "source dataset file (FEDDS1); synthetic when empty",
               [](ExperimentConfig& c, const std::string& v) { c.source_path = v; },
               [](const ExperimentConfig& c) { return json(c.source_path); }});
  s.push_back({"data.target", "", "target dataset file (FEDDS1 or .csv); synthetic when empty",
               [](ExperimentConfig& c, const std::string& v) { c.target_path = v; },
               [](const ExperimentConfig& c) { return json(c.target_path); }});
  add_size("data.target_classes", "synthetic target classes", [](auto& c) -> auto& { return c.synthetic.target_classes; });
  add_size("data.clusters_per_class", "latent clusters per target class",
           [](auto& c) -> auto& { return c.synthetic.clusters_per_class; });
  add_size("data.source_clusters", "latent clusters, one source class each",
           [](auto& c) -> auto& { return c.synthetic.source_clusters; });
  add_size("data.latent_dim", "latent dimension", [](auto& c) -> auto& { return c.synthetic.latent_dim; });
  add_size("data.feature_dim", "observed feature dimension", [](auto& c) -> auto& { return c.synthetic.feature_dim; });
  add_real("data.cluster_spread", "spread of cluster centres", [](auto& c) -> auto& { return c.synthetic.cluster_spread; });
  add_real("data.within_cluster", "spread inside a cluster", [](auto& c) -> auto& { return c.synthetic.within_cluster; });
  add_real("data.feature_noise", "isotropic feature noise", [](auto& c) -> auto& { return c.synthetic.feature_noise; });
  add_real("data.domain_shift", "target-domain cluster shift", [](auto& c) -> auto& { return c.synthetic.domain_shift; });
  add_size("data.source_samples_per_cluster", "source samples per cluster",
           [](auto& c) -> auto& { return c.synthetic.source_samples_per_cluster; });
  add_size("data.target_samples_per_class", "target samples per class",
           [](auto& c) -> auto& { return c.synthetic.target_samples_per_class; });

  add_real("partition.alpha", "Dirichlet concentration (smaller = more skewed)",
           [](auto& c) -> auto& { return c.alpha; }, "--alpha");

  add_bool("analysis.cka", "write first-round client CKA matrices", [](auto& c) -> auto& { return c.cka; });
  add_bool("analysis.entropy_histogram", "write an entropy histogram of the final model",
           [](auto& c) -> auto& { return c.entropy_histogram; });
  add_bool("analysis.selection_dump", "write per-sample selection decisions",
           [](auto& c) -> auto& { return c.selection_dump; });
  add_size("analysis.histogram_bins", "entropy histogram bins", [](auto& c) -> auto& { return c.histogram_bins; });
  add_real("analysis.histogram_rho", "temperature for the entropy histogram",
           [](auto& c) -> auto& { return c.histogram_rho; });
  return s;
}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> s = make_settings();
  return s;
}

const Setting& find_setting(const std::string& key) {
  for (const auto& s : settings())
    if (s.key == key) return s;
  throw ConfigError("unknown setting '" + key + "'");
}

// ------------------------------------------------------------ common flags

struct CommonFlags {
  std::string config_path;
  std::string preset = "desk-default";
  std::uint64_t seed = 0;
  std::string out = "fedsim_out";
  std::size_t threads = 1;
  std::map<std::string, std::string> overrides;  // storage bound to CLI11
  std::map<std::string, CLI::Option*> options;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_settings = true) {
  cmd->add_option("--config", f.config_path, "INI file with [federation], [data], [partition], [analysis]")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", f.preset, "desk-default | desk-alpha05 | smoke")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master seed")->capture_default_str();
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--threads", f.threads, "worker threads for client updates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  if (!with_settings) return;
  for (const auto& s : settings()) {
    std::string names = "--" + s.key + (s.aliases.empty() ? "" : "," + s.aliases);
    f.options[s.key] = cmd->add_option(names, f.overrides[s.key], s.help)->group("Settings");
  }
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = make_preset(f.preset);
  c.federation.master_seed = f.seed;
  std::set<std::string> explicit_keys;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw ConfigError("cannot read config '" + f.config_path + "'");
    for (const auto& item : CLI::ConfigINI().from_config(in)) {
      if (item.name == "++" || item.name == "--") continue;  // section markers
      std::string key;
      for (const auto& p : item.parents) key += p + ".";
      key += item.name;
      if (item.inputs.size() != 1) throw ConfigError(key + ": expected a single value");
      find_setting(key).set(c, item.inputs.front());
      explicit_keys.insert(key);
    }
  }
  for (const auto& [key, opt] : f.options)
    if (opt->count() > 0) {
      find_setting(key).set(c, f.overrides.at(key));
      explicit_keys.insert(key);
    }
  // Presets carry p_ds for the selection strategies; the baselines train on
  // everything unless p_ds was asked for.
  const auto s = c.federation.strategy;
  if (!explicit_keys.contains("federation.p_ds") && (s == Strategy::kFedAvg || s == Strategy::kFedProx))
    c.federation.p_ds = 1.0;
  c.validate();
  return c;
}

json config_snapshot(const ExperimentConfig& c, const CommonFlags& f) {
  json j;
  j["preset"] = f.preset;
  j["master_seed"] = c.federation.master_seed;
  for (const auto& s : settings()) {
    const auto dot = s.key.find('.');
    j[s.key.substr(0, dot)][s.key.substr(dot + 1)] = s.get(c);
  }
  return j;
}

// --------------------------------------------------------------- artifacts

std::string sha256_hex(std::span<const char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects emitted files and writes the manifest last.
class Artifacts {
 public:
  Artifacts(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory '" + dir_.string() + "': " + ec.message());
    started_ = utc_now();
  }

  void write(const std::string& name, std::span<const char> bytes) {
    io::write_file((dir_ / name).string(), bytes);
    files_.push_back({{"file", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    spdlog::debug("wrote {}", (dir_ / name).string());
  }
  void write_text(const std::string& name, const std::string& text) {
    write(name, std::span<const char>(text.data(), text.size()));
  }

  void dataset_digest(const std::string& role, const Dataset& ds, const std::string& origin) {
    datasets_[role] = {{"sha256", sha256_hex(encode_dataset(ds))}, {"origin", origin}};
  }

  void finish(const json& config, std::uint64_t seed) {
    json m;
    m["tool"] = "fedsim";
    m["version"] = kToolVersion;
    m["command"] = command_;
    m["master_seed"] = seed;
    m["started_at"] = started_;
    m["finished_at"] = utc_now();
    m["config"] = config;
    m["datasets"] = datasets_;
    m["outputs"] = files_;
    const std::string text = m.dump(2) + "\n";
    const fs::path tmp = dir_ / "manifest.json.tmp";
    io::write_file(tmp.string(), std::span<const char>(text.data(), text.size()));
    fs::rename(tmp, dir_ / "manifest.json");
    spdlog::info("manifest written to {}", (dir_ / "manifest.json").string());
  }

 private:
  fs::path dir_;
  std::string command_;
  std::string started_;
  json files_ = json::array();
  json datasets_ = json::object();
};

Dataset load_any(const std::string& path, std::size_t num_classes = 0) {
  if (fs::path(path).extension() == ".csv") return load_dataset_csv(path, num_classes);
  return load_dataset(path);
}

ExperimentData load_data(const ExperimentConfig& c, Artifacts& art) {
  ExperimentData d;
  if (c.source_path.empty()) {
    d = synthesize(c);
    art.dataset_digest("source", d.source, "synthetic");
    art.dataset_digest("target", d.target, "synthetic");
  } else {
    d.source = load_any(c.source_path);
    d.target = load_any(c.target_path);
    art.dataset_digest("source", d.source, c.source_path);
    art.dataset_digest("target", d.target, c.target_path);
  }
  spdlog::info("source: {} samples, {} classes; target: {} samples, {} classes", d.source.size(),
               d.source.num_classes, d.target.size(), d.target.num_classes);
  partition(c, d);
  return d;
}

std::vector<char> to_bytes(const std::string& s) { return {s.begin(), s.end()}; }

// ---------------------------------------------------------------- commands

int cmd_generate(const CommonFlags& f) {
  const ExperimentConfig c = resolve(f);
  if (!c.source_path.empty()) throw ConfigError("generate writes synthetic data; unset data.source");
  Artifacts art(f.out, "generate");
  ExperimentData d = synthesize(c);
  art.write("source.fds", encode_dataset(d.source));
  art.write("target.fds", encode_dataset(d.target));
  art.dataset_digest("source", d.source, "synthetic");
  art.dataset_digest("target", d.target, "synthetic");
  art.finish(config_snapshot(c, f), c.federation.master_seed);
  std::cout << "wrote " << (fs::path(f.out) / "source.fds").string() << " and "
            << (fs::path(f.out) / "target.fds").string() << "\n";
  return 0;
}

void write_cka(Artifacts& art, const ClientCka& cka) {
  for (const auto& m : cka.matrices) {
    std::ostringstream out;
    write_cka_csv(out, m, cka.clients);
    art.write_text("cka_" + std::string(to_string(m.level)) + ".csv", out.str());
    std::cout << "cka " << to_string(m.level) << " mean_off_diagonal "
              << format_fixed(m.mean_off_diagonal(), 6) << "\n";
  }
}

int cmd_run(const CommonFlags& f) {
  const ExperimentConfig c = resolve(f);
  Artifacts art(f.out, "run");
  const ExperimentData d = load_data(c, art);

  RunOptions options;
  options.threads = f.threads;
  std::ostringstream selection;
  if (c.selection_dump) {
    selection << kSelectionHeader << '\n';
    options.on_selection = [&](std::size_t round, std::size_t client, const SelectionResult& sel) {
      write_selection_rows(selection, round, client, d.federation.partitions[client], sel);
    };
  }
  spdlog::info("running {} for {} rounds on {} clients", to_string(c.federation.strategy),
               c.federation.rounds, c.federation.num_clients);
  const FederationResult result = run_experiment(c, d, options);
  for (const auto& r : result.reports)
    spdlog::info("round {:>3}  acc {:.4f}  loss {:.4f}  client time {:.4f}s", r.round,
                 r.global_test_accuracy, r.global_test_loss, r.cumulative_client_train_time);

  std::ostringstream csv;
  write_reports_csv(csv, c.federation.strategy, result.reports);
  art.write_text("reports.csv", csv.str());
  art.write("final_model.ckpt", encode_checkpoint(result.final_model.model));
  if (c.selection_dump) art.write_text("selection.csv", selection.str());
  if (c.cka) write_cka(art, first_round_cka(c, d, options));
  if (c.entropy_histogram) {
    std::ostringstream out;
    write_histogram_csv(out, entropy_histogram(result.final_model.model, d.federation.train,
                                               c.histogram_rho, c.histogram_bins));
    art.write_text("entropy_hist.csv", out.str());
  }
  art.finish(config_snapshot(c, f), c.federation.master_seed);

  if (!result.reports.empty()) {
    const auto& last = result.reports.back();
    std::cout << "final test accuracy " << format_fixed(last.global_test_accuracy, 4)
              << ", client time " << format_fixed(last.cumulative_client_train_time, 4) << "s\n";
  } else {
    std::cout << "no rounds run; wrote the initial model\n";
  }
  return 0;
}

int cmd_analyze_cka(const CommonFlags& f) {
  const ExperimentConfig c = resolve(f);
  Artifacts art(f.out, "analyze-cka");
  const ExperimentData d = load_data(c, art);
  RunOptions options;
  options.threads = f.threads;
  write_cka(art, first_round_cka(c, d, options));
  art.finish(config_snapshot(c, f), c.federation.master_seed);
  return 0;
}

int cmd_entropy_hist(const CommonFlags& f, const std::string& checkpoint) {
  const ExperimentConfig c = resolve(f);
  Artifacts art(f.out, "entropy-hist");
  const ExperimentData d = load_data(c, art);
  Model model = checkpoint.empty()
                    ? build_initial_model(c.federation, d.source, d.federation.train)
                    : load_checkpoint(checkpoint);
  const auto h = entropy_histogram(model, d.federation.train, c.histogram_rho, c.histogram_bins);
  std::ostringstream out;
  write_histogram_csv(out, h);
  art.write_text("entropy_hist.csv", out.str());
  art.finish(config_snapshot(c, f), c.federation.master_seed);
  std::cout << out.str();
  return 0;
}

struct RunSummary {
  std::string dir;
  json manifest;
  std::vector<ReportRow> rows;
};

int cmd_compare(const std::vector<std::string>& dirs, double threshold, const std::string& out_dir) {
  if (dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  std::vector<RunSummary> runs;
  for (const auto& dir : dirs) {
    RunSummary r{dir, {}, {}};
    std::ifstream m(fs::path(dir) / "manifest.json");
    if (!m) throw Error("'" + dir + "' has no manifest.json");
    r.manifest = json::parse(m);
    std::ifstream csv(fs::path(dir) / "reports.csv");
    if (!csv) throw Error("'" + dir + "' has no reports.csv");
    r.rows = read_reports_csv(csv);
    runs.push_back(std::move(r));
  }
  for (const char* role : {"source", "target"}) {
    const auto ref = runs[0].manifest["datasets"][role]["sha256"];
    for (const auto& r : runs)
      if (r.manifest["datasets"][role]["sha256"] != ref) {
        spdlog::error("{} dataset differs between '{}' and '{}'; refusing to compare", role,
                      runs[0].dir, r.dir);
        return 3;
      }
  }

  std::ostringstream table;
  table << "run,strategy,p_ds,f_n,best_acc,learning_efficiency,rounds_to_threshold\n";
  for (const auto& r : runs) {
    const auto& fed = r.manifest["config"]["federation"];
    double best = 0.0;
    std::optional<std::size_t> reached;
    for (const auto& row : r.rows) {
      best = std::max(best, row.test_acc);
      if (!reached && row.test_acc >= threshold) reached = row.round;
    }
    const double time = r.rows.empty() ? 0.0 : r.rows.back().cum_client_time_s;
    table << r.dir << ',' << fed["strategy"].get<std::string>() << ','
          << format_general(fed["p_ds"].get<double>()) << ','
          << format_general(fed["participation_fraction"].get<double>()) << ','
          << format_fixed(best, 4) << ','
          << (time > 0.0 ? format_fixed(100.0 * best / time, 6) : std::string("NA")) << ','
          << (reached ? std::to_string(*reached) : std::string("NA")) << '\n';
  }
  std::cout << table.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string text = table.str();
    io::write_file((fs::path(out_dir) / "compare.csv").string(),
                   std::span<const char>(text.data(), text.size()));
  }
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("fedsim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("FEDSIM_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off")
      spdlog::warn("FEDSIM_LOG='{}' is not a level; keeping info", env);
    else
      spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Federated fine-tuning simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonFlags gen_f, run_f, cka_f, hist_f;
  auto* gen = app.add_subcommand("generate", "write synthetic source and target datasets");
  add_common(gen, gen_f);
  auto* run = app.add_subcommand("run", "run a federation and write reports, checkpoint, manifest");
  add_common(run, run_f);
  auto* cka = app.add_subcommand("analyze-cka", "pairwise CKA of first-round client models");
  add_common(cka, cka_f);
  auto* hist = app.add_subcommand("entropy-hist", "entropy histogram of a model on the client data");
  add_common(hist, hist_f);
  std::string checkpoint;
  hist->add_option("--checkpoint", checkpoint, "model to score (default: the initial global model)")
      ->check(CLI::ExistingFile);

  auto* cmp = app.add_subcommand("compare", "summarize two or more run directories");
  std::vector<std::string> dirs;
  double threshold = 0.8;
  std::string cmp_out;
  cmp->add_option("runs", dirs, "run output directories")->required()->expected(2, -1);
  cmp->add_option("--threshold", threshold, "accuracy for rounds-to-threshold")->capture_default_str();
  cmp->add_option("--out", cmp_out, "also write compare.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_f);
    if (run->parsed()) return cmd_run(run_f);
    if (cka->parsed()) return cmd_analyze_cka(cka_f);
    if (hist->parsed()) return cmd_entropy_hist(hist_f, checkpoint);
    if (cmp->parsed()) return cmd_compare(dirs, threshold, cmp_out);
  } catch (const ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
