// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Optional argv[1] is the fedsim binary, used to check
// report determinism through the command-line driver as well.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fedft/fedft.hpp"
#include "oracles.hpp"

using namespace fedft;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v, int precision = 3) { return format_fixed(v, precision); }
std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ C1

Verdict numerics() {
  Verdict v;
  Rng rng(101);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_int_distribution<std::size_t> width(2, 12);

  double worst_shift = 0.0, worst_rho1 = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> z(width(rng));
    for (double& x : z) x = normal(rng);
    const double c = normal(rng) * 100.0;
    std::vector<double> shifted = z;
    for (double& x : shifted) x += c;
    const auto p = softmax_with_temperature(z, 1.0);
    const auto q = softmax_with_temperature(shifted, 1.0);
    const auto r = oracle::reference_softmax(z, 1.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      worst_shift = std::max(worst_shift, std::abs(p[i] - q[i]));
      worst_rho1 = std::max(worst_rho1, std::abs(p[i] - r[i]));
    }
  }
  v.require(worst_shift <= 1e-12, "shift invariance " + sci(worst_shift));
  v.require(worst_rho1 <= 1e-12, "rho=1 equivalence " + sci(worst_rho1));
  v.note("shift " + sci(worst_shift) + ", rho=1 " + sci(worst_rho1));

  const std::vector<double> rhos{0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  std::size_t monotone = 0;
  std::normal_distribution<double> unit;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> z(width(rng));
    for (double& x : z) x = unit(rng);  // continuous draws: entries are distinct
    bool ok = true;
    for (std::size_t k = 1; k < rhos.size(); ++k)
      ok &= compute_entropy(softmax_with_temperature(z, rhos[k - 1])) <
            compute_entropy(softmax_with_temperature(z, rhos[k]));
    monotone += ok;
  }
  v.require(monotone == 1000, "entropy monotone in rho on " + std::to_string(monotone) + "/1000");
  v.note("entropy monotone " + std::to_string(monotone) + "/1000");

  double worst_uniform = 0.0;
  for (std::size_t n = 2; n <= 100; ++n)
    worst_uniform = std::max(worst_uniform,
                             std::abs(compute_entropy(std::vector<double>(n, 1.0 / n)) - std::log(double(n))));
  std::vector<double> one_hot(7, 0.0);
  one_hot[3] = 1.0;
  const double hot = compute_entropy(one_hot);
  v.require(worst_uniform <= 1e-12, "uniform entropy " + sci(worst_uniform));
  v.require(std::abs(hot) <= 1e-12, "one-hot entropy " + sci(hot));

  // Random single-coordinate probes of the analytic gradient.
  double worst_fd = 0.0;
  std::uniform_int_distribution<std::size_t> small(2, 7);
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t in = small(rng), classes = small(rng);
    std::vector<std::size_t> hidden(1 + rng() % 2);
    for (auto& h : hidden) h = small(rng) + 2;
    Model m = make_mlp({in, hidden, classes}, rng());
    m.set_split_index(rng() % 2 == 0 ? 0 : last_dense_index(m));
    // Zero-initialised biases can leave a pre-activation exactly on a ReLU
    // kink, where central differences are meaningless. Jitter to a generic point.
    auto jittered = m.theta().flatten();
    for (double& e : jittered) e += 0.1 * unit(rng);
    m.set_theta(jittered);
    Tensor2 x(1 + rng() % 6, in);
    for (double& e : x.values()) e = unit(rng);
    std::vector<std::size_t> y(x.rows());
    for (auto& l : y) l = rng() % classes;
    const auto g = backward(m, forward(m, x), y).values;
    const std::size_t i = rng() % g.size();

    Model probe_model = m;
    auto theta = probe_model.theta().flatten();
    const double h = 1e-5, saved = theta[i];
    theta[i] = saved + h;
    probe_model.set_theta(theta);
    const double up = oracle::reference_mean_loss(probe_model, x, y);
    theta[i] = saved - h;
    probe_model.set_theta(theta);
    const double down = oracle::reference_mean_loss(probe_model, x, y);
    worst_fd = std::max(worst_fd, oracle::relative_error(g[i], (up - down) / (2 * h)));
  }
  v.require(worst_fd < 1e-5, "finite differences " + sci(worst_fd));
  v.note("FD worst rel err " + sci(worst_fd));
  return v;
}

// ------------------------------------------------------------------ C2

Verdict oracles() {
  Verdict v;
  Rng rng(202);
  std::uniform_int_distribution<std::size_t> size(1, 150), classes(2, 10), dim(2, 8);
  std::uniform_real_distribution<double> frac(0.01, 1.0), temp(0.05, 3.0);
  std::size_t matches = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = classes(rng), d = dim(rng);
    Dataset ds = generate_synthetic(k, 20, d, 2.0, rng());
    Model m = make_mlp({d, {8}, k}, rng());
    auto idx = sample_without_replacement(ds.size(), std::min(size(rng), ds.size()), rng);
    std::sort(idx.begin(), idx.end());
    const double p = frac(rng), rho = temp(rng);
    matches += select_by_entropy(m, ds, {0, idx}, p, rho).selected_indices ==
               oracle::brute_force_selection(m, ds, idx, p, rho);
  }
  v.require(matches == 500, "selection oracle " + std::to_string(matches) + "/500");
  v.note("selection " + std::to_string(matches) + "/500");

  double worst = 0.0;
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t clients = 1 + rng() % 20, width = 1 + rng() % 100;
    std::vector<ClientUpdate> ups;
    std::vector<std::vector<double>> thetas;
    std::vector<std::size_t> counts;
    for (std::size_t c = 0; c < clients; ++c) {
      ClientUpdate u;
      u.client_id = c;
      u.selected_count = 1 + rng() % 1000;
      u.theta.resize(width);
      for (double& e : u.theta) e = normal(rng);
      thetas.push_back(u.theta);
      counts.push_back(u.selected_count);
      ups.push_back(std::move(u));
    }
    std::shuffle(ups.begin(), ups.end(), rng);
    const auto got = aggregate(ups);
    const auto want = oracle::weighted_average(thetas, counts);
    for (std::size_t i = 0; i < width; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  v.require(worst <= 1e-12, "aggregate oracle " + sci(worst));
  v.note("aggregate max err " + sci(worst));

  std::size_t covers = 0;
  std::uniform_real_distribution<double> log_alpha(-2.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    Dataset ds = generate_synthetic(classes(rng), 1 + rng() % 60, 2, 1.0, rng());
    const std::size_t n = std::min<std::size_t>(1 + rng() % 40, ds.size());
    auto parts = dirichlet_partition(ds, {n, std::pow(10.0, log_alpha(rng)), rng()});
    bool ok = parts.size() == n && oracle::is_disjoint_cover(parts, ds.size());
    for (const auto& p : parts) ok &= !p.sample_indices.empty();
    covers += ok;
  }
  v.require(covers == 200, "disjoint covers " + std::to_string(covers) + "/200");
  v.note("covers " + std::to_string(covers) + "/200");
  return v;
}

// ------------------------------------------------------------------ C3

Verdict heterogeneity() {
  Verdict v;
  ExperimentConfig c = make_preset("desk-default");
  std::vector<double> means;
  for (double alpha : {0.1, 0.5, 10.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      c.federation.master_seed = seed;
      c.alpha = alpha;
      ExperimentData d = synthesize(c);
      partition(c, d);
      total += oracle::mean_client_label_entropy(d.federation.train, d.federation.partitions);
    }
    means.push_back(total / 5.0);
    v.note("alpha " + fmt(alpha, 1) + ": " + fmt(means.back(), 4) + " nats");
  }
  v.require(means[0] < means[1] && means[1] < means[2], "strictly increasing entropy");
  return v;
}

// --------------------------------------------------------------- C4-C7

struct DeskRun {
  std::string name;
  std::vector<double> final_acc;   // per seed, fraction
  std::vector<double> efficiency;  // per seed
  double seconds = 0.0;            // wall time including its share of pretraining
};

struct DeskResults {
  std::map<std::string, DeskRun> runs;
};

double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::string per_seed(const std::vector<double>& acc) {
  std::string s = "[";
  for (std::size_t i = 0; i < acc.size(); ++i) s += (i ? " " : "") + fmt(100 * acc[i], 1);
  return s + "]";
}

DeskResults desk_experiments() {
  struct Variant {
    const char* name;
    Strategy strategy;
    double p_ds;
    bool pretrained;
  };
  const std::vector<Variant> variants{
      {"fedavg", Strategy::kFedAvg, 1.0, true},       {"fedavg-scratch", Strategy::kFedAvg, 1.0, false},
      {"fedft_eds-0.5", Strategy::kFedFtEds, 0.5, true}, {"fedft_rds-0.5", Strategy::kFedFtRds, 0.5, true},
      {"fedft_all", Strategy::kFedFtAll, 1.0, true},  {"fedft_eds-0.1", Strategy::kFedFtEds, 0.1, true}};
  DeskResults out;
  for (const auto& var : variants) out.runs[var.name].name = var.name;

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig base = make_preset("desk-default");
    base.federation.master_seed = seed;
    ExperimentData data = synthesize(base);
    partition(base, data);
    const auto t0 = std::chrono::steady_clock::now();
    const Model pretrained =
        build_initial_model(base.federation, data.source, data.federation.train);
    const double pretrain_seconds = seconds_since(t0);

    for (const auto& var : variants) {
      ExperimentConfig c = base;
      c.federation.strategy = var.strategy;
      c.federation.p_ds = var.p_ds;
      RunOptions options;
      if (var.pretrained) options.initial_model = &pretrained;
      else c.federation.pretrain_epochs = 0;
      const auto t1 = std::chrono::steady_clock::now();
      const auto result = run_experiment(c, data, options);
      auto& run = out.runs[var.name];
      run.seconds += seconds_since(t1) + (var.pretrained ? pretrain_seconds : 0.0);
      run.final_acc.push_back(result.reports.back().global_test_accuracy);
      run.efficiency.push_back(learning_efficiency(result.reports).value_or(0.0));
    }
  }
  return out;
}

Verdict pretraining_benefit(const DeskResults& r) {
  Verdict v;
  const auto& pt = r.runs.at("fedavg");
  const auto& scratch = r.runs.at("fedavg-scratch");
  const double gap = 100.0 * (mean(pt.final_acc) - mean(scratch.final_acc));
  v.require(gap >= 2.0, "gap " + fmt(gap, 2) + " < 2 points");
  v.require(pt.seconds < 600 && scratch.seconds < 600, "runtime budget");
  v.note("pretrained " + fmt(100 * mean(pt.final_acc), 2) + " " + per_seed(pt.final_acc) +
         " vs scratch " + fmt(100 * mean(scratch.final_acc), 2) + " " + per_seed(scratch.final_acc) +
         ", gap +" + fmt(gap, 2) + " pts; " + fmt(pt.seconds, 1) + "s/" + fmt(scratch.seconds, 1) + "s");
  return v;
}

Verdict eds_vs_rds(const DeskResults& r) {
  Verdict v;
  const auto& eds = r.runs.at("fedft_eds-0.5").final_acc;
  const auto& rds = r.runs.at("fedft_rds-0.5").final_acc;
  std::vector<double> diff;
  for (std::size_t i = 0; i < eds.size(); ++i) diff.push_back(100.0 * (eds[i] - rds[i]));
  const double m = mean(diff);
  double ss = 0.0;
  for (double d : diff) ss += (d - m) * (d - m);
  const double sd = std::sqrt(ss / static_cast<double>(diff.size() - 1));
  // One-sided paired t-test for "RDS better", 4 degrees of freedom, 5% level.
  const double t = sd > 0.0 ? m / (sd / std::sqrt(static_cast<double>(diff.size()))) : (m < 0 ? -1e9 : 0.0);
  constexpr double kCritical = 2.131847;
  v.require(mean(eds) >= mean(rds), "mean EDS below RDS");
  v.require(t > -kCritical, "paired test favours RDS (t=" + fmt(t, 2) + ")");
  v.note("EDS " + fmt(100 * mean(eds), 2) + " " + per_seed(eds) + " vs RDS " + fmt(100 * mean(rds), 2) +
         " " + per_seed(rds) + ", mean diff " + fmt(m, 2) + " pts, paired t=" + fmt(t, 2));
  return v;
}

Verdict selection_vs_all(const DeskResults& r) {
  Verdict v;
  const double eds = 100 * mean(r.runs.at("fedft_eds-0.5").final_acc);
  const double all = 100 * mean(r.runs.at("fedft_all").final_acc);
  const double gap = eds - all;
  v.require(gap >= -0.5, "EDS more than 0.5 points below ALL");
  v.note("EDS " + fmt(eds, 2) + " vs ALL " + fmt(all, 2) + ", gap " + (gap >= 0 ? "+" : "") + fmt(gap, 2) +
         " pts (sign " + (gap > 0 ? "positive" : gap < 0 ? "negative" : "zero") + ")");
  return v;
}

Verdict efficiency(const DeskResults& r) {
  Verdict v;
  const auto& eds = r.runs.at("fedft_eds-0.1").efficiency;
  const auto& avg = r.runs.at("fedavg").efficiency;
  const double ratio = mean(eds) / mean(avg);
  double worst = 1e300;
  for (std::size_t i = 0; i < eds.size(); ++i) worst = std::min(worst, eds[i] / avg[i]);
  v.require(ratio >= 2.0, "ratio " + fmt(ratio, 2) + " < 2");
  v.note("fedft_eds(0.1) " + fmt(mean(eds), 2) + " vs fedavg " + fmt(mean(avg), 2) +
         " acc-pts/s, ratio " + fmt(ratio, 2) + "x (worst seed " + fmt(worst, 2) + "x)");
  return v;
}

// ------------------------------------------------------------------ C8

Verdict cka_model_shift() {
  Verdict v;
  Rng rng(808);
  std::normal_distribution<double> unit;
  double worst_self = 0.0, worst_inv = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 30 + rng() % 50, d = 2 + rng() % 8;
    Tensor2 x(n, d);
    for (double& e : x.values()) e = unit(rng);
    worst_self = std::max(worst_self, std::abs(*linear_cka(x, x) - 1.0));
    // Orthogonal map via Householder reflection, then isotropic scaling.
    std::vector<double> u(d);
    double norm = 0.0;
    for (double& e : u) norm += (e = unit(rng)) * e;
    Tensor2 xq(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += x(r, j) * u[j];
      for (std::size_t j = 0; j < d; ++j) xq(r, j) = -4.5 * (x(r, j) - 2.0 * dot * u[j] / norm);
    }
    worst_inv = std::max(worst_inv, std::abs(*linear_cka(x, xq) - 1.0));
  }
  v.require(worst_self <= 1e-9, "self-similarity " + sci(worst_self));
  v.require(worst_inv <= 1e-9, "orthogonal/scaling invariance " + sci(worst_inv));
  v.note("self " + sci(worst_self) + ", invariance " + sci(worst_inv));

  // Full-model training so every level can move; ten clients.
  std::vector<double> pre_sum(3, 0.0), scratch_sum(3, 0.0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ExperimentConfig c = make_preset("desk-default");
    c.federation.master_seed = seed;
    c.federation.num_clients = 10;
    c.federation.strategy = Strategy::kFedAvg;
    c.federation.p_ds = 1.0;
    ExperimentData data = synthesize(c);
    partition(c, data);
    const auto pre = first_round_cka(c, data);
    c.federation.pretrain_epochs = 0;
    const auto scratch = first_round_cka(c, data);
    std::string row = "seed " + std::to_string(seed) + ":";
    for (std::size_t l = 0; l < 3; ++l) {
      const double a = pre.matrices[l].mean_off_diagonal(), b = scratch.matrices[l].mean_off_diagonal();
      pre_sum[l] += a;
      scratch_sum[l] += b;
      v.require(a > b, "seed " + std::to_string(seed) + " level " +
                           std::string(to_string(pre.matrices[l].level)));
      row += " " + std::string(to_string(pre.matrices[l].level)) + " " + fmt(a, 3) + (a > b ? ">" : "<=") + fmt(b, 3);
    }
    v.note(row);
  }
  return v;
}

// ------------------------------------------------------------------ C9

std::string reports_csv(const ExperimentConfig& c, std::size_t threads) {
  ExperimentData d = synthesize(c);
  partition(c, d);
  RunOptions options;
  options.threads = threads;
  std::ostringstream out;
  write_reports_csv(out, c.federation.strategy, run_experiment(c, d, options).reports);
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism(const char* fedsim) {
  Verdict v;
  std::size_t checked = 0;
  for (auto preset : kPresetNames) {
    for (Strategy s : {Strategy::kFedFtEds, Strategy::kFedAvg}) {
      ExperimentConfig c = make_preset(preset);
      c.federation.master_seed = 11;
      c.federation.strategy = s;
      if (s == Strategy::kFedAvg) c.federation.p_ds = 1.0;
      const std::string a = reports_csv(c, 1), b = reports_csv(c, 1), t = reports_csv(c, 4);
      v.require(a == b, std::string(preset) + " repeat");
      v.require(a == t, std::string(preset) + " threads 1 vs 4");
      ++checked;
    }
  }
  v.note(std::to_string(checked) + " library runs byte-identical across repeats and thread counts");

  if (fedsim) {
    const fs::path work = fs::temp_directory_path() / "fedft_acceptance_cli";
    fs::remove_all(work);
    std::size_t cli_checked = 0;
    for (auto preset : {"smoke", "desk-default"}) {
      std::vector<std::string> csvs;
      for (const char* threads : {"1", "1", "3"}) {
        const fs::path out = work / (std::string(preset) + "_" + std::to_string(csvs.size()));
        const std::string cmd = std::string("\"") + fedsim + "\" run --preset " + preset +
                                " --seed 11 --threads " + threads + " --out \"" + out.string() +
                                "\" > /dev/null 2>&1";
        v.require(std::system(cmd.c_str()) == 0, std::string("fedsim run ") + preset);
        csvs.push_back(slurp(out / "reports.csv"));
      }
      v.require(!csvs[0].empty() && csvs[0] == csvs[1] && csvs[0] == csvs[2],
                std::string("fedsim ") + preset + " reports differ");
      ++cli_checked;
    }
    fs::remove_all(work);
    v.note(std::to_string(cli_checked) + " fedsim presets byte-identical with --threads 1/1/3");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const char* fedsim = argc > 1 ? argv[1] : nullptr;
  int failures = 0;
  auto report = [&](int id, const std::string& name, double seconds, double budget, Verdict v) {
    if (budget > 0 && seconds >= budget) v.require(false, "runtime " + fmt(seconds, 1) + "s over budget");
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  C" << id << " " << name << "  (" << fmt(seconds, 1)
              << "s)  " << v.detail << std::endl;
  };
  auto timed = [](auto&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = f();
    return std::pair{std::move(result), seconds_since(t0)};
  };

  {
    auto [v, s] = timed(numerics);
    report(1, "numerics", s, 30.0, v);
  }
  {
    auto [v, s] = timed(oracles);
    report(2, "oracle equivalence", s, 60.0, v);
  }
  {
    auto [v, s] = timed(heterogeneity);
    report(3, "heterogeneity ordering", s, 0.0, v);
  }
  auto [desk, desk_seconds] = timed(desk_experiments);
  report(4, "pretraining benefit", desk_seconds, 0.0, pretraining_benefit(desk));
  report(5, "EDS vs RDS", desk_seconds, 0.0, eds_vs_rds(desk));
  report(6, "selection vs all", desk_seconds, 0.0, selection_vs_all(desk));
  report(7, "learning efficiency", desk_seconds, 0.0, efficiency(desk));
  {
    auto [v, s] = timed(cka_model_shift);
    report(8, "CKA model shift", s, 0.0, v);
  }
  {
    auto [v, s] = timed([&] { return determinism(fedsim); });
    report(9, "determinism", s, 0.0, v);
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + (failures == 1 ? " criterion" : " criteria") + " failed"
                         : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
