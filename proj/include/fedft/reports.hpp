#pragma once

// CSV emitters and the reports reader used by `compare`. Comma separated,
// '.' decimal point, LF line endings, locale independent.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedft/analysis.hpp"
#include "fedft/errors.hpp"
#include "fedft/federation.hpp"
#include "fedft/selection.hpp"

namespace fedft {

inline std::string format_fixed(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
  if (ec != std::errc()) return "nan";
  return {buf, end};
}

inline std::string format_general(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc() ? std::string(buf, end) : "nan";
}

inline constexpr std::string_view kReportsHeader =
    "round,strategy,participants,test_acc,test_loss,cum_client_time_s,total_selected";

// `participants` holds the participating client ids joined by ';'.
inline void write_reports_csv(std::ostream& out, Strategy strategy,
                              std::span<const RoundReport> reports) {
  out << kReportsHeader << '\n';
  for (const auto& r : reports) {
    out << r.round << ',' << to_string(strategy) << ',';
    for (std::size_t i = 0; i < r.participating_clients.size(); ++i)
      out << (i ? ";" : "") << r.participating_clients[i];
    out << ',' << format_fixed(r.global_test_accuracy) << ',' << format_fixed(r.global_test_loss)
        << ',' << format_fixed(r.cumulative_client_train_time) << ',' << r.total_selected << '\n';
  }
}

// Just the columns `compare` needs.
struct ReportRow {
  std::size_t round = 0;
  std::string strategy;
  std::size_t participant_count = 0;
  double test_acc = 0.0;
  double test_loss = 0.0;
  double cum_client_time_s = 0.0;
  std::size_t total_selected = 0;
};

inline std::vector<ReportRow> read_reports_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportsHeader)
    throw FormatError("header", 0, "expected reports header");
  std::size_t offset = line.size() + 1;
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string_view> f;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      f.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    f.push_back(rest);
    if (f.size() != 7) throw FormatError("row", offset, "expected 7 fields");
    auto num = [&](std::string_view s, auto& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw FormatError("row", offset, "bad number '" + std::string(s) + "'");
    };
    ReportRow r;
    num(f[0], r.round);
    r.strategy = std::string(f[1]);
    r.participant_count =
        f[2].empty() ? 0 : 1 + static_cast<std::size_t>(std::count(f[2].begin(), f[2].end(), ';'));
    num(f[3], r.test_acc);
    num(f[4], r.test_loss);
    num(f[5], r.cum_client_time_s);
    num(f[6], r.total_selected);
    rows.push_back(r);
    offset += line.size() + 1;
  }
  return rows;
}

inline constexpr std::string_view kSelectionHeader = "round,client_id,sample_index,entropy,selected";

// One row per client sample. Entropy is empty for non-entropy strategies.
inline void write_selection_rows(std::ostream& out, std::size_t round, std::size_t client,
                                 const ClientPartition& part, const SelectionResult& sel) {
  std::vector<double> entropy(part.sample_indices.size(), std::nan(""));
  for (std::size_t i = 0; i < sel.scores.size() && i < entropy.size(); ++i)
    entropy[i] = sel.scores[i].entropy;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < part.sample_indices.size(); ++i) {
    const std::size_t idx = part.sample_indices[i];
    while (cursor < sel.selected_indices.size() && sel.selected_indices[cursor] < idx) ++cursor;
    const bool chosen = cursor < sel.selected_indices.size() && sel.selected_indices[cursor] == idx;
    out << round << ',' << client << ',' << idx << ','
        << (std::isnan(entropy[i]) ? std::string() : format_general(entropy[i])) << ','
        << (chosen ? 1 : 0) << '\n';
  }
}

// Header row of client ids, then one row per client.
inline void write_cka_csv(std::ostream& out, const CkaMatrix& m,
                          std::span<const std::size_t> client_ids) {
  for (std::size_t j = 0; j < m.size; ++j) out << (j ? "," : "") << "client_" << client_ids[j];
  out << '\n';
  for (std::size_t i = 0; i < m.size; ++i) {
    for (std::size_t j = 0; j < m.size; ++j) out << (j ? "," : "") << format_fixed(m(i, j), 9);
    out << '\n';
  }
}

inline void write_histogram_csv(std::ostream& out, const EntropyHistogram& h) {
  out << "bin_low,bin_high,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << format_fixed(h.edges[b], 9) << ',' << format_fixed(h.edges[b + 1], 9) << ','
        << h.counts[b] << '\n';
}

}  // namespace fedft
