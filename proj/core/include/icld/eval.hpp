#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icld/common.hpp"

namespace icld {

struct Metrics {
  std::optional<double> p_at_1, p_at_10, macro_f1, accuracy;
  std::size_t n_examples = 0;
};

struct EvalReport {
  std::map<std::string, Metrics> per_task;
  Metrics average;  // unweighted mean across tasks, field-wise
  std::string fingerprint;
};

struct RankingRecord {
  std::vector<SymbolSeq> ranked;  // candidates best-first
  SymbolSeq gold;
};

// Fraction of records whose gold label sits within the top k.
double precision_at_k(std::span<const RankingRecord> rankings, int k);

// (macro_f1, accuracy) over (predicted, gold) pairs. Per-label F1 is 0 when
// precision + recall is 0.
std::pair<double, double> classification_scores(
    std::span<const std::pair<SymbolSeq, SymbolSeq>> pairs,
    const std::vector<SymbolSeq>& labels);

EvalReport aggregate_report(const std::map<std::string, Metrics>& per_task);

void save_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report_json(const std::filesystem::path& path);
void save_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace icld
