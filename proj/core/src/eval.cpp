#include "icld/eval.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace icld {

using nlohmann::json;

double precision_at_k(std::span<const RankingRecord> rankings, int k) {
  require(k >= 1, Errc::contract, "precision_at_k: k must be >= 1");
  require(!rankings.empty(), Errc::contract, "precision_at_k: no rankings");
  std::size_t hits = 0;
  for (const RankingRecord& r : rankings) {
    auto it = std::find(r.ranked.begin(), r.ranked.end(), r.gold);
    require(it != r.ranked.end(), Errc::contract,
            "gold label '" + join_symbols(r.gold) + "' absent from the candidate ranking");
    if (it - r.ranked.begin() < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

std::pair<double, double> classification_scores(
    std::span<const std::pair<SymbolSeq, SymbolSeq>> pairs,
    const std::vector<SymbolSeq>& labels) {
  require(!pairs.empty(), Errc::contract, "classification_scores: no pairs");
  require(!labels.empty(), Errc::contract, "classification_scores: no labels");
  auto label_index = [&](const SymbolSeq& l) {
    auto it = std::find(labels.begin(), labels.end(), l);
    require(it != labels.end(), Errc::contract,
            "label '" + join_symbols(l) + "' outside the candidate set");
    return static_cast<std::size_t>(it - labels.begin());
  };

  const std::size_t n = labels.size();
  std::vector<std::size_t> tp(n, 0), fp(n, 0), fn(n, 0);
  std::size_t correct = 0;
  for (const auto& [pred, gold] : pairs) {
    const std::size_t p = label_index(pred), g = label_index(gold);
    if (p == g) {
      ++tp[p];
      ++correct;
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double denom_p = static_cast<double>(tp[i] + fp[i]);
    const double denom_r = static_cast<double>(tp[i] + fn[i]);
    const double prec = denom_p > 0 ? tp[i] / denom_p : 0.0;
    const double rec = denom_r > 0 ? tp[i] / denom_r : 0.0;
    f1_sum += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  const double macro_f1 = f1_sum / static_cast<double>(n);
  const double accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
  return {macro_f1, accuracy};
}

EvalReport aggregate_report(const std::map<std::string, Metrics>& per_task) {
  require(!per_task.empty(), Errc::contract, "aggregate_report: empty per-task map");
  EvalReport report;
  report.per_task = per_task;

  auto mean_of = [&](std::optional<double> Metrics::* field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& [id, m] : per_task)
      if ((m.*field).has_value()) {
        sum += *(m.*field);
        ++count;
      }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  };
  report.average.p_at_1 = mean_of(&Metrics::p_at_1);
  report.average.p_at_10 = mean_of(&Metrics::p_at_10);
  report.average.macro_f1 = mean_of(&Metrics::macro_f1);
  report.average.accuracy = mean_of(&Metrics::accuracy);
  for (const auto& [id, m] : per_task) report.average.n_examples += m.n_examples;
  return report;
}

namespace {

json metrics_to_json(const Metrics& m) {
  json j;
  if (m.p_at_1) j["p_at_1"] = *m.p_at_1;
  if (m.p_at_10) j["p_at_10"] = *m.p_at_10;
  if (m.macro_f1) j["macro_f1"] = *m.macro_f1;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  j["n_examples"] = m.n_examples;
  return j;
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  if (j.contains("p_at_1")) m.p_at_1 = j["p_at_1"].get<double>();
  if (j.contains("p_at_10")) m.p_at_10 = j["p_at_10"].get<double>();
  if (j.contains("macro_f1")) m.macro_f1 = j["macro_f1"].get<double>();
  if (j.contains("accuracy")) m.accuracy = j["accuracy"].get<double>();
  m.n_examples = j.value("n_examples", std::size_t{0});
  return m;
}

}  // namespace

void save_report_json(const EvalReport& report, const std::filesystem::path& path) {
  json j;
  j["fingerprint"] = report.fingerprint;
  j["average"] = metrics_to_json(report.average);
  json per_task = json::object();
  for (const auto& [id, m] : report.per_task) per_task[id] = metrics_to_json(m);
  j["per_task"] = per_task;
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

EvalReport load_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(Errc::parse_error, path.string() + ": " + e.what());
  }
  EvalReport report;
  report.fingerprint = j.value("fingerprint", std::string{});
  report.average = metrics_from_json(j["average"]);
  for (const auto& [id, m] : j["per_task"].items()) report.per_task[id] = metrics_from_json(m);
  return report;
}

void save_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write " + path.string());
  out << "task,p_at_1,p_at_10,macro_f1,accuracy,n_examples\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string{};
  };
  auto row = [&](const std::string& id, const Metrics& m) {
    out << id << ',' << cell(m.p_at_1) << ',' << cell(m.p_at_10) << ',' << cell(m.macro_f1)
        << ',' << cell(m.accuracy) << ',' << m.n_examples << '\n';
  };
  for (const auto& [id, m] : report.per_task) row(id, m);
  row("AVERAGE", report.average);
}

}  // namespace icld
