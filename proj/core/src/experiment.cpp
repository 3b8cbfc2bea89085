#include "icld/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icld/inference.hpp"
#include "icld/prompt.hpp"
#include "icld/rng.hpp"

namespace icld {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(Paradigm p) {
  return p == Paradigm::meta_ict ? "meta_ict" : "multitask_ict";
}
const char* to_string(DataSource s) { return s == DataSource::synthetic ? "synthetic" : "jsonl"; }

namespace {

constexpr const char* kWorldFile = "world.txt";
constexpr const char* kCorpusFile = "corpus.txt";
constexpr const char* kTasksFile = "tasks.jsonl";
constexpr const char* kVocabFile = "vocab.txt";
constexpr const char* kTeacherBase = "teacher_base.ckpt";
constexpr const char* kTeacherCkpt = "teacher.ckpt";
constexpr const char* kStudentBase = "student_base.ckpt";
constexpr const char* kStudentCkpt = "student.ckpt";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kReportJson = "report.json";
constexpr const char* kReportCsv = "report.csv";
constexpr const char* kPredictions = "predictions.jsonl";
constexpr const char* kResolved = "config.resolved";
constexpr const char* kCompareJson = "compare.json";
constexpr const char* kCompareCsv = "compare.csv";

std::string format_number(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string format_number(std::int64_t v) { return std::to_string(v); }

// ---------------------------------------------------------------------------
// key=value schema

struct KvMap {
  std::map<std::string, std::string> values;

  const std::string& get(const std::string& key) const {
    auto it = values.find(key);
    require(it != values.end(), Errc::invalid_config, "missing config key '" + key + "'");
    return it->second;
  }
  std::int64_t get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && p == s.data() + s.size(), Errc::invalid_config,
            "config key '" + key + "': '" + s + "' is not an integer");
    return v;
  }
  std::uint64_t get_u64(const std::string& key) const {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && p == s.data() + s.size(), Errc::invalid_config,
            "config key '" + key + "': '" + s + "' is not a nonnegative integer");
    return v;
  }
  double get_double(const std::string& key) const {
    const std::string& s = get(key);
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      require(pos == s.size(), Errc::invalid_config,
              "config key '" + key + "': '" + s + "' is not a number");
      return v;
    } catch (const std::exception&) {
      raise(Errc::invalid_config, "config key '" + key + "': '" + s + "' is not a number");
    }
  }
  bool get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    raise(Errc::invalid_config, "config key '" + key + "': '" + s + "' is not a boolean");
  }
  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// The full key set with defaults; unknown keys in a config file are errors.
KvMap default_kv() {
  ExperimentConfig d;
  KvMap kv;
  auto set = [&](const std::string& k, const std::string& v) { kv.values[k] = v; };
  set("paradigm", to_string(d.paradigm));
  set("seed", format_number(static_cast<std::int64_t>(d.seed)));
  set("out", d.out.string());
  set("artifacts", "");
  set("eval_model", d.eval_model);
  set("dump_predictions", "false");

  set("data.source", to_string(d.data.source));
  set("data.data_seed", format_number(static_cast<std::int64_t>(d.data.data_seed)));
  set("data.num_entities", format_number(std::int64_t{d.data.num_entities}));
  set("data.num_relations", format_number(std::int64_t{d.data.num_relations}));
  set("data.corpus_docs", format_number(std::int64_t{d.data.corpus_docs}));
  set("data.corpus_facts_per_doc", format_number(std::int64_t{d.data.corpus_facts_per_doc}));
  set("data.pattern_tasks", format_number(std::int64_t{d.data.pattern_tasks}));
  set("data.pattern_labels", format_number(std::int64_t{d.data.pattern_labels}));
  set("data.pattern_seq_len", format_number(std::int64_t{d.data.pattern_seq_len}));
  set("data.pattern_examples", format_number(std::int64_t{d.data.pattern_examples}));
  set("data.pattern_ordering", "direct");
  set("data.tasks_path", "");
  set("data.corpus_path", "");
  set("data.n_train", format_number(std::int64_t{d.data.n_train}));
  set("data.n_val", format_number(std::int64_t{d.data.n_val}));
  set("data.test_fraction", format_number(d.data.test_fraction));
  set("data.meta_train_tasks", format_number(std::int64_t{d.data.meta_train_tasks}));
  set("data.meta_val_tasks", format_number(std::int64_t{d.data.meta_val_tasks}));

  for (const char* side : {"teacher", "student"}) {
    const ModelConfig& m = side == std::string("teacher") ? d.teacher : d.student;
    const std::string p = std::string(side) + ".";
    set(p + "layers", format_number(std::int64_t{m.layers}));
    set(p + "heads", format_number(std::int64_t{m.heads}));
    set(p + "d_model", format_number(std::int64_t{m.d_model}));
    set(p + "d_ff", "");  // empty = 4 * d_model
    set(p + "context_len", format_number(std::int64_t{m.context_len}));
  }

  set("kd.method", to_string(d.kd.method));
  set("kd.beta", format_number(d.kd.beta));
  set("kd.temperature", format_number(d.kd.temperature));
  set("kd.alpha_start", format_number(d.kd.alpha_start));
  set("kd.alpha_end", format_number(d.kd.alpha_end));
  set("kd.schedule_steps", format_number(std::int64_t{d.kd.schedule_steps}));
  set("kd.k_demos", "");  // empty = 5 for relation-style data, 4 otherwise
  set("kd.m_votes", format_number(std::int64_t{d.kd.m_votes}));
  set("kd.mix_icl", format_number(d.kd.mix_icl));
  set("kd.mix_lm", format_number(d.kd.mix_lm));

  set("train.peak_lr", format_number(d.train.peak_lr));
  set("train.warmup_steps", format_number(std::int64_t{d.train.warmup_steps}));
  set("train.max_steps", format_number(std::int64_t{d.train.max_steps}));
  set("train.batch_size", format_number(std::int64_t{d.train.batch_size}));
  set("train.grad_accum", format_number(std::int64_t{d.train.grad_accum}));
  set("train.eval_interval", format_number(std::int64_t{d.train.eval_interval}));
  set("train.patience", format_number(std::int64_t{d.train.patience}));
  set("train.subsample_fraction", format_number(d.train.subsample_fraction));
  set("train.task_subset_size", format_number(std::int64_t{d.train.task_subset_size}));
  set("train.pretrain_steps", format_number(std::int64_t{d.pretrain_steps}));
  set("train.pretrain_lr", format_number(d.pretrain_lr));
  set("train.pretrain_batch", format_number(std::int64_t{d.pretrain_batch}));
  set("train.student_pretrain_steps", format_number(std::int64_t{d.student_pretrain_steps}));
  set("train.teacher_ict_steps", format_number(std::int64_t{d.teacher_ict_steps}));
  set("train.lm_mix_max_steps", format_number(std::int64_t{d.lm_mix_max_steps}));
  set("train.lm_mix_grad_accum", format_number(std::int64_t{d.lm_mix_grad_accum}));

  set("compare.methods", "");
  set("compare.seeds", "1,2,3");
  set("compare.subsample_fractions", "");
  set("compare.task_subset_sizes", "");
  set("compare.m_values", "");
  return kv;
}

KvMap parse_config_text(const std::string& text) {
  KvMap kv = default_kv();
  std::set<std::string> known;
  for (const auto& [k, v] : kv.values) known.insert(k);

  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', Errc::parse_error,
              "config line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::parse_error,
            "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    require(known.count(key) > 0, Errc::invalid_config, "unknown config key '" + key + "'");
    kv.values[key] = value;
  }
  return kv;
}

Ordering ordering_from_string(const std::string& s, const std::string& key) {
  if (s == "direct") return Ordering::direct;
  if (s == "channel") return Ordering::channel;
  raise(Errc::invalid_config, "config key '" + key + "': expected direct or channel");
}

ExperimentConfig config_from_kv(const KvMap& kv) {
  ExperimentConfig cfg;
  {
    const std::string p = kv.get("paradigm");
    if (p == "meta_ict")
      cfg.paradigm = Paradigm::meta_ict;
    else if (p == "multitask_ict")
      cfg.paradigm = Paradigm::multitask_ict;
    else
      raise(Errc::invalid_config, "paradigm must be meta_ict or multitask_ict, got '" + p + "'");
  }
  cfg.seed = kv.get_u64("seed");
  cfg.out = kv.get("out");
  cfg.artifacts = kv.get("artifacts");
  cfg.eval_model = kv.get("eval_model");
  require(cfg.eval_model == "student" || cfg.eval_model == "teacher", Errc::invalid_config,
          "eval_model must be student or teacher");
  cfg.dump_predictions = kv.get_bool("dump_predictions");

  DataSpec& d = cfg.data;
  {
    const std::string s = kv.get("data.source");
    if (s == "synthetic")
      d.source = DataSource::synthetic;
    else if (s == "jsonl")
      d.source = DataSource::jsonl;
    else
      raise(Errc::invalid_config, "data.source must be synthetic or jsonl, got '" + s + "'");
  }
  d.data_seed = kv.get_u64("data.data_seed");
  d.num_entities = static_cast<int>(kv.get_int("data.num_entities"));
  d.num_relations = static_cast<int>(kv.get_int("data.num_relations"));
  d.corpus_docs = static_cast<int>(kv.get_int("data.corpus_docs"));
  d.corpus_facts_per_doc = static_cast<int>(kv.get_int("data.corpus_facts_per_doc"));
  d.pattern_tasks = static_cast<int>(kv.get_int("data.pattern_tasks"));
  d.pattern_labels = static_cast<int>(kv.get_int("data.pattern_labels"));
  d.pattern_seq_len = static_cast<int>(kv.get_int("data.pattern_seq_len"));
  d.pattern_examples = static_cast<int>(kv.get_int("data.pattern_examples"));
  d.pattern_ordering = ordering_from_string(kv.get("data.pattern_ordering"),
                                            "data.pattern_ordering");
  d.tasks_path = kv.get("data.tasks_path");
  d.corpus_path = kv.get("data.corpus_path");
  d.n_train = static_cast<int>(kv.get_int("data.n_train"));
  d.n_val = static_cast<int>(kv.get_int("data.n_val"));
  d.test_fraction = kv.get_double("data.test_fraction");
  d.meta_train_tasks = static_cast<int>(kv.get_int("data.meta_train_tasks"));
  d.meta_val_tasks = static_cast<int>(kv.get_int("data.meta_val_tasks"));

  auto read_model = [&](const std::string& p) {
    ModelConfig m;
    m.layers = static_cast<int>(kv.get_int(p + "layers"));
    m.heads = static_cast<int>(kv.get_int(p + "heads"));
    m.d_model = static_cast<int>(kv.get_int(p + "d_model"));
    const std::string ff = kv.get(p + "d_ff");
    m.d_ff = ff.empty() ? 4 * m.d_model : static_cast<int>(kv.get_int(p + "d_ff"));
    m.context_len = static_cast<int>(kv.get_int(p + "context_len"));
    return m;
  };
  cfg.teacher = read_model("teacher.");
  cfg.student = read_model("student.");

  cfg.kd.method = method_from_string(kv.get("kd.method"));
  cfg.kd.beta = kv.get_double("kd.beta");
  cfg.kd.temperature = kv.get_double("kd.temperature");
  cfg.kd.alpha_start = kv.get_double("kd.alpha_start");
  cfg.kd.alpha_end = kv.get_double("kd.alpha_end");
  cfg.kd.schedule_steps = static_cast<int>(kv.get_int("kd.schedule_steps"));
  {
    const std::string k = kv.get("kd.k_demos");
    if (k.empty()) {
      // Table-1 style defaults: classification-shaped data takes k=4,
      // relation worlds take k=5
      const bool classification_like =
          d.source == DataSource::jsonl || d.num_relations == 0;
      cfg.kd.k_demos = classification_like ? 4 : 5;
    } else {
      cfg.kd.k_demos = static_cast<int>(kv.get_int("kd.k_demos"));
    }
  }
  cfg.kd.m_votes = static_cast<int>(kv.get_int("kd.m_votes"));
  cfg.kd.mix_icl = kv.get_double("kd.mix_icl");
  cfg.kd.mix_lm = kv.get_double("kd.mix_lm");

  cfg.train.peak_lr = kv.get_double("train.peak_lr");
  cfg.train.warmup_steps = static_cast<int>(kv.get_int("train.warmup_steps"));
  cfg.train.max_steps = static_cast<int>(kv.get_int("train.max_steps"));
  cfg.train.batch_size = static_cast<int>(kv.get_int("train.batch_size"));
  cfg.train.grad_accum = static_cast<int>(kv.get_int("train.grad_accum"));
  cfg.train.eval_interval = static_cast<int>(kv.get_int("train.eval_interval"));
  cfg.train.patience = static_cast<int>(kv.get_int("train.patience"));
  cfg.train.subsample_fraction = kv.get_double("train.subsample_fraction");
  cfg.train.task_subset_size = static_cast<int>(kv.get_int("train.task_subset_size"));
  cfg.train.seed = cfg.seed;
  cfg.pretrain_steps = static_cast<int>(kv.get_int("train.pretrain_steps"));
  cfg.pretrain_lr = kv.get_double("train.pretrain_lr");
  cfg.pretrain_batch = static_cast<int>(kv.get_int("train.pretrain_batch"));
  cfg.student_pretrain_steps = static_cast<int>(kv.get_int("train.student_pretrain_steps"));
  cfg.teacher_ict_steps = static_cast<int>(kv.get_int("train.teacher_ict_steps"));
  cfg.lm_mix_max_steps = static_cast<int>(kv.get_int("train.lm_mix_max_steps"));
  cfg.lm_mix_grad_accum = static_cast<int>(kv.get_int("train.lm_mix_grad_accum"));

  for (const std::string& m : kv.get_list("compare.methods"))
    cfg.compare_methods.push_back(method_from_string(m));
  cfg.compare_seeds.clear();
  for (const std::string& s : kv.get_list("compare.seeds")) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && p == s.data() + s.size(), Errc::invalid_config,
            "compare.seeds: '" + s + "' is not an integer");
    cfg.compare_seeds.push_back(v);
  }
  for (const std::string& s : kv.get_list("compare.subsample_fractions")) {
    try {
      cfg.compare_subsample_fractions.push_back(std::stod(s));
    } catch (const std::exception&) {
      raise(Errc::invalid_config, "compare.subsample_fractions: '" + s + "' is not a number");
    }
  }
  for (const std::string& s : kv.get_list("compare.task_subset_sizes")) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && p == s.data() + s.size(), Errc::invalid_config,
            "compare.task_subset_sizes: '" + s + "' is not an integer");
    cfg.compare_task_subset_sizes.push_back(v);
  }
  for (const std::string& s : kv.get_list("compare.m_values")) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc{} && p == s.data() + s.size(), Errc::invalid_config,
            "compare.m_values: '" + s + "' is not an integer");
    cfg.compare_m_values.push_back(v);
  }

  cfg.validate();
  return cfg;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!out.empty(), Errc::invalid_config, "out directory must be set");
  if (data.source == DataSource::synthetic) {
    require(data.num_relations > 0 || data.pattern_tasks > 0, Errc::invalid_config,
            "synthetic data needs num_relations > 0 or pattern_tasks > 0");
    if (data.num_relations > 0)
      require(data.num_entities >= 2, Errc::invalid_config, "num_entities must be >= 2");
  } else {
    require(!data.tasks_path.empty(), Errc::invalid_config,
            "data.tasks_path is required for jsonl data");
    require(fs::exists(data.tasks_path), Errc::invalid_config,
            "data.tasks_path does not exist: " + data.tasks_path);
    if (!data.corpus_path.empty())
      require(fs::exists(data.corpus_path), Errc::invalid_config,
              "data.corpus_path does not exist: " + data.corpus_path);
  }
  require(data.n_train >= 1, Errc::invalid_config, "n_train must be >= 1");
  require(data.n_val >= 0, Errc::invalid_config, "n_val must be >= 0");
  require(data.test_fraction >= 0.0 && data.test_fraction < 1.0, Errc::invalid_config,
          "test_fraction must lie in [0, 1)");
  if (paradigm == Paradigm::meta_ict)
    require(data.meta_train_tasks >= 1, Errc::invalid_config,
            "meta_ict needs data.meta_train_tasks >= 1");
  ModelConfig t = teacher, s = student;
  t.vocab_size = s.vocab_size = 8;  // placeholder; real size comes from the vocabulary
  t.validate();
  s.validate();
  kd.validate();
  train.validate();
  require(kd.method != Method::MULTITASK_FT || paradigm == Paradigm::multitask_ict,
          Errc::invalid_config, "MULTITASK_FT is only defined for the multitask_ict paradigm");
  require(pretrain_steps >= 0 && student_pretrain_steps >= 0 && teacher_ict_steps >= 0,
          Errc::invalid_config, "preparation step counts must be >= 0");
  require(pretrain_batch >= 1, Errc::invalid_config, "pretrain_batch must be >= 1");
  require(pretrain_lr > 0.0, Errc::invalid_config, "pretrain_lr must be positive");
  require(lm_mix_max_steps >= 0 && lm_mix_grad_accum >= 1, Errc::invalid_config,
          "lm_mix settings out of range");
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "paradigm = " << to_string(cfg.paradigm) << '\n'
      << "seed = " << cfg.seed << '\n'
      << "out = " << cfg.out.string() << '\n'
      << "artifacts = " << cfg.artifacts.string() << '\n'
      << "eval_model = " << cfg.eval_model << '\n'
      << "dump_predictions = " << (cfg.dump_predictions ? "true" : "false") << '\n';

  out << "\n[data]\n"
      << "source = " << to_string(cfg.data.source) << '\n'
      << "data_seed = " << cfg.data.data_seed << '\n'
      << "num_entities = " << cfg.data.num_entities << '\n'
      << "num_relations = " << cfg.data.num_relations << '\n'
      << "corpus_docs = " << cfg.data.corpus_docs << '\n'
      << "corpus_facts_per_doc = " << cfg.data.corpus_facts_per_doc << '\n'
      << "pattern_tasks = " << cfg.data.pattern_tasks << '\n'
      << "pattern_labels = " << cfg.data.pattern_labels << '\n'
      << "pattern_seq_len = " << cfg.data.pattern_seq_len << '\n'
      << "pattern_examples = " << cfg.data.pattern_examples << '\n'
      << "pattern_ordering = " << to_string(cfg.data.pattern_ordering) << '\n'
      << "tasks_path = " << cfg.data.tasks_path << '\n'
      << "corpus_path = " << cfg.data.corpus_path << '\n'
      << "n_train = " << cfg.data.n_train << '\n'
      << "n_val = " << cfg.data.n_val << '\n'
      << "test_fraction = " << format_number(cfg.data.test_fraction) << '\n'
      << "meta_train_tasks = " << cfg.data.meta_train_tasks << '\n'
      << "meta_val_tasks = " << cfg.data.meta_val_tasks << '\n';

  auto model_section = [&](const char* name, const ModelConfig& m) {
    out << "\n[" << name << "]\n"
        << "layers = " << m.layers << '\n'
        << "heads = " << m.heads << '\n'
        << "d_model = " << m.d_model << '\n'
        << "d_ff = " << m.d_ff << '\n'
        << "context_len = " << m.context_len << '\n';
  };
  model_section("teacher", cfg.teacher);
  model_section("student", cfg.student);

  out << "\n[kd]\n"
      << "method = " << to_string(cfg.kd.method) << '\n'
      << "beta = " << format_number(cfg.kd.beta) << '\n'
      << "temperature = " << format_number(cfg.kd.temperature) << '\n'
      << "alpha_start = " << format_number(cfg.kd.alpha_start) << '\n'
      << "alpha_end = " << format_number(cfg.kd.alpha_end) << '\n'
      << "schedule_steps = " << cfg.kd.schedule_steps << '\n'
      << "k_demos = " << cfg.kd.k_demos << '\n'
      << "m_votes = " << cfg.kd.m_votes << '\n'
      << "mix_icl = " << format_number(cfg.kd.mix_icl) << '\n'
      << "mix_lm = " << format_number(cfg.kd.mix_lm) << '\n';

  out << "\n[train]\n"
      << "peak_lr = " << format_number(cfg.train.peak_lr) << '\n'
      << "warmup_steps = " << cfg.train.warmup_steps << '\n'
      << "max_steps = " << cfg.train.max_steps << '\n'
      << "batch_size = " << cfg.train.batch_size << '\n'
      << "grad_accum = " << cfg.train.grad_accum << '\n'
      << "eval_interval = " << cfg.train.eval_interval << '\n'
      << "patience = " << cfg.train.patience << '\n'
      << "subsample_fraction = " << format_number(cfg.train.subsample_fraction) << '\n'
      << "task_subset_size = " << cfg.train.task_subset_size << '\n'
      << "pretrain_steps = " << cfg.pretrain_steps << '\n'
      << "pretrain_lr = " << format_number(cfg.pretrain_lr) << '\n'
      << "pretrain_batch = " << cfg.pretrain_batch << '\n'
      << "student_pretrain_steps = " << cfg.student_pretrain_steps << '\n'
      << "teacher_ict_steps = " << cfg.teacher_ict_steps << '\n'
      << "lm_mix_max_steps = " << cfg.lm_mix_max_steps << '\n'
      << "lm_mix_grad_accum = " << cfg.lm_mix_grad_accum << '\n';

  std::vector<std::string> methods, seeds, fracs, subsets, ms;
  for (Method m : cfg.compare_methods) methods.push_back(to_string(m));
  for (std::uint64_t s : cfg.compare_seeds)
    seeds.push_back(format_number(static_cast<std::int64_t>(s)));
  for (double f : cfg.compare_subsample_fractions) fracs.push_back(format_number(f));
  for (int s : cfg.compare_task_subset_sizes)
    subsets.push_back(format_number(std::int64_t{s}));
  for (int m : cfg.compare_m_values) ms.push_back(format_number(std::int64_t{m}));
  out << "\n[compare]\n"
      << "methods = " << join_list(methods) << '\n'
      << "seeds = " << join_list(seeds) << '\n'
      << "subsample_fractions = " << join_list(fracs) << '\n'
      << "task_subset_sizes = " << join_list(subsets) << '\n'
      << "m_values = " << join_list(ms) << '\n';
  return out.str();
}

ExperimentConfig config_from_text(const std::string& text, const Overrides& overrides) {
  KvMap kv = parse_config_text(text);
  std::set<std::string> known;
  for (const auto& [k, v] : kv.values) known.insert(k);
  for (const auto& [k, v] : overrides) {
    require(known.count(k) > 0, Errc::invalid_config, "unknown config key '" + k + "'");
    kv.values[k] = v;
  }
  return config_from_kv(kv);
}

ExperimentConfig load_config(const fs::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_text(buffer.str(), overrides);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  std::istringstream in(config_to_text(cfg));
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.starts_with("out = ") || line.starts_with("artifacts = ")) continue;
    kept += line;
    kept += '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(kept)));
  return buf;
}

// ---------------------------------------------------------------------------
// pipeline

namespace {

fs::path artifacts_dir(const ExperimentConfig& cfg) {
  return cfg.artifacts.empty() ? cfg.out : cfg.artifacts;
}

void require_artifact(const fs::path& p, const std::string& hint) {
  require(fs::exists(p), Errc::dependency, "missing artifact " + p.string() + " (" + hint + ")");
}

std::uint64_t derive_seed(std::uint64_t base, const char* label) {
  return Rng(base).fork(label).next_u64();
}

void write_resolved(const ExperimentConfig& cfg, const fs::path& dir) {
  std::ofstream out(dir / kResolved);
  require(out.good(), Errc::io, "cannot write " + (dir / kResolved).string());
  out << config_to_text(cfg);
}

bool resolved_matches(const ExperimentConfig& cfg, const fs::path& dir) {
  const fs::path p = dir / kResolved;
  if (!fs::exists(p)) return false;
  std::ifstream in(p);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    ExperimentConfig stored = config_from_text(buffer.str());
    return config_fingerprint(stored) == config_fingerprint(cfg);
  } catch (const Error&) {
    return false;
  }
}

TaskSet load_raw_tasks(const ExperimentConfig& cfg) {
  const fs::path art = artifacts_dir(cfg);
  TaskSet tasks;
  tasks.role = TaskSetRole::target;
  if (cfg.data.source == DataSource::synthetic) {
    if (cfg.data.num_relations > 0) {
      require_artifact(art / kWorldFile, "run gen-data first");
      World world = load_world(art / kWorldFile);
      tasks = gen_relation_tasks(world, cfg.data.data_seed);
    }
    if (cfg.data.pattern_tasks > 0) {
      TaskSet patterns = gen_pattern_tasks(cfg.data.pattern_tasks, cfg.data.pattern_labels,
                                           cfg.data.pattern_seq_len, cfg.data.data_seed,
                                           cfg.data.pattern_examples, cfg.data.pattern_ordering);
      for (Task& t : patterns.tasks) tasks.tasks.push_back(std::move(t));
    }
  } else {
    require_artifact(art / kTasksFile, "run gen-data first");
    tasks = load_tasks_jsonl(art / kTasksFile);
  }
  tasks.validate();
  require(!tasks.tasks.empty(), Errc::invalid_config, "no tasks available");
  return tasks;
}

ExperimentData load_data(const ExperimentConfig& cfg) {
  const fs::path art = artifacts_dir(cfg);
  require_artifact(art / kVocabFile, "run gen-data first");
  ExperimentData data;
  data.vocab = Vocab::load(art / kVocabFile);
  if (fs::exists(art / kCorpusFile)) data.corpus = load_corpus(art / kCorpusFile);

  TaskSet raw = load_raw_tasks(cfg);
  const DataSpec& d = cfg.data;

  if (cfg.paradigm == Paradigm::multitask_ict) {
    TaskSet split_set;
    split_set.role = TaskSetRole::target;
    for (const Task& t : raw.tasks)
      split_set.tasks.push_back(
          split_few_shot(t, d.n_train, d.n_val, d.test_fraction, d.data_seed));
    data.train_tasks = split_set;
    data.train_tasks.role = TaskSetRole::target;
    data.val_tasks = split_set;
    data.target_tasks = std::move(split_set);
    return data;
  }

  // meta_ict: disjoint meta-train / validation / target task partition
  const std::size_t total = raw.tasks.size();
  const std::size_t n_meta = static_cast<std::size_t>(d.meta_train_tasks);
  const std::size_t n_val = static_cast<std::size_t>(d.meta_val_tasks);
  require(n_meta + n_val < total, Errc::invalid_config,
          "meta split uses " + std::to_string(n_meta + n_val) + " of " + std::to_string(total) +
              " tasks and leaves no target tasks");
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng(d.data_seed).fork("meta_split").shuffle(order);

  data.train_tasks.role = TaskSetRole::meta_train;
  data.val_tasks.role = TaskSetRole::meta_train;
  data.target_tasks.role = TaskSetRole::target;
  for (std::size_t i = 0; i < total; ++i) {
    const Task& t = raw.tasks[order[i]];
    if (i < n_meta) {
      // meta-training pools stay abundant: every example is available
      data.train_tasks.tasks.push_back(t);
    } else if (i < n_meta + n_val) {
      data.val_tasks.tasks.push_back(split_few_shot(t, d.n_train, d.n_val, 0.0, d.data_seed));
    } else {
      data.target_tasks.tasks.push_back(
          split_few_shot(t, d.n_train, d.n_val, d.test_fraction, d.data_seed));
    }
  }
  return data;
}

MetricsSink file_sink(std::ofstream& out) {
  return [&out](const std::string& line) { out << line << '\n'; };
}

int cmd_gen_data(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out);
  TaskSet tasks;
  tasks.role = TaskSetRole::target;
  LMCorpus corpus;

  if (cfg.data.source == DataSource::synthetic) {
    if (cfg.data.num_relations > 0) {
      World world = gen_world(cfg.data.num_entities, cfg.data.num_relations,
                              cfg.data.data_seed);
      save_world(world, cfg.out / kWorldFile);
      corpus = gen_lm_corpus(world, cfg.data.corpus_docs, cfg.data.corpus_facts_per_doc,
                             cfg.data.data_seed);
      save_corpus(corpus, cfg.out / kCorpusFile);
      tasks = gen_relation_tasks(world, cfg.data.data_seed);
    }
    if (cfg.data.pattern_tasks > 0) {
      TaskSet patterns = gen_pattern_tasks(cfg.data.pattern_tasks, cfg.data.pattern_labels,
                                           cfg.data.pattern_seq_len, cfg.data.data_seed,
                                           cfg.data.pattern_examples, cfg.data.pattern_ordering);
      for (Task& t : patterns.tasks) tasks.tasks.push_back(std::move(t));
    }
  } else {
    tasks = load_tasks_jsonl(cfg.data.tasks_path);
    if (!cfg.data.corpus_path.empty()) {
      corpus = load_corpus(cfg.data.corpus_path);
      save_corpus(corpus, cfg.out / kCorpusFile);
    }
  }
  tasks.validate();
  require(!tasks.tasks.empty(), Errc::invalid_config, "data spec produces no tasks");
  save_tasks_jsonl(tasks, cfg.out / kTasksFile);

  Vocab vocab = Vocab::build({&tasks}, corpus.documents.empty() ? nullptr : &corpus);
  vocab.save(cfg.out / kVocabFile);
  write_resolved(cfg, cfg.out);
  std::cerr << "[gen-data] " << tasks.tasks.size() << " tasks, vocab " << vocab.size()
            << ", corpus docs " << corpus.documents.size() << " -> " << cfg.out.string()
            << '\n';
  return 0;
}

int cmd_pretrain(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out);
  ExperimentData data = load_data(cfg);
  const fs::path art = artifacts_dir(cfg);
  const bool needs_corpus = cfg.pretrain_steps > 0 || cfg.student_pretrain_steps > 0;
  if (needs_corpus)
    require(!data.corpus.documents.empty(), Errc::dependency,
            "missing artifact " + (art / kCorpusFile).string() + " (pretraining needs a corpus)");

  ModelConfig tcfg = cfg.teacher;
  tcfg.vocab_size = static_cast<int>(data.vocab.size());
  Parameters<float> teacher =
      init_params<float>(tcfg, derive_seed(cfg.data.data_seed, "teacher_init"), Role::teacher);

  std::ofstream metrics(cfg.out / kMetricsFile);
  MetricsSink sink = file_sink(metrics);

  if (cfg.pretrain_steps > 0) {
    TrainConfig pc;
    pc.peak_lr = cfg.pretrain_lr;
    pc.warmup_steps = std::min(100, cfg.pretrain_steps);
    pc.max_steps = cfg.pretrain_steps;
    pc.batch_size = cfg.pretrain_batch;
    pc.seed = derive_seed(cfg.data.data_seed, "teacher_pretrain");
    std::cerr << "[pretrain] teacher LM pretraining, " << cfg.pretrain_steps << " steps\n";
    teacher = pretrain_lm(std::move(teacher), data.corpus, data.vocab, pc, sink);
  }
  save_checkpoint(teacher, nullptr, cfg.out / kTeacherBase);

  if (cfg.teacher_ict_steps > 0) {
    TrainConfig tc = cfg.train;
    tc.max_steps = cfg.teacher_ict_steps;
    tc.warmup_steps = std::min(tc.warmup_steps, tc.max_steps);
    tc.seed = derive_seed(cfg.data.data_seed, "teacher_ict");
    tc.subsample_fraction = 1.0;
    tc.task_subset_size = 0;
    KDConfig kd = cfg.kd;
    kd.method = Method::ICT;
    std::cerr << "[pretrain] teacher in-context tuning, " << cfg.teacher_ict_steps
              << " steps\n";
    teacher = train_in_context(std::move(teacher), nullptr, data.train_tasks, nullptr, kd, tc,
                               data.val_tasks, data.vocab, sink);
  }
  save_checkpoint(teacher, nullptr, cfg.out / kTeacherCkpt);

  if (cfg.student_pretrain_steps > 0) {
    ModelConfig scfg = cfg.student;
    scfg.vocab_size = static_cast<int>(data.vocab.size());
    Parameters<float> student = init_params<float>(
        scfg, derive_seed(cfg.data.data_seed, "student_init"), Role::student);
    TrainConfig pc;
    pc.peak_lr = cfg.pretrain_lr;
    pc.warmup_steps = std::min(100, cfg.student_pretrain_steps);
    pc.max_steps = cfg.student_pretrain_steps;
    pc.batch_size = cfg.pretrain_batch;
    pc.seed = derive_seed(cfg.data.data_seed, "student_pretrain");
    std::cerr << "[pretrain] student LM pretraining, " << cfg.student_pretrain_steps
              << " steps\n";
    student = pretrain_lm(std::move(student), data.corpus, data.vocab, pc, sink);
    save_checkpoint(student, nullptr, cfg.out / kStudentBase);
  }
  write_resolved(cfg, cfg.out);
  return 0;
}

Parameters<float> load_student_base(const ExperimentConfig& cfg, const Vocab& vocab) {
  const fs::path art = artifacts_dir(cfg);
  ModelConfig scfg = cfg.student;
  scfg.vocab_size = static_cast<int>(vocab.size());
  if (fs::exists(art / kStudentBase)) {
    Checkpoint ck = load_checkpoint(art / kStudentBase, &scfg);
    return std::move(ck.params);
  }
  return init_params<float>(scfg, derive_seed(cfg.data.data_seed, "student_init"),
                            Role::student);
}

int cmd_train(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out);
  ExperimentData data = load_data(cfg);
  const fs::path art = artifacts_dir(cfg);

  KDConfig kd = cfg.kd;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  if (method_needs_lm(kd.method)) {
    require(!data.corpus.documents.empty(), Errc::dependency,
            "missing artifact " + (art / kCorpusFile).string() + " (method " +
                to_string(kd.method) + " mixes in LM data)");
    if (cfg.lm_mix_max_steps > 0) tc.max_steps = cfg.lm_mix_max_steps;
    tc.grad_accum = cfg.lm_mix_grad_accum;
  }

  std::optional<Parameters<float>> teacher;
  if (method_needs_teacher(kd.method)) {
    ModelConfig tcfg = cfg.teacher;
    tcfg.vocab_size = static_cast<int>(data.vocab.size());
    require_artifact(art / kTeacherCkpt,
                     std::string("method ") + to_string(kd.method) +
                         " needs a teacher; run pretrain first");
    teacher = std::move(load_checkpoint(art / kTeacherCkpt, &tcfg).params);
  }

  Parameters<float> student = load_student_base(cfg, data.vocab);

  std::ofstream metrics(cfg.out / kMetricsFile);
  require(metrics.good(), Errc::io, "cannot write metrics stream");
  MetricsSink sink = file_sink(metrics);

  std::cerr << "[train] method " << to_string(kd.method) << ", paradigm "
            << to_string(cfg.paradigm) << ", seed " << cfg.seed << ", " << tc.max_steps
            << " steps\n";
  if (kd.method == Method::MULTITASK_FT) {
    student =
        multitask_ft_train(std::move(student), data.train_tasks, tc, data.val_tasks,
                           data.vocab, sink);
  } else {
    student = train_in_context(std::move(student), teacher ? &*teacher : nullptr,
                               data.train_tasks, data.corpus.documents.empty() ? nullptr
                                                                               : &data.corpus,
                               kd, tc, data.val_tasks, data.vocab, sink);
  }
  save_checkpoint(student, nullptr, cfg.out / kStudentCkpt);
  write_resolved(cfg, cfg.out);
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, bool force) {
  ExperimentData data = load_data(cfg);
  const fs::path art = artifacts_dir(cfg);

  Parameters<float> model = [&] {
    if (cfg.eval_model == "teacher") {
      ModelConfig tcfg = cfg.teacher;
      tcfg.vocab_size = static_cast<int>(data.vocab.size());
      require_artifact(art / kTeacherCkpt, "run pretrain first");
      return std::move(load_checkpoint(art / kTeacherCkpt, &tcfg).params);
    }
    ModelConfig scfg = cfg.student;
    scfg.vocab_size = static_cast<int>(data.vocab.size());
    require_artifact(cfg.out / kStudentCkpt, "run train first");
    return std::move(load_checkpoint(cfg.out / kStudentCkpt, &scfg).params);
  }();

  if (cfg.eval_model == "student") {
    const fs::path resolved = cfg.out / kResolved;
    require_artifact(resolved, "run train first");
    if (!force)
      require(resolved_matches(cfg, cfg.out), Errc::validation,
              "config fingerprint differs from " + resolved.string() +
                  " (pass --force to evaluate anyway)");
  }

  std::ofstream dump;
  if (cfg.dump_predictions) dump.open(cfg.out / kPredictions);

  Rng eval_rng = Rng(cfg.seed).fork("eval");
  std::map<std::string, Metrics> per_task;
  for (const Task& task : data.target_tasks.tasks) {
    if (task.test.empty()) continue;
    const int k = std::min<std::size_t>(static_cast<std::size_t>(cfg.kd.k_demos),
                                        task.pool.size());
    Rng task_rng = eval_rng.fork(task.id);
    std::vector<RankingRecord> rankings;
    std::vector<std::pair<SymbolSeq, SymbolSeq>> pairs;
    for (std::size_t i = 0; i < task.test.size(); ++i) {
      const Example& query = task.test[i];
      Rng query_rng = task_rng.fork("query", i);
      Prediction pred =
          majority_vote_predict(model, data.vocab, task, query,
                                static_cast<int>(task.pool.size()), k, cfg.kd.m_votes,
                                cfg.kd.temperature, query_rng);
      if (task.kind == TaskKind::relation) {
        RankingRecord rec;
        rec.gold = query.y;
        for (const RankedCandidate& rc : pred.ranked)
          rec.ranked.push_back(task.candidates[static_cast<std::size_t>(rc.index)]);
        rankings.push_back(std::move(rec));
      } else {
        pairs.emplace_back(pred.label, query.y);
      }
      if (cfg.dump_predictions) dump << prediction_debug_json(pred, task, query) << '\n';
    }
    Metrics m;
    if (task.kind == TaskKind::relation) {
      m.p_at_1 = precision_at_k(rankings, 1);
      m.p_at_10 = precision_at_k(rankings, 10);
      m.n_examples = rankings.size();
    } else {
      auto [f1, acc] = classification_scores(pairs, task.candidates);
      m.macro_f1 = f1;
      m.accuracy = acc;
      m.n_examples = pairs.size();
    }
    per_task[task.id] = m;
  }
  require(!per_task.empty(), Errc::invalid_config, "no test examples to evaluate");

  EvalReport report = aggregate_report(per_task);
  report.fingerprint = config_fingerprint(cfg);
  save_report_json(report, cfg.out / kReportJson);
  save_report_csv(report, cfg.out / kReportCsv);
  std::cerr << "[eval] " << cfg.eval_model << " on " << per_task.size() << " tasks";
  if (report.average.p_at_1) std::cerr << ", P@1 " << *report.average.p_at_1;
  if (report.average.p_at_10) std::cerr << ", P@10 " << *report.average.p_at_10;
  if (report.average.macro_f1) std::cerr << ", macro-F1 " << *report.average.macro_f1;
  if (report.average.accuracy) std::cerr << ", accuracy " << *report.average.accuracy;
  std::cerr << '\n';
  return 0;
}

struct CompareRow {
  Method method;
  std::uint64_t seed;
  double fraction;
  int task_subset;
  int m_votes;
  Metrics metrics;
};

std::string cell_name(const CompareRow& row) {
  std::string name = to_string(row.method);
  name += "_seed" + std::to_string(row.seed);
  if (row.fraction < 1.0) name += "_f" + format_number(row.fraction);
  if (row.task_subset > 0) name += "_n" + std::to_string(row.task_subset);
  name += "_m" + std::to_string(row.m_votes);
  for (char& c : name)
    if (c == '.') c = 'p';
  return name;
}

json metrics_json(const Metrics& m) {
  json j;
  if (m.p_at_1) j["p_at_1"] = *m.p_at_1;
  if (m.p_at_10) j["p_at_10"] = *m.p_at_10;
  if (m.macro_f1) j["macro_f1"] = *m.macro_f1;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  return j;
}

int cmd_compare(const ExperimentConfig& cfg, bool force) {
  require(!cfg.compare_methods.empty(), Errc::invalid_config,
          "compare needs [compare] methods");
  require(!cfg.compare_seeds.empty(), Errc::invalid_config, "compare needs [compare] seeds");

  const fs::path shared = cfg.out / "shared";
  ExperimentConfig shared_cfg = cfg;
  shared_cfg.out = shared;
  shared_cfg.artifacts.clear();
  if (!resolved_matches(shared_cfg, shared) || !fs::exists(shared / kTeacherCkpt)) {
    cmd_gen_data(shared_cfg);
    cmd_pretrain(shared_cfg);
  } else {
    std::cerr << "[compare] reusing shared artifacts in " << shared.string() << '\n';
  }

  std::vector<double> fractions = cfg.compare_subsample_fractions;
  if (fractions.empty()) fractions = {cfg.train.subsample_fraction};
  std::vector<int> subsets = cfg.compare_task_subset_sizes;
  if (subsets.empty()) subsets = {cfg.train.task_subset_size};
  std::vector<int> ms = cfg.compare_m_values;
  if (ms.empty()) ms = {cfg.kd.m_votes};

  std::vector<CompareRow> rows;
  for (Method method : cfg.compare_methods)
    for (double fraction : fractions)
      for (int subset : subsets)
        for (int m : ms)
          for (std::uint64_t seed : cfg.compare_seeds) {
            CompareRow row{method, seed, fraction, subset, m, {}};
            ExperimentConfig cell = cfg;
            cell.kd.method = method;
            cell.kd.m_votes = m;
            cell.train.subsample_fraction = fraction;
            cell.train.task_subset_size = subset;
            cell.seed = seed;
            cell.train.seed = seed;
            cell.compare_methods.clear();
            cell.compare_subsample_fractions.clear();
            cell.compare_task_subset_sizes.clear();
            cell.compare_m_values.clear();
            cell.compare_seeds = {seed};
            cell.out = cfg.out / "cells" / cell_name(row);
            cell.artifacts = shared;
            if (!(resolved_matches(cell, cell.out) && fs::exists(cell.out / kReportJson))) {
              std::cerr << "[compare] cell " << cell_name(row) << '\n';
              cmd_train(cell);
              cmd_eval(cell, force);
            } else {
              std::cerr << "[compare] cell " << cell_name(row) << " cached\n";
            }
            row.metrics = load_report_json(cell.out / kReportJson).average;
            rows.push_back(row);
          }

  // aggregate over seeds per grid point
  struct Agg {
    std::vector<const Metrics*> runs;
  };
  std::map<std::string, Agg> groups;
  for (const CompareRow& row : rows) {
    std::string key = std::string(to_string(row.method)) + "|" + format_number(row.fraction) +
                      "|" + std::to_string(row.task_subset) + "|" + std::to_string(row.m_votes);
    groups[key].runs.push_back(&row.metrics);
  }

  auto stat = [](const std::vector<const Metrics*>& runs,
                 std::optional<double> Metrics::* field) -> std::optional<std::pair<double, double>> {
    std::vector<double> vals;
    for (const Metrics* m : runs)
      if ((m->*field).has_value()) vals.push_back(*(m->*field));
    if (vals.empty()) return std::nullopt;
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var = vals.size() > 1 ? var / static_cast<double>(vals.size() - 1) : 0.0;
    return std::make_pair(mean, std::sqrt(var));
  };

  json out_json;
  out_json["fingerprint"] = config_fingerprint(cfg);
  json jrows = json::array();
  for (const CompareRow& row : rows) {
    json r;
    r["method"] = to_string(row.method);
    r["seed"] = row.seed;
    r["subsample_fraction"] = row.fraction;
    r["task_subset_size"] = row.task_subset;
    r["m_votes"] = row.m_votes;
    r["metrics"] = metrics_json(row.metrics);
    jrows.push_back(r);
  }
  out_json["rows"] = jrows;

  json jgroups = json::array();
  for (const auto& [key, agg] : groups) {
    json g;
    std::stringstream ks(key);
    std::string method, fraction, subset, m;
    std::getline(ks, method, '|');
    std::getline(ks, fraction, '|');
    std::getline(ks, subset, '|');
    std::getline(ks, m, '|');
    g["method"] = method;
    g["subsample_fraction"] = std::stod(fraction);
    g["task_subset_size"] = std::stoi(subset);
    g["m_votes"] = std::stoi(m);
    g["n_runs"] = agg.runs.size();
    json mean, stddev;
    for (auto [name, field] :
         std::initializer_list<std::pair<const char*, std::optional<double> Metrics::*>>{
             {"p_at_1", &Metrics::p_at_1},
             {"p_at_10", &Metrics::p_at_10},
             {"macro_f1", &Metrics::macro_f1},
             {"accuracy", &Metrics::accuracy}}) {
      if (auto s = stat(agg.runs, field)) {
        mean[name] = s->first;
        stddev[name] = s->second;
      }
    }
    g["mean"] = mean;
    g["std"] = stddev;
    jgroups.push_back(g);
  }
  out_json["groups"] = jgroups;

  std::ofstream jf(cfg.out / kCompareJson);
  require(jf.good(), Errc::io, "cannot write compare.json");
  jf << out_json.dump(2) << '\n';

  std::ofstream cf(cfg.out / kCompareCsv);
  require(cf.good(), Errc::io, "cannot write compare.csv");
  cf << "method,seed,subsample_fraction,task_subset_size,m_votes,p_at_1,p_at_10,macro_f1,"
        "accuracy\n";
  auto cell_str = [](const std::optional<double>& v) {
    return v ? format_number(*v) : std::string{};
  };
  for (const CompareRow& row : rows)
    cf << to_string(row.method) << ',' << row.seed << ',' << format_number(row.fraction) << ','
       << row.task_subset << ',' << row.m_votes << ',' << cell_str(row.metrics.p_at_1) << ','
       << cell_str(row.metrics.p_at_10) << ',' << cell_str(row.metrics.macro_f1) << ','
       << cell_str(row.metrics.accuracy) << '\n';

  write_resolved(cfg, cfg.out);
  std::cerr << "[compare] " << rows.size() << " runs -> " << (cfg.out / kCompareJson).string()
            << '\n';
  return 0;
}

}  // namespace

int run_command(const std::string& command, const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  if (command == "gen-data") return cmd_gen_data(cfg);
  if (command == "pretrain") return cmd_pretrain(cfg);
  if (command == "train") return cmd_train(cfg);
  if (command == "eval") return cmd_eval(cfg, force);
  if (command == "compare") return cmd_compare(cfg, force);
  raise(Errc::invalid_config, "unknown command '" + command + "'");
}

}  // namespace icld
