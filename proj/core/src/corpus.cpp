#include "icld/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icld/rng.hpp"

namespace icld {

using nlohmann::json;

const char* to_string(TaskKind k) {
  return k == TaskKind::relation ? "relation" : "classification";
}

const char* to_string(Ordering o) { return o == Ordering::direct ? "direct" : "channel"; }

std::optional<Symbol> World::lookup(const Symbol& subject, const Symbol& relation) const {
  for (const Triple& t : triples)
    if (t.subject == subject && t.relation == relation) return t.object;
  return std::nullopt;
}

void World::validate() const {
  std::set<Symbol> ents(entities.begin(), entities.end());
  std::set<Symbol> rels(relations.begin(), relations.end());
  require(ents.size() == entities.size(), Errc::validation, "duplicate entity names");
  require(rels.size() == relations.size(), Errc::validation, "duplicate relation names");
  std::set<std::pair<Symbol, Symbol>> seen;
  for (const Triple& t : triples) {
    require(ents.count(t.subject) && ents.count(t.object), Errc::validation,
            "triple references unknown entity");
    require(rels.count(t.relation), Errc::validation, "triple references unknown relation");
    require(seen.emplace(t.subject, t.relation).second, Errc::validation,
            "multiple objects for (" + t.subject + ", " + t.relation + ")");
  }
}

std::vector<Example> Task::all_examples() const {
  std::vector<Example> out = pool;
  out.insert(out.end(), validation.begin(), validation.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

std::optional<std::size_t> Task::candidate_index(const SymbolSeq& label) const {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == label) return i;
  return std::nullopt;
}

void Task::validate() const {
  require(candidates.size() >= 2, Errc::validation, "task " + id + ": fewer than 2 candidates");
  std::set<SymbolSeq> cset(candidates.begin(), candidates.end());
  require(cset.size() == candidates.size(), Errc::validation,
          "task " + id + ": duplicate candidates");
  auto check_split = [&](const std::vector<Example>& split, const char* name) {
    for (const Example& e : split) {
      require(!e.x.empty() && !e.y.empty(), Errc::validation,
              "task " + id + ": empty example in " + name);
      require(cset.count(e.y) > 0, Errc::validation,
              "task " + id + ": label '" + join_symbols(e.y) + "' not in candidates");
    }
  };
  check_split(pool, "pool");
  check_split(validation, "validation");
  check_split(test, "test");
  // splits pairwise disjoint
  auto overlap = [](const std::vector<Example>& a, const std::vector<Example>& b) {
    for (const Example& e : a)
      if (std::find(b.begin(), b.end(), e) != b.end()) return true;
    return false;
  };
  require(!overlap(pool, validation) && !overlap(pool, test) && !overlap(validation, test),
          Errc::validation, "task " + id + ": splits overlap");
}

void LMCorpus::validate() const {
  std::size_t total = 0;
  for (const SymbolSeq& d : documents) {
    require(!d.empty(), Errc::validation, "empty document in corpus");
    total += d.size();
  }
  require(total > 0, Errc::validation, "corpus has no tokens");
}

void TaskSet::validate() const {
  std::set<std::string> ids;
  for (const Task& t : tasks) {
    require(ids.insert(t.id).second, Errc::validation, "duplicate task id " + t.id);
    t.validate();
  }
}

static std::string padded_name(const char* prefix, int i, int width) {
  std::string n = std::to_string(i);
  while (static_cast<int>(n.size()) < width) n.insert(n.begin(), '0');
  return prefix + n;
}

static int digits(int n) { return n <= 10 ? 1 : n <= 100 ? 2 : n <= 1000 ? 3 : 4; }

World gen_world(int num_entities, int num_relations, std::uint64_t seed) {
  require(num_entities >= 2, Errc::invalid_config, "gen_world: num_entities must be >= 2");
  require(num_relations >= 1, Errc::invalid_config, "gen_world: num_relations must be >= 1");
  World w;
  const int ew = digits(num_entities), rw = digits(num_relations);
  for (int i = 0; i < num_entities; ++i) w.entities.push_back(padded_name("e", i, ew));
  for (int i = 0; i < num_relations; ++i) w.relations.push_back(padded_name("r", i, rw));
  Rng rng = Rng(seed).fork("world");
  for (const Symbol& rel : w.relations)
    for (const Symbol& subj : w.entities)
      w.triples.push_back({subj, rel, w.entities[rng.below(w.entities.size())]});
  return w;
}

TaskSet gen_relation_tasks(const World& world, std::uint64_t seed) {
  world.validate();
  TaskSet set;
  set.role = TaskSetRole::target;
  Rng rng = Rng(seed).fork("relation_tasks");
  for (const Symbol& rel : world.relations) {
    Task task;
    task.id = rel;
    task.kind = TaskKind::relation;
    task.ordering = Ordering::direct;
    for (const Symbol& ent : world.entities) task.candidates.push_back({ent});
    for (const Triple& t : world.triples)
      if (t.relation == rel) task.pool.push_back({{t.subject, t.relation}, {t.object}});
    rng.fork("order", set.tasks.size()).shuffle(task.pool);
    set.tasks.push_back(std::move(task));
  }
  return set;
}

PatternRule pattern_rule_of(int task_index, int num_labels, int seq_len, std::uint64_t seed) {
  PatternRule rule;
  Rng rng = Rng(seed).fork("pattern_rule", static_cast<std::uint64_t>(task_index));
  rule.position = static_cast<int>(rng.below(static_cast<std::uint64_t>(seq_len)));
  const int aw = digits(num_labels), lw = digits(num_labels);
  for (int i = 0; i < num_labels; ++i) rule.alphabet.push_back(padded_name("s", i, aw));
  std::vector<std::size_t> perm(num_labels);
  for (int i = 0; i < num_labels; ++i) perm[i] = i;
  rng.shuffle(perm);
  for (int i = 0; i < num_labels; ++i)
    rule.label_of.push_back(padded_name("L", static_cast<int>(perm[i]), lw));
  return rule;
}

Symbol PatternRule::apply(const SymbolSeq& x) const {
  const Symbol& s = x.at(position);
  for (std::size_t i = 0; i < alphabet.size(); ++i)
    if (alphabet[i] == s) return label_of[i];
  raise(Errc::contract, "pattern rule: symbol '" + s + "' not in alphabet");
}

TaskSet gen_pattern_tasks(int num_tasks, int num_labels, int seq_len, std::uint64_t seed,
                          int examples_per_task, Ordering ordering) {
  require(num_tasks >= 1, Errc::invalid_config, "gen_pattern_tasks: num_tasks must be >= 1");
  require(num_labels >= 2, Errc::invalid_config, "gen_pattern_tasks: num_labels must be >= 2");
  require(seq_len >= 1, Errc::invalid_config, "gen_pattern_tasks: seq_len must be >= 1");
  require(examples_per_task >= 1, Errc::invalid_config,
          "gen_pattern_tasks: examples_per_task must be >= 1");

  double distinct = std::pow(static_cast<double>(num_labels), seq_len);
  const int n_examples =
      distinct < examples_per_task ? static_cast<int>(distinct) : examples_per_task;

  TaskSet set;
  set.role = TaskSetRole::target;
  const int tw = digits(num_tasks);
  for (int t = 0; t < num_tasks; ++t) {
    PatternRule rule = pattern_rule_of(t, num_labels, seq_len, seed);
    Task task;
    task.id = padded_name("pattern", t, tw);
    task.kind = TaskKind::classification;
    task.ordering = ordering;
    std::vector<Symbol> labels = rule.label_of;
    std::sort(labels.begin(), labels.end());
    for (const Symbol& l : labels) task.candidates.push_back({l});

    Rng rng = Rng(seed).fork("pattern_examples", static_cast<std::uint64_t>(t));
    std::set<SymbolSeq> seen;
    while (static_cast<int>(task.pool.size()) < n_examples) {
      SymbolSeq x;
      for (int j = 0; j < seq_len; ++j) x.push_back(rule.alphabet[rng.below(num_labels)]);
      if (!seen.insert(x).second) continue;
      task.pool.push_back({x, {rule.apply(x)}});
    }
    set.tasks.push_back(std::move(task));
  }
  return set;
}

LMCorpus gen_lm_corpus(const World& world, int num_docs, int facts_per_doc, std::uint64_t seed) {
  require(!world.triples.empty(), Errc::invalid_config, "gen_lm_corpus: empty world");
  require(num_docs >= 1 && facts_per_doc >= 1, Errc::invalid_config,
          "gen_lm_corpus: counts must be >= 1");

  // Queue of concatenated shuffled permutations of all triples. Consuming the
  // first permutation guarantees full coverage once enough slots exist.
  Rng rng = Rng(seed).fork("lm_corpus");
  const std::size_t n = world.triples.size();
  std::vector<std::size_t> queue;
  std::size_t need = static_cast<std::size_t>(num_docs) * facts_per_doc;
  while (queue.size() < need) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    queue.insert(queue.end(), perm.begin(), perm.end());
  }

  LMCorpus corpus;
  std::size_t cursor = 0;
  for (int d = 0; d < num_docs; ++d) {
    std::vector<std::size_t> picks;
    std::set<std::size_t> in_doc;
    for (int f = 0; f < facts_per_doc; ++f) {
      std::size_t take = cursor;
      if (facts_per_doc <= static_cast<int>(n)) {
        // avoid within-doc repeats across a permutation boundary
        while (take < queue.size() && in_doc.count(queue[take])) ++take;
        if (take == queue.size()) take = cursor;
      }
      std::swap(queue[cursor], queue[take]);
      picks.push_back(queue[cursor]);
      in_doc.insert(queue[cursor]);
      ++cursor;
    }
    SymbolSeq doc;
    for (std::size_t i : picks) {
      const Triple& t = world.triples[i];
      doc.push_back(t.subject);
      doc.push_back(t.relation);
      doc.push_back(t.object);
      doc.push_back(kEosSymbol);
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

TaskSet load_tasks_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open " + path.string());

  TaskSet set;
  set.role = TaskSetRole::target;
  std::map<std::string, std::size_t> index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      raise(Errc::parse_error, "line " + std::to_string(line_no) + ": " + e.what());
    }
    auto where = "line " + std::to_string(line_no);
    require(rec.is_object(), Errc::parse_error, where + ": record is not an object");
    for (const char* field : {"task", "input", "output", "candidates"})
      require(rec.contains(field), Errc::parse_error,
              where + ": missing field '" + field + "'");

    const std::string id = rec["task"].get<std::string>();
    Example ex{split_symbols(rec["input"].get<std::string>()),
               split_symbols(rec["output"].get<std::string>())};
    require(!ex.x.empty(), Errc::validation, where + ": empty input");
    require(!ex.y.empty(), Errc::validation, where + ": empty output");

    std::vector<SymbolSeq> cands;
    for (const auto& c : rec["candidates"]) cands.push_back(split_symbols(c.get<std::string>()));
    Ordering ord = Ordering::direct;
    if (rec.contains("ordering")) {
      const std::string o = rec["ordering"].get<std::string>();
      require(o == "direct" || o == "channel", Errc::parse_error,
              where + ": ordering must be 'direct' or 'channel'");
      ord = o == "channel" ? Ordering::channel : Ordering::direct;
    }
    require(std::find(cands.begin(), cands.end(), ex.y) != cands.end(), Errc::validation,
            where + ": output '" + join_symbols(ex.y) + "' not in candidates for task " + id);

    auto it = index.find(id);
    if (it == index.end()) {
      Task task;
      task.id = id;
      task.kind = TaskKind::classification;
      task.candidates = cands;
      task.ordering = ord;
      index.emplace(id, set.tasks.size());
      set.tasks.push_back(std::move(task));
      it = index.find(id);
    } else {
      const Task& t = set.tasks[it->second];
      require(t.candidates == cands, Errc::validation,
              where + ": candidates differ from earlier records of task " + id);
      require(t.ordering == ord, Errc::validation,
              where + ": ordering differs from earlier records of task " + id);
    }
    set.tasks[it->second].pool.push_back(std::move(ex));
  }
  return set;
}

void save_tasks_jsonl(const TaskSet& tasks, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write " + path.string());
  for (const Task& t : tasks.tasks) {
    json cands = json::array();
    for (const SymbolSeq& c : t.candidates) cands.push_back(join_symbols(c));
    for (const Example& e : t.all_examples()) {
      json rec = {{"task", t.id},
                  {"input", join_symbols(e.x)},
                  {"output", join_symbols(e.y)},
                  {"candidates", cands},
                  {"ordering", to_string(t.ordering)}};
      out << rec.dump() << '\n';
    }
  }
}

Task split_few_shot(const Task& task, int n_train, int n_val, double test_fraction,
                    std::uint64_t seed) {
  require(n_train >= 0 && n_val >= 0, Errc::invalid_config, "split sizes must be >= 0");
  require(test_fraction >= 0.0 && test_fraction <= 1.0, Errc::invalid_config,
          "test_fraction must lie in [0, 1]");
  std::vector<Example> all = task.all_examples();
  const std::size_t total = all.size();
  const std::size_t n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(total)));
  require(total >= static_cast<std::size_t>(n_train) + n_val + 1, Errc::invalid_split,
          "task " + task.id + ": " + std::to_string(total) + " examples cannot supply " +
              std::to_string(n_train) + "+" + std::to_string(n_val) + " plus a test split");
  require(total - n_test >= static_cast<std::size_t>(n_train) + n_val, Errc::invalid_split,
          "task " + task.id + ": only " + std::to_string(total - n_test) +
              " examples remain after the test split, need " + std::to_string(n_train + n_val));

  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng(seed).fork("split", fnv1a64(task.id)).shuffle(order);

  Task out = task;
  out.pool.clear();
  out.validation.clear();
  out.test.clear();
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n_test; ++i) out.test.push_back(all[order[cursor++]]);
  for (int i = 0; i < n_train; ++i) out.pool.push_back(all[order[cursor++]]);
  for (int i = 0; i < n_val; ++i) out.validation.push_back(all[order[cursor++]]);
  return out;
}

void save_world(const World& world, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write " + path.string());
  for (const Triple& t : world.triples)
    out << t.subject << ' ' << t.relation << ' ' << t.object << '\n';
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open " + path.string());
  World w;
  std::set<Symbol> ents, rels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    SymbolSeq f = split_symbols(line);
    require(f.size() == 3, Errc::parse_error,
            path.string() + " line " + std::to_string(line_no) + ": expected 3 fields");
    w.triples.push_back({f[0], f[1], f[2]});
    if (ents.insert(f[0]).second) w.entities.push_back(f[0]);
    if (rels.insert(f[1]).second) w.relations.push_back(f[1]);
    if (ents.insert(f[2]).second) w.entities.push_back(f[2]);
  }
  std::sort(w.entities.begin(), w.entities.end());
  std::sort(w.relations.begin(), w.relations.end());
  w.validate();
  return w;
}

void save_corpus(const LMCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write " + path.string());
  for (const SymbolSeq& d : corpus.documents) out << join_symbols(d) << '\n';
}

LMCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open " + path.string());
  LMCorpus c;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    c.documents.push_back(split_symbols(line));
  }
  c.validate();
  return c;
}

}  // namespace icld
