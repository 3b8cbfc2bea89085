#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "icld/common.hpp"

namespace icld {

// The sentence terminator used in generated documents. Encodes to the
// reserved EOS token id.
inline constexpr const char* kEosSymbol = "<eos>";

struct Triple {
  Symbol subject;
  Symbol relation;
  Symbol object;
  bool operator==(const Triple&) const = default;
};

// A closed symbolic world: every relation is a total function over entities,
// so each (subject, relation) pair has exactly one object.
struct World {
  std::vector<Symbol> entities;
  std::vector<Symbol> relations;
  std::vector<Triple> triples;

  // Unique object for (subject, relation); nullopt if the pair is unknown.
  std::optional<Symbol> lookup(const Symbol& subject, const Symbol& relation) const;
  void validate() const;
};

struct Example {
  SymbolSeq x;
  SymbolSeq y;
  bool operator==(const Example&) const = default;
};

enum class TaskKind { relation, classification };
enum class Ordering { direct, channel };

const char* to_string(TaskKind k);
const char* to_string(Ordering o);

struct Task {
  std::string id;
  TaskKind kind = TaskKind::classification;
  std::vector<SymbolSeq> candidates;
  Ordering ordering = Ordering::direct;
  std::vector<Example> pool;        // few-shot training pool
  std::vector<Example> validation;
  std::vector<Example> test;

  std::size_t total_examples() const { return pool.size() + validation.size() + test.size(); }
  std::vector<Example> all_examples() const;
  // Index of a label in `candidates`, or nullopt.
  std::optional<std::size_t> candidate_index(const SymbolSeq& label) const;
  void validate() const;
};

struct LMCorpus {
  std::vector<SymbolSeq> documents;
  void validate() const;
};

enum class TaskSetRole { meta_train, target };

struct TaskSet {
  TaskSetRole role = TaskSetRole::target;
  std::vector<Task> tasks;
  void validate() const;
};

// Seeded world generator: each relation is sampled as a uniform total
// function entities -> entities. Triple count is |entities| * |relations|.
World gen_world(int num_entities, int num_relations, std::uint64_t seed);

// One task per relation, LAMA-style: x = [subject, relation], y = [object],
// candidates = all entities. All examples land in the pool; split_few_shot
// redistributes them.
TaskSet gen_relation_tasks(const World& world, std::uint64_t seed);

// Synthetic classification tasks with a hidden deterministic rule: the label
// is the symbol at a task-specific position, mapped through a task-specific
// permutation of the symbol alphabet. Inputs are distinct per task.
TaskSet gen_pattern_tasks(int num_tasks, int num_labels, int seq_len, std::uint64_t seed,
                          int examples_per_task = 64, Ordering ordering = Ordering::direct);

// The hidden rule of a generated pattern task, re-derivable for oracle checks.
struct PatternRule {
  int position = 0;
  std::vector<Symbol> alphabet;      // input symbols
  std::vector<Symbol> label_of;      // alphabet index -> label symbol
  Symbol apply(const SymbolSeq& x) const;
};
PatternRule pattern_rule_of(int task_index, int num_labels, int seq_len, std::uint64_t seed);

// Documents of "subject relation object <eos>" fact sentences. When
// num_docs * facts_per_doc >= |triples| every triple appears at least once;
// facts do not repeat within a document when avoidable.
LMCorpus gen_lm_corpus(const World& world, int num_docs, int facts_per_doc, std::uint64_t seed);

// JSONL ingestion: one record per line with fields task/input/output/
// candidates and optional ordering. Records sharing a task id are grouped,
// whitespace-tokenized, and all examples placed in the pool.
TaskSet load_tasks_jsonl(const std::filesystem::path& path);
void save_tasks_jsonl(const TaskSet& tasks, const std::filesystem::path& path);

// Deterministic few-shot split over the union of a task's examples: the test
// fraction is reserved first, then n_train pool and n_val validation examples
// are drawn disjointly from the remainder.
Task split_few_shot(const Task& task, int n_train, int n_val, double test_fraction,
                    std::uint64_t seed);

// Line-oriented persistence: "subject relation object" per line for worlds,
// one space-joined document per line for corpora.
void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);
void save_corpus(const LMCorpus& corpus, const std::filesystem::path& path);
LMCorpus load_corpus(const std::filesystem::path& path);

}  // namespace icld
