#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "icld/corpus.hpp"
#include "icld/eval.hpp"
#include "icld/model.hpp"
#include "icld/objectives.hpp"
#include "icld/trainer.hpp"
#include "icld/vocab.hpp"

namespace icld {

enum class Paradigm { meta_ict, multitask_ict };
const char* to_string(Paradigm p);

enum class DataSource { synthetic, jsonl };
const char* to_string(DataSource s);

struct DataSpec {
  DataSource source = DataSource::synthetic;
  std::uint64_t data_seed = 7;
  // synthetic relation world
  int num_entities = 64;
  int num_relations = 12;
  int corpus_docs = 192;
  int corpus_facts_per_doc = 8;
  // synthetic pattern tasks
  int pattern_tasks = 0;
  int pattern_labels = 4;
  int pattern_seq_len = 6;
  int pattern_examples = 64;
  Ordering pattern_ordering = Ordering::direct;
  // ingestion
  std::string tasks_path;
  std::string corpus_path;
  // few-shot split
  int n_train = 16;
  int n_val = 8;
  double test_fraction = 0.6;
  // meta-paradigm task partition
  int meta_train_tasks = 0;
  int meta_val_tasks = 2;
};

struct ExperimentConfig {
  Paradigm paradigm = Paradigm::multitask_ict;
  std::uint64_t seed = 1;
  std::filesystem::path out = "runs/exp";
  std::filesystem::path artifacts;  // input dir; defaults to out
  std::string eval_model = "student";
  bool dump_predictions = false;

  DataSpec data;
  ModelConfig teacher{.layers = 4, .heads = 4, .d_model = 128, .d_ff = 512};
  ModelConfig student{.layers = 2, .heads = 2, .d_model = 64, .d_ff = 256};
  KDConfig kd;
  TrainConfig train;

  // teacher/student preparation
  int pretrain_steps = 1500;
  double pretrain_lr = 1e-3;
  int pretrain_batch = 16;
  int student_pretrain_steps = 0;
  int teacher_ict_steps = 600;
  // overrides applied to methods that mix in LM batches
  int lm_mix_max_steps = 0;  // resolved to train.max_steps when 0
  int lm_mix_grad_accum = 5;

  // compare grid
  std::vector<Method> compare_methods;
  std::vector<std::uint64_t> compare_seeds{1, 2, 3};
  std::vector<double> compare_subsample_fractions;
  std::vector<int> compare_task_subset_sizes;
  std::vector<int> compare_m_values;

  void validate() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Strict flat-sectioned key=value loader; unknown keys and invariant
// violations are config errors naming the offender. Overrides use the same
// dotted keys ("train.max_steps", "kd.method", or bare top-level names).
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});
ExperimentConfig config_from_text(const std::string& text, const Overrides& overrides = {});

// Canonical serialization of the fully resolved config; reloading it yields
// an identical configuration.
std::string config_to_text(const ExperimentConfig& cfg);

// FNV-1a over the canonical text, excluding the location keys (out,
// artifacts). Artifact directories carry this in config.resolved; eval
// refuses to score artifacts whose fingerprint differs.
std::string config_fingerprint(const ExperimentConfig& cfg);

// Loaded data, post-split, as the pipeline consumes it.
struct ExperimentData {
  TaskSet train_tasks;   // meta-training tasks, or the target tasks themselves
  TaskSet val_tasks;     // tasks providing validation examples
  TaskSet target_tasks;  // evaluation tasks
  LMCorpus corpus;       // empty unless a corpus artifact exists
  Vocab vocab;
};

// Commands: gen-data | pretrain | train | eval | compare.
// Throws on failure; returns 0 on success.
int run_command(const std::string& command, const ExperimentConfig& cfg, bool force = false);

}  // namespace icld
