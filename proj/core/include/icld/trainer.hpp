#pragma once

#include <functional>
#include <limits>
#include <string>

#include "icld/corpus.hpp"
#include "icld/model.hpp"
#include "icld/objectives.hpp"
#include "icld/vocab.hpp"

namespace icld {

struct TrainConfig {
  double peak_lr = 3e-4;
  int warmup_steps = 100;
  int max_steps = 3000;
  int batch_size = 16;
  int grad_accum = 1;
  int eval_interval = 200;
  int patience = 2;
  std::uint64_t seed = 1;
  double subsample_fraction = 1.0;  // fraction of each task pool used
  int task_subset_size = 0;         // 0 = use all tasks

  void validate() const;
};

struct TrainState {
  std::int64_t step = 0;
  double best_validation = -std::numeric_limits<double>::infinity();
  int evals_since_best = 0;
};

enum class StopDecision { continue_training, stop };

// Strict-improvement early stopping: an improvement resets the counter,
// anything else increments it; stop once the counter exceeds patience.
StopDecision early_stop(TrainState& state, double new_metric, int patience);

enum class BatchSource { ICL, LM };
const char* to_string(BatchSource s);

// i.i.d. source draw with P(ICL) = w_icl.
BatchSource mixed_sampler(double w_icl, double w_lm, Rng& rng);

// Receives one JSON object line per optimizer step.
using MetricsSink = std::function<void(const std::string& line)>;

// Deterministic ablation selection (fixed under seed):
//   * exactly ceil(fraction * |pool|) pool examples per task
//   * exactly subset_size tasks when subset_size > 0
TaskSet apply_ablation(const TaskSet& tasks, double subsample_fraction, int task_subset_size,
                       std::uint64_t seed);
std::size_t subsampled_pool_size(std::size_t pool_size, double fraction);

// Language-model pretraining on shuffled BOS-prefixed document chunks.
Parameters<float> pretrain_lm(Parameters<float> params, const LMCorpus& corpus,
                              const Vocab& vocab, const TrainConfig& cfg,
                              const MetricsSink& sink = {});

// In-context tuning with optional distillation. Covers Meta-ICT (train_tasks
// are meta-training tasks) and Multitask-ICT (train_tasks are the target
// tasks); the paradigm only changes which tasks are passed in. Validation
// runs every eval_interval steps on val_tasks (P@10 for relation tasks,
// macro-F1 for classification); the best-validation weights are returned.
Parameters<float> train_in_context(Parameters<float> student, const Parameters<float>* teacher,
                                   const TaskSet& train_tasks, const LMCorpus* lm, KDConfig kd,
                                   const TrainConfig& cfg, const TaskSet& val_tasks,
                                   const Vocab& vocab, const MetricsSink& sink = {});

// Few-shot multitask fine-tuning baseline: the train_in_context loop with
// zero-shot prompts (query only) and the hard loss alone.
Parameters<float> multitask_ft_train(Parameters<float> student, const TaskSet& target_tasks,
                                     const TrainConfig& cfg, const TaskSet& val_tasks,
                                     const Vocab& vocab, const MetricsSink& sink = {});

// The metric train_in_context tracks between eval_intervals, exposed for
// before/after comparisons: mean over tasks of P@10 (relation) or macro-F1
// (classification) on each task's validation split, k demonstrations from the
// pool under a step-keyed stream.
double validation_metric(const Parameters<float>& params, const Vocab& vocab,
                         const TaskSet& val_tasks, const KDConfig& kd, std::uint64_t seed,
                         std::int64_t step);

}  // namespace icld
