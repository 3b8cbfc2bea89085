#include "icld/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <nlohmann/json.hpp>

#include "icld/eval.hpp"
#include "icld/inference.hpp"
#include "icld/prompt.hpp"

namespace icld {

using nlohmann::json;

void TrainConfig::validate() const {
  require(peak_lr > 0.0, Errc::invalid_config, "peak_lr must be positive");
  require(warmup_steps >= 0, Errc::invalid_config, "warmup_steps must be >= 0");
  require(max_steps >= warmup_steps, Errc::invalid_config, "max_steps must be >= warmup_steps");
  require(batch_size >= 1 && grad_accum >= 1, Errc::invalid_config,
          "batch_size and grad_accum must be >= 1");
  require(eval_interval >= 1, Errc::invalid_config, "eval_interval must be >= 1");
  require(patience >= 1, Errc::invalid_config, "patience must be >= 1");
  require(subsample_fraction > 0.0 && subsample_fraction <= 1.0, Errc::invalid_config,
          "subsample_fraction must lie in (0, 1]");
  require(task_subset_size >= 0, Errc::invalid_config, "task_subset_size must be >= 0");
}

StopDecision early_stop(TrainState& state, double new_metric, int patience) {
  require(patience >= 1, Errc::contract, "patience must be >= 1");
  if (new_metric > state.best_validation) {
    state.best_validation = new_metric;
    state.evals_since_best = 0;
    return StopDecision::continue_training;
  }
  state.evals_since_best += 1;
  return state.evals_since_best > patience ? StopDecision::stop
                                           : StopDecision::continue_training;
}

const char* to_string(BatchSource s) { return s == BatchSource::ICL ? "ICL" : "LM"; }

BatchSource mixed_sampler(double w_icl, double w_lm, Rng& rng) {
  require(w_icl >= 0.0 && w_lm >= 0.0 && std::abs(w_icl + w_lm - 1.0) <= 1e-9,
          Errc::invalid_config, "mix weights must be nonnegative and sum to 1");
  return rng.unit() < w_icl ? BatchSource::ICL : BatchSource::LM;
}

std::size_t subsampled_pool_size(std::size_t pool_size, double fraction) {
  return static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(pool_size) - 1e-12));
}

TaskSet apply_ablation(const TaskSet& tasks, double subsample_fraction, int task_subset_size,
                       std::uint64_t seed) {
  TaskSet out;
  out.role = tasks.role;
  std::vector<std::size_t> chosen(tasks.tasks.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (task_subset_size > 0) {
    require(static_cast<std::size_t>(task_subset_size) <= tasks.tasks.size(),
            Errc::invalid_config, "task_subset_size exceeds the number of tasks");
    Rng(seed).fork("task_subset").shuffle(chosen);
    chosen.resize(static_cast<std::size_t>(task_subset_size));
    std::sort(chosen.begin(), chosen.end());
  }
  for (std::size_t i : chosen) {
    Task t = tasks.tasks[i];
    if (subsample_fraction < 1.0) {
      const std::size_t keep = subsampled_pool_size(t.pool.size(), subsample_fraction);
      std::vector<std::size_t> order(t.pool.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      Rng(seed).fork("subsample", fnv1a64(t.id)).shuffle(order);
      std::vector<Example> pool;
      pool.reserve(keep);
      for (std::size_t j = 0; j < keep; ++j) pool.push_back(t.pool[order[j]]);
      t.pool = std::move(pool);
    }
    out.tasks.push_back(std::move(t));
  }
  return out;
}

namespace {

std::vector<TokenSeq> encode_doc_chunks(const LMCorpus& corpus, const Vocab& vocab,
                                        int context_len) {
  std::vector<TokenSeq> chunks;
  for (const SymbolSeq& doc : corpus.documents) {
    TokenSeq enc = vocab.encode_seq(doc);
    enc.insert(enc.begin(), kBos);
    for (TokenSeq& c : chunk_document(enc, context_len))
      if (c.size() >= 2) chunks.push_back(std::move(c));
  }
  require(!chunks.empty(), Errc::invalid_config, "corpus yields no trainable chunks");
  return chunks;
}

std::string metrics_line(std::int64_t step, const std::string& method, double alpha,
                         const LossParts& parts, double total, double lr,
                         std::optional<double> val_metric) {
  json j;
  j["step"] = step;
  j["method"] = method;
  j["alpha"] = alpha;
  j["ict_hard"] = parts.ict_hard.value_or(0.0);
  j["ict_soft"] = parts.ict_soft.value_or(0.0);
  j["lm_hard"] = parts.lm_hard.value_or(0.0);
  j["lm_soft"] = parts.lm_soft.value_or(0.0);
  j["total"] = total;
  j["lr"] = lr;
  if (val_metric) j["val_metric"] = *val_metric;
  return j.dump();
}

std::size_t eligible_count(const Task& task, const Example& query) {
  std::size_t n = 0;
  for (const Example& e : task.pool)
    if (!(e == query)) ++n;
  return n;
}

struct EncodedTask {
  const Task* task = nullptr;
  std::vector<TokenSeq> cand_tokens;
  std::size_t max_len = 0;  // prompt budget after the candidate reserve
};

}  // namespace

double validation_metric(const Parameters<float>& params, const Vocab& vocab,
                         const TaskSet& val_tasks, const KDConfig& kd, std::uint64_t seed,
                         std::int64_t step) {
  double sum = 0.0;
  std::size_t counted = 0;
  Rng base = Rng(seed).fork("val", static_cast<std::uint64_t>(step));
  for (const Task& task : val_tasks.tasks) {
    if (task.validation.empty()) continue;
    Rng task_rng = base.fork(task.id);
    std::vector<RankingRecord> rankings;
    std::vector<std::pair<SymbolSeq, SymbolSeq>> pairs;
    for (std::size_t i = 0; i < task.validation.size(); ++i) {
      const Example& query = task.validation[i];
      const int k = std::min<std::size_t>(static_cast<std::size_t>(kd.k_demos),
                                          eligible_count(task, query));
      Rng ex_rng = task_rng.fork("ex", i);
      std::vector<Example> demos = sample_demonstrations(task, query, k, ex_rng);
      if (task.kind == TaskKind::relation) {
        std::vector<RankedCandidate> ranked =
            rank_candidates(params, vocab, task, query, demos, kd.temperature);
        RankingRecord rec;
        rec.gold = query.y;
        for (const RankedCandidate& rc : ranked)
          rec.ranked.push_back(task.candidates[static_cast<std::size_t>(rc.index)]);
        rankings.push_back(std::move(rec));
      } else {
        Prediction p = icl_predict(params, vocab, task, query, demos, kd.temperature);
        pairs.emplace_back(p.label, query.y);
      }
    }
    if (task.kind == TaskKind::relation) {
      sum += precision_at_k(rankings, 10);
    } else {
      sum += classification_scores(pairs, task.candidates).first;
    }
    ++counted;
  }
  require(counted > 0, Errc::invalid_config, "no validation examples available");
  const double metric = sum / static_cast<double>(counted);
  require(std::isfinite(metric), Errc::numeric, "validation metric is not finite");
  return metric;
}

Parameters<float> pretrain_lm(Parameters<float> params, const LMCorpus& corpus,
                              const Vocab& vocab, const TrainConfig& cfg,
                              const MetricsSink& sink) {
  cfg.validate();
  require(!corpus.documents.empty(), Errc::invalid_config, "pretrain_lm: empty corpus");
  if (cfg.max_steps == 0) return params;

  std::vector<TokenSeq> chunks = encode_doc_chunks(corpus, vocab, params.config.context_len);
  Rng order_rng = Rng(cfg.seed).fork("pretrain_order");
  std::vector<std::size_t> order(chunks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  OptState<float> opt =
      make_opt_state<float>(params.config, cfg.peak_lr, cfg.warmup_steps, cfg.max_steps);
  Weights<float> grads = make_weights<float>(params.config);

  for (std::int64_t t = 0; t < cfg.max_steps; ++t) {
    zero_weights(grads);
    std::vector<TokenSeq> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(chunks[order[cursor++]]);
    }
    const double lr = lr_at(t, opt.peak_lr, opt.warmup_steps, opt.max_steps);
    const float loss =
        lm_hard_loss(params, std::span<const TokenSeq>(batch), &grads, 1.0f);
    adamw_step(params, grads, opt);
    if (sink) {
      LossParts parts;
      parts.lm_hard = loss;
      sink(metrics_line(t, "PRETRAIN", 1.0, parts, loss, lr, std::nullopt));
    }
  }
  return params;
}

Parameters<float> train_in_context(Parameters<float> student, const Parameters<float>* teacher,
                                   const TaskSet& train_tasks, const LMCorpus* lm, KDConfig kd,
                                   const TrainConfig& cfg, const TaskSet& val_tasks,
                                   const Vocab& vocab, const MetricsSink& sink) {
  kd.validate();
  cfg.validate();
  const Method method = kd.method;
  require((teacher != nullptr) == method_needs_teacher(method), Errc::contract,
          std::string("method ") + to_string(method) +
              (method_needs_teacher(method) ? " requires a teacher" : " takes no teacher"));
  require((lm != nullptr) == method_needs_lm(method), Errc::contract,
          std::string("method ") + to_string(method) +
              (method_needs_lm(method) ? " requires an LM corpus" : " takes no LM corpus"));
  if (teacher)
    require(teacher->config.vocab_size == student.config.vocab_size, Errc::contract,
            "teacher and student vocabularies differ");
  if (method == Method::RAW || cfg.max_steps == 0) return student;
  if (kd.schedule_steps == 0) kd.schedule_steps = cfg.max_steps;

  TaskSet tasks = apply_ablation(train_tasks, cfg.subsample_fraction, cfg.task_subset_size,
                                 cfg.seed);
  require(!tasks.tasks.empty(), Errc::invalid_config, "no training tasks");
  for (const Task& t : tasks.tasks)
    require(!t.pool.empty(), Errc::invalid_config, "task " + t.id + " has an empty pool");

  const int k_demos = method == Method::MULTITASK_FT ? 0 : kd.k_demos;
  const bool use_icl = method_has_ict_hard(method);
  const bool use_soft = method_has_ict_soft(method);
  const bool use_lm = method_needs_lm(method);

  std::vector<EncodedTask> enc_tasks;
  for (const Task& t : tasks.tasks) {
    EncodedTask e;
    e.task = &t;
    for (const SymbolSeq& c : t.candidates) e.cand_tokens.push_back(vocab.encode_seq(c));
    const std::size_t reserve = candidate_reserve(t, vocab);
    require(static_cast<std::size_t>(student.config.context_len) > reserve,
            Errc::invalid_config, "task " + t.id + " candidates exceed the student context");
    e.max_len = static_cast<std::size_t>(student.config.context_len) - reserve;
    if (teacher) {
      require(static_cast<std::size_t>(teacher->config.context_len) > reserve, Errc::contract,
              "task " + t.id + " candidates exceed the teacher context");
      e.max_len = std::min(
          e.max_len, static_cast<std::size_t>(teacher->config.context_len) - reserve);
    }
    enc_tasks.push_back(std::move(e));
  }

  std::vector<TokenSeq> lm_chunks;
  if (use_lm) {
    const int ctx = teacher ? std::min(student.config.context_len, teacher->config.context_len)
                            : student.config.context_len;
    lm_chunks = encode_doc_chunks(*lm, vocab, ctx);
  }

  Rng base(cfg.seed);
  Rng r_batch = base.fork("batch");
  Rng r_demo = base.fork("demo");
  Rng r_mix = base.fork("mix");

  OptState<float> opt =
      make_opt_state<float>(student.config, cfg.peak_lr, cfg.warmup_steps, cfg.max_steps);
  Weights<float> grads = make_weights<float>(student.config);

  TrainState state;
  std::optional<Parameters<float>> best;
  const bool validate = !val_tasks.tasks.empty();
  bool stopped = false;

  for (std::int64_t t = 0; t < cfg.max_steps; ++t) {
    zero_weights(grads);
    const LossCoeffs coeffs = kd_coeffs(t, kd);
    const float inv_accum = 1.0f / static_cast<float>(cfg.grad_accum);
    LossParts parts;
    int n_icl = 0, n_lm = 0;
    double sum_ih = 0, sum_is = 0, sum_lh = 0, sum_ls = 0;

    for (int micro = 0; micro < cfg.grad_accum; ++micro) {
      BatchSource source = BatchSource::ICL;
      if (method == Method::ICL_D_LM)
        source = mixed_sampler(kd.mix_icl, kd.mix_lm, r_mix);
      else if (method == Method::LM_KD)
        source = BatchSource::LM;

      if (source == BatchSource::ICL && use_icl) {
        const EncodedTask& et = enc_tasks[r_batch.below(enc_tasks.size())];
        const Task& task = *et.task;
        std::vector<HardItem> hard_items;
        std::vector<SoftItem> soft_items;
        for (int b = 0; b < cfg.batch_size; ++b) {
          const Example& query = task.pool[r_batch.below(task.pool.size())];
          const int k = std::min<std::size_t>(static_cast<std::size_t>(k_demos),
                                              eligible_count(task, query));
          std::vector<Example> demos = sample_demonstrations(task, query, k, r_demo);
          Prompt prompt = build_prompt(demos, query, task.ordering, vocab, et.max_len);
          if (use_soft) soft_items.push_back({prompt, et.cand_tokens});
          hard_items.push_back({std::move(prompt), vocab.encode_seq(query.y)});
        }
        const float h_scale = static_cast<float>(coeffs.hard) * inv_accum;
        sum_ih += ict_hard_loss(student, std::span<const HardItem>(hard_items),
                                h_scale != 0.0f ? &grads : nullptr, h_scale);
        if (use_soft) {
          const float s_scale = static_cast<float>(coeffs.soft) * inv_accum;
          sum_is += ict_soft_loss(student, *teacher, std::span<const SoftItem>(soft_items),
                                  kd.temperature, s_scale != 0.0f ? &grads : nullptr, s_scale);
        }
        ++n_icl;
      } else {
        std::vector<TokenSeq> batch;
        for (int b = 0; b < cfg.batch_size; ++b)
          batch.push_back(lm_chunks[r_batch.below(lm_chunks.size())]);
        const float h_scale =
            static_cast<float>(coeffs.hard * kd.beta) * inv_accum;
        sum_lh += lm_hard_loss(student, std::span<const TokenSeq>(batch),
                               h_scale != 0.0f ? &grads : nullptr, h_scale);
        const float s_scale = static_cast<float>(coeffs.soft * kd.beta) * inv_accum;
        sum_ls += lm_soft_loss(student, *teacher, std::span<const TokenSeq>(batch),
                               kd.temperature, s_scale != 0.0f ? &grads : nullptr, s_scale);
        ++n_lm;
      }
    }

    const double lr = lr_at(t, opt.peak_lr, opt.warmup_steps, opt.max_steps);
    adamw_step(student, grads, opt);

    if (n_icl > 0) {
      parts.ict_hard = sum_ih / n_icl;
      if (use_soft) parts.ict_soft = sum_is / n_icl;
    }
    if (n_lm > 0) {
      parts.lm_hard = sum_lh / n_lm;
      parts.lm_soft = sum_ls / n_lm;
    }
    const double total =
        coeffs.hard * (parts.ict_hard.value_or(0.0) + kd.beta * parts.lm_hard.value_or(0.0)) +
        coeffs.soft * (parts.ict_soft.value_or(0.0) + kd.beta * parts.lm_soft.value_or(0.0));
    const double alpha_used = method_alpha_blended(method) ? alpha_at(t, kd) : 1.0;

    std::optional<double> val;
    if (validate && (t + 1) % cfg.eval_interval == 0) {
      const double metric = validation_metric(student, vocab, val_tasks, kd, cfg.seed, t + 1);
      val = metric;
      const StopDecision decision = early_stop(state, metric, cfg.patience);
      if (state.evals_since_best == 0) best = student;
      stopped = decision == StopDecision::stop;
    }
    if (sink) sink(metrics_line(t, to_string(method), alpha_used, parts, total, lr, val));
    if (stopped) break;
  }

  if (validate) {
    if (!stopped && cfg.max_steps % cfg.eval_interval != 0) {
      // training ended between intervals; score the final weights too
      const double metric =
          validation_metric(student, vocab, val_tasks, kd, cfg.seed, cfg.max_steps);
      if (metric > state.best_validation || !best) best = student;
    }
    return best ? *best : student;
  }
  return student;
}

Parameters<float> multitask_ft_train(Parameters<float> student, const TaskSet& target_tasks,
                                     const TrainConfig& cfg, const TaskSet& val_tasks,
                                     const Vocab& vocab, const MetricsSink& sink) {
  KDConfig kd;
  kd.method = Method::MULTITASK_FT;
  kd.k_demos = 0;
  return train_in_context(std::move(student), nullptr, target_tasks, nullptr, kd, cfg,
                          val_tasks, vocab, sink);
}

}  // namespace icld
