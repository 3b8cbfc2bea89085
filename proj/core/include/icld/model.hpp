#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icld/common.hpp"
#include "icld/prompt.hpp"
#include "icld/tensor.hpp"

namespace icld {

enum class Role { teacher, student };
const char* to_string(Role r);

struct ModelConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 0;
  int context_len = 256;

  int head_dim() const { return d_model / heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Pre-norm causal decoder weights. Linear layers use the y = xW + b
// convention with W stored [in, out]; the output projection is untied.
template <typename T>
struct BlockWeights {
  Tensor<T> ln1_g, ln1_b;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_g, ln2_b;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
struct Weights {
  Tensor<T> tok_emb;  // [V, D]
  Tensor<T> pos_emb;  // [C, D]
  std::vector<BlockWeights<T>> blocks;
  Tensor<T> lnf_g, lnf_b;
  Tensor<T> head_w;  // [D, V]
};

template <typename T>
Weights<T> make_weights(const ModelConfig& cfg);  // zero-filled, shapes per cfg

template <typename T>
void zero_weights(Weights<T>& w);

// Fixed iteration order over named arrays. The checkpoint format, the AdamW
// update, and the finite-difference harness all walk weights through this.
template <typename T, typename Fn>
void for_each_tensor(Weights<T>& w, Fn&& fn) {
  fn(std::string("tok_emb"), w.tok_emb);
  fn(std::string("pos_emb"), w.pos_emb);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    BlockWeights<T>& b = w.blocks[l];
    const std::string p = "block" + std::to_string(l) + ".";
    fn(p + "ln1_g", b.ln1_g);
    fn(p + "ln1_b", b.ln1_b);
    fn(p + "wq", b.wq);
    fn(p + "bq", b.bq);
    fn(p + "wk", b.wk);
    fn(p + "bk", b.bk);
    fn(p + "wv", b.wv);
    fn(p + "bv", b.bv);
    fn(p + "wo", b.wo);
    fn(p + "bo", b.bo);
    fn(p + "ln2_g", b.ln2_g);
    fn(p + "ln2_b", b.ln2_b);
    fn(p + "fc1_w", b.fc1_w);
    fn(p + "fc1_b", b.fc1_b);
    fn(p + "fc2_w", b.fc2_w);
    fn(p + "fc2_b", b.fc2_b);
  }
  fn(std::string("lnf_g"), w.lnf_g);
  fn(std::string("lnf_b"), w.lnf_b);
  fn(std::string("head_w"), w.head_w);
}

template <typename T, typename Fn>
void for_each_tensor(const Weights<T>& w, Fn&& fn) {
  for_each_tensor(const_cast<Weights<T>&>(w),
                  [&fn](const std::string& name, Tensor<T>& t) {
                    fn(name, static_cast<const Tensor<T>&>(t));
                  });
}

template <typename T>
struct Parameters {
  Role role = Role::student;
  ModelConfig config;
  Weights<T> weights;
};

// Scaled-normal init (std 0.02) for matrices and embeddings, zero biases,
// identity layer norms. Deterministic per (config, seed).
template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed, Role role = Role::student);

template <typename To, typename From>
Parameters<To> cast_params(const Parameters<From>& p);

template <typename T>
struct BlockCache {
  Tensor<T> x_in, ln1_out, q, k, v, att_out, x_mid, ln2_out, h_pre, h_act;
  Tensor<T> att;  // [H, n, n]
  std::vector<T> ln1_mu, ln1_rstd, ln2_mu, ln2_rstd;
};

template <typename T>
struct ForwardCache {
  TokenSeq tokens;
  std::vector<BlockCache<T>> blocks;
  Tensor<T> x_final, lnf_out, logits;
  std::vector<T> lnf_mu, lnf_rstd;
};

// Full forward pass keeping activations for backward. Position i's logits
// depend only on tokens 0..i.
template <typename T>
ForwardCache<T> forward_cached(const Parameters<T>& params, std::span<const TokenId> tokens);

template <typename T>
Tensor<T> forward_logits(const Parameters<T>& params, std::span<const TokenId> tokens);

// Accumulates d(loss)/d(weights) into grads given d(loss)/d(logits).
template <typename T>
void backward(const Parameters<T>& params, const ForwardCache<T>& cache,
              const Tensor<T>& dlogits, Weights<T>& grads);

// log softmax(logits[row])[id]
template <typename T>
T row_logprob(const Tensor<T>& logits, std::int64_t row, TokenId id);

// Sum over target positions of log P(token | prefix). Target tokens at
// position p are predicted by the logits row p-1.
template <typename T>
T sequence_logprob(const Parameters<T>& params, const Prompt& prompt);

template <typename T>
T sequence_logprob_cached(const ForwardCache<T>& cache, const Prompt& prompt);

// Adds scale * d(sequence logprob)/d(logits) into dlogits.
template <typename T>
void add_logprob_grad(const ForwardCache<T>& cache, const Prompt& prompt, T scale,
                      Tensor<T>& dlogits);

struct Distribution {
  std::vector<int> support;   // candidate indices (or vocab ids)
  std::vector<double> probs;  // nonnegative, sums to 1

  int argmax() const;  // lowest index wins ties
  void validate() const;
};

Distribution softmax_distribution(std::span<const double> scores, double temperature);

// Per-candidate sequence log-probability with the candidate bound into the
// prompt. When every candidate is a single token and the slot sits at the end
// of the prompt, one forward pass scores them all (the shared prefix makes
// this exact, not an approximation).
template <typename T>
std::vector<T> candidate_logprobs(const Parameters<T>& params, const Prompt& prompt,
                                  const std::vector<TokenSeq>& candidates);

template <typename T>
Distribution candidate_distribution(const Parameters<T>& params, const Prompt& prompt,
                                    const std::vector<TokenSeq>& candidates, double temperature);

// Cached candidate scoring for distillation: keeps the forward caches so a
// gradient with respect to the scores can be pushed back through the model.
template <typename T>
struct CandidateScores {
  std::vector<T> logprobs;
  bool shared = false;
  std::int64_t shared_row = 0;            // logits row scoring all candidates
  std::vector<TokenId> shared_ids;        // candidate token ids (shared path)
  std::vector<ForwardCache<T>> caches;    // 1 if shared, else one per candidate
  std::vector<Prompt> prompts;            // bound prompt per cache (off-shared)
};

template <typename T>
CandidateScores<T> score_candidates_cached(const Parameters<T>& params, const Prompt& prompt,
                                           const std::vector<TokenSeq>& candidates);

// dscores[c] = d(loss)/d(candidate logprob c); accumulates into grads.
template <typename T>
void add_candidate_score_grads(const Parameters<T>& params, const CandidateScores<T>& scores,
                               std::span<const T> dscores, Weights<T>& grads);

// AdamW with beta1=0.9, beta2=0.999, eps=1e-8, decoupled weight decay 0.01,
// and a linear warmup/decay schedule: 0 -> peak over warmup_steps, then back
// to 0 at max_steps.
template <typename T>
struct OptState {
  std::int64_t step = 0;
  double peak_lr = 3e-4;
  int warmup_steps = 100;
  int max_steps = 1000;
  Weights<T> m, v;
};

template <typename T>
OptState<T> make_opt_state(const ModelConfig& cfg, double peak_lr, int warmup_steps,
                           int max_steps);

double lr_at(std::int64_t step, double peak_lr, int warmup_steps, int max_steps);

template <typename T>
void adamw_step(Parameters<T>& params, const Weights<T>& grads, OptState<T>& opt,
                double weight_decay = 0.01);

// Binary checkpoint: magic + version, a key=value text header carrying the
// config and schedule, then named float32 arrays with declared shapes.
void save_checkpoint(const Parameters<float>& params, const OptState<float>* opt,
                     const std::filesystem::path& path);

struct Checkpoint {
  Parameters<float> params;
  std::optional<OptState<float>> opt;
};

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelConfig* expected = nullptr);

extern template struct Parameters<float>;
extern template struct Parameters<double>;

}  // namespace icld
