#pragma once

#include <optional>
#include <span>
#include <string>

#include "icld/model.hpp"

namespace icld {

enum class Method { RAW, MULTITASK_FT, ICT, LM_KD, ICL_D, ICL_D_LM };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

bool method_needs_teacher(Method m);  // ICL_D, ICL_D_LM, LM_KD
bool method_needs_lm(Method m);       // ICL_D_LM, LM_KD
bool method_has_ict_hard(Method m);
bool method_has_ict_soft(Method m);
bool method_has_lm_terms(Method m);
// Methods with a soft side blend hard and soft by alpha(t); hard-only
// methods train on the hard loss unscaled.
bool method_alpha_blended(Method m);

struct KDConfig {
  double beta = 1.0;         // LM-term weight inside hard/soft sums
  double temperature = 2.0;  // distillation softening
  double alpha_start = 0.0;  // hard-label weight grows 0 -> 1 by default
  double alpha_end = 1.0;
  int schedule_steps = 0;  // 0 defers to the trainer's max_steps
  int k_demos = 5;
  int m_votes = 5;
  double mix_icl = 0.1;  // batch-source sampling weights
  double mix_lm = 0.9;
  Method method = Method::ICT;

  void validate() const;
};

struct LossReport {
  double ict_hard = 0.0;
  double ict_soft = 0.0;
  double lm_hard = 0.0;
  double lm_soft = 0.0;
  double total = 0.0;
  double alpha_used = 1.0;
};

struct LossParts {
  std::optional<double> ict_hard, ict_soft, lm_hard, lm_soft;
};

struct HardItem {
  Prompt prompt;
  TokenSeq gold;
};

struct SoftItem {
  Prompt prompt;
  std::vector<TokenSeq> candidates;
};

// Mean over the batch of -log P(gold | prompt). When grads is non-null the
// gradient of grad_scale * loss is accumulated into it.
template <typename T>
T ict_hard_loss(const Parameters<T>& student, std::span<const HardItem> batch,
                Weights<T>* grads = nullptr, T grad_scale = T(1));

// Mean over the batch of the cross-entropy between teacher and student
// candidate distributions, both softened at tau. The teacher is only ever
// read; no gradient flows into it.
template <typename T>
T ict_soft_loss(const Parameters<T>& student, const Parameters<T>& teacher,
                std::span<const SoftItem> batch, double tau, Weights<T>* grads = nullptr,
                T grad_scale = T(1));

// Mean per-token negative log-likelihood over the documents. Documents longer
// than the context are chunked with one token of overlap, so every position
// past the first is predicted exactly once.
template <typename T>
T lm_hard_loss(const Parameters<T>& student, std::span<const TokenSeq> docs,
               Weights<T>* grads = nullptr, T grad_scale = T(1));

// Token-level distillation: per position, cross-entropy between the teacher's
// and student's next-token distributions softened at tau, averaged over all
// predicted positions.
template <typename T>
T lm_soft_loss(const Parameters<T>& student, const Parameters<T>& teacher,
               std::span<const TokenSeq> docs, double tau, Weights<T>* grads = nullptr,
               T grad_scale = T(1));

// Linear interpolation alpha_start -> alpha_end over schedule_steps, clamped
// afterwards.
double alpha_at(std::int64_t t, const KDConfig& config);

// Per-step blend coefficients: total = hard * (ict_hard + beta*lm_hard)
//                                    + soft * (ict_soft + beta*lm_soft)
// where soft carries the tau^2 compensation.
struct LossCoeffs {
  double hard = 1.0;
  double soft = 0.0;
};
LossCoeffs kd_coeffs(std::int64_t t, const KDConfig& config);

// Combines the parts the configured method requires into the blended total.
// Missing required parts are contract errors naming the method.
LossReport kd_total_loss(const LossParts& parts, std::int64_t t, const KDConfig& config);

std::vector<TokenSeq> chunk_document(const TokenSeq& doc, int context_len);

}  // namespace icld
