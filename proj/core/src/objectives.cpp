#include "icld/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace icld {

const char* to_string(Method m) {
  switch (m) {
    case Method::RAW: return "RAW";
    case Method::MULTITASK_FT: return "MULTITASK_FT";
    case Method::ICT: return "ICT";
    case Method::LM_KD: return "LM_KD";
    case Method::ICL_D: return "ICL_D";
    case Method::ICL_D_LM: return "ICL_D_LM";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::RAW, Method::MULTITASK_FT, Method::ICT, Method::LM_KD, Method::ICL_D,
                   Method::ICL_D_LM})
    if (s == to_string(m)) return m;
  raise(Errc::invalid_config, "unknown method '" + s + "'");
}

bool method_needs_teacher(Method m) {
  return m == Method::ICL_D || m == Method::ICL_D_LM || m == Method::LM_KD;
}
bool method_needs_lm(Method m) { return m == Method::ICL_D_LM || m == Method::LM_KD; }
bool method_has_ict_hard(Method m) {
  return m == Method::ICT || m == Method::MULTITASK_FT || m == Method::ICL_D ||
         m == Method::ICL_D_LM;
}
bool method_has_ict_soft(Method m) { return m == Method::ICL_D || m == Method::ICL_D_LM; }
bool method_has_lm_terms(Method m) { return m == Method::ICL_D_LM || m == Method::LM_KD; }
bool method_alpha_blended(Method m) { return method_has_ict_soft(m) || m == Method::LM_KD; }

void KDConfig::validate() const {
  require(beta >= 0.0, Errc::invalid_config, "beta must be nonnegative");
  require(temperature > 0.0, Errc::invalid_config, "temperature must be positive");
  require(alpha_start >= 0.0 && alpha_start <= 1.0 && alpha_end >= 0.0 && alpha_end <= 1.0,
          Errc::invalid_config, "alpha bounds must lie in [0, 1]");
  require(schedule_steps >= 0, Errc::invalid_config, "schedule_steps must be >= 0");
  require(k_demos >= 0, Errc::invalid_config, "k_demos must be >= 0");
  require(m_votes >= 1, Errc::invalid_config, "m_votes must be >= 1");
  require(mix_icl >= 0.0 && mix_lm >= 0.0, Errc::invalid_config,
          "mix weights must be nonnegative");
  require(std::abs(mix_icl + mix_lm - 1.0) <= 1e-9, Errc::invalid_config,
          "mix weights must sum to 1");
}

namespace {

template <typename T>
void check_finite(T loss, const char* term) {
  require(std::isfinite(static_cast<double>(loss)), Errc::numeric,
          std::string(term) + " is not finite");
}

}  // namespace

std::vector<TokenSeq> chunk_document(const TokenSeq& doc, int context_len) {
  require(!doc.empty(), Errc::invalid_input, "empty document");
  const std::size_t ctx = static_cast<std::size_t>(context_len);
  if (doc.size() <= ctx) return {doc};
  std::vector<TokenSeq> chunks;
  // one-token overlap so every position past the first is predicted once
  std::size_t start = 0;
  while (start + 1 < doc.size()) {
    std::size_t end = std::min(start + ctx, doc.size());
    chunks.emplace_back(doc.begin() + static_cast<std::ptrdiff_t>(start),
                        doc.begin() + static_cast<std::ptrdiff_t>(end));
    if (end == doc.size()) break;
    start = end - 1;
  }
  return chunks;
}

template <typename T>
T ict_hard_loss(const Parameters<T>& student, std::span<const HardItem> batch, Weights<T>* grads,
                T grad_scale) {
  require(!batch.empty(), Errc::contract, "ict_hard_loss: empty batch");
  const T inv_b = T(1) / static_cast<T>(batch.size());
  T total = 0;
  for (const HardItem& item : batch) {
    require(!item.gold.empty(), Errc::invalid_prompt, "empty gold label");
    Prompt bound = bind_label(item.prompt, item.gold);
    ForwardCache<T> cache = forward_cached(student, std::span<const TokenId>(bound.tokens));
    const T lp = sequence_logprob_cached(cache, bound);
    total += -lp;
    if (grads) {
      Tensor<T> dlogits = Tensor<T>::zeros({cache.logits.rows(), cache.logits.cols()});
      // d(-logprob)/dlogits, scaled for the batch mean
      add_logprob_grad(cache, bound, -grad_scale * inv_b, dlogits);
      backward(student, cache, dlogits, *grads);
    }
  }
  const T loss = total * inv_b;
  check_finite(loss, "ict_hard loss");
  return loss;
}

template <typename T>
T ict_soft_loss(const Parameters<T>& student, const Parameters<T>& teacher,
                std::span<const SoftItem> batch, double tau, Weights<T>* grads, T grad_scale) {
  require(!batch.empty(), Errc::contract, "ict_soft_loss: empty batch");
  require(tau > 0.0, Errc::invalid_config, "temperature must be positive");
  require(student.config.vocab_size == teacher.config.vocab_size, Errc::contract,
          "teacher and student vocabularies differ");
  const T inv_b = T(1) / static_cast<T>(batch.size());
  T total = 0;
  for (const SoftItem& item : batch) {
    require(!item.candidates.empty(), Errc::contract, "soft item without candidates");
    Distribution p_t = candidate_distribution(teacher, item.prompt, item.candidates, tau);
    CandidateScores<T> scored = score_candidates_cached(student, item.prompt, item.candidates);
    std::vector<double> s(scored.logprobs.begin(), scored.logprobs.end());
    Distribution p_s = softmax_distribution(s, tau);
    // -sum_c p_t(c) log p_s(c), computed from the log-space scores
    double mx = s[0];
    for (double v : s) mx = std::max(mx, v);
    double z = 0;
    for (double v : s) z += std::exp((v - mx) / tau);
    const double log_z = std::log(z);
    double item_loss = 0;
    for (std::size_t c = 0; c < s.size(); ++c)
      item_loss -= p_t.probs[c] * ((s[c] - mx) / tau - log_z);
    total += static_cast<T>(item_loss);
    if (grads) {
      std::vector<T> dscores(s.size());
      for (std::size_t c = 0; c < s.size(); ++c)
        dscores[c] =
            grad_scale * inv_b * static_cast<T>((p_s.probs[c] - p_t.probs[c]) / tau);
      add_candidate_score_grads(student, scored, std::span<const T>(dscores), *grads);
    }
  }
  const T loss = total * inv_b;
  check_finite(loss, "ict_soft loss");
  return loss;
}

template <typename T>
T lm_hard_loss(const Parameters<T>& student, std::span<const TokenSeq> docs, Weights<T>* grads,
               T grad_scale) {
  require(!docs.empty(), Errc::contract, "lm_hard_loss: empty document list");
  std::vector<TokenSeq> chunks;
  std::size_t count = 0;
  for (const TokenSeq& doc : docs) {
    require(!doc.empty(), Errc::invalid_input, "empty document");
    for (TokenSeq& c : chunk_document(doc, student.config.context_len))
      if (c.size() >= 2) {
        count += c.size() - 1;
        chunks.push_back(std::move(c));
      }
  }
  require(count > 0, Errc::invalid_input, "documents contain no predictable tokens");

  T total = 0;
  const T inv_n = T(1) / static_cast<T>(count);
  for (const TokenSeq& chunk : chunks) {
    ForwardCache<T> cache = forward_cached(student, std::span<const TokenId>(chunk));
    Tensor<T> dlogits;
    if (grads) dlogits = Tensor<T>::zeros({cache.logits.rows(), cache.logits.cols()});
    for (std::size_t p = 1; p < chunk.size(); ++p)
      total += -row_logprob(cache.logits, static_cast<std::int64_t>(p) - 1, chunk[p]);
    if (grads) {
      Prompt span;
      span.tokens = chunk;
      span.target_start = 1;
      span.target_len = chunk.size() - 1;
      add_logprob_grad(cache, span, -grad_scale * inv_n, dlogits);
      backward(student, cache, dlogits, *grads);
    }
  }
  const T loss = total * inv_n;
  check_finite(loss, "lm_hard loss");
  return loss;
}

template <typename T>
T lm_soft_loss(const Parameters<T>& student, const Parameters<T>& teacher,
               std::span<const TokenSeq> docs, double tau, Weights<T>* grads, T grad_scale) {
  require(!docs.empty(), Errc::contract, "lm_soft_loss: empty document list");
  require(tau > 0.0, Errc::invalid_config, "temperature must be positive");
  require(student.config.vocab_size == teacher.config.vocab_size, Errc::contract,
          "teacher and student vocabularies differ");
  const int ctx = std::min(student.config.context_len, teacher.config.context_len);

  std::vector<TokenSeq> chunks;
  std::size_t count = 0;
  for (const TokenSeq& doc : docs) {
    require(!doc.empty(), Errc::invalid_input, "empty document");
    for (TokenSeq& c : chunk_document(doc, ctx))
      if (c.size() >= 2) {
        count += c.size() - 1;
        chunks.push_back(std::move(c));
      }
  }
  require(count > 0, Errc::invalid_input, "documents contain no predictable tokens");

  const std::int64_t V = student.config.vocab_size;
  const double inv_n = 1.0 / static_cast<double>(count);
  double total = 0;
  std::vector<double> pt(static_cast<std::size_t>(V)), ps(static_cast<std::size_t>(V));
  for (const TokenSeq& chunk : chunks) {
    ForwardCache<T> t_cache = forward_cached(teacher, std::span<const TokenId>(chunk));
    ForwardCache<T> s_cache = forward_cached(student, std::span<const TokenId>(chunk));
    Tensor<T> dlogits;
    if (grads) dlogits = Tensor<T>::zeros({s_cache.logits.rows(), s_cache.logits.cols()});
    const std::int64_t n_rows = static_cast<std::int64_t>(chunk.size()) - 1;
    for (std::int64_t row = 0; row < n_rows; ++row) {
      auto softened = [&](const Tensor<T>& logits, std::vector<double>& out) {
        const T* r = logits.row(row);
        double mx = static_cast<double>(r[0]);
        for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(r[j]));
        double z = 0;
        for (std::int64_t j = 0; j < V; ++j) {
          out[j] = std::exp((static_cast<double>(r[j]) - mx) / tau);
          z += out[j];
        }
        const double inv = 1.0 / z;
        for (std::int64_t j = 0; j < V; ++j) out[j] *= inv;
      };
      softened(t_cache.logits, pt);
      softened(s_cache.logits, ps);
      double row_loss = 0;
      for (std::int64_t j = 0; j < V; ++j) row_loss -= pt[j] * std::log(ps[j]);
      total += row_loss;
      if (grads) {
        T* d = dlogits.row(row);
        const double scale = static_cast<double>(grad_scale) * inv_n / tau;
        for (std::int64_t j = 0; j < V; ++j)
          d[j] = static_cast<T>(scale * (ps[j] - pt[j]));
      }
    }
    if (grads) backward(student, s_cache, dlogits, *grads);
  }
  const T loss = static_cast<T>(total * inv_n);
  check_finite(loss, "lm_soft loss");
  return loss;
}

double alpha_at(std::int64_t t, const KDConfig& config) {
  require(t >= 0, Errc::contract, "alpha_at: negative step");
  if (config.schedule_steps <= 0 || t >= config.schedule_steps) return config.alpha_end;
  const double frac = static_cast<double>(t) / static_cast<double>(config.schedule_steps);
  return config.alpha_start + (config.alpha_end - config.alpha_start) * frac;
}

LossCoeffs kd_coeffs(std::int64_t t, const KDConfig& config) {
  LossCoeffs c;
  if (method_alpha_blended(config.method)) {
    const double a = alpha_at(t, config);
    c.hard = a;
    c.soft = (1.0 - a) * config.temperature * config.temperature;
  } else {
    c.hard = 1.0;
    c.soft = 0.0;
  }
  return c;
}

LossReport kd_total_loss(const LossParts& parts, std::int64_t t, const KDConfig& config) {
  const Method m = config.method;
  require(m != Method::RAW, Errc::contract, "method RAW has no training objective");
  auto need = [&](const std::optional<double>& part, const char* name) {
    require(part.has_value(), Errc::contract,
            std::string("method ") + to_string(m) + " requires the " + name + " part");
    return *part;
  };

  LossReport r;
  if (method_has_ict_hard(m)) r.ict_hard = need(parts.ict_hard, "ict_hard");
  if (method_has_ict_soft(m)) r.ict_soft = need(parts.ict_soft, "ict_soft");
  if (method_has_lm_terms(m)) {
    r.lm_hard = need(parts.lm_hard, "lm_hard");
    r.lm_soft = need(parts.lm_soft, "lm_soft");
  }
  const LossCoeffs c = kd_coeffs(t, config);
  r.alpha_used = method_alpha_blended(m) ? alpha_at(t, config) : 1.0;
  r.total = c.hard * (r.ict_hard + config.beta * r.lm_hard) +
            c.soft * (r.ict_soft + config.beta * r.lm_soft);
  return r;
}

#define ICLD_INSTANTIATE_OBJ(T)                                                              \
  template T ict_hard_loss<T>(const Parameters<T>&, std::span<const HardItem>, Weights<T>*,  \
                              T);                                                            \
  template T ict_soft_loss<T>(const Parameters<T>&, const Parameters<T>&,                    \
                              std::span<const SoftItem>, double, Weights<T>*, T);            \
  template T lm_hard_loss<T>(const Parameters<T>&, std::span<const TokenSeq>, Weights<T>*,   \
                             T);                                                             \
  template T lm_soft_loss<T>(const Parameters<T>&, const Parameters<T>&,                     \
                             std::span<const TokenSeq>, double, Weights<T>*, T);

ICLD_INSTANTIATE_OBJ(float)
ICLD_INSTANTIATE_OBJ(double)

}  // namespace icld
