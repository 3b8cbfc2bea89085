#include "icld/inference.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace icld {

std::size_t candidate_reserve(const Task& task, const Vocab& vocab) {
  std::size_t longest = 0;
  for (const SymbolSeq& c : task.candidates)
    longest = std::max(longest, vocab.encode_seq(c).size());
  return longest;
}

namespace {

std::vector<RankedCandidate> rank_from_distribution(const Distribution& dist) {
  std::vector<RankedCandidate> ranked(dist.probs.size());
  for (std::size_t i = 0; i < dist.probs.size(); ++i)
    ranked[i] = {static_cast<int>(i), dist.probs[i]};
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     return a.prob > b.prob;
                   });
  return ranked;
}

}  // namespace

template <typename T>
std::vector<RankedCandidate> rank_candidates(const Parameters<T>& params, const Vocab& vocab,
                                             const Task& task, const Example& query,
                                             const std::vector<Example>& demos, double tau) {
  require(!task.candidates.empty(), Errc::contract, "task has no candidates");
  const std::size_t reserve = candidate_reserve(task, vocab);
  require(static_cast<std::size_t>(params.config.context_len) > reserve, Errc::prompt_overflow,
          "candidates alone exceed the model context");
  const std::size_t max_len = static_cast<std::size_t>(params.config.context_len) - reserve;
  Prompt prompt = build_prompt(demos, query, task.ordering, vocab, max_len);
  std::vector<TokenSeq> cand_tokens;
  cand_tokens.reserve(task.candidates.size());
  for (const SymbolSeq& c : task.candidates) cand_tokens.push_back(vocab.encode_seq(c));
  Distribution dist = candidate_distribution(params, prompt, cand_tokens, tau);
  return rank_from_distribution(dist);
}

template <typename T>
Prediction icl_predict(const Parameters<T>& params, const Vocab& vocab, const Task& task,
                       const Example& query, const std::vector<Example>& demos, double tau) {
  Prediction pred;
  pred.ranked = rank_candidates(params, vocab, task, query, demos, tau);
  pred.label = task.candidates[static_cast<std::size_t>(pred.ranked[0].index)];
  Distribution dist;
  dist.support.resize(pred.ranked.size());
  dist.probs.resize(pred.ranked.size());
  for (const RankedCandidate& rc : pred.ranked) {
    dist.support[static_cast<std::size_t>(rc.index)] = rc.index;
    dist.probs[static_cast<std::size_t>(rc.index)] = rc.prob;
  }
  pred.per_vote.emplace_back(pred.ranked[0].index, std::move(dist));
  return pred;
}

template <typename T>
Prediction majority_vote_predict(const Parameters<T>& params, const Vocab& vocab,
                                 const Task& task, const Example& query, int n_pool, int k,
                                 int m, double tau, const Rng& rng) {
  require(m >= 1, Errc::contract, "m must be >= 1");
  require(static_cast<std::size_t>(n_pool) == task.pool.size(), Errc::contract,
          "n_pool does not match the task pool size");
  require(n_pool >= k, Errc::insufficient_pool,
          "pool of " + std::to_string(n_pool) + " cannot supply " + std::to_string(k) +
              " demonstrations");

  const std::size_t n_cand = task.candidates.size();
  std::vector<int> votes(n_cand, 0);
  std::vector<double> sum_prob(n_cand, 0.0);

  Prediction out;
  for (int v = 0; v < m; ++v) {
    Rng vote_rng = rng.fork("vote", static_cast<std::uint64_t>(v));
    std::vector<Example> demos = sample_demonstrations(task, query, k, vote_rng);
    Prediction p = icl_predict(params, vocab, task, query, demos, tau);
    const int top = p.ranked[0].index;
    votes[static_cast<std::size_t>(top)] += 1;
    for (const RankedCandidate& rc : p.ranked)
      sum_prob[static_cast<std::size_t>(rc.index)] += rc.prob;
    out.per_vote.emplace_back(top, std::move(p.per_vote[0].second));
  }

  std::vector<int> order(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    return sum_prob[a] > sum_prob[b];
  });

  out.ranked.reserve(n_cand);
  for (int idx : order)
    out.ranked.push_back({idx, sum_prob[static_cast<std::size_t>(idx)] / m});
  out.label = task.candidates[static_cast<std::size_t>(out.ranked[0].index)];
  return out;
}

std::string prediction_debug_json(const Prediction& pred, const Task& task,
                                  const Example& query) {
  nlohmann::json j;
  j["task"] = task.id;
  j["query"] = join_symbols(query.x);
  j["label"] = join_symbols(pred.label);
  nlohmann::json votes = nlohmann::json::array();
  for (const auto& [idx, dist] : pred.per_vote)
    votes.push_back(join_symbols(task.candidates[static_cast<std::size_t>(idx)]));
  j["per_vote"] = votes;
  nlohmann::json top = nlohmann::json::array();
  for (std::size_t i = 0; i < pred.ranked.size() && i < 10; ++i)
    top.push_back({{"candidate",
                    join_symbols(task.candidates[static_cast<std::size_t>(pred.ranked[i].index)])},
                   {"prob", pred.ranked[i].prob}});
  j["ranked_top10"] = top;
  return j.dump();
}

#define ICLD_INSTANTIATE_INF(T)                                                             \
  template Prediction icl_predict<T>(const Parameters<T>&, const Vocab&, const Task&,       \
                                     const Example&, const std::vector<Example>&, double);  \
  template std::vector<RankedCandidate> rank_candidates<T>(                                 \
      const Parameters<T>&, const Vocab&, const Task&, const Example&,                      \
      const std::vector<Example>&, double);                                                 \
  template Prediction majority_vote_predict<T>(const Parameters<T>&, const Vocab&,          \
                                               const Task&, const Example&, int, int, int,  \
                                               double, const Rng&);

ICLD_INSTANTIATE_INF(float)
ICLD_INSTANTIATE_INF(double)

}  // namespace icld
