#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icld/corpus.hpp"
#include "icld/model.hpp"
#include "icld/prompt.hpp"
#include "icld/rng.hpp"
#include "icld/vocab.hpp"

namespace icld {

struct RankedCandidate {
  int index;    // position in task.candidates
  double prob;
};

struct Prediction {
  SymbolSeq label;
  std::vector<RankedCandidate> ranked;  // full permutation, best first
  // one (predicted candidate index, candidate distribution) per vote
  std::vector<std::pair<int, Distribution>> per_vote;
};

// Tokens reserved for the longest candidate, so any binding fits the context.
std::size_t candidate_reserve(const Task& task, const Vocab& vocab);

// Single in-context prediction. Direct prompts rank candidates on the label
// slot; channel prompts score the query input conditioned on each candidate.
// Ties break toward the lower candidate index.
template <typename T>
Prediction icl_predict(const Parameters<T>& params, const Vocab& vocab, const Task& task,
                       const Example& query, const std::vector<Example>& demos, double tau);

template <typename T>
std::vector<RankedCandidate> rank_candidates(const Parameters<T>& params, const Vocab& vocab,
                                             const Task& task, const Example& query,
                                             const std::vector<Example>& demos, double tau);

// m independent demonstration resamples; the modal label wins, ties broken by
// summed candidate probability across votes, then candidate index. The rng is
// pre-split per vote index, so vote order cannot change results.
template <typename T>
Prediction majority_vote_predict(const Parameters<T>& params, const Vocab& vocab,
                                 const Task& task, const Example& query, int n_pool, int k,
                                 int m, double tau, const Rng& rng);

// Debug record: query, per-vote labels, final label, ranked top-10.
std::string prediction_debug_json(const Prediction& pred, const Task& task,
                                  const Example& query);

}  // namespace icld
