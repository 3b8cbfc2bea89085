#pragma once

#include <string>
#include <vector>

#include "icld/corpus.hpp"
#include "icld/rng.hpp"
#include "icld/vocab.hpp"

namespace icld {

// A model-ready token sequence with two marked regions:
//   target    — the span whose log-probability is scored;
//   candidate — the span where label candidates are spliced in.
// Direct prompts end "... x SEP_IO" and the two regions coincide: the label
// slot after the final SEP_IO (empty until a label is bound). Channel prompts
// read "... <candidate> SEP_IO x": the candidate slot sits before the final
// SEP_IO and the target covers the query input after it.
struct Prompt {
  TokenSeq tokens;
  std::size_t target_start = 0;
  std::size_t target_len = 0;
  std::size_t candidate_start = 0;
  std::size_t candidate_len = 0;
  Ordering ordering = Ordering::direct;

  void validate() const;
};

// k distinct pool examples, uniform without replacement, none equal to query.
std::vector<Example> sample_demonstrations(const Task& task, const Example& query, int k,
                                           Rng& rng);

// Concatenates demonstrations and the query in the given ordering. If the
// result exceeds max_len, whole demonstrations are dropped from the front; a
// zero-demonstration prompt that still exceeds max_len is an error.
Prompt build_prompt(const std::vector<Example>& demos, const Example& query, Ordering ordering,
                    const Vocab& vocab, std::size_t max_len);

// Splices a label into the prompt's candidate slot and returns the scored
// form: direct prompts gain the label as their target, channel prompts keep
// the query input as target (shifted past the inserted label).
Prompt bind_label(const Prompt& prompt, const TokenSeq& label);

// Human-readable form: "<tok> <tok> ... | TARGET[start,len]".
std::string debug_dump(const Prompt& prompt, const Vocab& vocab);

}  // namespace icld
