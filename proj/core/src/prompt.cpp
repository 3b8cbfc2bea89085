#include "icld/prompt.hpp"

#include <algorithm>

namespace icld {

void Prompt::validate() const {
  require(target_start + target_len <= tokens.size(), Errc::invalid_prompt,
          "target span exceeds prompt length");
  require(candidate_start + candidate_len <= tokens.size(), Errc::invalid_prompt,
          "candidate span exceeds prompt length");
}

std::vector<Example> sample_demonstrations(const Task& task, const Example& query, int k,
                                           Rng& rng) {
  require(k >= 0, Errc::contract, "sample_demonstrations: k must be >= 0");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < task.pool.size(); ++i)
    if (!(task.pool[i] == query)) eligible.push_back(i);
  require(eligible.size() >= static_cast<std::size_t>(k), Errc::insufficient_pool,
          "task " + task.id + ": pool has " + std::to_string(eligible.size()) +
              " usable examples, need " + std::to_string(k));
  std::vector<std::size_t> picks = rng.sample_without_replacement(eligible.size(), k);
  std::vector<Example> out;
  out.reserve(k);
  for (std::size_t p : picks) out.push_back(task.pool[eligible[p]]);
  return out;
}

Prompt build_prompt(const std::vector<Example>& demos, const Example& query, Ordering ordering,
                    const Vocab& vocab, std::size_t max_len) {
  require(!query.x.empty(), Errc::invalid_prompt, "query input is empty");

  const TokenSeq qx = vocab.encode_seq(query.x);
  struct EncodedDemo {
    TokenSeq x, y;
  };
  std::vector<EncodedDemo> enc;
  enc.reserve(demos.size());
  for (const Example& d : demos) enc.push_back({vocab.encode_seq(d.x), vocab.encode_seq(d.y)});

  // Both orderings produce 1 + sum(|x_i| + |y_i| + 2) + |x_query| + 1 tokens.
  std::size_t baseline = 1 + qx.size() + 1;
  std::size_t first = 0;
  std::size_t len = baseline;
  for (const EncodedDemo& d : enc) len += d.x.size() + d.y.size() + 2;
  while (len > max_len && first < enc.size()) {
    len -= enc[first].x.size() + enc[first].y.size() + 2;
    ++first;
  }
  require(len <= max_len, Errc::prompt_overflow,
          "query alone needs " + std::to_string(len) + " tokens, max_len is " +
              std::to_string(max_len));

  Prompt p;
  p.ordering = ordering;
  p.tokens.reserve(len);
  p.tokens.push_back(kBos);
  for (std::size_t i = first; i < enc.size(); ++i) {
    const TokenSeq& a = ordering == Ordering::direct ? enc[i].x : enc[i].y;
    const TokenSeq& b = ordering == Ordering::direct ? enc[i].y : enc[i].x;
    p.tokens.insert(p.tokens.end(), a.begin(), a.end());
    p.tokens.push_back(kSepIo);
    p.tokens.insert(p.tokens.end(), b.begin(), b.end());
    p.tokens.push_back(kSepEx);
  }
  if (ordering == Ordering::direct) {
    p.tokens.insert(p.tokens.end(), qx.begin(), qx.end());
    p.tokens.push_back(kSepIo);
    p.target_start = p.candidate_start = p.tokens.size();
    p.target_len = p.candidate_len = 0;
  } else {
    p.candidate_start = p.tokens.size();  // empty label slot before SEP_IO
    p.candidate_len = 0;
    p.tokens.push_back(kSepIo);
    p.target_start = p.tokens.size();
    p.target_len = qx.size();
    p.tokens.insert(p.tokens.end(), qx.begin(), qx.end());
  }
  return p;
}

Prompt bind_label(const Prompt& prompt, const TokenSeq& label) {
  require(!label.empty(), Errc::invalid_prompt, "cannot bind an empty label");
  Prompt out = prompt;
  auto at = out.tokens.begin() + static_cast<std::ptrdiff_t>(out.candidate_start);
  out.tokens.erase(at, at + static_cast<std::ptrdiff_t>(out.candidate_len));
  out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(out.candidate_start),
                    label.begin(), label.end());
  if (prompt.ordering == Ordering::direct) {
    out.target_len = label.size();
  } else if (prompt.target_start >= prompt.candidate_start + prompt.candidate_len) {
    out.target_start = prompt.target_start + label.size() - prompt.candidate_len;
  }
  out.candidate_len = label.size();
  out.validate();
  return out;
}

std::string debug_dump(const Prompt& prompt, const Vocab& vocab) {
  std::string out = join_symbols(vocab.decode_seq(prompt.tokens));
  out += " | TARGET[" + std::to_string(prompt.target_start) + "," +
         std::to_string(prompt.target_len) + "]";
  return out;
}

}  // namespace icld
