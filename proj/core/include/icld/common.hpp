#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <string>
#include <vector>

namespace icld {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Text-level token: a whitespace-free symbol string. Synthetic data uses
// one symbol per entity/relation/label; ingested text is whitespace-split.
using Symbol = std::string;
using SymbolSeq = std::vector<Symbol>;

enum class Errc {
  invalid_config,
  parse_error,
  validation,
  invalid_split,
  unknown_symbol,
  insufficient_pool,
  prompt_overflow,
  context_overflow,
  invalid_prompt,
  invalid_input,
  numeric,
  contract,
  incompatible_checkpoint,
  corrupt_checkpoint,
  dependency,
  io
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

std::string join_symbols(const SymbolSeq& s);
SymbolSeq split_symbols(const std::string& text);

// FNV-1a, used for purpose-keyed stream derivation and config fingerprints.
// Pinned here so results do not depend on the standard library's std::hash.
std::uint64_t fnv1a64(std::string_view s);

}  // namespace icld
