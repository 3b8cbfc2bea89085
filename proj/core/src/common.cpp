#include "icld/common.hpp"

#include <sstream>

namespace icld {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_config: return "invalid-config";
    case Errc::parse_error: return "parse-error";
    case Errc::validation: return "validation-error";
    case Errc::invalid_split: return "invalid-split";
    case Errc::unknown_symbol: return "unknown-symbol";
    case Errc::insufficient_pool: return "insufficient-pool";
    case Errc::prompt_overflow: return "prompt-overflow";
    case Errc::context_overflow: return "context-overflow";
    case Errc::invalid_prompt: return "invalid-prompt";
    case Errc::invalid_input: return "invalid-input";
    case Errc::numeric: return "numeric-error";
    case Errc::contract: return "contract-error";
    case Errc::incompatible_checkpoint: return "incompatible-checkpoint";
    case Errc::corrupt_checkpoint: return "corrupt-checkpoint";
    case Errc::dependency: return "dependency-error";
    case Errc::io: return "io-error";
  }
  return "error";
}

std::string join_symbols(const SymbolSeq& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

SymbolSeq split_symbols(const std::string& text) {
  SymbolSeq out;
  std::istringstream in(text);
  Symbol tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace icld
