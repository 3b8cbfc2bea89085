#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "icld/common.hpp"
#include "icld/corpus.hpp"

namespace icld {

// Reserved token ids. The reserved symbols below encode to these ids, so a
// "<eos>" appearing in a document maps to EOS rather than a fresh symbol.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kSepIo = 2;   // between x and y
inline constexpr TokenId kSepEx = 3;   // between examples
inline constexpr TokenId kEos = 4;
inline constexpr TokenId kNumReserved = 5;

class Vocab {
 public:
  Vocab() = default;

  // Symbols are assigned ids in sorted order after the reserved block, so the
  // mapping is a pure function of the symbol set.
  static Vocab build(const std::vector<const TaskSet*>& task_sets, const LMCorpus* corpus);

  TokenId encode(const Symbol& s) const;
  TokenSeq encode_seq(const SymbolSeq& s) const;
  const Symbol& decode(TokenId id) const;
  SymbolSeq decode_seq(const TokenSeq& t) const;
  bool contains(const Symbol& s) const { return to_id_.count(s) > 0; }

  std::size_t size() const { return symbols_.size(); }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<Symbol> symbols_;       // id -> symbol, reserved block first
  std::map<Symbol, TokenId> to_id_;
  void finish(std::vector<Symbol> sorted_symbols);
};

// Convenience for the common single-set case.
Vocab build_vocab(const TaskSet& tasks, const LMCorpus* corpus = nullptr);

}  // namespace icld
