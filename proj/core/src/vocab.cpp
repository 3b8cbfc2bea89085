#include "icld/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace icld {

static const Symbol kReservedSymbols[kNumReserved] = {"<pad>", "<bos>", "<sep_io>", "<sep_ex>",
                                                      "<eos>"};

void Vocab::finish(std::vector<Symbol> sorted_symbols) {
  for (TokenId i = 0; i < kNumReserved; ++i) {
    symbols_.push_back(kReservedSymbols[i]);
    to_id_[kReservedSymbols[i]] = i;
  }
  for (Symbol& s : sorted_symbols) {
    to_id_[s] = static_cast<TokenId>(symbols_.size());
    symbols_.push_back(std::move(s));
  }
}

Vocab Vocab::build(const std::vector<const TaskSet*>& task_sets, const LMCorpus* corpus) {
  std::set<Symbol> seen;
  auto add_seq = [&](const SymbolSeq& seq) {
    for (const Symbol& s : seq) {
      bool reserved = std::find(std::begin(kReservedSymbols), std::end(kReservedSymbols), s) !=
                      std::end(kReservedSymbols);
      if (!reserved) seen.insert(s);
    }
  };
  for (const TaskSet* set : task_sets) {
    if (!set) continue;
    for (const Task& t : set->tasks) {
      for (const SymbolSeq& c : t.candidates) add_seq(c);
      for (const Example& e : t.all_examples()) {
        add_seq(e.x);
        add_seq(e.y);
      }
    }
  }
  if (corpus)
    for (const SymbolSeq& d : corpus->documents) add_seq(d);
  require(!seen.empty(), Errc::invalid_config, "build_vocab: no symbols in any input");

  Vocab v;
  v.finish(std::vector<Symbol>(seen.begin(), seen.end()));
  return v;
}

Vocab build_vocab(const TaskSet& tasks, const LMCorpus* corpus) {
  return Vocab::build({&tasks}, corpus);
}

TokenId Vocab::encode(const Symbol& s) const {
  auto it = to_id_.find(s);
  require(it != to_id_.end(), Errc::unknown_symbol, "symbol '" + s + "' not in vocabulary");
  return it->second;
}

TokenSeq Vocab::encode_seq(const SymbolSeq& s) const {
  TokenSeq out;
  out.reserve(s.size());
  for (const Symbol& sym : s) out.push_back(encode(sym));
  return out;
}

const Symbol& Vocab::decode(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < symbols_.size(), Errc::unknown_symbol,
          "token id " + std::to_string(id) + " out of range");
  return symbols_[id];
}

SymbolSeq Vocab::decode_seq(const TokenSeq& t) const {
  SymbolSeq out;
  out.reserve(t.size());
  for (TokenId id : t) out.push_back(decode(id));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write " + path.string());
  for (const Symbol& s : symbols_) out << s << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open " + path.string());
  std::vector<Symbol> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  require(lines.size() >= kNumReserved, Errc::parse_error,
          path.string() + ": vocabulary file too short");
  for (TokenId i = 0; i < kNumReserved; ++i)
    require(lines[i] == kReservedSymbols[i], Errc::parse_error,
            path.string() + ": reserved symbol mismatch at id " + std::to_string(i));
  Vocab v;
  v.finish(std::vector<Symbol>(lines.begin() + kNumReserved, lines.end()));
  return v;
}

}  // namespace icld
