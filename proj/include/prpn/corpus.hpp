#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "prpn/sexpr.hpp"
#include "prpn/tree.hpp"

namespace prpn {

// Token <-> id map with reserved <unk>=0 and <eos>=1.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kEos = 1;

  Vocabulary() {
    list_ = {"<unk>", "<eos>"};
    map_ = {{"<unk>", kUnk}, {"<eos>", kEos}};
  }

  // Keeps the cap-2 most frequent tokens, frequency ties broken
  // lexicographically; everything else maps to <unk>.
  static Vocabulary build(std::span<const std::string> stream, std::size_t cap) {
    if (cap < 3) throw std::invalid_argument("build_vocab: cap must be >= 3");
    if (stream.empty()) throw std::invalid_argument("build_vocab: empty token stream");
    std::map<std::string, long long> freq;
    for (const auto& tok : stream) ++freq[tok];
    std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, n] : items) {
      if (v.size() >= cap) break;
      v.push(tok);
    }
    return v;
  }

  int id(const std::string& tok) const {
    auto it = map_.find(tok);
    return it == map_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tok) const { return map_.count(tok) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= static_cast<int>(list_.size()))
      throw std::out_of_range("vocabulary: id " + std::to_string(id));
    return list_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return list_.size(); }

  void save(std::ostream& out) const {
    for (const auto& tok : list_) out << tok << '\n';
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    save(out);
  }

  static Vocabulary load(std::istream& in) {
    Vocabulary v;
    v.list_.clear();
    v.map_.clear();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      v.push(line);
    }
    if (v.size() < 2 || v.list_[0] != "<unk>" || v.list_[1] != "<eos>")
      throw std::runtime_error("vocabulary file must start with <unk> and <eos>");
    return v;
  }

  static Vocabulary load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load(in);
  }

 private:
  std::unordered_map<std::string, int> map_;
  std::vector<std::string> list_;

  void push(const std::string& tok) {
    if (map_.count(tok)) return;
    map_[tok] = static_cast<int>(list_.size());
    list_.push_back(tok);
  }
};

// OOV tokens become <unk>; every sentence ends with <eos> unless append_eos
// is off (the parsing path works on the bare tokens).
inline std::vector<int> numericalize(std::span<const std::string> tokens, const Vocabulary& vocab,
                                     bool append_eos = true) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& tok : tokens) ids.push_back(vocab.id(tok));
  if (append_eos) ids.push_back(Vocabulary::kEos);
  return ids;
}

inline std::vector<std::string> denumericalize(std::span<const int> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id : ids)
    if (id != Vocabulary::kEos) out.push_back(vocab.token(id));
  return out;
}

// ---- splits ----

struct Subset {
  std::vector<std::vector<std::string>> sentences;
  std::vector<LabeledTree> trees;  // aligned with sentences when non-empty

  bool has_trees() const { return !trees.empty(); }
  std::size_t size() const { return sentences.size(); }
};

struct CorpusSplit {
  Subset train, valid, test;
  bool overlap = false;  // no-split replication mode: train == valid == test
};

struct SplitSpec {
  std::string train_path, valid_path, test_path;
  bool treebank = false;  // files hold one s-expression per line
  bool no_split = false;  // load train_path once, reuse it for all subsets
};

inline Subset load_subset(const std::string& path, bool treebank) {
  Subset s;
  if (path.empty()) return s;
  if (treebank) {
    s.trees = read_ptb_file(path);
    for (const auto& t : s.trees) {
      auto words = tree_yield(t);
      if (words.empty()) throw std::runtime_error("empty tree yield in " + path);
      s.sentences.push_back(std::move(words));
    }
  } else {
    for (const auto& line : read_lines(path)) {
      std::istringstream iss(line);
      std::vector<std::string> toks;
      std::string tok;
      while (iss >> tok) toks.push_back(tok);
      if (!toks.empty()) s.sentences.push_back(std::move(toks));
    }
  }
  return s;
}

inline CorpusSplit load_split(const SplitSpec& spec) {
  CorpusSplit split;
  if (spec.no_split) {
    Subset full = load_subset(spec.train_path, spec.treebank);
    split.train = full;
    split.valid = full;
    split.test = std::move(full);
    split.overlap = true;
    return split;
  }
  split.train = load_subset(spec.train_path, spec.treebank);
  split.valid = load_subset(spec.valid_path, spec.treebank);
  split.test = load_subset(spec.test_path, spec.treebank);
  return split;
}

}  // namespace prpn
