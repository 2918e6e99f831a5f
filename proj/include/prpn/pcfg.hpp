#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prpn/tensor.hpp"
#include "prpn/tree.hpp"

namespace prpn {

// Weighted context-free grammar for generating synthetic treebanks. Symbols
// that never appear as a left-hand side are terminals; a terminal introduced
// by rule A -> w is tagged with A.
struct Production {
  std::string lhs;
  std::vector<std::string> rhs;
  double weight = 1.0;
};

struct PcfgSpec {
  std::vector<Production> productions;
  std::string start = "S";
  int max_length = 20;

  std::set<std::string> nonterminals() const {
    std::set<std::string> nts;
    for (const auto& p : productions) nts.insert(p.lhs);
    return nts;
  }

  void validate() const {
    if (productions.empty()) throw std::invalid_argument("pcfg: no productions");
    if (max_length < 1) throw std::invalid_argument("pcfg: max_length must be >= 1");
    auto nts = nonterminals();
    if (!nts.count(start)) throw std::invalid_argument("pcfg: start symbol has no productions");
    for (const auto& p : productions) {
      if (!(p.weight > 0.0)) throw std::invalid_argument("pcfg: weights must be positive");
      if (p.rhs.empty()) throw std::invalid_argument("pcfg: empty right-hand side");
    }
  }

  static PcfgSpec from_json(const nlohmann::json& j) {
    PcfgSpec g;
    g.start = j.value("start", std::string("S"));
    g.max_length = j.value("max_length", 20);
    for (const auto& pj : j.at("productions")) {
      Production p;
      p.lhs = pj.at("lhs").get<std::string>();
      for (const auto& s : pj.at("rhs")) p.rhs.push_back(s.get<std::string>());
      p.weight = pj.value("weight", 1.0);
      g.productions.push_back(std::move(p));
    }
    g.validate();
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& p : productions)
      rules.push_back({{"lhs", p.lhs}, {"rhs", p.rhs}, {"weight", p.weight}});
    return {{"start", start}, {"max_length", max_length}, {"productions", rules}};
  }
};

struct PcfgSample {
  LabeledTree tree;
  std::vector<std::string> sentence;
};

class PcfgSampler {
 public:
  PcfgSampler(PcfgSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed) {
    spec_.validate();
    nts_ = spec_.nonterminals();
    for (std::size_t i = 0; i < spec_.productions.size(); ++i)
      by_lhs_[spec_.productions[i].lhs].push_back(i);
  }

  // Rejection-samples one derivation whose yield fits max_length; throws when
  // the recent acceptance rate falls below 1%.
  PcfgSample sample() {
    for (;;) {
      budget_ = 64 * (spec_.max_length + 4);  // guards non-terminating grammars
      LabeledTree tree;
      bool ok = expand(spec_.start, tree);
      if (ok) {
        auto words = tree_yield(tree);
        ok = !words.empty() && static_cast<int>(words.size()) <= spec_.max_length;
        if (ok) {
          record(true);
          return {std::move(tree), std::move(words)};
        }
      }
      record(false);
    }
  }

 private:
  PcfgSpec spec_;
  std::mt19937_64 rng_;
  std::set<std::string> nts_;
  std::map<std::string, std::vector<std::size_t>> by_lhs_;
  int budget_ = 0;
  std::vector<bool> window_;
  std::size_t window_pos_ = 0;

  void record(bool accepted) {
    constexpr std::size_t kWindow = 512;
    if (window_.size() < kWindow) {
      window_.push_back(accepted);
    } else {
      window_[window_pos_] = accepted;
      window_pos_ = (window_pos_ + 1) % kWindow;
    }
    if (window_.size() == kWindow) {
      std::size_t accepts = 0;
      for (bool b : window_)
        if (b) ++accepts;
      if (accepts * 100 < kWindow)
        throw std::runtime_error("pcfg: rejection rate above 99%, grammar unusable under max_length");
    }
  }

  const Production& pick(const std::string& nt) {
    const auto& rules = by_lhs_.at(nt);
    double total = 0.0;
    for (std::size_t r : rules) total += spec_.productions[r].weight;
    double u = ad::uniform01(rng_) * total;
    double acc = 0.0;
    for (std::size_t r : rules) {
      acc += spec_.productions[r].weight;
      if (u < acc) return spec_.productions[r];
    }
    return spec_.productions[rules.back()];
  }

  bool expand(const std::string& nt, LabeledTree& out) {
    if (--budget_ < 0) return false;
    const Production& p = pick(nt);
    out.label = nt;
    if (p.rhs.size() == 1 && !nts_.count(p.rhs[0])) {
      out.word = p.rhs[0];  // preterminal: tag is the introducing lhs
      return true;
    }
    for (const auto& sym : p.rhs) {
      if (nts_.count(sym)) {
        LabeledTree child;
        if (!expand(sym, child)) return false;
        out.children.push_back(std::move(child));
      } else {
        LabeledTree leaf;
        leaf.label = nt;
        leaf.word = sym;
        out.children.push_back(std::move(leaf));
      }
    }
    return true;
  }
};

inline std::vector<PcfgSample> generate_pcfg_corpus(const PcfgSpec& spec, int count,
                                                    std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("generate_pcfg_corpus: negative count");
  PcfgSampler sampler(spec, seed);
  std::vector<PcfgSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sampler.sample());
  return out;
}

}  // namespace prpn
