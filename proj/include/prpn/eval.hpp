#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prpn/tree.hpp"

namespace prpn {

struct F1Options {
  bool include_root = true;  // count the full-sentence span
  bool macro = false;        // per-sentence mean instead of pooled counts
};

// Percent-scale precision/recall/F1 plus the span counts they came from.
struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long matched = 0;
  long long predicted = 0;
  long long gold = 0;
};

namespace detail {

// Scoring spans: width >= 2, positions only; drops the [0,n) span when the
// root is excluded.
inline std::vector<std::pair<int, int>> scoring_spans(const std::vector<Span>& spans, int n,
                                                      bool include_root) {
  std::vector<std::pair<int, int>> out;
  for (const Span& s : spans) {
    if (s.width() < 2) continue;
    if (!include_root && s.start == 0 && s.end == n) continue;
    out.emplace_back(s.start, s.end);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline long long multiset_overlap(const std::vector<std::pair<int, int>>& a,
                                  const std::vector<std::pair<int, int>>& b) {
  long long m = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++m;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return m;
}

}  // namespace detail

inline F1Result f1_from_counts(long long matched, long long predicted, long long gold) {
  F1Result r;
  r.matched = matched;
  r.predicted = predicted;
  r.gold = gold;
  if (predicted == 0 && gold == 0) {
    r.precision = r.recall = r.f1 = 100.0;  // vacuously perfect
    return r;
  }
  r.precision = predicted > 0 ? 100.0 * static_cast<double>(matched) / static_cast<double>(predicted) : 0.0;
  r.recall = gold > 0 ? 100.0 * static_cast<double>(matched) / static_cast<double>(gold) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

inline F1Result unlabeled_f1_spans(const std::vector<Span>& pred, const std::vector<Span>& gold,
                                   int n, const F1Options& opt = {}) {
  auto p = detail::scoring_spans(pred, n, opt.include_root);
  auto g = detail::scoring_spans(gold, n, opt.include_root);
  return f1_from_counts(detail::multiset_overlap(p, g), static_cast<long long>(p.size()),
                        static_cast<long long>(g.size()));
}

template <class GoldTree>
inline F1Result unlabeled_f1(const BinaryTree& pred, const GoldTree& gold,
                             const F1Options& opt = {}) {
  int np = leaf_count(pred);
  int ng = static_cast<int>(tree_yield(gold).size());
  if (np != ng)
    throw std::invalid_argument("unlabeled_f1: yield lengths differ (" + std::to_string(np) +
                                " vs " + std::to_string(ng) + ")");
  return unlabeled_f1_spans(tree_spans(pred), tree_spans(gold), np, opt);
}

// Corpus F1 over aligned span lists; micro pools counts, macro averages
// per-sentence F1.
struct SentenceSpans {
  std::vector<Span> spans;
  int length = 0;
};

inline F1Result corpus_f1_spans(std::span<const SentenceSpans> pred,
                                std::span<const SentenceSpans> gold, const F1Options& opt = {}) {
  if (pred.empty()) throw std::invalid_argument("corpus_f1: empty corpus");
  if (pred.size() != gold.size())
    throw std::invalid_argument("corpus_f1: misaligned corpora (" + std::to_string(pred.size()) +
                                " vs " + std::to_string(gold.size()) + " sentences)");
  long long m = 0, p = 0, g = 0;
  double f1_sum = 0.0, prec_sum = 0.0, rec_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].length != gold[i].length)
      throw std::invalid_argument("corpus_f1: sentence " + std::to_string(i) +
                                  " yield lengths differ");
    F1Result one = unlabeled_f1_spans(pred[i].spans, gold[i].spans, pred[i].length, opt);
    m += one.matched;
    p += one.predicted;
    g += one.gold;
    f1_sum += one.f1;
    prec_sum += one.precision;
    rec_sum += one.recall;
  }
  if (!opt.macro) return f1_from_counts(m, p, g);
  F1Result r;
  r.matched = m;
  r.predicted = p;
  r.gold = g;
  auto n = static_cast<double>(pred.size());
  r.precision = prec_sum / n;
  r.recall = rec_sum / n;
  r.f1 = f1_sum / n;
  return r;
}

inline F1Result corpus_f1(std::span<const BinaryTreePtr> pred, std::span<const LabeledTree> gold,
                          const F1Options& opt = {}) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("corpus_f1: misaligned corpora");
  std::vector<SentenceSpans> ps(pred.size()), gs(gold.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ps[i] = {tree_spans(*pred[i]), leaf_count(*pred[i])};
    gs[i] = {tree_spans(gold[i]), static_cast<int>(tree_yield(gold[i]).size())};
  }
  return corpus_f1_spans(ps, gs, opt);
}

// Fraction of gold constituents with the given label (width >= 2) whose span
// occurs in the predicted tree; nullopt when the label never occurs.
inline std::optional<double> label_accuracy(std::span<const BinaryTreePtr> pred,
                                            std::span<const LabeledTree> gold,
                                            const std::string& label) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("label_accuracy: misaligned corpora");
  long long total = 0, hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::set<std::pair<int, int>> pspans;
    for (const Span& s : tree_spans(*pred[i]))
      if (s.width() >= 2) pspans.insert({s.start, s.end});
    for (const Span& s : tree_spans(gold[i])) {
      if (s.width() < 2 || s.label != label) continue;
      ++total;
      if (pspans.count({s.start, s.end})) ++hit;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

inline double mean_depth(std::span<const BinaryTreePtr> trees) {
  if (trees.empty()) throw std::invalid_argument("mean_depth: no trees");
  double acc = 0.0;
  for (const auto& t : trees) acc += tree_depth(*t);
  return acc / static_cast<double>(trees.size());
}

// ---- WSJ10 filtering ----

// A sentence with per-token POS tags and its gold constituent spans, the form
// the filter consumes and produces (so filtering is idempotent).
struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::vector<Span> spans;
};

inline TaggedSentence tagged_from_tree(const LabeledTree& t) {
  TaggedSentence s;
  collect_yield(t, s.tokens, &s.tags);
  s.spans = tree_spans(t);
  return s;
}

inline const std::set<std::string>& ptb_punct_tags() {
  static const std::set<std::string> tags = {"#", "$", "''", ",", "-LRB-", "-RRB-", ".", ":", "``"};
  return tags;
}

// Drops punctuation tokens, keeps sentences with 2..10 remaining tokens,
// reindexes gold spans and drops spans whose width falls below 2.
inline std::vector<TaggedSentence> wsj10_filter(std::span<const TaggedSentence> input) {
  std::vector<TaggedSentence> out;
  for (const TaggedSentence& s : input) {
    if (s.tags.size() != s.tokens.size())
      throw std::invalid_argument("wsj10_filter: missing POS tags");
    std::vector<int> new_pos(s.tokens.size() + 1, 0);
    TaggedSentence f;
    int kept = 0;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      new_pos[i] = kept;
      if (!ptb_punct_tags().count(s.tags[i])) {
        f.tokens.push_back(s.tokens[i]);
        f.tags.push_back(s.tags[i]);
        ++kept;
      }
    }
    new_pos[s.tokens.size()] = kept;
    if (kept < 2 || kept > 10) continue;
    for (const Span& sp : s.spans) {
      Span r{new_pos[sp.start], new_pos[sp.end], sp.label};
      if (r.width() >= 2) f.spans.push_back(r);
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---- perplexity and cross-seed aggregation ----

inline double perplexity(double total_nll, long long tokens) {
  if (tokens < 1) throw std::invalid_argument("perplexity: token count must be >= 1");
  return std::exp(total_nll / static_cast<double>(tokens));
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double max = 0.0;
  double median = 0.0;
};

inline Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: empty input");
  Aggregate a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(var / static_cast<double>(values.size()));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  a.max = sorted.back();
  std::size_t n = sorted.size();
  a.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return a;
}

}  // namespace prpn
