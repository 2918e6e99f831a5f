#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prpn {

// Constituent span [start, end) over token positions, optional label.
struct Span {
  int start = 0;
  int end = 0;
  std::string label;

  int width() const { return end - start; }
  friend bool operator==(const Span& a, const Span& b) {
    return a.start == b.start && a.end == b.end && a.label == b.label;
  }
};

inline bool span_pos_less(const Span& a, const Span& b) {
  return a.start != b.start ? a.start < b.start : a.end < b.end;
}

// Unlabeled binary tree over a token sequence. A leaf holds the token, an
// internal node has exactly two children.
struct BinaryTree;
using BinaryTreePtr = std::unique_ptr<BinaryTree>;

struct BinaryTree {
  BinaryTreePtr left, right;
  std::string token;  // leaves only

  bool is_leaf() const { return left == nullptr; }
};

inline BinaryTreePtr make_leaf(std::string token) {
  auto t = std::make_unique<BinaryTree>();
  t->token = std::move(token);
  return t;
}

inline BinaryTreePtr make_node(BinaryTreePtr l, BinaryTreePtr r) {
  auto t = std::make_unique<BinaryTree>();
  t->left = std::move(l);
  t->right = std::move(r);
  return t;
}

// PTB-style tree: internal nodes carry a label and >= 1 children, terminals
// carry (word, POS tag) with the tag stored in `label`.
struct LabeledTree {
  std::string label;
  std::string word;  // non-empty iff terminal
  std::vector<LabeledTree> children;

  bool is_terminal() const { return children.empty(); }
};

// ---- yields, spans, depth ----

inline void collect_yield(const BinaryTree& t, std::vector<std::string>& out) {
  if (t.is_leaf()) {
    out.push_back(t.token);
    return;
  }
  collect_yield(*t.left, out);
  collect_yield(*t.right, out);
}

inline std::vector<std::string> tree_yield(const BinaryTree& t) {
  std::vector<std::string> out;
  collect_yield(t, out);
  return out;
}

inline void collect_yield(const LabeledTree& t, std::vector<std::string>& words,
                          std::vector<std::string>* tags = nullptr) {
  if (t.is_terminal()) {
    words.push_back(t.word);
    if (tags) tags->push_back(t.label);
    return;
  }
  for (const auto& c : t.children) collect_yield(c, words, tags);
}

inline std::vector<std::string> tree_yield(const LabeledTree& t) {
  std::vector<std::string> out;
  collect_yield(t, out);
  return out;
}

namespace detail {

inline int spans_rec(const BinaryTree& t, int start, std::vector<Span>& out) {
  if (t.is_leaf()) return start + 1;
  int mid = spans_rec(*t.left, start, out);
  int end = spans_rec(*t.right, mid, out);
  out.push_back(Span{start, end, ""});
  return end;
}

inline int spans_rec(const LabeledTree& t, int start, std::vector<Span>& out) {
  if (t.is_terminal()) return start + 1;
  int end = start;
  for (const auto& c : t.children) end = spans_rec(c, end, out);
  out.push_back(Span{start, end, t.label});
  return end;
}

}  // namespace detail

// One span per internal node; multiset semantics (unary chains repeat spans).
inline std::vector<Span> tree_spans(const BinaryTree& t) {
  std::vector<Span> out;
  if (!t.is_leaf()) detail::spans_rec(t, 0, out);
  return out;
}

inline std::vector<Span> tree_spans(const LabeledTree& t) {
  std::vector<Span> out;
  if (!t.is_terminal()) detail::spans_rec(t, 0, out);
  return out;
}

// Maximum number of internal nodes on any root-to-leaf path.
inline int tree_depth(const BinaryTree& t) {
  if (t.is_leaf()) return 0;
  return 1 + std::max(tree_depth(*t.left), tree_depth(*t.right));
}

inline int leaf_count(const BinaryTree& t) {
  if (t.is_leaf()) return 1;
  return leaf_count(*t.left) + leaf_count(*t.right);
}

// ---- tree induction from syntactic distances ----

namespace detail {

// Greedy top-down: split the range at the leftmost maximal gap, recurse.
// d[j] scores the gap between tokens j and j+1.
inline BinaryTreePtr induce_rec(std::span<const std::string> tokens, std::span<const double> d,
                                int lo, int hi) {
  if (hi - lo == 1) return make_leaf(tokens[lo]);
  int best = lo;
  for (int g = lo + 1; g < hi - 1; ++g)
    if (d[g] > d[best]) best = g;
  return make_node(induce_rec(tokens, d, lo, best + 1), induce_rec(tokens, d, best + 1, hi));
}

}  // namespace detail

inline BinaryTreePtr distances_to_tree(std::span<const std::string> tokens,
                                       std::span<const double> distances) {
  if (tokens.empty()) throw std::invalid_argument("distances_to_tree: empty token list");
  if (distances.size() + 1 != tokens.size())
    throw std::invalid_argument("distances_to_tree: need exactly one distance per gap");
  return detail::induce_rec(tokens, distances, 0, static_cast<int>(tokens.size()));
}

// ---- baseline trees ----

inline BinaryTreePtr left_branching(std::span<const std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("left_branching: empty token list");
  BinaryTreePtr t = make_leaf(tokens[0]);
  for (std::size_t i = 1; i < tokens.size(); ++i)
    t = make_node(std::move(t), make_leaf(tokens[i]));
  return t;
}

inline BinaryTreePtr right_branching(std::span<const std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("right_branching: empty token list");
  BinaryTreePtr t = make_leaf(tokens.back());
  for (std::size_t i = tokens.size() - 1; i-- > 0;)
    t = make_node(make_leaf(tokens[i]), std::move(t));
  return t;
}

namespace detail {

inline BinaryTreePtr balanced_rec(std::span<const std::string> tokens) {
  if (tokens.size() == 1) return make_leaf(tokens[0]);
  std::size_t split = (tokens.size() + 1) / 2;  // ceil(n/2)
  return make_node(balanced_rec(tokens.subspan(0, split)), balanced_rec(tokens.subspan(split)));
}

inline BinaryTreePtr random_rec(std::span<const std::string> tokens, std::mt19937_64& rng) {
  if (tokens.size() == 1) return make_leaf(tokens[0]);
  std::size_t split = 1 + rng() % (tokens.size() - 1);
  return make_node(random_rec(tokens.subspan(0, split), rng), random_rec(tokens.subspan(split), rng));
}

}  // namespace detail

inline BinaryTreePtr balanced(std::span<const std::string> tokens) {
  if (tokens.empty()) throw std::invalid_argument("balanced: empty token list");
  return detail::balanced_rec(tokens);
}

inline BinaryTreePtr random_tree(std::span<const std::string> tokens, std::uint64_t seed) {
  if (tokens.empty()) throw std::invalid_argument("random_tree: empty token list");
  std::mt19937_64 rng(seed);
  return detail::random_rec(tokens, rng);
}

}  // namespace prpn
