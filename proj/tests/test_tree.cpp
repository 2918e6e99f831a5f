#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "prpn/sexpr.hpp"
#include "prpn/tree.hpp"

using namespace prpn;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> xs) {
  return {xs.begin(), xs.end()};
}

std::vector<std::string> numbered_tokens(int n) {
  std::vector<std::string> t;
  for (int i = 0; i < n; ++i) t.push_back("w" + std::to_string(i));
  return t;
}

// Independent reference for the induction algorithm: collects the spans the
// greedy leftmost-max recursion should produce, without building a tree.
void reference_spans(std::span<const double> d, int lo, int hi,
                     std::vector<std::pair<int, int>>& out) {
  if (hi - lo < 2) return;
  out.push_back({lo, hi});
  int best = lo;
  double bv = d[lo];
  for (int g = lo + 1; g < hi - 1; ++g)
    if (d[g] > bv) {
      bv = d[g];
      best = g;
    }
  reference_spans(d, lo, best + 1, out);
  reference_spans(d, best + 1, hi, out);
}

std::vector<std::pair<int, int>> positions(const std::vector<Span>& spans) {
  std::vector<std::pair<int, int>> out;
  for (const Span& s : spans) out.push_back({s.start, s.end});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("distances_to_tree: spec examples") {
  auto two = distances_to_tree(toks({"a", "b"}), std::vector<double>{0.4});
  CHECK(print_tree(*two) == "(a b)");

  auto t1 = distances_to_tree(toks({"a", "b", "c", "d"}), std::vector<double>{3, 1, 2});
  CHECK(print_tree(*t1) == "(a ((b c) d))");

  auto t2 = distances_to_tree(toks({"a", "b", "c", "d"}), std::vector<double>{1, 2, 3});
  CHECK(print_tree(*t2) == "(((a b) c) d)");

  auto t3 = distances_to_tree(toks({"a", "b", "c", "d"}), std::vector<double>{3, 2, 1});
  CHECK(print_tree(*t3) == "(a (b (c d)))");

  auto one = distances_to_tree(toks({"a"}), std::vector<double>{});
  CHECK(print_tree(*one) == "a");
  CHECK(tree_spans(*one).empty());

  CHECK_THROWS_AS(distances_to_tree(toks({"a", "b"}), std::vector<double>{1, 2}),
                  std::invalid_argument);
}

TEST_CASE("distances_to_tree: yield order and branching direction properties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + static_cast<int>(rng() % 12);
    auto tokens = numbered_tokens(n);
    std::vector<double> d(n - 1);
    for (auto& x : d) x = static_cast<double>(rng() % 1000) / 100.0;
    auto t = distances_to_tree(tokens, d);
    CHECK(tree_yield(*t) == tokens);
  }
  for (int n = 2; n <= 20; ++n) {
    auto tokens = numbered_tokens(n);
    std::vector<double> inc(n - 1), dec(n - 1);
    for (int i = 0; i < n - 1; ++i) {
      inc[i] = i + 1;
      dec[i] = n - i;
    }
    CHECK(print_tree(*distances_to_tree(tokens, inc)) == print_tree(*left_branching(tokens)));
    CHECK(print_tree(*distances_to_tree(tokens, dec)) == print_tree(*right_branching(tokens)));
  }
}

TEST_CASE("distances_to_tree: exhaustive small-n reference check with leftmost ties") {
  for (int n = 2; n <= 6; ++n) {
    auto tokens = numbered_tokens(n);
    int gaps = n - 1;
    long long combos = 1;
    for (int i = 0; i < gaps; ++i) combos *= 3;
    for (long long code = 0; code < combos; ++code) {
      std::vector<double> d(gaps);
      long long c = code;
      for (int i = 0; i < gaps; ++i) {
        d[i] = static_cast<double>(c % 3 + 1);
        c /= 3;
      }
      auto tree = distances_to_tree(tokens, d);
      std::vector<std::pair<int, int>> expect;
      reference_spans(d, 0, n, expect);
      std::sort(expect.begin(), expect.end());
      REQUIRE(positions(tree_spans(*tree)) == expect);
      REQUIRE(tree_yield(*tree) == tokens);
    }
  }
}

TEST_CASE("baseline trees: spec examples") {
  CHECK(print_tree(*right_branching(toks({"a", "b", "c"}))) == "(a (b c))");
  CHECK(print_tree(*left_branching(toks({"a", "b", "c"}))) == "((a b) c)");
  CHECK(print_tree(*balanced(toks({"a", "b", "c", "d"}))) == "((a b) (c d))");
  CHECK(print_tree(*balanced(toks({"a", "b", "c"}))) == "((a b) c)");

  auto r1 = random_tree(toks({"a", "b", "c", "d", "e"}), 42);
  auto r2 = random_tree(toks({"a", "b", "c", "d", "e"}), 42);
  CHECK(print_tree(*r1) == print_tree(*r2));

  CHECK_THROWS_AS(left_branching({}), std::invalid_argument);
  CHECK_THROWS_AS(random_tree({}, 1), std::invalid_argument);
}

TEST_CASE("baseline trees: structural validity for 1 <= n <= 50") {
  for (int n = 1; n <= 50; ++n) {
    auto tokens = numbered_tokens(n);
    for (auto maker : {+[](std::span<const std::string> t) { return left_branching(t); },
                       +[](std::span<const std::string> t) { return right_branching(t); },
                       +[](std::span<const std::string> t) { return balanced(t); },
                       +[](std::span<const std::string> t) { return random_tree(t, 7); }}) {
      auto tree = maker(tokens);
      REQUIRE(tree_yield(*tree) == tokens);
      REQUIRE(leaf_count(*tree) == n);
      // n-1 internal nodes is exactly "every internal node has two children"
      REQUIRE(static_cast<int>(tree_spans(*tree).size()) == n - 1);
    }
  }
}

TEST_CASE("tree_spans: spec examples") {
  auto ab = read_bracketed("(a b)");
  CHECK(positions(tree_spans(*ab)) == std::vector<std::pair<int, int>>{{0, 2}});

  auto nested = read_bracketed("(a ((b c) d))");
  CHECK(positions(tree_spans(*nested)) ==
        std::vector<std::pair<int, int>>{{0, 4}, {1, 3}, {1, 4}});

  CHECK(tree_spans(*make_leaf("x")).empty());
}

TEST_CASE("read_ptb: spec examples") {
  LabeledTree np = read_ptb("(NP (DT the) (NN dog))");
  CHECK(np.label == "NP");
  REQUIRE(np.children.size() == 2);
  CHECK(np.children[0].is_terminal());
  CHECK(np.children[0].label == "DT");
  CHECK(np.children[0].word == "the");
  CHECK(np.children[1].word == "dog");

  CHECK(read_ptb("(NP-SBJ (DT the) (NN dog))").label == "NP");

  LabeledTree s = read_ptb("(S (NP-SBJ (-NONE- *)) (VP (VB go)))");
  CHECK(s.label == "S");
  REQUIRE(s.children.size() == 1);
  CHECK(s.children[0].label == "VP");
  REQUIRE(s.children[0].children.size() == 1);
  CHECK(s.children[0].children[0].word == "go");

  // idiomatic top-level wrapper
  LabeledTree w = read_ptb("( (S (NP (DT the) (NN cat)) (VP (VBD sat))) )");
  CHECK(w.label == "S");

  CHECK(read_ptb("(X (NP=2 (DT the) (NN cat)) (VBD sat))").children[0].label == "NP");
}

TEST_CASE("read_ptb: errors carry a position") {
  CHECK_THROWS_AS(read_ptb(""), ParseError);
  CHECK_THROWS_AS(read_ptb("(S (NP"), ParseError);
  CHECK_THROWS_AS(read_ptb("(S (VB go)) extra"), ParseError);
  CHECK_THROWS_AS(read_ptb("()"), ParseError);
  CHECK_THROWS_AS(read_ptb("(S (-NONE- *))"), ParseError);
  try {
    read_ptb("(S (NP");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("position") != std::string::npos);
  }
}

TEST_CASE("read_ptb then print then read_ptb is a fixed point") {
  const char* fixtures[] = {
      "(NP (DT the) (NN dog))",
      "(S (NP-SBJ (DT the) (NN cat)) (VP (VBD sat) (PP (IN on) (NP (DT the) (NN mat)))) (. .))",
      "(S (INTJ (UH oh)) (, ,) (NP (PRP it)) (VP (VBZ works)))",
      "(X (NP=2 (DT a) (JJ big) (NN dog)) (CC and) (NP (DT a) (NN cat)))",
  };
  for (const char* f : fixtures) {
    LabeledTree once = read_ptb(f);
    std::string printed = print_tree(once);
    LabeledTree twice = read_ptb(printed);
    CHECK(print_tree(twice) == printed);
  }
}

TEST_CASE("plain bracketed trees round-trip and reject non-binary nodes") {
  const char* fixtures[] = {"((the dog) barked)", "(a (b (c d)))", "((a b) (c d))", "x"};
  for (const char* f : fixtures) {
    auto t = read_bracketed(f);
    CHECK(print_tree(*t) == f);
  }
  CHECK_THROWS_AS(read_bracketed("(a b c)"), ParseError);
  CHECK(print_tree(*make_leaf("f(x)")) == "f-LRB-x-RRB-");
}

TEST_CASE("format detection distinguishes PTB from plain bracketed files") {
  CHECK(is_strict_ptb("(NP (DT the) (NN dog))"));
  CHECK(is_strict_ptb("( (S (NP (DT the) (NN cat)) (VP (VBD sat))) )"));
  CHECK_FALSE(is_strict_ptb("((a b) c)"));
  CHECK_FALSE(is_strict_ptb("plain"));
  CHECK(is_plain_binary("((a b) c)"));
  CHECK(is_plain_binary("plain"));
  CHECK_FALSE(is_plain_binary("(NP (DT the) (NN dog))"));  // ternary list
  // a two-word bracket parses both ways
  CHECK(is_strict_ptb("(a b)"));
  CHECK(is_plain_binary("(a b)"));
}
