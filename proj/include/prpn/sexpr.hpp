#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "prpn/tree.hpp"

namespace prpn {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t pos)
      : std::runtime_error(what + " at position " + std::to_string(pos)), pos_(pos) {}
  std::size_t pos() const { return pos_; }

 private:
  std::size_t pos_;
};

// Generic s-expression: atom or list.
struct SExpr {
  std::string atom;
  std::vector<SExpr> kids;
  bool leaf = false;

  bool is_atom() const { return leaf; }
};

namespace detail {

inline void skip_ws(std::string_view s, std::size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == '\n')) ++i;
}

inline SExpr parse_sexpr(std::string_view s, std::size_t& i) {
  skip_ws(s, i);
  if (i >= s.size()) throw ParseError("unexpected end of input", i);
  if (s[i] == ')') throw ParseError("unexpected ')'", i);
  if (s[i] == '(') {
    std::size_t open = i++;
    SExpr node;
    while (true) {
      skip_ws(s, i);
      if (i >= s.size()) throw ParseError("unbalanced '('", open);
      if (s[i] == ')') {
        ++i;
        break;
      }
      node.kids.push_back(parse_sexpr(s, i));
    }
    if (node.kids.empty()) throw ParseError("empty '()'", open);
    return node;
  }
  std::size_t start = i;
  while (i < s.size() && s[i] != '(' && s[i] != ')' && s[i] != ' ' && s[i] != '\t' &&
         s[i] != '\r' && s[i] != '\n')
    ++i;
  SExpr a;
  a.leaf = true;
  a.atom = std::string(s.substr(start, i - start));
  return a;
}

}  // namespace detail

inline SExpr parse_sexpr(std::string_view text) {
  std::size_t i = 0;
  SExpr e = detail::parse_sexpr(text, i);
  detail::skip_ws(text, i);
  if (i != text.size()) throw ParseError("trailing input after tree", i);
  return e;
}

// PTB functional-tag stripping: truncate at the first '-' or '=' unless the
// label itself starts with '-' (-NONE-, -LRB-, ...).
inline std::string normalize_label(std::string_view raw) {
  if (raw.empty() || raw[0] == '-') return std::string(raw);
  std::size_t cut = raw.find_first_of("-=");
  return std::string(raw.substr(0, cut));
}

namespace detail {

// Liberal labeled conversion: lists may or may not start with a label atom,
// bare atoms under a label become terminals.
inline LabeledTree to_labeled(const SExpr& e) {
  if (e.is_atom()) {
    LabeledTree t;
    t.word = e.atom;
    return t;
  }
  LabeledTree t;
  std::size_t first = 0;
  if (e.kids[0].is_atom()) {
    t.label = normalize_label(e.kids[0].atom);
    first = 1;
  }
  if (first == e.kids.size()) throw ParseError("node '" + t.label + "' has no children", 0);
  if (first == 1 && e.kids.size() == 2 && e.kids[1].is_atom()) {
    t.word = e.kids[1].atom;  // (TAG word) terminal
    return t;
  }
  for (std::size_t k = first; k < e.kids.size(); ++k) t.children.push_back(to_labeled(e.kids[k]));
  return t;
}

// Drop -NONE- terminals, then collapse parents left empty. Returns false when
// the whole subtree vanished.
inline bool prune_none(LabeledTree& t) {
  if (t.is_terminal()) return t.label != "-NONE-";
  std::vector<LabeledTree> kept;
  for (auto& c : t.children)
    if (prune_none(c)) kept.push_back(std::move(c));
  t.children = std::move(kept);
  return !t.children.empty();
}

inline bool sexpr_is_strict_ptb(const SExpr& e, bool top) {
  if (e.is_atom()) return false;
  // top-level wrapper "( (S ...) )" with no label is PTB-idiomatic
  if (top && !e.kids[0].is_atom())
    return e.kids.size() == 1 && sexpr_is_strict_ptb(e.kids[0], false);
  if (!e.kids[0].is_atom()) return false;
  if (e.kids.size() == 2 && e.kids[1].is_atom()) return true;  // terminal
  if (e.kids.size() < 2) return false;
  for (std::size_t k = 1; k < e.kids.size(); ++k)
    if (e.kids[k].is_atom() || !sexpr_is_strict_ptb(e.kids[k], false)) return false;
  return true;
}

inline bool sexpr_is_plain_binary(const SExpr& e) {
  if (e.is_atom()) return true;
  if (e.kids.size() != 2) return false;
  return sexpr_is_plain_binary(e.kids[0]) && sexpr_is_plain_binary(e.kids[1]);
}

inline BinaryTreePtr to_binary(const SExpr& e) {
  if (e.is_atom()) return make_leaf(e.atom);
  if (e.kids.size() != 2)
    throw ParseError("plain bracketed tree nodes must have exactly two children", 0);
  return make_node(to_binary(e.kids[0]), to_binary(e.kids[1]));
}

}  // namespace detail

// Reads one PTB-style labeled tree. Strips functional tags, drops -NONE-
// subtrees, collapses emptied parents and unwraps the idiomatic unlabeled
// top-level wrapper.
inline LabeledTree read_ptb(std::string_view text) {
  SExpr e = parse_sexpr(text);
  if (e.is_atom()) throw ParseError("expected a bracketed tree", 0);
  LabeledTree t = detail::to_labeled(e);
  if (!detail::prune_none(t)) throw ParseError("tree is empty after -NONE- removal", 0);
  while (t.label.empty() && t.word.empty() && t.children.size() == 1) {
    LabeledTree c = std::move(t.children[0]);
    t = std::move(c);
  }
  return t;
}

// Reads one unlabeled binary tree as printed by the parser ("((a b) c)");
// a bare atom is a single-leaf tree.
inline BinaryTreePtr read_bracketed(std::string_view text) {
  return detail::to_binary(parse_sexpr(text));
}

inline bool is_strict_ptb(std::string_view text) {
  try {
    return detail::sexpr_is_strict_ptb(parse_sexpr(text), true);
  } catch (const ParseError&) {
    return false;
  }
}

inline bool is_plain_binary(std::string_view text) {
  try {
    return detail::sexpr_is_plain_binary(parse_sexpr(text));
  } catch (const ParseError&) {
    return false;
  }
}

// ---- printing ----

inline std::string escape_token(std::string_view tok) {
  std::string out;
  out.reserve(tok.size());
  for (char c : tok) {
    if (c == '(')
      out += "-LRB-";
    else if (c == ')')
      out += "-RRB-";
    else
      out += c;
  }
  return out;
}

inline void print_tree(const BinaryTree& t, std::string& out) {
  if (t.is_leaf()) {
    out += escape_token(t.token);
    return;
  }
  out += '(';
  print_tree(*t.left, out);
  out += ' ';
  print_tree(*t.right, out);
  out += ')';
}

inline std::string print_tree(const BinaryTree& t) {
  std::string out;
  print_tree(t, out);
  return out;
}

inline void print_tree(const LabeledTree& t, std::string& out) {
  if (t.is_terminal()) {
    if (t.label.empty()) {
      out += escape_token(t.word);
    } else {
      out += '(';
      out += t.label;
      out += ' ';
      out += escape_token(t.word);
      out += ')';
    }
    return;
  }
  out += '(';
  out += t.label;
  for (const auto& c : t.children) {
    out += ' ';
    print_tree(c, out);
  }
  out += ')';
}

inline std::string print_tree(const LabeledTree& t) {
  std::string out;
  print_tree(t, out);
  return out;
}

// ---- file helpers: one tree per line ----

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

inline std::vector<LabeledTree> read_ptb_file(const std::string& path) {
  std::vector<LabeledTree> trees;
  for (const auto& line : read_lines(path)) trees.push_back(read_ptb(line));
  return trees;
}

inline std::vector<BinaryTreePtr> read_bracketed_file(const std::string& path) {
  std::vector<BinaryTreePtr> trees;
  for (const auto& line : read_lines(path)) trees.push_back(read_bracketed(line));
  return trees;
}

}  // namespace prpn
