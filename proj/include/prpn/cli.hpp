#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prpn/checkpoint.hpp"
#include "prpn/corpus.hpp"
#include "prpn/eval.hpp"
#include "prpn/pcfg.hpp"
#include "prpn/report.hpp"
#include "prpn/sexpr.hpp"
#include "prpn/train.hpp"
#include "prpn/tree.hpp"

namespace prpn::cli {

namespace detail {

inline std::vector<std::uint64_t> parse_seed_csv(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) seeds.push_back(std::stoull(item));
  if (seeds.empty()) throw std::invalid_argument("--seeds: no seeds given");
  return seeds;
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct TreeFile {
  std::vector<SentenceSpans> spans;
  bool labeled = false;
  std::vector<LabeledTree> labeled_trees;   // when labeled
  std::vector<BinaryTreePtr> plain_trees;   // when plain
};

inline bool file_parses(const std::vector<std::string>& lines, bool labeled) {
  for (const auto& l : lines)
    if (labeled ? !is_strict_ptb(l) : !is_plain_binary(l)) return false;
  return true;
}

inline std::vector<int> yields(const std::vector<std::string>& lines, bool labeled) {
  std::vector<int> out;
  for (const auto& l : lines)
    out.push_back(labeled ? static_cast<int>(tree_yield(read_ptb(l)).size())
                          : leaf_count(*read_bracketed(l)));
  return out;
}

inline TreeFile load_tree_file(const std::vector<std::string>& lines, bool labeled) {
  TreeFile f;
  f.labeled = labeled;
  for (const auto& l : lines) {
    if (labeled) {
      f.labeled_trees.push_back(read_ptb(l));
      f.spans.push_back({tree_spans(f.labeled_trees.back()),
                         static_cast<int>(tree_yield(f.labeled_trees.back()).size())});
    } else {
      f.plain_trees.push_back(read_bracketed(l));
      f.spans.push_back(
          {tree_spans(*f.plain_trees.back()), leaf_count(*f.plain_trees.back())});
    }
  }
  return f;
}

// "auto" tries the natural reading of each side (plain predictions, labeled
// gold) and falls back to whichever consistent pair agrees on yields.
inline std::pair<TreeFile, TreeFile> resolve_tree_files(const std::vector<std::string>& pred_lines,
                                                        const std::vector<std::string>& gold_lines,
                                                        const std::string& pred_format,
                                                        const std::string& gold_format) {
  auto options = [&](const std::vector<std::string>& lines, const std::string& fmt,
                     bool prefer_labeled) {
    std::vector<bool> opts;
    if (fmt == "labeled") {
      opts = {true};
    } else if (fmt == "plain") {
      opts = {false};
    } else if (fmt == "auto") {
      std::vector<bool> order = prefer_labeled ? std::vector<bool>{true, false}
                                               : std::vector<bool>{false, true};
      for (bool lab : order)
        if (file_parses(lines, lab)) opts.push_back(lab);
      if (opts.empty())
        throw std::runtime_error("tree file parses as neither labeled nor plain bracketing");
    } else {
      throw std::invalid_argument("tree format must be auto, labeled or plain");
    }
    return opts;
  };
  auto pred_opts = options(pred_lines, pred_format, /*prefer_labeled=*/false);
  auto gold_opts = options(gold_lines, gold_format, /*prefer_labeled=*/true);
  for (bool gold_lab : gold_opts)
    for (bool pred_lab : pred_opts)
      if (yields(pred_lines, pred_lab) == yields(gold_lines, gold_lab))
        return {load_tree_file(pred_lines, pred_lab), load_tree_file(gold_lines, gold_lab)};
  // no combination agrees; load the preferred readings and let the scorer
  // report the mismatch
  return {load_tree_file(pred_lines, pred_opts.front()),
          load_tree_file(gold_lines, gold_opts.front())};
}

inline TrainConfig config_from_args(const std::string& config_path, const std::string& criterion,
                                    const std::string& preset, const std::string& seeds_csv,
                                    const std::string& out_dir, std::optional<bool> include_root,
                                    bool macro) {
  TrainConfig cfg = TrainConfig::from_json(load_json(config_path));
  if (!criterion.empty()) cfg.criterion = criterion;
  if (!preset.empty()) cfg.model.preset = preset;
  if (!seeds_csv.empty()) cfg.seeds = parse_seed_csv(seeds_csv);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (include_root) cfg.eval.include_root = *include_root;
  if (macro) cfg.eval.macro = true;
  cfg.validate();
  return cfg;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"Parsing-reading-predict language model: training, parsing and evaluation"};
  app.require_subcommand(1);

  // common options
  std::string config_path, criterion, preset, seeds_csv, out_path;
  std::string checkpoint_path, vocab_path, text_path;
  std::optional<bool> include_root;
  bool macro = false;

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model (first seed of the list)");
  train_cmd->add_option("--config", config_path, "TrainConfig JSON file")->required();
  train_cmd->add_option("--criterion", criterion, "Stopping criterion: lm | up");
  train_cmd->add_option("--preset", preset, "Model preset: lm | up");
  train_cmd->add_option("--seeds", seeds_csv, "Comma-separated seed list");
  train_cmd->add_option("--out", out_path, "Output directory");
  train_cmd->add_option("--include-root", include_root, "Count the whole-sentence span");
  train_cmd->add_flag("--macro-f1", macro, "Macro-average F1");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Train every seed and aggregate a report");
  sweep_cmd->add_option("--config", config_path, "TrainConfig JSON file")->required();
  sweep_cmd->add_option("--criterion", criterion, "Stopping criterion: lm | up");
  sweep_cmd->add_option("--preset", preset, "Model preset: lm | up");
  sweep_cmd->add_option("--seeds", seeds_csv, "Comma-separated seed list");
  sweep_cmd->add_option("--out", out_path, "Output directory");
  sweep_cmd->add_option("--include-root", include_root, "Count the whole-sentence span");
  sweep_cmd->add_flag("--macro-f1", macro, "Macro-average F1");

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "Induce one tree per input line");
  parse_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  parse_cmd->add_option("--vocab", vocab_path, "Vocabulary file")->required();
  parse_cmd->add_option("--text", text_path, "Tokenized text, one sentence per line")->required();
  parse_cmd->add_option("--out", out_path, "Write trees here instead of stdout");

  // eval-f1
  std::string pred_path, gold_path, pred_format = "auto", gold_format = "auto", labels_csv;
  auto* f1_cmd = app.add_subcommand("eval-f1", "Score predicted trees against gold trees");
  f1_cmd->add_option("pred", pred_path, "Predicted trees, one per line")->required();
  f1_cmd->add_option("gold", gold_path, "Gold trees, one per line")->required();
  f1_cmd->add_option("--pred-format", pred_format, "auto | labeled | plain");
  f1_cmd->add_option("--gold-format", gold_format, "auto | labeled | plain");
  f1_cmd->add_option("--include-root", include_root, "Count the whole-sentence span");
  f1_cmd->add_flag("--macro-f1", macro, "Macro-average F1");
  f1_cmd->add_option("--labels", labels_csv, "Comma-separated labels for per-label accuracy");
  f1_cmd->add_option("--out", out_path, "Write the report JSON here too");

  // eval-ppl
  auto* ppl_cmd = app.add_subcommand("eval-ppl", "Perplexity of a checkpoint on text");
  ppl_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  ppl_cmd->add_option("--vocab", vocab_path, "Vocabulary file")->required();
  ppl_cmd->add_option("--text", text_path, "Tokenized text, one sentence per line")->required();

  // gen-pcfg
  std::string grammar_path;
  int gen_count = 0;
  std::uint64_t gen_seed = 1;
  auto* gen_cmd = app.add_subcommand("gen-pcfg", "Sample a synthetic treebank from a grammar");
  gen_cmd->add_option("--grammar", grammar_path, "Grammar JSON")->required();
  gen_cmd->add_option("--count", gen_count, "Number of sentences")->required();
  gen_cmd->add_option("--seed", gen_seed, "Sampler seed")->required();
  gen_cmd->add_option("--out", out_path, "Output prefix (<out>.txt and <out>.trees)")->required();

  // report
  std::string report_in;
  auto* report_cmd = app.add_subcommand("report", "Recompute aggregates of a sweep report");
  report_cmd->add_option("--in", report_in, "Sweep report JSON")->required();
  report_cmd->add_option("--out", out_path, "Output prefix (<out>.json and <out>.tsv)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::flush;
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg = detail::config_from_args(config_path, criterion, preset, seeds_csv,
                                                 out_path, include_root, macro);
      PreparedCorpus corpus = prepare_corpus(cfg.corpus, cfg.vocab_cap);
      TrainResult result = train_run(cfg, corpus, cfg.seeds.front());
      if (!cfg.out_dir.empty()) corpus.vocab.save(cfg.out_dir + "/vocab.txt");
      std::cout << result.record.to_json().dump() << "\n";
      return 0;
    }

    if (*sweep_cmd) {
      TrainConfig cfg = detail::config_from_args(config_path, criterion, preset, seeds_csv,
                                                 out_path, include_root, macro);
      PreparedCorpus corpus = prepare_corpus(cfg.corpus, cfg.vocab_cap);
      try {
        SweepResult result = seed_sweep(cfg, corpus);
        std::cout << result.report.tsv() << std::flush;
      } catch (const SweepAborted& e) {
        std::cerr << "sweep aborted: " << e.what() << "\n";
        if (!cfg.out_dir.empty() && !e.partial.per_seed.empty()) {
          detail::write_text(cfg.out_dir + "/report.partial.json", e.partial.to_json().dump(2) + "\n");
          std::cerr << "partial results for " << e.partial.per_seed.size()
                    << " seed(s) written to " << cfg.out_dir << "/report.partial.json\n";
        }
        return 1;
      }
      return 0;
    }

    if (*parse_cmd) {
      ModelParams params = load_checkpoint(checkpoint_path);
      Vocabulary vocab = Vocabulary::load_file(vocab_path);
      Subset text = load_subset(text_path, /*treebank=*/false);
      auto trees = parse_corpus(params, vocab, text.sentences);
      std::ostringstream out;
      for (const auto& t : trees) out << print_tree(*t) << "\n";
      if (out_path.empty())
        std::cout << out.str() << std::flush;
      else
        detail::write_text(out_path, out.str());
      return 0;
    }

    if (*f1_cmd) {
      auto pred_lines = read_lines(pred_path);
      auto gold_lines = read_lines(gold_path);
      auto [pred, gold] =
          detail::resolve_tree_files(pred_lines, gold_lines, pred_format, gold_format);
      F1Options opt{.include_root = include_root.value_or(true), .macro = macro};
      F1Result r = corpus_f1_spans(pred.spans, gold.spans, opt);
      nlohmann::json out = {{"precision", r.precision}, {"recall", r.recall},
                            {"f1", r.f1},               {"matched", r.matched},
                            {"predicted", r.predicted}, {"gold", r.gold},
                            {"pred_format", pred.labeled ? "labeled" : "plain"},
                            {"gold_format", gold.labeled ? "labeled" : "plain"},
                            {"include_root", opt.include_root},
                            {"macro_f1", opt.macro}};
      if (!labels_csv.empty()) {
        if (!gold.labeled || pred.labeled)
          throw std::runtime_error(
              "--labels needs plain predicted trees and labeled gold trees");
        nlohmann::json accs = nlohmann::json::object();
        std::stringstream ss(labels_csv);
        std::string label;
        while (std::getline(ss, label, ',')) {
          auto acc = label_accuracy(pred.plain_trees, gold.labeled_trees, label);
          if (acc)
            accs[label] = *acc;
          else
            accs[label] = nullptr;
        }
        out["label_accuracy"] = accs;
      }
      std::cout << out.dump() << "\n";
      if (!out_path.empty()) detail::write_text(out_path, out.dump(2) + "\n");
      return 0;
    }

    if (*ppl_cmd) {
      ModelParams params = load_checkpoint(checkpoint_path);
      Vocabulary vocab = Vocabulary::load_file(vocab_path);
      Subset text = load_subset(text_path, /*treebank=*/false);
      std::vector<std::vector<int>> ids;
      for (const auto& sent : text.sentences) ids.push_back(numericalize(sent, vocab));
      double ppl = corpus_perplexity(params, ids);
      std::cout << fmt6(ppl) << "\n";
      return 0;
    }

    if (*gen_cmd) {
      PcfgSpec grammar = PcfgSpec::from_json(detail::load_json(grammar_path));
      auto samples = generate_pcfg_corpus(grammar, gen_count, gen_seed);
      std::string text, trees;
      for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.sentence.size(); ++i) {
          if (i) text += ' ';
          text += s.sentence[i];
        }
        text += '\n';
        trees += print_tree(s.tree) + "\n";
      }
      detail::write_text(out_path + ".txt", text);
      detail::write_text(out_path + ".trees", trees);
      std::cerr << "wrote " << samples.size() << " sentences to " << out_path << ".txt/.trees\n";
      return 0;
    }

    if (*report_cmd) {
      EvalReport report = EvalReport::from_json(detail::load_json(report_in));
      report.recompute_aggregates();
      std::cout << report.tsv() << std::flush;
      if (!out_path.empty()) {
        detail::write_text(out_path + ".json", report.to_json().dump(2) + "\n");
        detail::write_text(out_path + ".tsv", report.tsv());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace prpn::cli
