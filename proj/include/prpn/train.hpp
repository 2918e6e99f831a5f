#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prpn/checkpoint.hpp"
#include "prpn/corpus.hpp"
#include "prpn/eval.hpp"
#include "prpn/model.hpp"
#include "prpn/report.hpp"

namespace prpn {

// ---- configuration ----

struct OptimizerConfig {
  std::string kind = "adam";  // "adam" | "sgd"
  double lr = 1e-3;
  double clip_norm = 5.0;  // global gradient-norm clip
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct EvalOptions {
  bool include_root = true;
  bool macro = false;
  std::vector<std::string> labels = {"ADJP", "NP", "PP", "INTJ"};
};

struct TrainConfig {
  ModelConfig model;  // dims of 0 resolve from preset * scale once vocab is known
  int scale = 16;
  std::size_t vocab_cap = 10000;
  OptimizerConfig optimizer;
  int epochs = 10;
  std::string criterion = "lm";  // "lm" | "up"
  int patience = 10;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  SplitSpec corpus;
  EvalOptions eval;
  std::string out_dir;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
    if (criterion != "lm" && criterion != "up")
      throw std::invalid_argument("train: criterion must be lm or up");
    if (seeds.empty()) throw std::invalid_argument("train: need at least one seed");
    if (vocab_cap < 3) throw std::invalid_argument("train: vocab_cap must be >= 3");
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.preset = m.value("preset", std::string("custom"));
      c.model.embed_dim = m.value("embed_dim", 0);
      c.model.hidden_dim = m.value("hidden_dim", 0);
      c.model.lookback = m.value("lookback", c.model.lookback);
      c.model.memory_span = m.value("memory_span", c.model.memory_span);
      c.model.temperature = m.value("temperature", c.model.temperature);
      c.model.mlp_depth = m.value("mlp_depth", c.model.mlp_depth);
      c.model.mlp_width = m.value("mlp_width", c.model.mlp_width);
      c.scale = m.value("scale", c.scale);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.kind = o.value("kind", c.optimizer.kind);
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.criterion = j.value("criterion", c.criterion);
    c.patience = j.value("patience", c.patience);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.vocab_cap = j.value("vocab_cap", c.vocab_cap);
    if (j.contains("corpus")) {
      const auto& k = j.at("corpus");
      c.corpus.train_path = k.value("train", std::string());
      c.corpus.valid_path = k.value("valid", std::string());
      c.corpus.test_path = k.value("test", std::string());
      c.corpus.treebank = k.value("treebank", false);
      c.corpus.no_split = k.value("no_split", false);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.include_root = e.value("include_root", true);
      c.eval.macro = e.value("macro_f1", false);
      if (e.contains("labels")) c.eval.labels = e.at("labels").get<std::vector<std::string>>();
    }
    c.out_dir = j.value("out_dir", std::string());
    c.validate();
    return c;
  }
};

inline ModelConfig resolve_model(const TrainConfig& tc, int vocab_size) {
  ModelConfig m = tc.model;
  if ((m.embed_dim == 0 || m.hidden_dim == 0) && (m.preset == "lm" || m.preset == "up")) {
    ModelConfig base =
        m.preset == "lm" ? lm_preset(tc.scale, vocab_size) : up_preset(tc.scale, vocab_size);
    if (m.embed_dim == 0) m.embed_dim = base.embed_dim;
    if (m.hidden_dim == 0) m.hidden_dim = base.hidden_dim;
  }
  m.vocab_size = vocab_size;
  m.validate();
  return m;
}

// ---- prepared corpora ----

struct PreparedCorpus {
  struct Part {
    std::vector<std::vector<std::string>> tokens;
    std::vector<std::vector<int>> ids;  // with <eos>
    std::vector<LabeledTree> trees;
    bool has_trees() const { return !trees.empty(); }
    std::size_t size() const { return tokens.size(); }
  };
  Vocabulary vocab;
  Part train, valid, test;
  bool overlap = false;
};

inline PreparedCorpus prepare_corpus(const SplitSpec& spec, std::size_t vocab_cap) {
  CorpusSplit split = load_split(spec);
  PreparedCorpus out;
  out.overlap = split.overlap;
  std::vector<std::string> stream;
  for (const auto& sent : split.train.sentences)
    stream.insert(stream.end(), sent.begin(), sent.end());
  out.vocab = Vocabulary::build(stream, vocab_cap);
  auto fill = [&](Subset& in, PreparedCorpus::Part& part) {
    part.tokens = std::move(in.sentences);
    part.trees = std::move(in.trees);
    for (const auto& sent : part.tokens) part.ids.push_back(numericalize(sent, out.vocab));
  };
  fill(split.train, out.train);
  fill(split.valid, out.valid);
  fill(split.test, out.test);
  return out;
}

// ---- optimizers ----

class Optimizer {
 public:
  Optimizer(const ModelParams& shape, OptimizerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.kind != "adam" && cfg_.kind != "sgd")
      throw std::invalid_argument("optimizer: unknown kind " + cfg_.kind);
    shape.for_each([&](const std::string&, const ad::Tensor& t) {
      m_.push_back(ad::Tensor(t.shape));
      v_.push_back(ad::Tensor(t.shape));
    });
  }

  // grads aligned with the parameter enumeration order
  void apply(ModelParams& params, std::vector<ad::Tensor>& grads) {
    double sq = 0.0;
    for (const auto& g : grads)
      for (double x : g.v) sq += x * x;
    double norm = std::sqrt(sq);
    double scale = norm > cfg_.clip_norm && norm > 0.0 ? cfg_.clip_norm / norm : 1.0;
    ++step_;
    std::size_t slot = 0;
    params.for_each([&](const std::string&, ad::Tensor& t) {
      ad::Tensor& g = grads[slot];
      if (cfg_.kind == "sgd") {
        for (std::size_t k = 0; k < t.size(); ++k) t[k] -= cfg_.lr * scale * g[k];
      } else {
        ad::Tensor& m = m_[slot];
        ad::Tensor& v = v_[slot];
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t k = 0; k < t.size(); ++k) {
          double gk = g[k] * scale;
          m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
          v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
          t[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
        }
      }
      ++slot;
    });
  }

 private:
  OptimizerConfig cfg_;
  std::vector<ad::Tensor> m_, v_;
  long step_ = 0;
};

// ---- evaluation helpers over frozen parameters ----

inline double corpus_perplexity(const ModelParams& params, std::span<const std::vector<int>> sentences) {
  double nll = 0.0;
  long long tokens = 0;
  for (const auto& ids : sentences) {
    if (ids.size() < 2) continue;
    nll += sentence_nll(params, ids);
    tokens += static_cast<long long>(ids.size()) - 1;
  }
  return perplexity(nll, tokens);
}

inline std::vector<BinaryTreePtr> parse_corpus(const ModelParams& params, const Vocabulary& vocab,
                                               std::span<const std::vector<std::string>> sents) {
  std::vector<BinaryTreePtr> out;
  out.reserve(sents.size());
  for (const auto& tokens : sents) {
    std::vector<int> ids = numericalize(tokens, vocab, /*append_eos=*/false);
    if (tokens.size() == 1) {
      out.push_back(make_leaf(tokens[0]));
      continue;
    }
    std::vector<double> d = sentence_distances(params, ids);
    out.push_back(distances_to_tree(tokens, d));
  }
  return out;
}

inline F1Result parsing_f1(const ModelParams& params, const Vocabulary& vocab,
                           const PreparedCorpus::Part& part, const EvalOptions& eval) {
  auto pred = parse_corpus(params, vocab, part.tokens);
  return corpus_f1(pred, part.trees, {.include_root = eval.include_root, .macro = eval.macro});
}

// ---- run records and checkpoint selection ----

struct RunRecord {
  std::uint64_t seed = 0;
  std::string criterion = "lm";
  std::vector<double> val_ppl;  // one entry per completed epoch
  std::vector<double> val_f1;   // empty when no validation treebank
  int best_epoch_lm = -1;
  int best_epoch_up = -1;
  int epochs_run = 0;
  double test_ppl = 0.0;
  double test_f1 = 0.0;
  double test_depth = 0.0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"seed", seed},           {"criterion", criterion},
            {"val_ppl", val_ppl},     {"val_f1", val_f1},
            {"best_epoch_lm", best_epoch_lm}, {"best_epoch_up", best_epoch_up},
            {"epochs_run", epochs_run},       {"test_ppl", test_ppl},
            {"test_f1", test_f1},     {"test_depth", test_depth},
            {"wall_seconds", wall_seconds}};
  }

  static RunRecord from_json(const nlohmann::json& j) {
    RunRecord r;
    r.seed = j.value("seed", std::uint64_t{0});
    r.criterion = j.value("criterion", std::string("lm"));
    r.val_ppl = j.value("val_ppl", std::vector<double>{});
    r.val_f1 = j.value("val_f1", std::vector<double>{});
    r.best_epoch_lm = j.value("best_epoch_lm", -1);
    r.best_epoch_up = j.value("best_epoch_up", -1);
    r.epochs_run = j.value("epochs_run", 0);
    r.test_ppl = j.value("test_ppl", 0.0);
    r.test_f1 = j.value("test_f1", 0.0);
    r.test_depth = j.value("test_depth", 0.0);
    r.wall_seconds = j.value("wall_seconds", 0.0);
    return r;
  }
};

// Earliest index attaining the optimum of the curve.
inline int select_checkpoint(std::span<const double> curve, bool maximize) {
  if (curve.empty()) throw std::invalid_argument("select_checkpoint: empty curve");
  int best = 0;
  for (int i = 1; i < static_cast<int>(curve.size()); ++i) {
    if (maximize ? curve[i] > curve[best] : curve[i] < curve[best]) best = i;
  }
  return best;
}

inline int select_checkpoint(const RunRecord& record, const std::string& criterion) {
  if (criterion == "lm") return select_checkpoint(record.val_ppl, /*maximize=*/false);
  if (criterion == "up") return select_checkpoint(record.val_f1, /*maximize=*/true);
  throw std::invalid_argument("select_checkpoint: criterion must be lm or up");
}

// ---- training ----

struct TrainResult {
  RunRecord record;
  ModelParams best;  // snapshot at the best epoch under the active criterion
};

// Per-sentence updates with a deterministic seeded shuffle; validates once per
// epoch, keeps the best snapshot under the active criterion and stops early
// after `patience` validations without improvement.
inline TrainResult train_run(const TrainConfig& cfg, const PreparedCorpus& corpus,
                             std::uint64_t seed) {
  cfg.validate();
  if (corpus.train.size() == 0) throw std::invalid_argument("train: empty training corpus");
  if (cfg.criterion == "up" && !corpus.valid.has_trees())
    throw std::invalid_argument("train: UP stopping criterion requires a validation treebank");

  auto clock_start = std::chrono::steady_clock::now();
  ModelConfig mcfg = resolve_model(cfg, static_cast<int>(corpus.vocab.size()));
  ModelParams params = ModelParams::init(mcfg, seed);
  Optimizer opt(params, cfg.optimizer);

  TrainResult result;
  result.record.seed = seed;
  result.record.criterion = cfg.criterion;
  result.best = params;

  std::string ckpt_path;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    ckpt_path = cfg.out_dir + "/seed" + std::to_string(seed) + ".best.ckpt";
  }

  std::mt19937_64 shuffle_rng(seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(corpus.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_ppl = std::numeric_limits<double>::infinity();
  double best_f1 = -std::numeric_limits<double>::infinity();
  int since_improvement = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng() % i]);

    std::vector<ad::Tensor> grads;
    for (std::size_t sidx : order) {
      const std::vector<int>& ids = corpus.train.ids[sidx];
      if (ids.size() < 2) continue;
      ad::Tape tape;
      std::vector<ad::BoundParam> bound;
      try {
        ParamVars pv = bind_params(tape, params, &bound);
        ad::Var loss = lm_nll(tape, pv, mcfg, ids).total_nll;
        tape.backward(loss);
      } catch (const ad::NumericError& e) {
        throw ad::NumericError("training aborted at epoch " + std::to_string(epoch) +
                               ", sentence " + std::to_string(sidx) + ": " + e.what());
      }
      grads.clear();
      for (const auto& b : bound) grads.push_back(tape.grad(b.var));
      opt.apply(params, grads);
    }

    double vppl = corpus_perplexity(params, corpus.valid.size() ? corpus.valid.ids
                                                                : corpus.train.ids);
    result.record.val_ppl.push_back(vppl);
    double vf1 = 0.0;
    bool have_f1 = corpus.valid.has_trees();
    if (have_f1) {
      vf1 = parsing_f1(params, corpus.vocab, corpus.valid, cfg.eval).f1;
      result.record.val_f1.push_back(vf1);
    }
    result.record.epochs_run = epoch + 1;

    if (vppl < best_ppl) {
      best_ppl = vppl;
      result.record.best_epoch_lm = epoch;
    }
    if (have_f1 && vf1 > best_f1) {
      best_f1 = vf1;
      result.record.best_epoch_up = epoch;
    }
    bool improved = cfg.criterion == "lm" ? result.record.best_epoch_lm == epoch
                                          : result.record.best_epoch_up == epoch;
    if (improved) {
      result.best = params;
      since_improvement = 0;
      if (!ckpt_path.empty()) save_checkpoint(result.best, ckpt_path);
    } else {
      ++since_improvement;
    }
    if (since_improvement >= cfg.patience) break;
  }

  if (corpus.test.size() > 0) {
    result.record.test_ppl = corpus_perplexity(result.best, corpus.test.ids);
    if (corpus.test.has_trees()) {
      auto pred = parse_corpus(result.best, corpus.vocab, corpus.test.tokens);
      result.record.test_f1 =
          corpus_f1(pred, corpus.test.trees,
                    {.include_root = cfg.eval.include_root, .macro = cfg.eval.macro})
              .f1;
      result.record.test_depth = mean_depth(pred);
    }
  }
  result.record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();

  if (!cfg.out_dir.empty()) {
    std::ofstream rec(cfg.out_dir + "/seed" + std::to_string(seed) + ".record.json");
    rec << result.record.to_json().dump(2) << '\n';
  }
  return result;
}

// ---- seed sweeps ----

class SweepAborted : public std::runtime_error {
 public:
  SweepAborted(const std::string& what, EvalReport partial_report,
               std::vector<RunRecord> partial_records)
      : std::runtime_error(what),
        partial(std::move(partial_report)),
        records(std::move(partial_records)) {}
  EvalReport partial;
  std::vector<RunRecord> records;
};

struct SweepResult {
  EvalReport report;
  std::vector<RunRecord> records;
};

// Independent runs per seed; aggregates F1/PPL across seeds and reports the
// per-label accuracies and depth of the best-F1 run.
inline SweepResult seed_sweep(const TrainConfig& cfg, const PreparedCorpus& corpus) {
  cfg.validate();
  EvalReport report;
  report.preset = cfg.model.preset;
  report.criterion = cfg.criterion;
  report.include_root = cfg.eval.include_root;
  report.macro = cfg.eval.macro;
  report.overlap = corpus.overlap;
  std::vector<RunRecord> records;
  std::vector<ModelParams> best_params;

  for (std::uint64_t seed : cfg.seeds) {
    try {
      TrainResult r = train_run(cfg, corpus, seed);
      records.push_back(r.record);
      best_params.push_back(std::move(r.best));
      report.per_seed.push_back({seed, r.record.test_f1, r.record.test_ppl, r.record.test_depth,
                                 select_checkpoint(r.record, cfg.criterion)});
    } catch (const std::exception& e) {
      if (!report.per_seed.empty()) report.recompute_aggregates();
      throw SweepAborted("seed " + std::to_string(seed) + " failed: " + e.what(),
                         std::move(report), std::move(records));
    }
  }
  report.recompute_aggregates();

  // per-label accuracy from the best-F1 run, mirroring the report tables
  if (corpus.test.has_trees()) {
    std::size_t best_idx = 0;
    for (std::size_t i = 1; i < report.per_seed.size(); ++i)
      if (report.per_seed[i].f1 > report.per_seed[best_idx].f1) best_idx = i;
    auto pred = parse_corpus(best_params[best_idx], corpus.vocab, corpus.test.tokens);
    for (const auto& label : cfg.eval.labels)
      report.label_accuracy.push_back({label, label_accuracy(pred, corpus.test.trees, label)});
  }

  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream js(cfg.out_dir + "/report.json");
    js << report.to_json().dump(2) << '\n';
    std::ofstream tsv(cfg.out_dir + "/report.tsv");
    tsv << report.tsv();
    corpus.vocab.save(cfg.out_dir + "/vocab.txt");
  }
  return {std::move(report), std::move(records)};
}

}  // namespace prpn
