#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prpn/autodiff.hpp"
#include "prpn/gradcheck.hpp"

namespace prpn {

// ---- configuration ----

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 0;
  int hidden_dim = 0;        // delta_k, shared by the parsing conv and the LSTM
  int lookback = 5;          // L, distance conv window reaches e_{i-L}..e_i
  int memory_span = 15;      // N_m, max tape length
  double temperature = 10.0; // tau in the hardtanh attention
  int mlp_depth = 1;         // hidden layers in the output head
  int mlp_width = 0;         // 0 -> hidden_dim
  std::string preset = "custom";

  int head_width() const { return mlp_width > 0 ? mlp_width : hidden_dim; }

  void validate() const {
    if (vocab_size < 2) throw std::invalid_argument("config: vocab_size must be >= 2");
    if (embed_dim < 1 || hidden_dim < 1) throw std::invalid_argument("config: dims must be >= 1");
    if (lookback < 1) throw std::invalid_argument("config: lookback must be >= 1");
    if (memory_span < 1) throw std::invalid_argument("config: memory_span must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("config: temperature must be > 0");
    if (mlp_depth < 0) throw std::invalid_argument("config: mlp_depth must be >= 0");
  }
};

// The UP and LM presets share a scale unit; LM is 4x wider embeddings and 3x
// wider layers than UP at the same scale.
inline ModelConfig up_preset(int scale, int vocab_size) {
  ModelConfig c;
  c.preset = "up";
  c.vocab_size = vocab_size;
  c.embed_dim = scale;
  c.hidden_dim = scale;
  return c;
}

inline ModelConfig lm_preset(int scale, int vocab_size) {
  ModelConfig c;
  c.preset = "lm";
  c.vocab_size = vocab_size;
  c.embed_dim = 4 * scale;
  c.hidden_dim = 3 * scale;
  return c;
}

// ---- parameters ----

struct ModelParams {
  ModelConfig config;

  ad::Tensor embedding;                     // {V, E}
  ad::Tensor parse_conv_w, parse_conv_b;    // {H, (L+1)E}, {H}
  ad::Tensor parse_dist_w, parse_dist_b;    // {1, H}, {1}
  ad::Tensor read_query_h, read_query_x;    // {H, H}, {H, E}
  ad::Tensor read_lstm_w, read_lstm_b;      // {4H, E+H}, {4H}
  ad::Tensor pred_dist_w, pred_dist_b;      // {1, H}, {1}
  std::vector<ad::Tensor> head_w, head_b;   // mlp_depth hidden layers, then vocab output

  template <class F>
  void for_each(F&& f) {
    f("embedding", embedding);
    f("parse.conv.w", parse_conv_w);
    f("parse.conv.b", parse_conv_b);
    f("parse.dist.w", parse_dist_w);
    f("parse.dist.b", parse_dist_b);
    f("read.query.h", read_query_h);
    f("read.query.x", read_query_x);
    f("read.lstm.w", read_lstm_w);
    f("read.lstm.b", read_lstm_b);
    f("predict.dist.w", pred_dist_w);
    f("predict.dist.b", pred_dist_b);
    for (std::size_t i = 0; i < head_w.size(); ++i) {
      std::string tag = i + 1 == head_w.size() ? "head.out" : "head." + std::to_string(i);
      f(tag + ".w", head_w[i]);
      f(tag + ".b", head_b[i]);
    }
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, ad::Tensor& t) { f(name, static_cast<const ad::Tensor&>(t)); });
  }

  static ModelParams shaped(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    auto V = static_cast<std::size_t>(cfg.vocab_size);
    auto E = static_cast<std::size_t>(cfg.embed_dim);
    auto H = static_cast<std::size_t>(cfg.hidden_dim);
    auto L = static_cast<std::size_t>(cfg.lookback);
    auto M = static_cast<std::size_t>(cfg.head_width());
    p.embedding = ad::Tensor({V, E});
    p.parse_conv_w = ad::Tensor({H, (L + 1) * E});
    p.parse_conv_b = ad::Tensor({H});
    p.parse_dist_w = ad::Tensor({1, H});
    p.parse_dist_b = ad::Tensor({1});
    p.read_query_h = ad::Tensor({H, H});
    p.read_query_x = ad::Tensor({H, E});
    p.read_lstm_w = ad::Tensor({4 * H, E + H});
    p.read_lstm_b = ad::Tensor({4 * H});
    p.pred_dist_w = ad::Tensor({1, H});
    p.pred_dist_b = ad::Tensor({1});
    std::size_t in = 2 * H;
    for (int d = 0; d < cfg.mlp_depth; ++d) {
      p.head_w.push_back(ad::Tensor({M, in}));
      p.head_b.push_back(ad::Tensor({M}));
      in = M;
    }
    p.head_w.push_back(ad::Tensor({V, in}));
    p.head_b.push_back(ad::Tensor({V}));
    return p;
  }

  // Uniform [-0.05, 0.05] weights, zero biases, except the two distance-head
  // biases which start slightly positive: with zero bias the ReLU distance
  // unit is dead for a large fraction of seeds at small hidden sizes, which
  // freezes every induced tree into the tie-break shape.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = shaped(cfg);
    std::mt19937_64 rng(seed);
    p.for_each([&](const std::string& name, ad::Tensor& t) {
      bool bias = name.ends_with(".b");
      if (bias) return;
      for (auto& x : t.v) x = ad::uniform_range(rng, -0.05, 0.05);
    });
    p.parse_dist_b[0] = 0.05;
    p.pred_dist_b[0] = 0.05;
    return p;
  }

  // Every coordinate random; used by gradient checks so no preactivation sits
  // exactly on a relu/hardtanh kink.
  void randomize_all(std::uint64_t seed, double lo = -0.05, double hi = 0.05) {
    std::mt19937_64 rng(seed);
    for_each([&](const std::string&, ad::Tensor& t) {
      for (auto& x : t.v) x = ad::uniform_range(rng, lo, hi);
    });
  }
};

// Tape-bound parameter handles for one forward pass.
struct ParamVars {
  ad::Var embedding;
  ad::Var parse_conv_w, parse_conv_b, parse_dist_w, parse_dist_b;
  ad::Var read_query_h, read_query_x, read_lstm_w, read_lstm_b;
  ad::Var pred_dist_w, pred_dist_b;
  std::vector<ad::Var> head_w, head_b;
};

// Binds every parameter tensor as a tape leaf. The non-const overload also
// reports (name, host, var) triples for gradient extraction and fd checks;
// the const overload serves evaluation on frozen snapshots, which may run
// from many threads at once since binding only reads the tensors.
inline ParamVars bind_params(ad::Tape& t, ModelParams& p,
                             std::vector<ad::BoundParam>* bound = nullptr) {
  ParamVars v;
  auto take = [&](const std::string& name, ad::Tensor& host) {
    ad::Var var = t.leaf(host);
    if (bound) bound->push_back({name, &host, var});
    return var;
  };
  v.embedding = take("embedding", p.embedding);
  v.parse_conv_w = take("parse.conv.w", p.parse_conv_w);
  v.parse_conv_b = take("parse.conv.b", p.parse_conv_b);
  v.parse_dist_w = take("parse.dist.w", p.parse_dist_w);
  v.parse_dist_b = take("parse.dist.b", p.parse_dist_b);
  v.read_query_h = take("read.query.h", p.read_query_h);
  v.read_query_x = take("read.query.x", p.read_query_x);
  v.read_lstm_w = take("read.lstm.w", p.read_lstm_w);
  v.read_lstm_b = take("read.lstm.b", p.read_lstm_b);
  v.pred_dist_w = take("predict.dist.w", p.pred_dist_w);
  v.pred_dist_b = take("predict.dist.b", p.pred_dist_b);
  for (std::size_t i = 0; i < p.head_w.size(); ++i) {
    std::string tag = i + 1 == p.head_w.size() ? "head.out" : "head." + std::to_string(i);
    v.head_w.push_back(take(tag + ".w", p.head_w[i]));
    v.head_b.push_back(take(tag + ".b", p.head_b[i]));
  }
  return v;
}

// ---- diagnostics ----

// Per-timestep attention internals, recorded when a trace sink is supplied.
// `gates` is the full gate row (its last entry is the empty product 1);
// `s_tilde`/`s` cover the attended tape positions and `gate_sum` is the
// gate-normalization denominator before flooring.
struct StepTrace {
  int step = 0;
  std::vector<double> alphas;
  std::vector<double> gates;
  std::vector<double> s_tilde;
  std::vector<double> s;
  double gate_sum = 0.0;
  double query_distance = 0.0;
};

struct LmTrace {
  std::vector<StepTrace> reading;
  std::vector<StepTrace> predict;
};

// ---- model pieces ----

inline std::vector<ad::Var> embed_sequence(ad::Tape& t, const ParamVars& pv,
                                           const ModelConfig& cfg, std::span<const int> ids) {
  std::vector<ad::Var> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size)
      throw std::out_of_range("embed: token id " + std::to_string(id) + " outside vocab of " +
                              std::to_string(cfg.vocab_size));
    out.push_back(t.row(pv.embedding, static_cast<std::size_t>(id)));
  }
  return out;
}

// Distances d over the K-1 token gaps; out[j] scores the gap between tokens j
// and j+1 and reads only e_{j+1-L}..e_{j+1} (zero-padded on the left).
inline std::vector<ad::Var> syntactic_distances(ad::Tape& t, const ParamVars& pv,
                                                const ModelConfig& cfg,
                                                std::span<const ad::Var> embeds) {
  std::vector<ad::Var> out;
  if (embeds.size() <= 1) return out;
  ad::Var zero_embed = t.zeros({static_cast<std::size_t>(cfg.embed_dim)});
  int n = static_cast<int>(embeds.size());
  for (int r = 1; r < n; ++r) {
    std::vector<ad::Var> window;
    window.reserve(cfg.lookback + 1);
    for (int k = r - cfg.lookback; k <= r; ++k)
      window.push_back(k < 0 ? zero_embed : embeds[k]);
    ad::Var h = t.relu(t.affine(pv.parse_conv_w, t.concat(window), pv.parse_conv_b));
    out.push_back(t.relu(t.affine(pv.parse_dist_w, h, pv.parse_dist_b)));
  }
  return out;
}

// alpha = (hardtanh((d_t - d_j) * tau) + 1) / 2
inline ad::Var attention_alpha(ad::Tape& t, ad::Var d_t, ad::Var d_j, double tau) {
  return t.scale_shift(t.hardtanh(t.scale_shift(t.sub(d_t, d_j), tau, 0.0)), 0.5, 0.5);
}

inline double attention_alpha_value(double d_t, double d_j, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("attention_alpha: tau must be > 0");
  double x = (d_t - d_j) * tau;
  return (std::clamp(x, -1.0, 1.0) + 1.0) / 2.0;
}

// Suffix-product gate row as a pure function: alphas[k] = alpha_{k+1},
// returns t gates for positions 0..t-1 given t-1 alphas; the last gate is
// the empty product 1.
inline std::vector<double> gate_row_values(std::span<const double> alphas) {
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("gate_row: alpha outside [0,1]");
  std::vector<double> g(alphas.size() + 1);
  g.back() = 1.0;
  for (std::size_t i = alphas.size(); i-- > 0;) g[i] = alphas[i] * g[i + 1];
  return g;
}

namespace detail {

// Gate chain g[p] = prod_{q=p+1}^{qhi} alpha(query_d, d_q) for positions
// p in [plo, phi], where d_q = dists[q-1] scores the gap ending at token q.
inline std::vector<ad::Var> gate_chain(ad::Tape& t, ad::Var query_d,
                                       std::span<const ad::Var> dists, double tau, int plo,
                                       int phi, int qhi, std::vector<double>* alpha_sink) {
  if (phi < plo) return {};
  std::vector<ad::Var> alphas;  // q = plo+1 .. qhi
  for (int q = plo + 1; q <= qhi; ++q) {
    alphas.push_back(attention_alpha(t, query_d, dists[q - 1], tau));
    if (alpha_sink) alpha_sink->push_back(t.value(alphas.back())[0]);
  }
  std::vector<ad::Var> gates(static_cast<std::size_t>(phi - plo + 1));
  ad::Var cur = t.scalar(1.0);
  if (qhi <= phi) gates[qhi - plo] = cur;
  for (int q = qhi; q >= plo + 1; --q) {
    cur = t.mul(alphas[q - plo - 1], cur);
    if (q - 1 >= plo && q - 1 <= phi) gates[q - 1 - plo] = cur;
  }
  return gates;
}

}  // namespace detail

// Memory tapes H and C, truncated to the most recent memory_span entries.
// first_pos tracks the sentence position of the oldest retained entry.
struct MemoryState {
  std::vector<ad::Var> hidden, cell;
  int first_pos = 0;

  int size() const { return static_cast<int>(hidden.size()); }
  bool empty() const { return hidden.empty(); }

  void push(ad::Var h, ad::Var c, int memory_span) {
    hidden.push_back(h);
    cell.push_back(c);
    if (size() > memory_span) {
      hidden.erase(hidden.begin());
      cell.erase(cell.begin());
      ++first_pos;
    }
  }
};

namespace detail {

struct AttnOut {
  ad::Var summary_h, summary_c;  // summary_c only when cells supplied
  bool has_summary = false;
};

// Scaled-dot scores over the tape, softmax, gate rescaling normalized by
// the gate sum (floored at 1e-12), then the weighted summary.
inline AttnOut structured_attention(ad::Tape& t, const ModelConfig& cfg, ad::Var query,
                                    std::span<const ad::Var> hs, std::span<const ad::Var> cs,
                                    std::span<const ad::Var> gates, StepTrace* trace) {
  AttnOut out;
  std::size_t n = hs.size();
  if (n == 0) return out;
  if (gates.size() != n)
    throw std::invalid_argument("structured_attention: gate/tape length mismatch");
  std::vector<ad::Var> scores;
  scores.reserve(n);
  for (std::size_t i = 0; i < n; ++i) scores.push_back(t.dot(hs[i], query));
  ad::Var scaled = t.scale_shift(t.concat(scores), 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)), 0.0);
  ad::Var s_tilde = t.softmax(scaled);
  ad::Var gate_vec = t.concat(std::vector<ad::Var>(gates.begin(), gates.end()));
  ad::Var gate_sum = t.reduce_sum(gate_vec);
  ad::Var s = t.div(t.mul(gate_vec, s_tilde), t.floor_at(gate_sum, 1e-12));
  ad::Var sum_h, sum_c;
  for (std::size_t i = 0; i < n; ++i) {
    ad::Var w = t.slice(s, i, i + 1);
    ad::Var wh = t.bmul(w, hs[i]);
    sum_h = i == 0 ? wh : t.add(sum_h, wh);
    if (!cs.empty()) {
      ad::Var wc = t.bmul(w, cs[i]);
      sum_c = i == 0 ? wc : t.add(sum_c, wc);
    }
  }
  out.summary_h = sum_h;
  out.summary_c = sum_c;
  out.has_summary = true;
  if (trace) {
    trace->s_tilde.assign(t.value(s_tilde).v.begin(), t.value(s_tilde).v.end());
    trace->s.assign(t.value(s).v.begin(), t.value(s).v.end());
    trace->gate_sum = t.value(gate_sum)[0];
  }
  return out;
}

}  // namespace detail

struct ReadResult {
  ad::Var h, c;
};

// One reading-network step: structured attention over the tape under the
// supplied gates, then the LSTM recurrent update from the adaptive summary;
// the result is written onto the tape.
inline ReadResult reading_step(ad::Tape& t, const ParamVars& pv, const ModelConfig& cfg,
                               ad::Var x, MemoryState& state, std::span<const ad::Var> gates,
                               StepTrace* trace = nullptr) {
  std::size_t H = static_cast<std::size_t>(cfg.hidden_dim);
  if (static_cast<int>(gates.size()) != state.size())
    throw std::invalid_argument("reading_step: gate row does not match tape length");

  ad::Var summary_h, summary_c;
  if (state.empty()) {
    summary_h = t.zeros({H});
    summary_c = t.zeros({H});
  } else {
    ad::Var h_prev = state.hidden.back();
    ad::Var k = t.add(t.matmul(pv.read_query_h, h_prev), t.matmul(pv.read_query_x, x));
    auto attn = detail::structured_attention(t, cfg, k, state.hidden, state.cell, gates, trace);
    summary_h = attn.summary_h;
    summary_c = attn.summary_c;
  }

  ad::Var z = t.add(t.matmul(pv.read_lstm_w, t.concat({x, summary_h})), pv.read_lstm_b);
  ad::Var in_gate = t.sigmoid(t.slice(z, 0, H));
  ad::Var forget = t.sigmoid(t.slice(z, H, 2 * H));
  ad::Var out_gate = t.sigmoid(t.slice(z, 2 * H, 3 * H));
  ad::Var cand = t.tanh(t.slice(z, 3 * H, 4 * H));
  ad::Var c = t.add(t.mul(forget, summary_c), t.mul(in_gate, cand));
  ad::Var h = t.mul(out_gate, t.tanh(c));
  state.push(h, c, cfg.memory_span);
  return {h, c};
}

struct PredictResult {
  ad::Var logits;
  ad::Var dist_estimate;  // d'_{t+1}
};

// Predict-network step after reading token t0: estimates the next gap's
// distance from h_t, derives the t+1 gates from it and the stored distances,
// summarizes the tape below h_t by structured attention and scores the
// vocabulary with the output head.
inline PredictResult predict_step(ad::Tape& t, const ParamVars& pv, const ModelConfig& cfg,
                                  const MemoryState& state, std::span<const ad::Var> dists,
                                  int t0, StepTrace* trace = nullptr) {
  if (state.empty()) throw std::invalid_argument("predict_step: empty memory state");
  std::size_t H = static_cast<std::size_t>(cfg.hidden_dim);
  ad::Var h_t = state.hidden.back();
  ad::Var d_next = t.relu(t.affine(pv.pred_dist_w, h_t, pv.pred_dist_b));

  int plo = state.first_pos;
  int phi = t0 - 1;  // summary covers tape entries strictly below h_t
  std::vector<ad::Var> gates =
      detail::gate_chain(t, d_next, dists, cfg.temperature, plo, phi, t0,
                         trace ? &trace->alphas : nullptr);

  ad::Var summary;
  if (phi < plo) {
    summary = t.zeros({H});
    if (trace) {
      trace->gates = {1.0};
      trace->gate_sum = 0.0;
    }
  } else {
    ad::Var query = t.matmul(pv.read_query_h, h_t);
    std::span<const ad::Var> hs(state.hidden.data(), state.hidden.size() - 1);
    auto attn = detail::structured_attention(t, cfg, query, hs, {}, gates, trace);
    summary = attn.summary_h;
    if (trace) {
      trace->gates.clear();
      for (ad::Var g : gates) trace->gates.push_back(t.value(g)[0]);
      trace->gates.push_back(1.0);  // the current position's own gate is the empty product
    }
  }

  ad::Var feat = t.concat({summary, h_t});
  for (std::size_t layer = 0; layer + 1 < pv.head_w.size(); ++layer)
    feat = t.relu(t.affine(pv.head_w[layer], feat, pv.head_b[layer]));
  ad::Var logits = t.affine(pv.head_w.back(), feat, pv.head_b.back());
  if (trace) trace->query_distance = t.value(d_next)[0];
  return {logits, d_next};
}

inline ad::Var predict_distribution(ad::Tape& t, const ParamVars& pv, const ModelConfig& cfg,
                                    const MemoryState& state, std::span<const ad::Var> dists,
                                    int t0, StepTrace* trace = nullptr) {
  return t.softmax(predict_step(t, pv, cfg, state, dists, t0, trace).logits);
}

// ---- full language-model pass ----

struct LmResult {
  ad::Var total_nll;
  int predictions = 0;
  std::vector<ad::Var> distance_vars;   // one per token gap
  std::vector<double> distance_values;
};

// Runs distances -> gates -> reading -> predict left to right and sums the
// NLL of each next token. Distances depend only on tokens up to the gap's
// right endpoint, so prefixes are unaffected by suffix edits.
inline LmResult lm_nll(ad::Tape& t, const ParamVars& pv, const ModelConfig& cfg,
                       std::span<const int> ids, LmTrace* trace = nullptr) {
  if (ids.size() < 2)
    throw std::invalid_argument("lm_nll: sentence too short (need >= 2 tokens)");
  int T = static_cast<int>(ids.size());

  LmResult res;
  std::vector<ad::Var> embeds = embed_sequence(t, pv, cfg, ids);
  res.distance_vars = syntactic_distances(t, pv, cfg, embeds);
  for (ad::Var d : res.distance_vars) res.distance_values.push_back(t.value(d)[0]);

  MemoryState state;
  ad::Var nll = t.scalar(0.0);
  for (int t0 = 0; t0 < T; ++t0) {
    StepTrace* rtr = nullptr;
    if (trace && t0 >= 1) {
      trace->reading.push_back({});
      rtr = &trace->reading.back();
      rtr->step = t0;
    }
    std::vector<ad::Var> gates;
    if (t0 >= 1) {
      ad::Var query = res.distance_vars[t0 - 1];  // d at the gap ending at token t0
      gates = detail::gate_chain(t, query, res.distance_vars, cfg.temperature, state.first_pos,
                                 t0 - 1, t0 - 1, rtr ? &rtr->alphas : nullptr);
      if (rtr) {
        rtr->query_distance = t.value(query)[0];
        for (ad::Var g : gates) rtr->gates.push_back(t.value(g)[0]);
      }
    }
    reading_step(t, pv, cfg, embeds[t0], state, gates, rtr);

    if (t0 + 1 < T) {
      StepTrace* ptr = nullptr;
      if (trace) {
        trace->predict.push_back({});
        ptr = &trace->predict.back();
        ptr->step = t0;
      }
      PredictResult pr = predict_step(t, pv, cfg, state, res.distance_vars, t0, ptr);
      nll = t.add(nll, t.softmax_xent(pr.logits, static_cast<std::size_t>(ids[t0 + 1])));
      ++res.predictions;
    }
  }
  res.total_nll = nll;
  return res;
}

inline ParamVars bind_params(ad::Tape& t, const ModelParams& p) {
  return bind_params(t, const_cast<ModelParams&>(p), nullptr);
}

// ---- whole-corpus conveniences on frozen parameters ----

inline double sentence_nll(const ModelParams& params, std::span<const int> ids) {
  ad::Tape t;
  ParamVars pv = bind_params(t, params);
  LmResult r = lm_nll(t, pv, params.config, ids);
  return t.value(r.total_nll)[0];
}

// Distance values only; skips the reading/predict networks entirely.
inline std::vector<double> sentence_distances(const ModelParams& params,
                                              std::span<const int> ids) {
  ad::Tape t;
  ParamVars pv = bind_params(t, params);
  std::vector<ad::Var> embeds = embed_sequence(t, pv, params.config, ids);
  std::vector<ad::Var> dv = syntactic_distances(t, pv, params.config, embeds);
  std::vector<double> out;
  out.reserve(dv.size());
  for (ad::Var d : dv) out.push_back(t.value(d)[0]);
  return out;
}

}  // namespace prpn
