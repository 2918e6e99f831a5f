#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <random>

#include "prpn/model.hpp"

using namespace prpn;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

ModelConfig tiny_config(int vocab = 5, int embed = 2, int hidden = 2, int lookback = 2,
                        int memory = 3, double tau = 10.0) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = embed;
  c.hidden_dim = hidden;
  c.lookback = lookback;
  c.memory_span = memory;
  c.temperature = tau;
  c.mlp_depth = 1;
  return c;
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// Independent scalar reference of the whole forward pass for embed_dim =
// hidden_dim = 1, written directly from the equations with plain doubles.
struct ScalarRef {
  const ModelParams& p;
  const ModelConfig& cfg;

  double alpha(double dt, double dj) const {
    return (std::clamp((dt - dj) * cfg.temperature, -1.0, 1.0) + 1.0) / 2.0;
  }

  std::vector<double> distances(std::span<const int> ids) const {
    int T = static_cast<int>(ids.size());
    std::vector<double> dv;
    for (int r = 1; r < T; ++r) {
      double pre = p.parse_conv_b[0];
      for (int k = 0; k <= cfg.lookback; ++k) {
        int tok = r - cfg.lookback + k;
        double e = tok < 0 ? 0.0 : p.embedding[ids[tok]];
        pre += p.parse_conv_w[k] * e;
      }
      double h = std::max(0.0, pre);
      dv.push_back(std::max(0.0, p.parse_dist_w[0] * h + p.parse_dist_b[0]));
    }
    return dv;
  }

  // returns total nll and per-step next-token distributions
  double nll(std::span<const int> ids, std::vector<std::vector<double>>* dists_out = nullptr) const {
    int T = static_cast<int>(ids.size());
    std::vector<double> dv = distances(ids);
    std::vector<double> tape_h, tape_c;
    int first_pos = 0;
    double total = 0.0;
    for (int t0 = 0; t0 < T; ++t0) {
      double x = p.embedding[ids[t0]];
      double sum_h = 0.0, sum_c = 0.0;
      if (!tape_h.empty()) {
        double h_prev = tape_h.back();
        double k = p.read_query_h[0] * h_prev + p.read_query_x[0] * x;
        double query_d = dv[t0 - 1];
        std::size_t n = tape_h.size();
        std::vector<double> scores(n), stil(n), gates(n);
        double mx = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
          scores[i] = tape_h[i] * k / std::sqrt(1.0);
          mx = std::max(mx, scores[i]);
        }
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          stil[i] = std::exp(scores[i] - mx);
          z += stil[i];
        }
        for (auto& s : stil) s /= z;
        double cur = 1.0;
        gates[n - 1] = cur;
        for (std::size_t i = n - 1; i-- > 0;) {
          int q = first_pos + static_cast<int>(i) + 1;
          cur *= alpha(query_d, dv[q - 1]);
          gates[i] = cur;
        }
        double gsum = 0.0;
        for (double g : gates) gsum += g;
        double denom = std::max(gsum, 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
          double s = gates[i] * stil[i] / denom;
          sum_h += s * tape_h[i];
          sum_c += s * tape_c[i];
        }
      }
      double zv[4];
      for (int j = 0; j < 4; ++j)
        zv[j] = p.read_lstm_w.at(j, 0) * x + p.read_lstm_w.at(j, 1) * sum_h + p.read_lstm_b[j];
      auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
      double ig = sig(zv[0]), fg = sig(zv[1]), og = sig(zv[2]), ug = std::tanh(zv[3]);
      double c = fg * sum_c + ig * ug;
      double h = og * std::tanh(c);
      tape_h.push_back(h);
      tape_c.push_back(c);
      if (static_cast<int>(tape_h.size()) > cfg.memory_span) {
        tape_h.erase(tape_h.begin());
        tape_c.erase(tape_c.begin());
        ++first_pos;
      }

      if (t0 + 1 >= T) continue;
      double d_next = std::max(0.0, p.pred_dist_w[0] * h + p.pred_dist_b[0]);
      double summary = 0.0;
      std::size_t n = tape_h.size();
      if (n >= 2 && first_pos <= t0 - 1) {
        double query = p.read_query_h[0] * h;
        std::size_t m = n - 1;
        std::vector<double> scores(m), stil(m), gates(m);
        double mx = -1e300;
        for (std::size_t i = 0; i < m; ++i) {
          scores[i] = tape_h[i] * query;
          mx = std::max(mx, scores[i]);
        }
        double z = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          stil[i] = std::exp(scores[i] - mx);
          z += stil[i];
        }
        for (auto& s : stil) s /= z;
        double cur = 1.0;
        for (std::size_t i = m; i-- > 0;) {
          int q = first_pos + static_cast<int>(i) + 1;
          cur *= alpha(d_next, dv[q - 1]);
          gates[i] = cur;
        }
        double gsum = 0.0;
        for (double g : gates) gsum += g;
        double denom = std::max(gsum, 1e-12);
        for (std::size_t i = 0; i < m; ++i) summary += gates[i] * stil[i] / denom * tape_h[i];
      }
      int V = cfg.vocab_size;
      std::vector<double> logits(V);
      for (int v = 0; v < V; ++v)
        logits[v] = p.head_w[0].at(v, 0) * summary + p.head_w[0].at(v, 1) * h + p.head_b[0][v];
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      total += mx + std::log(z) - logits[ids[t0 + 1]];
      if (dists_out) {
        std::vector<double> probs(V);
        for (int v = 0; v < V; ++v) probs[v] = std::exp(logits[v] - mx) / z;
        dists_out->push_back(probs);
      }
    }
    return total;
  }
};

}  // namespace

TEST_CASE("presets: lm is 4x wider embeddings and 3x wider layers than up") {
  for (int scale : {4, 8, 16}) {
    ModelConfig up = up_preset(scale, 100);
    ModelConfig lm = lm_preset(scale, 100);
    CHECK(lm.embed_dim == 4 * up.embed_dim);
    CHECK(lm.hidden_dim == 3 * up.hidden_dim);
    CHECK(up.preset == "up");
    CHECK(lm.preset == "lm");
    up.validate();
    lm.validate();
  }
  ModelConfig bad = up_preset(4, 100);
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("embed: spec examples") {
  ModelConfig cfg = tiny_config(4, 4, 2);
  ModelParams p = ModelParams::shaped(cfg);
  for (int i = 0; i < 4; ++i) p.embedding.at(i, i) = 1.0;  // one-hot rows

  Tape t;
  ParamVars pv = bind_params(t, p);
  CHECK(embed_sequence(t, pv, cfg, std::vector<int>{}).empty());

  auto e = embed_sequence(t, pv, cfg, std::vector<int>{2});
  REQUIRE(e.size() == 1);
  CHECK(t.value(e[0]).v == std::vector<double>{0, 0, 1, 0});

  auto rep = embed_sequence(t, pv, cfg, std::vector<int>{1, 1});
  CHECK(t.value(rep[0]).v == t.value(rep[1]).v);

  CHECK_THROWS_AS(embed_sequence(t, pv, cfg, std::vector<int>{4}), std::out_of_range);
}

TEST_CASE("syntactic_distances: spec examples") {
  SECTION("K=1 gives an empty distance vector") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 1);
    Tape t;
    ParamVars pv = bind_params(t, p);
    auto e = embed_sequence(t, pv, cfg, std::vector<int>{3});
    CHECK(syntactic_distances(t, pv, cfg, e).empty());
  }
  SECTION("zero distance head with constant bias gives constant distances") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 1);
    for (auto& x : p.parse_dist_w.v) x = 0.0;
    p.parse_dist_b[0] = 0.37;
    Tape t;
    ParamVars pv = bind_params(t, p);
    auto e = embed_sequence(t, pv, cfg, std::vector<int>{0, 1, 2, 3});
    auto d = syntactic_distances(t, pv, cfg, e);
    REQUIRE(d.size() == 3);
    for (auto dv : d) CHECK(t.value(dv)[0] == 0.37);
  }
  SECTION("1-dim kernels match hand evaluation") {
    ModelConfig cfg = tiny_config(4, 1, 1, 2);
    ModelParams p = ModelParams::shaped(cfg);
    p.embedding[0] = 0.0;
    p.embedding[1] = 1.0;
    p.embedding[2] = 2.0;
    p.embedding[3] = 3.0;
    p.parse_conv_w.v = {0.3, -0.2, 0.5};
    p.parse_conv_b[0] = 0.1;
    p.parse_dist_w[0] = 2.0;
    p.parse_dist_b[0] = -0.3;
    Tape t;
    ParamVars pv = bind_params(t, p);
    auto e = embed_sequence(t, pv, cfg, std::vector<int>{1, 2, 3});
    auto d = syntactic_distances(t, pv, cfg, e);
    REQUIRE(d.size() == 2);
    // gap 0: window (pad, e0, e1) = (0, 1, 2): relu(-0.2 + 1.0 + 0.1) = 0.9 -> relu(1.8 - 0.3)
    CHECK(t.value(d[0])[0] == Catch::Approx(1.5).margin(1e-15));
    // gap 1: window (1, 2, 3): relu(0.3 - 0.4 + 1.5 + 0.1) = 1.5 -> relu(3.0 - 0.3)
    CHECK(t.value(d[1])[0] == Catch::Approx(2.7).margin(1e-15));
    // negative preactivation clamps to zero
    p.parse_dist_w[0] = -2.0;
    Tape t2;
    ParamVars pv2 = bind_params(t2, p);
    auto e2 = embed_sequence(t2, pv2, cfg, std::vector<int>{1, 2, 3});
    auto d2 = syntactic_distances(t2, pv2, cfg, e2);
    CHECK(t2.value(d2[0])[0] == 0.0);
  }
}

TEST_CASE("attention_alpha: spec examples") {
  CHECK(attention_alpha_value(0.8, 0.8, 10.0) == 0.5);
  CHECK(attention_alpha_value(2.0, 0.5, 1.0) == 1.0);   // saturated high
  CHECK(attention_alpha_value(0.5, 2.0, 1.0) == 0.0);   // saturated low
  CHECK(attention_alpha_value(1.0, 1.05, 10.0) == Catch::Approx(0.25).margin(1e-15));
  CHECK_THROWS_AS(attention_alpha_value(1.0, 1.0, 0.0), std::invalid_argument);

  Tape t;
  Var a = attention_alpha(t, t.scalar(1.0), t.scalar(1.05), 10.0);
  CHECK(t.value(a)[0] == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("gate_row_values: spec examples") {
  auto empty = gate_row_values(std::vector<double>{});
  REQUIRE(empty.size() == 1);
  CHECK(empty[0] == 1.0);

  auto ones = gate_row_values(std::vector<double>{1, 1, 1});
  CHECK(ones == std::vector<double>{1, 1, 1, 1});

  auto halves = gate_row_values(std::vector<double>{0.5, 0.5});
  CHECK(halves == std::vector<double>{0.25, 0.5, 1.0});

  CHECK_THROWS_AS(gate_row_values(std::vector<double>{1.5}), std::invalid_argument);
  CHECK_THROWS_AS(gate_row_values(std::vector<double>{-0.1}), std::invalid_argument);
}

TEST_CASE("reading_step: boundary and summary examples") {
  ModelConfig cfg = tiny_config(4, 1, 1, 1, 4, 1.0);
  ModelParams p = ModelParams::shaped(cfg);
  std::mt19937_64 rng(42);
  p.randomize_all(42, -0.8, 0.8);

  ScalarRef ref{p, cfg};

  SECTION("empty tape runs the LSTM from a zero state") {
    Tape t;
    ParamVars pv = bind_params(t, p);
    MemoryState state;
    auto e = embed_sequence(t, pv, cfg, std::vector<int>{2});
    ReadResult r = reading_step(t, pv, cfg, e[0], state, {});
    double x = p.embedding[2];
    double z0 = p.read_lstm_w.at(0, 0) * x + p.read_lstm_b[0];
    double z1 = p.read_lstm_w.at(1, 0) * x + p.read_lstm_b[1];
    double z2 = p.read_lstm_w.at(2, 0) * x + p.read_lstm_b[2];
    double z3 = p.read_lstm_w.at(3, 0) * x + p.read_lstm_b[3];
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double c = sig(z0) * std::tanh(z3) + sig(z1) * 0.0;
    double h = sig(z2) * std::tanh(c);
    CHECK(t.value(r.c)[0] == Catch::Approx(c).margin(1e-15));
    CHECK(t.value(r.h)[0] == Catch::Approx(h).margin(1e-15));
    CHECK(state.size() == 1);
    (void)ref;
  }

  SECTION("singleton tape with gate 1 makes the summary exactly that entry") {
    Tape t;
    ParamVars pv = bind_params(t, p);
    MemoryState state;
    auto e = embed_sequence(t, pv, cfg, std::vector<int>{2, 3});
    ReadResult first = reading_step(t, pv, cfg, e[0], state, {});
    double h0 = t.value(first.h)[0], c0 = t.value(first.c)[0];
    StepTrace trace;
    std::vector<Var> gates{t.scalar(1.0)};
    ReadResult second = reading_step(t, pv, cfg, e[1], state, gates, &trace);
    REQUIRE(trace.s.size() == 1);
    CHECK(trace.s_tilde[0] == 1.0);
    CHECK(trace.s[0] == 1.0);
    // summary == (h0, c0) exactly, so the LSTM update sees exactly that state
    double x = p.embedding[3];
    double zv[4];
    for (int j = 0; j < 4; ++j)
      zv[j] = p.read_lstm_w.at(j, 0) * x + p.read_lstm_w.at(j, 1) * h0 + p.read_lstm_b[j];
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double c = sig(zv[1]) * c0 + sig(zv[0]) * std::tanh(zv[3]);
    double h = sig(zv[2]) * std::tanh(c);
    CHECK(t.value(second.c)[0] == Catch::Approx(c).margin(1e-15));
    CHECK(t.value(second.h)[0] == Catch::Approx(h).margin(1e-15));
  }

  SECTION("two entries with equal scores and equal gates weight each by 1/4") {
    // with g = (1,1): s_i = g_i * 0.5 / sum(g) = 0.25 under the as-written gating rule
    ModelConfig c2 = tiny_config(4, 2, 2, 1, 4, 1.0);
    ModelParams p2 = ModelParams::shaped(c2);
    p2.randomize_all(7, -0.5, 0.5);
    Tape t;
    ParamVars pv = bind_params(t, p2);
    MemoryState state;
    Var h_entry = t.leaf(Tensor({2}, {0.4, -0.2}));
    Var c_entry = t.leaf(Tensor({2}, {0.1, 0.3}));
    state.push(h_entry, c_entry, c2.memory_span);
    state.push(h_entry, c_entry, c2.memory_span);  // identical entries => equal scores
    std::vector<Var> gates{t.scalar(1.0), t.scalar(1.0)};
    StepTrace trace;
    auto e = embed_sequence(t, pv, c2, std::vector<int>{1});
    reading_step(t, pv, c2, e[0], state, gates, &trace);
    REQUIRE(trace.s.size() == 2);
    CHECK(trace.s_tilde[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(trace.s[0] == Catch::Approx(0.25).margin(1e-15));
    CHECK(trace.s[1] == Catch::Approx(0.25).margin(1e-15));
    CHECK(trace.gate_sum == 2.0);
  }

  SECTION("gate/tape length mismatch is an error") {
    Tape t;
    ParamVars pv = bind_params(t, p);
    MemoryState state;
    auto e = embed_sequence(t, pv, cfg, std::vector<int>{2, 3});
    reading_step(t, pv, cfg, e[0], state, {});
    std::vector<Var> wrong{t.scalar(1.0), t.scalar(1.0)};
    CHECK_THROWS_AS(reading_step(t, pv, cfg, e[1], state, wrong), std::invalid_argument);
  }
}

TEST_CASE("predict_step: spec examples") {
  SECTION("zero output head gives the uniform distribution") {
    ModelConfig cfg = tiny_config(4, 2, 2, 2, 4);
    cfg.mlp_depth = 1;
    ModelParams p = ModelParams::init(cfg, 3);
    for (auto& x : p.head_w.back().v) x = 0.0;
    for (auto& x : p.head_b.back().v) x = 0.0;
    Tape t;
    ParamVars pv = bind_params(t, p);
    std::vector<int> ids{1, 2};
    auto e = embed_sequence(t, pv, cfg, ids);
    auto dv = syntactic_distances(t, pv, cfg, e);
    MemoryState state;
    reading_step(t, pv, cfg, e[0], state, {});
    Var dist = predict_distribution(t, pv, cfg, state, dv, 0);
    for (int v = 0; v < 4; ++v) CHECK(t.value(dist)[v] == 0.25);
  }

  SECTION("distributions sum to 1 and are strictly positive, 100 random trials") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
      ModelConfig cfg = tiny_config(3 + static_cast<int>(rng() % 5),
                                    1 + static_cast<int>(rng() % 3),
                                    1 + static_cast<int>(rng() % 3),
                                    1 + static_cast<int>(rng() % 3), 3, 5.0);
      ModelParams p = ModelParams::shaped(cfg);
      p.randomize_all(rng(), -0.7, 0.7);
      Tape t;
      ParamVars pv = bind_params(t, p);
      int len = 2 + static_cast<int>(rng() % 4);
      std::vector<int> ids;
      for (int i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng() % cfg.vocab_size));
      auto e = embed_sequence(t, pv, cfg, ids);
      auto dv = syntactic_distances(t, pv, cfg, e);
      MemoryState state;
      for (int t0 = 0; t0 < len; ++t0) {
        std::vector<Var> gates;
        if (t0 >= 1)
          gates = detail::gate_chain(t, dv[t0 - 1], dv, cfg.temperature, state.first_pos,
                                     t0 - 1, t0 - 1, nullptr);
        reading_step(t, pv, cfg, e[t0], state, gates);
        Var dist = predict_distribution(t, pv, cfg, state, dv, t0);
        const Tensor& probs = t.value(dist);
        double sum = 0.0;
        for (double q : probs.v) {
          REQUIRE(q > 0.0);
          sum += q;
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-12);
      }
    }
  }

  SECTION("empty state is an error") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 5);
    Tape t;
    ParamVars pv = bind_params(t, p);
    MemoryState state;
    CHECK_THROWS_AS(predict_step(t, pv, cfg, state, {}, 0), std::invalid_argument);
  }
}

TEST_CASE("full forward matches the independent scalar reference") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    ModelConfig cfg = tiny_config(3 + static_cast<int>(rng() % 4), 1, 1,
                                  1 + static_cast<int>(rng() % 3),
                                  2 + static_cast<int>(rng() % 3),
                                  0.5 + 10.0 * ad::uniform01(rng));
    cfg.mlp_depth = 0;  // linear head, mirrored by the reference
    ModelParams p = ModelParams::shaped(cfg);
    p.randomize_all(rng(), -0.9, 0.9);
    int len = 2 + static_cast<int>(rng() % 9);
    std::vector<int> ids;
    for (int i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng() % cfg.vocab_size));

    ScalarRef ref{p, cfg};
    std::vector<double> ref_d = ref.distances(ids);
    double ref_nll = ref.nll(ids);

    Tape t;
    ParamVars pv = bind_params(t, p);
    LmResult lm = lm_nll(t, pv, cfg, ids);
    REQUIRE(lm.distance_values.size() == ref_d.size());
    for (std::size_t i = 0; i < ref_d.size(); ++i)
      REQUIRE(lm.distance_values[i] == Catch::Approx(ref_d[i]).margin(1e-14));
    REQUIRE(t.value(lm.total_nll)[0] ==
            Catch::Approx(ref_nll).epsilon(1e-11).margin(1e-11));
    REQUIRE(lm.predictions == len - 1);
  }
}

TEST_CASE("lm_nll: uniform predictor and determinism") {
  ModelConfig cfg = tiny_config(7, 2, 2, 2, 3);
  ModelParams zero = ModelParams::shaped(cfg);  // all-zero weights -> uniform head
  std::vector<int> ids{1, 2, 3, 4, 5, 6};
  double nll = sentence_nll(zero, ids);
  CHECK(nll == Catch::Approx(5.0 * std::log(7.0)).epsilon(1e-12));

  ModelParams p = ModelParams::init(cfg, 21);
  double a = sentence_nll(p, ids);
  double b = sentence_nll(p, ids);
  CHECK(bitwise_equal(a, b));

  CHECK_THROWS_AS(sentence_nll(p, std::vector<int>{3}), std::invalid_argument);
}

TEST_CASE("lm_nll: no right-context leakage (prefix invariance)") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    ModelConfig cfg = tiny_config(9, 1 + static_cast<int>(rng() % 3),
                                  1 + static_cast<int>(rng() % 3),
                                  1 + static_cast<int>(rng() % 4), 4);
    ModelParams p = ModelParams::init(cfg, rng());
    int len = 6 + static_cast<int>(rng() % 7);
    std::vector<int> ids;
    for (int i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng() % cfg.vocab_size));
    int cut = 1 + static_cast<int>(rng() % (len - 2));  // mutate positions > cut
    std::vector<int> mutated = ids;
    for (int i = cut + 1; i < len; ++i) mutated[i] = static_cast<int>(rng() % cfg.vocab_size);

    auto d0 = sentence_distances(p, ids);
    auto d1 = sentence_distances(p, mutated);
    // gap j depends on tokens up to j+1, so gaps with right endpoint <= cut
    // are bitwise unchanged
    for (int j = 0; j + 1 <= cut; ++j) REQUIRE(bitwise_equal(d0[j], d1[j]));
  }
}

TEST_CASE("attention invariants hold on random configurations") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    ModelConfig cfg = tiny_config(4 + static_cast<int>(rng() % 5),
                                  1 + static_cast<int>(rng() % 3),
                                  1 + static_cast<int>(rng() % 3),
                                  1 + static_cast<int>(rng() % 3),
                                  2 + static_cast<int>(rng() % 4),
                                  0.5 + 14.0 * ad::uniform01(rng));
    ModelParams p = ModelParams::shaped(cfg);
    p.randomize_all(rng(), -0.6, 0.6);
    int len = 3 + static_cast<int>(rng() % 7);
    std::vector<int> ids;
    for (int i = 0; i < len; ++i) ids.push_back(static_cast<int>(rng() % cfg.vocab_size));

    Tape t;
    ParamVars pv = bind_params(t, p);
    LmTrace trace;
    lm_nll(t, pv, cfg, ids, &trace);

    auto check_rows = [&](const std::vector<StepTrace>& rows) {
      for (const StepTrace& row : rows) {
        for (double a : row.alphas) {
          REQUIRE(a >= 0.0);
          REQUIRE(a <= 1.0);
        }
        REQUIRE(!row.gates.empty());
        for (std::size_t i = 0; i + 1 < row.gates.size(); ++i)
          REQUIRE(row.gates[i] <= row.gates[i + 1]);
        REQUIRE(row.gates.back() == 1.0);
        REQUIRE(static_cast<int>(row.s_tilde.size()) <= cfg.memory_span);
        if (!row.s_tilde.empty()) {
          double sum = 0.0;
          for (double s : row.s_tilde) sum += s;
          REQUIRE(std::abs(sum - 1.0) <= 1e-12);
          for (std::size_t i = 0; i < row.s.size(); ++i)
            REQUIRE(std::abs(row.s[i] * row.gate_sum - row.gates[i] * row.s_tilde[i]) <= 1e-12);
        }
      }
    };
    check_rows(trace.reading);
    check_rows(trace.predict);
  }
}

TEST_CASE("memory state never exceeds the configured span") {
  ModelConfig cfg = tiny_config(6, 1, 1, 2, 2);
  ModelParams p = ModelParams::init(cfg, 5);
  Tape t;
  ParamVars pv = bind_params(t, p);
  LmTrace trace;
  std::vector<int> ids{1, 2, 3, 4, 5, 1, 2, 3};
  lm_nll(t, pv, cfg, ids, &trace);
  for (const StepTrace& row : trace.reading)
    CHECK(static_cast<int>(row.s_tilde.size()) <= cfg.memory_span);
}

TEST_CASE("full-model gradient matches finite differences on every group") {
  ModelConfig cfg = tiny_config(5, 2, 2, 2, 3);
  cfg.mlp_depth = 1;
  ModelParams p = ModelParams::shaped(cfg);
  p.randomize_all(31337);
  std::vector<int> ids{1, 2, 3, 4, 0};
  auto build = [&](Tape& t) {
    ad::LossBuild b;
    ParamVars pv = bind_params(t, p, &b.params);
    b.loss = lm_nll(t, pv, cfg, ids).total_nll;
    return b;
  };
  ad::FdReport rep = ad::fd_check_report(build, {.epsilon = 1e-5});
  INFO("worst " << rep.worst_param << "[" << rep.worst_coord << "] rel " << rep.max_rel_error
                << " over " << rep.coords_checked << " coords");
  CHECK(rep.coords_checked > 50);
  CHECK(rep.max_rel_error <= 1e-4);
}
