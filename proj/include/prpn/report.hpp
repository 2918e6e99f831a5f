#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prpn/eval.hpp"

namespace prpn {

inline std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

struct SeedMetrics {
  std::uint64_t seed = 0;
  double f1 = 0.0;
  double ppl = 0.0;
  double depth = 0.0;
  int best_epoch = 0;
};

// Cross-seed evaluation report (JSON and a single documented TSV row).
struct EvalReport {
  std::string preset = "custom";
  std::string criterion = "lm";
  bool include_root = true;
  bool macro = false;
  bool overlap = false;
  std::vector<SeedMetrics> per_seed;
  double f1_mean = 0.0, f1_std = 0.0, f1_max = 0.0, f1_median = 0.0;
  double ppl_median = 0.0;
  double depth = 0.0;  // from the best-F1 run, like the per-label accuracies
  std::uint64_t best_seed = 0;
  std::vector<std::pair<std::string, std::optional<double>>> label_accuracy;

  // Aggregates are always derivable from the per-seed entries.
  void recompute_aggregates() {
    std::vector<double> f1s, ppls;
    for (const auto& s : per_seed) {
      f1s.push_back(s.f1);
      ppls.push_back(s.ppl);
    }
    Aggregate fa = aggregate(f1s);
    f1_mean = fa.mean;
    f1_std = fa.stddev;
    f1_max = fa.max;
    f1_median = fa.median;
    ppl_median = aggregate(ppls).median;
    std::size_t best = 0;
    for (std::size_t i = 1; i < per_seed.size(); ++i)
      if (per_seed[i].f1 > per_seed[best].f1) best = i;
    best_seed = per_seed[best].seed;
    depth = per_seed[best].depth;
  }

  nlohmann::json to_json() const {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : per_seed)
      seeds.push_back({{"seed", s.seed},
                       {"f1", s.f1},
                       {"ppl", s.ppl},
                       {"depth", s.depth},
                       {"best_epoch", s.best_epoch}});
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& [name, acc] : label_accuracy) {
      nlohmann::json entry = {{"label", name}};
      entry["accuracy"] = acc ? nlohmann::json(*acc) : nlohmann::json(nullptr);
      labels.push_back(entry);
    }
    return {{"format", 1},
            {"preset", preset},
            {"criterion", criterion},
            {"include_root", include_root},
            {"macro_f1", macro},
            {"overlap", overlap},
            {"per_seed", seeds},
            {"f1_mean", f1_mean},
            {"f1_std", f1_std},
            {"f1_max", f1_max},
            {"f1_median", f1_median},
            {"ppl_median", ppl_median},
            {"depth", depth},
            {"best_seed", best_seed},
            {"label_accuracy", labels}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.preset = j.value("preset", std::string("custom"));
    r.criterion = j.value("criterion", std::string("lm"));
    r.include_root = j.value("include_root", true);
    r.macro = j.value("macro_f1", false);
    r.overlap = j.value("overlap", false);
    for (const auto& sj : j.at("per_seed"))
      r.per_seed.push_back({sj.at("seed").get<std::uint64_t>(), sj.at("f1").get<double>(),
                            sj.at("ppl").get<double>(), sj.value("depth", 0.0),
                            sj.value("best_epoch", 0)});
    if (j.contains("label_accuracy"))
      for (const auto& entry : j.at("label_accuracy")) {
        const auto& val = entry.at("accuracy");
        r.label_accuracy.push_back(
            {entry.at("label").get<std::string>(),
             val.is_null() ? std::nullopt : std::optional<double>(val.get<double>())});
      }
    r.f1_mean = j.value("f1_mean", 0.0);
    r.f1_std = j.value("f1_std", 0.0);
    r.f1_max = j.value("f1_max", 0.0);
    r.f1_median = j.value("f1_median", 0.0);
    r.ppl_median = j.value("ppl_median", 0.0);
    r.depth = j.value("depth", 0.0);
    r.best_seed = j.value("best_seed", std::uint64_t{0});
    return r;
  }

  // Column order: preset, criterion, include_root, macro_f1, overlap, seeds,
  // f1_mean, f1_std, f1_max, f1_median, ppl_median, depth, best_seed, then
  // one acc_<LABEL> column per tracked label.
  std::string tsv_header() const {
    std::string h =
        "preset\tcriterion\tinclude_root\tmacro_f1\toverlap\tseeds\tf1_mean\tf1_std\tf1_max\t"
        "f1_median\tppl_median\tdepth\tbest_seed";
    for (const auto& [name, acc] : label_accuracy) {
      (void)acc;
      h += "\tacc_" + name;
    }
    return h;
  }

  std::string tsv_row() const {
    std::string seeds;
    for (std::size_t i = 0; i < per_seed.size(); ++i) {
      if (i) seeds += ',';
      seeds += std::to_string(per_seed[i].seed);
    }
    std::string row = preset + '\t' + criterion + '\t' + (include_root ? "true" : "false") + '\t' +
                      (macro ? "true" : "false") + '\t' + (overlap ? "true" : "false") + '\t' +
                      seeds + '\t' + fmt6(f1_mean) + '\t' + fmt6(f1_std) + '\t' + fmt6(f1_max) +
                      '\t' + fmt6(f1_median) + '\t' + fmt6(ppl_median) + '\t' + fmt6(depth) +
                      '\t' + std::to_string(best_seed);
    for (const auto& [name, acc] : label_accuracy) {
      (void)name;
      row += '\t';
      row += acc ? fmt6(*acc) : "n/a";
    }
    return row;
  }

  std::string tsv() const { return tsv_header() + '\n' + tsv_row() + '\n'; }
};

}  // namespace prpn
