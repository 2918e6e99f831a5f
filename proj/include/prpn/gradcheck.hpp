#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prpn/autodiff.hpp"

namespace prpn::ad {

// A loss builder binds a set of host parameter tensors as tape leaves, builds
// a scalar loss from them and reports which leaf corresponds to which host.
// fd_check perturbs the hosts and rebuilds, so the builder must read the host
// values at build time and must be deterministic.
struct BoundParam {
  std::string name;
  Tensor* host = nullptr;
  Var var;
};

struct LossBuild {
  Var loss;
  std::vector<BoundParam> params;
};

using LossBuilder = std::function<LossBuild(Tape&)>;

struct FdOptions {
  double epsilon = 1e-5;
  std::size_t max_coords_per_tensor = 0;  // 0 = every coordinate
  std::uint64_t seed = 0;                 // for coordinate sampling
};

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  std::size_t worst_coord = 0;
};

// Central-difference check of the analytic gradient. Returns the max over
// sampled coordinates of |analytic - fd| / max(|analytic|, |fd|, 1e-8).
inline FdReport fd_check_report(const LossBuilder& build, FdOptions opt = {}) {
  if (!(opt.epsilon > 0.0 && opt.epsilon <= 1e-2))
    throw std::invalid_argument("fd_check: epsilon must be in (0, 1e-2]");

  auto loss_value = [&](void) -> double {
    Tape t;
    LossBuild b = build(t);
    const Tensor& v = t.value(b.loss);
    if (v.size() != 1) throw ShapeError("fd_check: loss must be scalar");
    return v[0];
  };

  double f0 = loss_value();
  double f1 = loss_value();
  if (!(f0 == f1))
    throw NumericError("fd_check: non-deterministic loss builder (two forward passes disagree)");

  Tape tape;
  LossBuild bound = build(tape);
  tape.backward(bound.loss);

  std::mt19937_64 rng(opt.seed);
  FdReport rep;
  for (const BoundParam& p : bound.params) {
    if (p.host == nullptr) throw std::invalid_argument("fd_check: unbound parameter " + p.name);
    const Tensor& analytic = tape.grad(p.var);
    std::size_t n = p.host->size();
    std::vector<std::size_t> coords;
    if (opt.max_coords_per_tensor == 0 || n <= opt.max_coords_per_tensor) {
      coords.resize(n);
      for (std::size_t k = 0; k < n; ++k) coords[k] = k;
    } else {
      // sample without replacement
      std::vector<std::size_t> all(n);
      for (std::size_t k = 0; k < n; ++k) all[k] = k;
      for (std::size_t k = 0; k < opt.max_coords_per_tensor; ++k) {
        std::size_t j = k + static_cast<std::size_t>(rng() % (n - k));
        std::swap(all[k], all[j]);
        coords.push_back(all[k]);
      }
    }
    for (std::size_t k : coords) {
      double orig = (*p.host)[k];
      (*p.host)[k] = orig + opt.epsilon;
      double fp = loss_value();
      (*p.host)[k] = orig - opt.epsilon;
      double fm = loss_value();
      (*p.host)[k] = orig;
      double fd = (fp - fm) / (2.0 * opt.epsilon);
      double an = analytic[k];
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      ++rep.coords_checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = p.name;
        rep.worst_coord = k;
      }
    }
  }
  return rep;
}

inline double fd_check(const LossBuilder& build, FdOptions opt = {}) {
  return fd_check_report(build, opt).max_rel_error;
}

}  // namespace prpn::ad
