#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prpn::ad {

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_count(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "}";
  return out;
}

// Dense row-major tensor of doubles. Rank 1 vectors and rank 2 matrices are
// the only shapes the model uses; scalars are shape {1}.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(shape_count(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
    if (v.size() != shape_count(shape))
      throw ShapeError("tensor literal: " + std::to_string(v.size()) +
                       " values for shape " + shape_str(shape));
  }

  static Tensor scalar(double x) { return Tensor({1}, {x}); }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  std::size_t size() const { return v.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return v.size() == 1; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  // matrix access, rank-2 only
  double& at(std::size_t r, std::size_t c) { return v[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }

  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape[1]; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Canonical 53-bit uniform in [0,1); pinned here so every sampled value in the
// project is reproducible across standard libraries.
template <class Rng>
inline double uniform01(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

template <class Rng>
inline double uniform_range(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

}  // namespace prpn::ad
