#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "cloudtomo/core/error.hpp"
#include "cloudtomo/core/rng.hpp"

namespace cloudtomo::nn {

// Model arithmetic runs in single precision; reductions accumulate in double.
using real = float;

struct Tensor {
  std::vector<int> shape;
  std::vector<real> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), real(0)) {}
  Tensor(std::vector<int> s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == count(shape), ErrorCode::invalid_argument,
            "tensor payload does not match shape");
  }

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      require(d >= 0, ErrorCode::invalid_argument, "negative tensor dim");
      n *= size_t(d);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, real v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = real(v);
    return t;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return int(shape.size()); }
  int dim(int i) const { return shape[size_t(i)]; }
  real* ptr() { return data.data(); }
  const real* ptr() const { return data.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline Tensor uniform_init(std::vector<int> shape, double lo, double hi, CounterRng rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = real(rng.uniform(lo, hi));
  return t;
}

// He-style fan-in bound for relu trunks.
inline Tensor kaiming_init(std::vector<int> shape, int fan_in, CounterRng rng) {
  double bound = std::sqrt(6.0 / double(fan_in > 0 ? fan_in : 1));
  return uniform_init(std::move(shape), -bound, bound, rng);
}

}  // namespace cloudtomo::nn
