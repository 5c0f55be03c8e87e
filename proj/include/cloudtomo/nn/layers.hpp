#pragma once

#include <map>
#include <string>

#include "cloudtomo/nn/ops.hpp"

namespace cloudtomo::nn {

// Named trainable leaves. Initialization draws from a counter stream keyed
// by parameter name, so registration order does not matter.
struct ParamStore {
  uint64_t seed = 0;
  std::map<std::string, Var> params;

  explicit ParamStore(uint64_t seed_ = 0) : seed(seed_) {}

  Var add(const std::string& name, Tensor init) {
    require(!params.count(name), ErrorCode::invalid_argument, "duplicate parameter " + name);
    auto v = make_leaf(std::move(init), true);
    params.emplace(name, v);
    return v;
  }

  Var add_kaiming(const std::string& name, std::vector<int> shape, int fan_in,
                  double scale = 1.0) {
    CounterRng rng(seed, CounterRng::hash(name));
    Tensor t = kaiming_init(std::move(shape), fan_in, rng);
    if (scale != 1.0)
      for (auto& v : t.data) v = real(v * scale);
    return add(name, std::move(t));
  }

  Var add_zeros(const std::string& name, std::vector<int> shape) {
    return add(name, Tensor::zeros(std::move(shape)));
  }
  Var add_full(const std::string& name, std::vector<int> shape, double value) {
    return add(name, Tensor::full(std::move(shape), real(value)));
  }

  Var at(const std::string& name) const {
    auto it = params.find(name);
    require(it != params.end(), ErrorCode::invalid_argument, "unknown parameter " + name);
    return it->second;
  }

  size_t total_elements() const {
    size_t n = 0;
    for (const auto& [_, v] : params) n += v->value.numel();
    return n;
  }
};

struct Conv2d {
  Var w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride_, int pad_,
         double init_scale = 1.0)
      : stride(stride_), pad(pad_) {
    w = ps.add_kaiming(name + ".w", {co, ci, k, k}, ci * k * k, init_scale);
    b = ps.add_zeros(name + ".b", {co});
  }
  Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct Linear {
  Var w, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, double init_scale = 1.0) {
    w = ps.add_kaiming(name + ".w", {out, in}, in, init_scale);
    b = ps.add_zeros(name + ".b", {out});
  }
  Var forward(const Var& x) const { return linear(x, w, b); }
};

struct LayerNorm {
  Var gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim) {
    gamma = ps.add_full(name + ".g", {dim}, 1.0);
    beta = ps.add_zeros(name + ".b", {dim});
  }
  Var forward(const Var& x) const { return layer_norm_rows(x, gamma, beta); }
};

struct Mlp {
  Linear fc1, fc2;

  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name, int dim, int hidden)
      : fc1(ps, name + ".fc1", dim, hidden), fc2(ps, name + ".fc2", hidden, dim) {}
  Var forward(const Var& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

// Pre-norm transformer block.
struct AttentionBlock {
  LayerNorm ln1, ln2;
  Var w_qkv, b_qkv, w_out, b_out;
  Mlp mlp;
  int heads = 1;

  AttentionBlock() = default;
  AttentionBlock(ParamStore& ps, const std::string& name, int width, int heads_)
      : ln1(ps, name + ".ln1", width),
        ln2(ps, name + ".ln2", width),
        mlp(ps, name + ".mlp", width, 4 * width),
        heads(heads_) {
    w_qkv = ps.add_kaiming(name + ".wqkv", {3 * width, width}, width);
    b_qkv = ps.add_zeros(name + ".bqkv", {3 * width});
    w_out = ps.add_kaiming(name + ".wout", {width, width}, width);
    b_out = ps.add_zeros(name + ".bout", {width});
  }

  Var forward(const Var& x) const {
    Var h = add(x, multihead_attention(ln1.forward(x), w_qkv, b_qkv, w_out, b_out, heads));
    return add(h, mlp.forward(ln2.forward(h)));
  }
};

}  // namespace cloudtomo::nn
