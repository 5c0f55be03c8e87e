#pragma once

#include "cloudtomo/nn/autograd.hpp"

namespace cloudtomo::nn {

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var mul_scalar(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var mul_const(const Var& a, Tensor c);  // elementwise by a fixed tensor
Var relu(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);

// Shape.
Var reshape(const Var& a, std::vector<int> shape);
Var concat_axis0(const Var& a, const Var& b);  // stack along the leading axis
Var crop2d(const Var& a, int y0, int x0, int h, int w);  // [C,H,W] window
Var upsample_nearest2(const Var& a);                     // [C,H,W] -> [C,2H,2W]

// Linear algebra. Weights are [out, in]; y = x w^T + b.
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& w, const Var& b);

// [Ci,H,W] * [Co,Ci,kh,kw] -> [Co,Ho,Wo].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// Row-wise layer norm over the last axis of [N, D].
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Per-(plane, cell) channel layer norm with per-plane modulation and a hard
// visibility mask: vol [P,C,N], gamma/delta [P,C], mask [P,N] in {0,1}.
Var adaln_plane(const Var& vol, const Var& gamma, const Var& delta, Tensor mask,
                double eps = 1e-5);

// Softmax over contiguous segments of a vector [M]; offsets has S+1 entries.
Var softmax_segments(const Var& logits, std::vector<int> offsets);

// Multi-head self-attention over tokens [M,W]; attention matrices are
// recomputed in the backward pass instead of being stored.
Var multihead_attention(const Var& x, const Var& w_qkv, const Var& b_qkv, const Var& w_out,
                        const Var& b_out, int heads);

// Reductions / losses (scalar outputs carry a double shadow value).
Var mean_all(const Var& a);
Var sum_all(const Var& a);
Var l1_mean(const Var& a, Tensor target);
// Mean of |a-target| over mask-selected entries; zero contribution when the
// mask is empty.
Var l1_masked_mean(const Var& a, Tensor target, Tensor mask);
Var bce_with_logits_mean(const Var& logits, Tensor targets);

// (sum_i |a_i - target_i| + off_support_abs_sum) / denom  — sparse L1 against
// a dense field whose untouched portion contributes a constant.
Var l1_sparse_dense(const Var& a, Tensor target, double off_support_abs_sum, double denom);

}  // namespace cloudtomo::nn
