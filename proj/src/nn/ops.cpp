#include "cloudtomo/nn/ops.hpp"

#include <cmath>

namespace cloudtomo::nn {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a->value.same_shape(b->value), ErrorCode::invalid_argument,
          std::string(op) + ": shape mismatch");
}

// C[m,n] = A[m,k] * B[k,n], double row accumulator.
void mm(const real* A, const real* B, real* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    std::vector<double> acc(n, 0.0);
    for (int p = 0; p < k; ++p) {
      double a = A[size_t(i) * k + p];
      const real* brow = B + size_t(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += a * double(brow[j]);
    }
    real* crow = C + size_t(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = real(acc[j]);
  }
}

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const real* A, const real* B, real* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    std::vector<double> acc(n, 0.0);
    for (int p = 0; p < k; ++p) {
      double a = A[size_t(i) * k + p];
      const real* brow = B + size_t(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += a * double(brow[j]);
    }
    real* crow = C + size_t(i) * n;
    for (int j = 0; j < n; ++j) crow[j] += real(acc[j]);
  }
}

// C[m,n] += A^T[ k->m rows ]: A is [k,m], B is [k,n].
void mm_tA_acc(const real* A, const real* B, real* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    std::vector<double> acc(n, 0.0);
    for (int p = 0; p < k; ++p) {
      double a = A[size_t(p) * m + i];
      const real* brow = B + size_t(p) * n;
      for (int j = 0; j < n; ++j) acc[j] += a * double(brow[j]);
    }
    real* crow = C + size_t(i) * n;
    for (int j = 0; j < n; ++j) crow[j] += real(acc[j]);
  }
}

// C[m,n] += A[m,k] * B^T where B is [n,k].
void mm_tB_acc(const real* A, const real* B, real* C, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const real* arow = A + size_t(i) * k;
    real* crow = C + size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const real* brow = B + size_t(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += double(arow[p]) * double(brow[p]);
      crow[j] += real(acc);
    }
  }
}

Var elementwise_unary(const Var& a, real (*f)(real), real (*df)(real)) {
  Tensor out(a->value.shape);
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.data[i] = f(a->value.data[i]);
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap, df](Node& self) {
    ap->ensure_grad();
    const size_t n = self.value.numel();
    for (size_t i = 0; i < n; ++i) ap->grad.data[i] += self.grad.data[i] * df(ap->value.data[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape);
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
  Node *ap = a.get(), *bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](Node& self) {
    if (ap->requires_grad) {
      ap->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i) ap->grad.data[i] += self.grad.data[i];
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i) bp->grad.data[i] += self.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape);
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] - b->value.data[i];
  Node *ap = a.get(), *bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](Node& self) {
    if (ap->requires_grad) {
      ap->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i) ap->grad.data[i] += self.grad.data[i];
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i) bp->grad.data[i] -= self.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape);
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
  Node *ap = a.get(), *bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](Node& self) {
    if (ap->requires_grad) {
      ap->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i)
        ap->grad.data[i] += self.grad.data[i] * bp->value.data[i];
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (size_t i = 0; i < self.value.numel(); ++i)
        bp->grad.data[i] += self.grad.data[i] * ap->value.data[i];
    }
  });
}

Var mul_scalar(const Var& a, double s) {
  Tensor out(a->value.shape);
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = real(a->value.data[i] * s);
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap, s](Node& self) {
    ap->ensure_grad();
    for (size_t i = 0; i < self.value.numel(); ++i)
      ap->grad.data[i] += real(self.grad.data[i] * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out(a->value.shape);
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = real(a->value.data[i] + s);
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap](Node& self) {
    ap->ensure_grad();
    for (size_t i = 0; i < self.value.numel(); ++i) ap->grad.data[i] += self.grad.data[i];
  });
}

Var mul_const(const Var& a, Tensor c) {
  require(a->value.same_shape(c), ErrorCode::invalid_argument, "mul_const: shape mismatch");
  Tensor out(a->value.shape);
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * c.data[i];
  Node* ap = a.get();
  auto cc = std::make_shared<Tensor>(std::move(c));
  return make_node(std::move(out), {a}, [ap, cc](Node& self) {
    ap->ensure_grad();
    for (size_t i = 0; i < self.value.numel(); ++i)
      ap->grad.data[i] += self.grad.data[i] * cc->data[i];
  });
}

Var relu(const Var& a) {
  return elementwise_unary(
      a, [](real x) { return x > 0 ? x : real(0); }, [](real x) { return x > 0 ? real(1) : real(0); });
}

Var softplus(const Var& a) {
  return elementwise_unary(
      a,
      [](real x) {
        return x > 20 ? x : real(std::log1p(std::exp(double(x))));
      },
      [](real x) { return real(1.0 / (1.0 + std::exp(-double(x)))); });
}

Var sigmoid(const Var& a) {
  return elementwise_unary(
      a, [](real x) { return real(1.0 / (1.0 + std::exp(-double(x)))); },
      [](real x) {
        double s = 1.0 / (1.0 + std::exp(-double(x)));
        return real(s * (1.0 - s));
      });
}

Var reshape(const Var& a, std::vector<int> shape) {
  require(Tensor::count(shape) == a->value.numel(), ErrorCode::invalid_argument,
          "reshape: element count mismatch");
  Tensor out(std::move(shape), a->value.data);
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap](Node& self) {
    ap->ensure_grad();
    for (size_t i = 0; i < self.value.numel(); ++i) ap->grad.data[i] += self.grad.data[i];
  });
}

Var concat_axis0(const Var& a, const Var& b) {
  require(a->value.rank() == b->value.rank(), ErrorCode::invalid_argument,
          "concat: rank mismatch");
  for (int i = 1; i < a->value.rank(); ++i)
    require(a->value.dim(i) == b->value.dim(i), ErrorCode::invalid_argument,
            "concat: trailing dims mismatch");
  std::vector<int> shape = a->value.shape;
  shape[0] += b->value.dim(0);
  Tensor out(shape);
  std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
  std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + a->value.numel());
  Node *ap = a.get(), *bp = b.get();
  const size_t na = a->value.numel();
  return make_node(std::move(out), {a, b}, [ap, bp, na](Node& self) {
    if (ap->requires_grad) {
      ap->ensure_grad();
      for (size_t i = 0; i < na; ++i) ap->grad.data[i] += self.grad.data[i];
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (size_t i = na; i < self.value.numel(); ++i)
        bp->grad.data[i - na] += self.grad.data[i];
    }
  });
}

Var crop2d(const Var& a, int y0, int x0, int h, int w) {
  require(a->value.rank() == 3, ErrorCode::invalid_argument, "crop2d expects [C,H,W]");
  int C = a->value.dim(0), H = a->value.dim(1), W = a->value.dim(2);
  require(y0 >= 0 && x0 >= 0 && y0 + h <= H && x0 + w <= W, ErrorCode::invalid_argument,
          "crop2d window out of bounds");
  Tensor out({C, h, w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.data[(size_t(c) * h + y) * w + x] =
            a->value.data[(size_t(c) * H + (y0 + y)) * W + (x0 + x)];
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap, y0, x0, h, w, C, H, W](Node& self) {
    ap->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          ap->grad.data[(size_t(c) * H + (y0 + y)) * W + (x0 + x)] +=
              self.grad.data[(size_t(c) * h + y) * w + x];
  });
}

Var upsample_nearest2(const Var& a) {
  require(a->value.rank() == 3, ErrorCode::invalid_argument, "upsample expects [C,H,W]");
  int C = a->value.dim(0), H = a->value.dim(1), W = a->value.dim(2);
  Tensor out({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 2 * H; ++y)
      for (int x = 0; x < 2 * W; ++x)
        out.data[(size_t(c) * 2 * H + y) * 2 * W + x] =
            a->value.data[(size_t(c) * H + y / 2) * W + x / 2];
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap, C, H, W](Node& self) {
    ap->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int x = 0; x < 2 * W; ++x)
          ap->grad.data[(size_t(c) * H + y / 2) * W + x / 2] +=
              self.grad.data[(size_t(c) * 2 * H + y) * 2 * W + x];
  });
}

Var matmul(const Var& a, const Var& b) {
  require(a->value.rank() == 2 && b->value.rank() == 2 && a->value.dim(1) == b->value.dim(0),
          ErrorCode::invalid_argument, "matmul shape mismatch");
  int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  mm(a->value.ptr(), b->value.ptr(), out.ptr(), m, k, n);
  Node *ap = a.get(), *bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp, m, k, n](Node& self) {
    if (ap->requires_grad) {
      ap->ensure_grad();  // dA = dC * B^T
      mm_tB_acc(self.grad.ptr(), bp->value.ptr(), ap->grad.ptr(), m, n, k);
    }
    if (bp->requires_grad) {
      bp->ensure_grad();  // dB = A^T * dC
      mm_tA_acc(ap->value.ptr(), self.grad.ptr(), bp->grad.ptr(), k, m, n);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x->value.rank() == 2 && w->value.rank() == 2 && b->value.rank() == 1,
          ErrorCode::invalid_argument, "linear expects x[m,k], w[n,k], b[n]");
  int m = x->value.dim(0), k = x->value.dim(1), n = w->value.dim(0);
  require(w->value.dim(1) == k && b->value.dim(0) == n, ErrorCode::invalid_argument,
          "linear shape mismatch");
  Tensor out({m, n});
  // y = x w^T + b
  mm_tB_acc(x->value.ptr(), w->value.ptr(), out.ptr(), m, k, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data[size_t(i) * n + j] += b->value.data[j];
  Node *xp = x.get(), *wp = w.get(), *bp = b.get();
  return make_node(std::move(out), {x, w, b}, [xp, wp, bp, m, k, n](Node& self) {
    if (xp->requires_grad) {
      xp->ensure_grad();  // dx = dy * w
      mm_acc(self.grad.ptr(), wp->value.ptr(), xp->grad.ptr(), m, n, k);
    }
    if (wp->requires_grad) {
      wp->ensure_grad();  // dw = dy^T * x
      mm_tA_acc(self.grad.ptr(), xp->value.ptr(), wp->grad.ptr(), n, m, k);
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int i = 0; i < m; ++i) acc += double(self.grad.data[size_t(i) * n + j]);
        bp->grad.data[j] += real(acc);
      }
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require(x->value.rank() == 3 && w->value.rank() == 4, ErrorCode::invalid_argument,
          "conv2d expects x[Ci,H,W], w[Co,Ci,kh,kw]");
  const int Ci = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
  const int Co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  require(w->value.dim(1) == Ci && b->value.numel() == size_t(Co), ErrorCode::invalid_argument,
          "conv2d channel mismatch");
  require(stride >= 1, ErrorCode::invalid_argument, "conv2d stride >= 1");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  require(Ho > 0 && Wo > 0, ErrorCode::invalid_argument, "conv2d output would be empty");

  Tensor out({Co, Ho, Wo});
  const real* xd = x->value.ptr();
  const real* wd = w->value.ptr();
  const real* bd = b->value.ptr();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co) {
    std::vector<double> acc(Wo);
    for (int yo = 0; yo < Ho; ++yo) {
      std::fill(acc.begin(), acc.end(), double(bd[co]));
      for (int ci = 0; ci < Ci; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
          int yi = yo * stride - pad + ky;
          if (yi < 0 || yi >= H) continue;
          const real* xrow = xd + (size_t(ci) * H + yi) * W;
          const real* wrow = wd + ((size_t(co) * Ci + ci) * kh + ky) * kw;
          for (int kx = 0; kx < kw; ++kx) {
            double wv = wrow[kx];
            int xi0 = -pad + kx;
            for (int xo = 0; xo < Wo; ++xo) {
              int xi = xo * stride + xi0;
              if (xi >= 0 && xi < W) acc[xo] += wv * double(xrow[xi]);
            }
          }
        }
      }
      real* orow = out.ptr() + (size_t(co) * Ho + yo) * Wo;
      for (int xo = 0; xo < Wo; ++xo) orow[xo] = real(acc[xo]);
    }
  }

  Node *xp = x.get(), *wp = w.get(), *bp = b.get();
  return make_node(std::move(out), {x, w, b},
                   [xp, wp, bp, Ci, H, W, Co, Ho, Wo, kh, kw, stride, pad](Node& self) {
    const real* gd = self.grad.ptr();
    if (xp->requires_grad) {
      xp->ensure_grad();
      real* gx = xp->grad.ptr();
      const real* wd = wp->value.ptr();
#pragma omp parallel for schedule(static)
      for (int ci = 0; ci < Ci; ++ci) {
        for (int co = 0; co < Co; ++co)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              double wv = wd[((size_t(co) * Ci + ci) * kh + ky) * kw + kx];
              if (wv == 0) continue;
              for (int yo = 0; yo < Ho; ++yo) {
                int yi = yo * stride - pad + ky;
                if (yi < 0 || yi >= H) continue;
                const real* grow = gd + (size_t(co) * Ho + yo) * Wo;
                real* xrow = gx + (size_t(ci) * H + yi) * W;
                for (int xo = 0; xo < Wo; ++xo) {
                  int xi = xo * stride - pad + kx;
                  if (xi >= 0 && xi < W) xrow[xi] += real(wv * double(grow[xo]));
                }
              }
            }
      }
    }
    if (wp->requires_grad) {
      wp->ensure_grad();
      real* gw = wp->grad.ptr();
      const real* xd = xp->value.ptr();
#pragma omp parallel for schedule(static)
      for (int co = 0; co < Co; ++co) {
        for (int ci = 0; ci < Ci; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              double acc = 0;
              for (int yo = 0; yo < Ho; ++yo) {
                int yi = yo * stride - pad + ky;
                if (yi < 0 || yi >= H) continue;
                const real* grow = gd + (size_t(co) * Ho + yo) * Wo;
                const real* xrow = xd + (size_t(ci) * H + yi) * W;
                for (int xo = 0; xo < Wo; ++xo) {
                  int xi = xo * stride - pad + kx;
                  if (xi >= 0 && xi < W) acc += double(grow[xo]) * double(xrow[xi]);
                }
              }
              gw[((size_t(co) * Ci + ci) * kh + ky) * kw + kx] += real(acc);
            }
      }
    }
    if (bp->requires_grad) {
      bp->ensure_grad();
      for (int co = 0; co < Co; ++co) {
        double acc = 0;
        const real* gplane = gd + size_t(co) * Ho * Wo;
        for (int i = 0; i < Ho * Wo; ++i) acc += double(gplane[i]);
        bp->grad.data[co] += real(acc);
      }
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require(x->value.rank() == 2, ErrorCode::invalid_argument, "layer_norm expects [N,D]");
  const int N = x->value.dim(0), D = x->value.dim(1);
  require(gamma->value.numel() == size_t(D) && beta->value.numel() == size_t(D),
          ErrorCode::invalid_argument, "layer_norm gamma/beta size mismatch");
  Tensor out({N, D});
  // Cache per-row mean and inverse std for the backward pass.
  auto stats = std::make_shared<std::vector<double>>(size_t(N) * 2);
  for (int i = 0; i < N; ++i) {
    const real* row = x->value.ptr() + size_t(i) * D;
    double mean = 0;
    for (int j = 0; j < D; ++j) mean += row[j];
    mean /= D;
    double var = 0;
    for (int j = 0; j < D; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= D;
    double inv_std = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * i] = mean;
    (*stats)[2 * i + 1] = inv_std;
    real* orow = out.ptr() + size_t(i) * D;
    for (int j = 0; j < D; ++j)
      orow[j] = real((double(row[j]) - mean) * inv_std * double(gamma->value.data[j]) +
                     double(beta->value.data[j]));
  }
  Node *xp = x.get(), *gp = gamma.get(), *bp = beta.get();
  return make_node(std::move(out), {x, gamma, beta}, [xp, gp, bp, N, D, stats](Node& self) {
    if (gp->requires_grad) gp->ensure_grad();
    if (bp->requires_grad) bp->ensure_grad();
    if (xp->requires_grad) xp->ensure_grad();
    for (int i = 0; i < N; ++i) {
      const real* xrow = xp->value.ptr() + size_t(i) * D;
      const real* grow = self.grad.ptr() + size_t(i) * D;
      double mean = (*stats)[2 * i], inv_std = (*stats)[2 * i + 1];
      if (gp->requires_grad || bp->requires_grad) {
        for (int j = 0; j < D; ++j) {
          double xhat = (double(xrow[j]) - mean) * inv_std;
          if (gp->requires_grad) gp->grad.data[j] += real(double(grow[j]) * xhat);
          if (bp->requires_grad) bp->grad.data[j] += grow[j];
        }
      }
      if (xp->requires_grad) {
        // d xhat = g * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        double sum_d = 0, sum_dx = 0;
        for (int j = 0; j < D; ++j) {
          double dxhat = double(grow[j]) * double(gp->value.data[j]);
          double xhat = (double(xrow[j]) - mean) * inv_std;
          sum_d += dxhat;
          sum_dx += dxhat * xhat;
        }
        real* gxrow = xp->grad.ptr() + size_t(i) * D;
        for (int j = 0; j < D; ++j) {
          double dxhat = double(grow[j]) * double(gp->value.data[j]);
          double xhat = (double(xrow[j]) - mean) * inv_std;
          gxrow[j] += real(inv_std * (dxhat - sum_d / D - xhat * sum_dx / D));
        }
      }
    }
  });
}

Var adaln_plane(const Var& vol, const Var& gamma, const Var& delta, Tensor mask, double eps) {
  require(vol->value.rank() == 3, ErrorCode::invalid_argument, "adaln expects [P,C,N]");
  const int P = vol->value.dim(0), C = vol->value.dim(1), N = vol->value.dim(2);
  require(gamma->value.rank() == 2 && gamma->value.dim(0) == P && gamma->value.dim(1) == C,
          ErrorCode::invalid_argument, "adaln gamma must be [P,C]");
  require(delta->value.same_shape(gamma->value), ErrorCode::invalid_argument,
          "adaln delta must match gamma");
  require(mask.rank() == 2 && mask.dim(0) == P && mask.dim(1) == N, ErrorCode::invalid_argument,
          "adaln mask must be [P,N]");

  Tensor out({P, C, N});
  auto stats = std::make_shared<std::vector<double>>(size_t(P) * N * 2);
  auto mk = std::make_shared<Tensor>(std::move(mask));
  const real* vd = vol->value.ptr();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < P; ++p) {
    for (int n = 0; n < N; ++n) {
      if (mk->data[size_t(p) * N + n] == 0) {
        (*stats)[(size_t(p) * N + n) * 2] = 0;
        (*stats)[(size_t(p) * N + n) * 2 + 1] = 0;
        continue;  // masked cells stay exactly zero
      }
      double mean = 0;
      for (int c = 0; c < C; ++c) mean += vd[(size_t(p) * C + c) * N + n];
      mean /= C;
      double var = 0;
      for (int c = 0; c < C; ++c) {
        double d = double(vd[(size_t(p) * C + c) * N + n]) - mean;
        var += d * d;
      }
      var /= C;
      double inv_std = 1.0 / std::sqrt(var + eps);
      (*stats)[(size_t(p) * N + n) * 2] = mean;
      (*stats)[(size_t(p) * N + n) * 2 + 1] = inv_std;
      for (int c = 0; c < C; ++c) {
        double xhat = (double(vd[(size_t(p) * C + c) * N + n]) - mean) * inv_std;
        out.data[(size_t(p) * C + c) * N + n] =
            real(xhat * double(gamma->value.data[size_t(p) * C + c]) +
                 double(delta->value.data[size_t(p) * C + c]));
      }
    }
  }

  Node *vp = vol.get(), *gp = gamma.get(), *dp = delta.get();
  return make_node(std::move(out), {vol, gamma, delta},
                   [vp, gp, dp, P, C, N, stats, mk](Node& self) {
    if (gp->requires_grad) gp->ensure_grad();
    if (dp->requires_grad) dp->ensure_grad();
    if (vp->requires_grad) vp->ensure_grad();
    const real* vd = vp->value.ptr();
    const real* gd = self.grad.ptr();
#pragma omp parallel for schedule(static)
    for (int p = 0; p < P; ++p) {
      for (int n = 0; n < N; ++n) {
        if (mk->data[size_t(p) * N + n] == 0) continue;
        double mean = (*stats)[(size_t(p) * N + n) * 2];
        double inv_std = (*stats)[(size_t(p) * N + n) * 2 + 1];
        double sum_d = 0, sum_dx = 0;
        for (int c = 0; c < C; ++c) {
          size_t vi = (size_t(p) * C + c) * N + n;
          double xhat = (double(vd[vi]) - mean) * inv_std;
          double g = gd[vi];
          if (gp->requires_grad) {
            // gamma/delta grads are accumulated per plane; parallel over p is safe.
            gp->grad.data[size_t(p) * C + c] += real(g * xhat);
          }
          if (dp->requires_grad) dp->grad.data[size_t(p) * C + c] += real(g);
          double dxhat = g * double(gp->value.data[size_t(p) * C + c]);
          sum_d += dxhat;
          sum_dx += dxhat * xhat;
        }
        if (vp->requires_grad) {
          for (int c = 0; c < C; ++c) {
            size_t vi = (size_t(p) * C + c) * N + n;
            double xhat = (double(vd[vi]) - mean) * inv_std;
            double dxhat = double(gd[vi]) * double(gp->value.data[size_t(p) * C + c]);
            vp->grad.data[vi] += real(inv_std * (dxhat - sum_d / C - xhat * sum_dx / C));
          }
        }
      }
    }
  });
}

Var softmax_segments(const Var& logits, std::vector<int> offsets) {
  require(logits->value.rank() == 1, ErrorCode::invalid_argument, "softmax expects [M]");
  const int M = logits->value.dim(0);
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == M,
          ErrorCode::invalid_argument, "softmax segment offsets malformed");
  Tensor out({M});
  auto offs = std::make_shared<std::vector<int>>(std::move(offsets));
  for (size_t s = 0; s + 1 < offs->size(); ++s) {
    int lo = (*offs)[s], hi = (*offs)[s + 1];
    require(hi > lo, ErrorCode::invalid_argument, "empty softmax segment");
    double mx = -1e300;
    for (int i = lo; i < hi; ++i) mx = std::max(mx, double(logits->value.data[i]));
    double z = 0;
    for (int i = lo; i < hi; ++i) z += std::exp(double(logits->value.data[i]) - mx);
    for (int i = lo; i < hi; ++i)
      out.data[i] = real(std::exp(double(logits->value.data[i]) - mx) / z);
  }
  Node* lp = logits.get();
  return make_node(std::move(out), {logits}, [lp, offs](Node& self) {
    lp->ensure_grad();
    for (size_t s = 0; s + 1 < offs->size(); ++s) {
      int lo = (*offs)[s], hi = (*offs)[s + 1];
      double dot = 0;
      for (int i = lo; i < hi; ++i) dot += double(self.grad.data[i]) * double(self.value.data[i]);
      for (int i = lo; i < hi; ++i)
        lp->grad.data[i] +=
            real(double(self.value.data[i]) * (double(self.grad.data[i]) - dot));
    }
  });
}

namespace {

// Row-block softmax(Q K^T / sqrt(dh)) V for one head; also used to rebuild
// attention rows in the backward pass.
void attention_rows(const real* Q, const real* K, const real* V, int M, int dh, int row0,
                    int rows, double scale, std::vector<double>& probs, real* out,
                    int out_stride) {
  for (int i = row0; i < row0 + rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < M; ++j) {
      double s = 0;
      for (int d = 0; d < dh; ++d) s += double(Q[size_t(i) * dh + d]) * double(K[size_t(j) * dh + d]);
      probs[size_t(i - row0) * M + j] = s * scale;
      mx = std::max(mx, s * scale);
    }
    double z = 0;
    for (int j = 0; j < M; ++j) {
      double e = std::exp(probs[size_t(i - row0) * M + j] - mx);
      probs[size_t(i - row0) * M + j] = e;
      z += e;
    }
    for (int j = 0; j < M; ++j) probs[size_t(i - row0) * M + j] /= z;
    if (out) {
      for (int d = 0; d < dh; ++d) {
        double acc = 0;
        for (int j = 0; j < M; ++j)
          acc += probs[size_t(i - row0) * M + j] * double(V[size_t(j) * dh + d]);
        out[size_t(i) * out_stride + d] = real(acc);
      }
    }
  }
}

}  // namespace

Var multihead_attention(const Var& x, const Var& w_qkv, const Var& b_qkv, const Var& w_out,
                        const Var& b_out, int heads) {
  require(x->value.rank() == 2, ErrorCode::invalid_argument, "attention expects [M,W]");
  const int M = x->value.dim(0), W = x->value.dim(1);
  require(W % heads == 0, ErrorCode::invalid_argument, "width must divide heads");
  require(w_qkv->value.dim(0) == 3 * W && w_qkv->value.dim(1) == W, ErrorCode::invalid_argument,
          "w_qkv must be [3W,W]");
  require(w_out->value.dim(0) == W && w_out->value.dim(1) == W, ErrorCode::invalid_argument,
          "w_out must be [W,W]");
  const int dh = W / heads;
  const double scale = 1.0 / std::sqrt(double(dh));

  // qkv = x w_qkv^T + b : [M, 3W], layout q | k | v.
  auto qkv = std::make_shared<Tensor>(std::vector<int>{M, 3 * W});
  mm_tB_acc(x->value.ptr(), w_qkv->value.ptr(), qkv->ptr(), M, W, 3 * W);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < 3 * W; ++j) qkv->data[size_t(i) * 3 * W + j] += b_qkv->value.data[j];

  // Per head: heads live in contiguous dh-sized slices of each of q/k/v.
  auto headq = std::make_shared<std::vector<Tensor>>();
  auto headk = std::make_shared<std::vector<Tensor>>();
  auto headv = std::make_shared<std::vector<Tensor>>();
  for (int h = 0; h < heads; ++h) {
    Tensor q({M, dh}), k({M, dh}), v({M, dh});
    for (int i = 0; i < M; ++i)
      for (int d = 0; d < dh; ++d) {
        q.data[size_t(i) * dh + d] = qkv->data[size_t(i) * 3 * W + h * dh + d];
        k.data[size_t(i) * dh + d] = qkv->data[size_t(i) * 3 * W + W + h * dh + d];
        v.data[size_t(i) * dh + d] = qkv->data[size_t(i) * 3 * W + 2 * W + h * dh + d];
      }
    headq->push_back(std::move(q));
    headk->push_back(std::move(k));
    headv->push_back(std::move(v));
  }

  // Concatenated head outputs P [M, W], then y = P w_out^T + b_out.
  auto P = std::make_shared<Tensor>(std::vector<int>{M, W});
  constexpr int kBlock = 64;
#pragma omp parallel for schedule(dynamic, 1) collapse(2)
  for (int h = 0; h < heads; ++h) {
    for (int r0 = 0; r0 < M; r0 += kBlock) {
      int rows = std::min(kBlock, M - r0);
      std::vector<double> probs(size_t(rows) * M);
      attention_rows((*headq)[h].ptr(), (*headk)[h].ptr(), (*headv)[h].ptr(), M, dh, r0, rows,
                     scale, probs, P->ptr() + h * dh, W);
    }
  }

  Tensor out({M, W});
  mm_tB_acc(P->ptr(), w_out->value.ptr(), out.ptr(), M, W, W);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < W; ++j) out.data[size_t(i) * W + j] += b_out->value.data[j];

  Node *xp = x.get(), *wqp = w_qkv.get(), *bqp = b_qkv.get(), *wop = w_out.get(),
       *bop = b_out.get();
  return make_node(
      std::move(out), {x, w_qkv, b_qkv, w_out, b_out},
      [xp, wqp, bqp, wop, bop, qkv, P, headq, headk, headv, M, W, dh, heads, scale](Node& self) {
        const real* gy = self.grad.ptr();

        // dP = gy * w_out ; dWo = gy^T * P ; db = colsum(gy)
        Tensor dP({M, W});
        mm_acc(gy, wop->value.ptr(), dP.ptr(), M, W, W);
        if (wop->requires_grad) {
          wop->ensure_grad();
          mm_tA_acc(gy, P->ptr(), wop->grad.ptr(), W, M, W);
        }
        if (bop->requires_grad) {
          bop->ensure_grad();
          for (int j = 0; j < W; ++j) {
            double acc = 0;
            for (int i = 0; i < M; ++i) acc += double(gy[size_t(i) * W + j]);
            bop->grad.data[j] += real(acc);
          }
        }

        // Head-wise backward with attention recomputation.
        Tensor dqkv({M, 3 * W});
#pragma omp parallel for schedule(dynamic, 1)
        for (int h = 0; h < heads; ++h) {
          const Tensor &Q = (*headq)[h], &K = (*headk)[h], &V = (*headv)[h];
          Tensor dQ({M, dh}), dK({M, dh}), dV({M, dh});
          constexpr int kBlock = 64;
          std::vector<double> probs;
          for (int r0 = 0; r0 < M; r0 += kBlock) {
            int rows = std::min(kBlock, M - r0);
            probs.assign(size_t(rows) * M, 0.0);
            attention_rows(Q.ptr(), K.ptr(), V.ptr(), M, dh, r0, rows, scale, probs, nullptr, 0);
            for (int i = r0; i < r0 + rows; ++i) {
              const double* arow = probs.data() + size_t(i - r0) * M;
              // dA[i,j] = dP_h[i,:] . V[j,:]
              double dot = 0;
              std::vector<double> dA(M);
              for (int j = 0; j < M; ++j) {
                double s = 0;
                for (int d = 0; d < dh; ++d)
                  s += double(dP.data[size_t(i) * W + h * dh + d]) * double(V.data[size_t(j) * dh + d]);
                dA[j] = s;
                dot += s * arow[j];
              }
              for (int j = 0; j < M; ++j) {
                double dS = arow[j] * (dA[j] - dot);  // softmax backward
                for (int d = 0; d < dh; ++d) {
                  dQ.data[size_t(i) * dh + d] += real(dS * scale * double(K.data[size_t(j) * dh + d]));
                  dK.data[size_t(j) * dh + d] += real(dS * scale * double(Q.data[size_t(i) * dh + d]));
                  dV.data[size_t(j) * dh + d] +=
                      real(arow[j] * double(dP.data[size_t(i) * W + h * dh + d]));
                }
              }
            }
          }
          for (int i = 0; i < M; ++i)
            for (int d = 0; d < dh; ++d) {
              dqkv.data[size_t(i) * 3 * W + h * dh + d] = dQ.data[size_t(i) * dh + d];
              dqkv.data[size_t(i) * 3 * W + W + h * dh + d] = dK.data[size_t(i) * dh + d];
              dqkv.data[size_t(i) * 3 * W + 2 * W + h * dh + d] = dV.data[size_t(i) * dh + d];
            }
        }

        if (wqp->requires_grad) {
          wqp->ensure_grad();  // dWqkv = dqkv^T * x
          mm_tA_acc(dqkv.ptr(), xp->value.ptr(), wqp->grad.ptr(), 3 * W, M, W);
        }
        if (bqp->requires_grad) {
          bqp->ensure_grad();
          for (int j = 0; j < 3 * W; ++j) {
            double acc = 0;
            for (int i = 0; i < M; ++i) acc += double(dqkv.data[size_t(i) * 3 * W + j]);
            bqp->grad.data[j] += real(acc);
          }
        }
        if (xp->requires_grad) {
          xp->ensure_grad();  // dx = dqkv * w_qkv
          mm_acc(dqkv.ptr(), wqp->value.ptr(), xp->grad.ptr(), M, 3 * W, W);
        }
      });
}

Var mean_all(const Var& a) {
  double acc = 0;
  for (real v : a->value.data) acc += double(v);
  const double n = double(a->value.numel());
  Tensor out = Tensor::scalar(acc / n);
  Node* ap = a.get();
  auto node = make_node(std::move(out), {a}, [ap, n](Node& self) {
    ap->ensure_grad();
    real g = real(double(self.grad.data[0]) / n);
    for (size_t i = 0; i < ap->grad.data.size(); ++i) ap->grad.data[i] += g;
  });
  node->scalar_value = acc / n;
  node->has_scalar = true;
  return node;
}

Var sum_all(const Var& a) {
  double acc = 0;
  for (real v : a->value.data) acc += double(v);
  Tensor out = Tensor::scalar(acc);
  Node* ap = a.get();
  auto node = make_node(std::move(out), {a}, [ap](Node& self) {
    ap->ensure_grad();
    real g = self.grad.data[0];
    for (size_t i = 0; i < ap->grad.data.size(); ++i) ap->grad.data[i] += g;
  });
  node->scalar_value = acc;
  node->has_scalar = true;
  return node;
}

Var l1_mean(const Var& a, Tensor target) {
  require(a->value.same_shape(target), ErrorCode::invalid_argument, "l1_mean shape mismatch");
  const size_t n = a->value.numel();
  double acc = 0;
  for (size_t i = 0; i < n; ++i) acc += std::abs(double(a->value.data[i]) - double(target.data[i]));
  Tensor out = Tensor::scalar(acc / double(n));
  Node* ap = a.get();
  auto tg = std::make_shared<Tensor>(std::move(target));
  auto node = make_node(std::move(out), {a}, [ap, tg, n](Node& self) {
    ap->ensure_grad();
    double g = double(self.grad.data[0]) / double(n);
    for (size_t i = 0; i < n; ++i) {
      double d = double(ap->value.data[i]) - double(tg->data[i]);
      ap->grad.data[i] += real(g * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0));
    }
  });
  node->scalar_value = acc / double(n);
  node->has_scalar = true;
  return node;
}

Var l1_masked_mean(const Var& a, Tensor target, Tensor mask) {
  require(a->value.same_shape(target) && a->value.same_shape(mask), ErrorCode::invalid_argument,
          "l1_masked_mean shape mismatch");
  const size_t n = a->value.numel();
  double acc = 0, count = 0;
  for (size_t i = 0; i < n; ++i) {
    if (mask.data[i] != 0) {
      acc += std::abs(double(a->value.data[i]) - double(target.data[i]));
      count += 1;
    }
  }
  double value = count > 0 ? acc / count : 0.0;
  Tensor out = Tensor::scalar(value);
  Node* ap = a.get();
  auto tg = std::make_shared<Tensor>(std::move(target));
  auto mk = std::make_shared<Tensor>(std::move(mask));
  auto node = make_node(std::move(out), {a}, [ap, tg, mk, n, count](Node& self) {
    if (count == 0) return;
    ap->ensure_grad();
    double g = double(self.grad.data[0]) / count;
    for (size_t i = 0; i < n; ++i) {
      if (mk->data[i] == 0) continue;
      double d = double(ap->value.data[i]) - double(tg->data[i]);
      ap->grad.data[i] += real(g * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0));
    }
  });
  node->scalar_value = value;
  node->has_scalar = true;
  return node;
}

Var bce_with_logits_mean(const Var& logits, Tensor targets) {
  require(logits->value.same_shape(targets), ErrorCode::invalid_argument, "bce shape mismatch");
  const size_t n = logits->value.numel();
  double acc = 0;
  for (size_t i = 0; i < n; ++i) {
    double l = logits->value.data[i], y = targets.data[i];
    acc += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
  }
  Tensor out = Tensor::scalar(acc / double(n));
  Node* lp = logits.get();
  auto tg = std::make_shared<Tensor>(std::move(targets));
  auto node = make_node(std::move(out), {logits}, [lp, tg, n](Node& self) {
    lp->ensure_grad();
    double g = double(self.grad.data[0]) / double(n);
    for (size_t i = 0; i < n; ++i) {
      double l = lp->value.data[i];
      double s = 1.0 / (1.0 + std::exp(-l));
      lp->grad.data[i] += real(g * (s - double(tg->data[i])));
    }
  });
  node->scalar_value = acc / double(n);
  node->has_scalar = true;
  return node;
}

Var l1_sparse_dense(const Var& a, Tensor target, double off_support_abs_sum, double denom) {
  require(a->value.same_shape(target), ErrorCode::invalid_argument,
          "l1_sparse_dense shape mismatch");
  require(denom > 0, ErrorCode::invalid_argument, "l1_sparse_dense needs positive denom");
  const size_t n = a->value.numel();
  double acc = off_support_abs_sum;
  for (size_t i = 0; i < n; ++i) acc += std::abs(double(a->value.data[i]) - double(target.data[i]));
  Tensor out = Tensor::scalar(acc / denom);
  Node* ap = a.get();
  auto tg = std::make_shared<Tensor>(std::move(target));
  auto node = make_node(std::move(out), {a}, [ap, tg, n, denom](Node& self) {
    ap->ensure_grad();
    double g = double(self.grad.data[0]) / denom;
    for (size_t i = 0; i < n; ++i) {
      double d = double(ap->value.data[i]) - double(tg->data[i]);
      ap->grad.data[i] += real(g * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0));
    }
  });
  node->scalar_value = acc / denom;
  node->has_scalar = true;
  return node;
}

}  // namespace cloudtomo::nn
