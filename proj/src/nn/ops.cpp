#include "dfs/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "dfs/error.hpp"
#include "dfs/image.hpp"

namespace dfs::nn {

namespace {
thread_local KinkProbe* g_probe = nullptr;
}  // namespace

KinkProbe::KinkProbe() : previous_(g_probe) { g_probe = this; }
KinkProbe::~KinkProbe() { g_probe = previous_; }
KinkProbe* KinkProbe::active() { return g_probe; }

namespace {

template <typename T>
void record_signs(const Tensor<T>& v) {
  if (KinkProbe* p = KinkProbe::active())
    for (T x : v.values()) p->mix(x > T(0) ? 1 : 0);
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void accumulate(Node<T>& input, auto&& fn) {
  if (input.requires_grad) fn(input.grad_buffer());
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T>
Tensor<T> scalar_tensor(double v) {
  Tensor<T> t(Shape{1, 1, 1, 1});
  t[0] = static_cast<T>(v);
  return t;
}

// Unfolds one sample {C,H,W} into rows (c,ky,kx) x columns (oy,ox).
template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            T* cols) {
  const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    const T* xp = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * ncols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* src = xp + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
                T* x) {
  const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    T* xp = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * ncols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + static_cast<std::size_t>(oy) * Wo;
          T* dst = xp + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

struct NormStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

}  // namespace

template <typename T>
void backward(const Var<T>& root) {
  if (root.value().numel() != 1) throw ShapeError("backward() needs a scalar root, got " + root.shape().str());
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  std::unordered_set<Node<T>*> visited{root.node().get()};
  stack.emplace_back(root.node().get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && child->backprop && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->grad.empty()) continue;
    n->backprop(*n);
    if (n != root.node().get()) n->grad = Tensor<T>();  // interior grads are transient
  }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel " + ws.str());
  if (ws.c != xs.c)
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                     std::to_string(ws.c));
  const int k = ws.h;
  const int Ho = (xs.h + 2 * pad - k) / stride + 1;
  const int Wo = (xs.w + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: input " + xs.str() + " too small for kernel");
  const int Cout = ws.n;
  const int K = xs.c * k * k;
  const std::size_t ncols = static_cast<std::size_t>(Ho) * Wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Tensor<T> y(Shape{xs.n, Cout, Ho, Wo});
  Eigen::Map<const RowMat<T>> W(weight.value().data(), Cout, K);
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(K) * ncols);
  for (int n = 0; n < xs.n; ++n) {
    const T* colp = x.value().plane(n, 0);
    if (!direct) {
      im2col(x.value().plane(n, 0), xs.c, xs.h, xs.w, k, stride, pad, Ho, Wo, cols.data());
      colp = cols.data();
    }
    Eigen::Map<const RowMat<T>> C(colp, K, ncols);
    Eigen::Map<RowMat<T>> Y(y.plane(n, 0), Cout, ncols);
    Y.noalias() = W * C;
    if (bias.defined()) {
      for (int o = 0; o < Cout; ++o) Y.row(o).array() += bias.value()[o];
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Var<T>::make(std::move(y), std::move(inputs), [=](Node<T>& self) {
    Node<T>& xin = *self.inputs[0];
    Node<T>& win = *self.inputs[1];
    Eigen::Map<const RowMat<T>> Wm(win.value.data(), Cout, K);
    std::vector<T> buf(direct ? 0 : static_cast<std::size_t>(K) * ncols);
    std::vector<T> dcols(static_cast<std::size_t>(K) * ncols);
    for (int n = 0; n < xs.n; ++n) {
      Eigen::Map<const RowMat<T>> dY(self.grad.plane(n, 0), Cout, ncols);
      if (win.requires_grad) {
        const T* colp = xin.value.plane(n, 0);
        if (!direct) {
          im2col(xin.value.plane(n, 0), xs.c, xs.h, xs.w, k, stride, pad, Ho, Wo, buf.data());
          colp = buf.data();
        }
        Eigen::Map<const RowMat<T>> C(colp, K, ncols);
        Eigen::Map<RowMat<T>> dW(win.grad_buffer().data(), Cout, K);
        dW.noalias() += dY * C.transpose();
      }
      if (xin.requires_grad) {
        if (direct) {
          Eigen::Map<RowMat<T>> dX(xin.grad_buffer().plane(n, 0), K, ncols);
          dX.noalias() += Wm.transpose() * dY;
        } else {
          Eigen::Map<RowMat<T>> dC(dcols.data(), K, ncols);
          dC.noalias() = Wm.transpose() * dY;
          col2im_add(dcols.data(), xs.c, xs.h, xs.w, k, stride, pad, Ho, Wo,
                     xin.grad_buffer().plane(n, 0));
        }
      }
    }
    if (self.inputs.size() > 2) {
      accumulate(*self.inputs[2], [&](Tensor<T>& db) {
        for (int n = 0; n < xs.n; ++n)
          for (int o = 0; o < Cout; ++o) {
            const T* g = self.grad.plane(n, o);
            T s = 0;
            for (std::size_t i = 0; i < ncols; ++i) s += g[i];
            db[o] += s;
          }
      });
    }
  });
}

template <typename T>
Var<T> reflect_pad(const Var<T>& x, int pad) {
  const Shape s = x.shape();
  if (pad >= s.h || pad >= s.w)
    throw ShapeError("reflect_pad: pad " + std::to_string(pad) + " too large for " + s.str());
  const int Hp = s.h + 2 * pad, Wp = s.w + 2 * pad;
  Tensor<T> y(Shape{s.n, s.c, Hp, Wp});
  std::vector<int> ry(Hp), rx(Wp);
  for (int i = 0; i < Hp; ++i) ry[i] = reflect_index(i - pad, s.h);
  for (int i = 0; i < Wp; ++i) rx[i] = reflect_index(i - pad, s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = y.plane(n, c);
      for (int i = 0; i < Hp; ++i)
        for (int j = 0; j < Wp; ++j) dst[i * Wp + j] = src[ry[i] * s.w + rx[j]];
    }
  return Var<T>::make(std::move(y), {x}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& dx) {
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = self.grad.plane(n, c);
          T* d = dx.plane(n, c);
          for (int i = 0; i < Hp; ++i)
            for (int j = 0; j < Wp; ++j) d[ry[i] * s.w + rx[j]] += g[i * Wp + j];
        }
    });
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y(Shape{s.n, s.c, s.h * 2, s.w * 2});
  const int W2 = s.w * 2;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = y.plane(n, c);
      for (int i = 0; i < s.h * 2; ++i)
        for (int j = 0; j < W2; ++j) dst[i * W2 + j] = src[(i / 2) * s.w + j / 2];
    }
  return Var<T>::make(std::move(y), {x}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& dx) {
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = self.grad.plane(n, c);
          T* d = dx.plane(n, c);
          for (int i = 0; i < s.h * 2; ++i)
            for (int j = 0; j < W2; ++j) d[(i / 2) * s.w + j / 2] += g[i * W2 + j];
        }
    });
  });
}

template <typename T>
Var<T> max_pool2x2(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 || s.w % 2) throw ShapeError("max_pool2x2: odd spatial size " + s.str());
  const int Ho = s.h / 2, Wo = s.w / 2;
  Tensor<T> y(Shape{s.n, s.c, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.numel());
  std::size_t idx = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = y.plane(n, c);
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j, ++idx) {
          std::uint32_t best = (2 * i) * s.w + 2 * j;
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
              std::uint32_t cand = (2 * i + di) * s.w + 2 * j + dj;
              if (src[cand] > src[best]) best = cand;
            }
          dst[i * Wo + j] = src[best];
          (*argmax)[idx] = best;
        }
    }
  if (KinkProbe* p = KinkProbe::active())
    for (std::uint32_t a : *argmax) p->mix(a);
  return Var<T>::make(std::move(y), {x}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& dx) {
      std::size_t k = 0;
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = self.grad.plane(n, c);
          T* d = dx.plane(n, c);
          for (int i = 0; i < Ho * Wo; ++i, ++k) d[(*argmax)[k]] += g[i];
        }
    });
  });
}

namespace {

// Shared normalization kernel. Groups are (n,c) planes for instance norm and
// channels spanning the batch for batch norm.
template <typename T>
Var<T> normalize(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps, bool per_sample) {
  const Shape s = x.shape();
  if (gamma.defined() && gamma.value().numel() != static_cast<std::size_t>(s.c))
    throw ShapeError("norm: gamma has " + std::to_string(gamma.value().numel()) + " entries for " +
                     std::to_string(s.c) + " channels");
  const int groups = per_sample ? s.n * s.c : s.c;
  const std::size_t plane = s.plane();
  const std::size_t count = per_sample ? plane : plane * s.n;
  auto stats = std::make_shared<NormStats>();
  stats->mean.resize(groups);
  stats->inv_std.resize(groups);

  auto for_group = [&](int g, auto&& fn) {
    // Visits every plane of group g.
    if (per_sample) {
      fn(g / s.c, g % s.c);
    } else {
      for (int n = 0; n < s.n; ++n) fn(n, g);
    }
  };

  Tensor<T> y(s);
  for (int g = 0; g < groups; ++g) {
    double sum = 0, sq = 0;
    for_group(g, [&](int n, int c) {
      const T* p = x.value().plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    });
    const double mean = sum / count;
    for_group(g, [&](int n, int c) {
      const T* p = x.value().plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    });
    const double inv = 1.0 / std::sqrt(sq / count + static_cast<double>(eps));
    stats->mean[g] = mean;
    stats->inv_std[g] = inv;
    for_group(g, [&](int n, int c) {
      const T* p = x.value().plane(n, c);
      T* q = y.plane(n, c);
      const T ga = gamma.defined() ? gamma.value()[c] : T(1);
      const T be = beta.defined() ? beta.value()[c] : T(0);
      for (std::size_t i = 0; i < plane; ++i)
        q[i] = static_cast<T>((p[i] - mean) * inv) * ga + be;
    });
  }

  std::vector<Var<T>> inputs{x};
  const bool affine = gamma.defined();
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return Var<T>::make(std::move(y), std::move(inputs), [=](Node<T>& self) {
    Node<T>& xin = *self.inputs[0];
    const Tensor<T>* gam = affine ? &self.inputs[1]->value : nullptr;
    auto visit = [&](int g, auto&& fn) {
      if (per_sample) {
        fn(g / s.c, g % s.c);
      } else {
        for (int n = 0; n < s.n; ++n) fn(n, g);
      }
    };
    for (int g = 0; g < groups; ++g) {
      const double mean = stats->mean[g], inv = stats->inv_std[g];
      double sum_dy = 0, sum_dy_xhat = 0, sum_dxhat = 0, sum_dxhat_xhat = 0;
      visit(g, [&](int n, int c) {
        const T* p = xin.value.plane(n, c);
        const T* dy = self.grad.plane(n, c);
        const double ga = gam ? (*gam)[c] : 1.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double xh = (p[i] - mean) * inv;
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * xh;
          sum_dxhat += dy[i] * ga;
          sum_dxhat_xhat += dy[i] * ga * xh;
        }
      });
      if (affine) {
        const int c = per_sample ? g % s.c : g;
        accumulate(*self.inputs[1], [&](Tensor<T>& dg) { dg[c] += static_cast<T>(sum_dy_xhat); });
        accumulate(*self.inputs[2], [&](Tensor<T>& db) { db[c] += static_cast<T>(sum_dy); });
      }
      if (xin.requires_grad) {
        Tensor<T>& dx = xin.grad_buffer();
        visit(g, [&](int n, int c) {
          const T* p = xin.value.plane(n, c);
          const T* dy = self.grad.plane(n, c);
          T* d = dx.plane(n, c);
          const double ga = gam ? (*gam)[c] : 1.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xh = (p[i] - mean) * inv;
            const double dxh = dy[i] * ga;
            d[i] += static_cast<T>(inv / count * (count * dxh - sum_dxhat - xh * sum_dxhat_xhat));
          }
        });
      }
    }
  });
}

template <typename T, typename F, typename G>
Var<T> pointwise(const Var<T>& x, F f, G dfdx_from_xy) {
  Tensor<T> y(x.shape());
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = f(xv[i]);
  return Var<T>::make(std::move(y), {x}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& dx) {
      const Tensor<T>& xin = self.inputs[0]->value;
      for (std::size_t i = 0; i < dx.numel(); ++i)
        dx[i] += self.grad[i] * dfdx_from_xy(xin[i], self.value[i]);
    });
  });
}

}  // namespace

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  return normalize(x, gamma, beta, eps, true);
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  return normalize(x, gamma, beta, eps, false);
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  record_signs(x.value());
  return pointwise(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  record_signs(x.value());
  return pointwise(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return pointwise(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> affine(const Var<T>& x, T scale, T shift) {
  return pointwise(
      x, [scale, shift](T v) { return scale * v + shift; }, [scale](T, T) { return scale; });
}

template <typename T>
Var<T> channel_affine(const Var<T>& x, std::span<const T> scale, std::span<const T> shift) {
  const Shape s = x.shape();
  if (scale.size() != static_cast<std::size_t>(s.c) || shift.size() != static_cast<std::size_t>(s.c))
    throw ShapeError("channel_affine: coefficient count does not match " + s.str());
  std::vector<T> sc(scale.begin(), scale.end());
  std::vector<T> sh(shift.begin(), shift.end());
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* q = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) q[i] = sc[c] * p[i] + sh[c];
    }
  return Var<T>::make(std::move(y), {x}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& dx) {
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = self.grad.plane(n, c);
          T* d = dx.plane(n, c);
          for (std::size_t i = 0; i < s.plane(); ++i) d[i] += sc[c] * g[i];
        }
    });
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
  return Var<T>::make(std::move(y), {a, b}, [](Node<T>& self) {
    for (int k = 0; k < 2; ++k)
      accumulate(*self.inputs[k], [&](Tensor<T>& d) {
        for (std::size_t i = 0; i < d.numel(); ++i) d[i] += self.grad[i];
      });
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat_channels: incompatible " + sa.str() + " and " + sb.str());
  Tensor<T> y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().plane(n, 0), pa, y.plane(n, 0));
    std::copy_n(b.value().plane(n, 0), pb, y.plane(n, sa.c));
  }
  return Var<T>::make(std::move(y), {a, b}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      for (int n = 0; n < sa.n; ++n) {
        const T* g = self.grad.plane(n, 0);
        T* q = d.plane(n, 0);
        for (std::size_t i = 0; i < pa; ++i) q[i] += g[i];
      }
    });
    accumulate(*self.inputs[1], [&](Tensor<T>& d) {
      for (int n = 0; n < sa.n; ++n) {
        const T* g = self.grad.plane(n, sa.c);
        T* q = d.plane(n, 0);
        for (std::size_t i = 0; i < pb; ++i) q[i] += g[i];
      }
    });
  });
}

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < s.c; ++c) mx = std::max<double>(mx, x.value().plane(n, c)[i]);
      double z = 0;
      for (int c = 0; c < s.c; ++c) z += std::exp(x.value().plane(n, c)[i] - mx);
      for (int c = 0; c < s.c; ++c)
        y.plane(n, c)[i] = static_cast<T>(std::exp(x.value().plane(n, c)[i] - mx) / z);
    }
  return Var<T>::make(std::move(y), {x}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& dx) {
      for (int n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
          double dot = 0;
          for (int c = 0; c < s.c; ++c) dot += self.grad.plane(n, c)[i] * self.value.plane(n, c)[i];
          for (int c = 0; c < s.c; ++c) {
            const double p = self.value.plane(n, c)[i];
            dx.plane(n, c)[i] += static_cast<T>(p * (self.grad.plane(n, c)[i] - dot));
          }
        }
    });
  });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& scores, T target) {
  const Tensor<T>& s = scores.value();
  const double t = target;
  double sum = 0;
  for (std::size_t i = 0; i < s.numel(); ++i) {
    const double z = s[i];
    // max(z,0) - z*t + log(1 + exp(-|z|))
    sum += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  const double inv_n = 1.0 / static_cast<double>(s.numel());
  return Var<T>::make(scalar_tensor<T>(sum * inv_n), {scores}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      const Tensor<T>& sv = self.inputs[0]->value;
      const double g = self.grad[0] * inv_n;
      for (std::size_t i = 0; i < d.numel(); ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(sv[i])));
        d[i] += static_cast<T>(g * (sig - t));
      }
    });
  });
}

template <typename T>
Var<T> mean_square_to(const Var<T>& scores, T target) {
  const Tensor<T>& s = scores.value();
  double sum = 0;
  for (std::size_t i = 0; i < s.numel(); ++i) {
    const double d = static_cast<double>(s[i]) - target;
    sum += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(s.numel());
  return Var<T>::make(scalar_tensor<T>(sum * inv_n), {scores}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      const Tensor<T>& sv = self.inputs[0]->value;
      const double g = 2.0 * self.grad[0] * inv_n;
      for (std::size_t i = 0; i < d.numel(); ++i)
        d[i] += static_cast<T>(g * (static_cast<double>(sv[i]) - target));
    });
  });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mean_abs_diff");
  double sum = 0;
  KinkProbe* probe = KinkProbe::active();
  for (std::size_t i = 0; i < a.value().numel(); ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    sum += std::abs(d);
    if (probe) probe->mix(d > 0 ? 1 : 0);
  }
  const double inv_n = 1.0 / static_cast<double>(a.value().numel());
  return Var<T>::make(scalar_tensor<T>(sum * inv_n), {a, b}, [=](Node<T>& self) {
    const Tensor<T>& av = self.inputs[0]->value;
    const Tensor<T>& bv = self.inputs[1]->value;
    const double g = self.grad[0] * inv_n;
    auto sign = [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); };
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      for (std::size_t i = 0; i < d.numel(); ++i)
        d[i] += static_cast<T>(g * sign(static_cast<double>(av[i]) - bv[i]));
    });
    accumulate(*self.inputs[1], [&](Tensor<T>& d) {
      for (std::size_t i = 0; i < d.numel(); ++i)
        d[i] -= static_cast<T>(g * sign(static_cast<double>(av[i]) - bv[i]));
    });
  });
}

template <typename T>
Var<T> mean_square_diff(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mean_square_diff");
  double sum = 0;
  for (std::size_t i = 0; i < a.value().numel(); ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    sum += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(a.value().numel());
  return Var<T>::make(scalar_tensor<T>(sum * inv_n), {a, b}, [=](Node<T>& self) {
    const Tensor<T>& av = self.inputs[0]->value;
    const Tensor<T>& bv = self.inputs[1]->value;
    const double g = 2.0 * self.grad[0] * inv_n;
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      for (std::size_t i = 0; i < d.numel(); ++i)
        d[i] += static_cast<T>(g * (static_cast<double>(av[i]) - bv[i]));
    });
    accumulate(*self.inputs[1], [&](Tensor<T>& d) {
      for (std::size_t i = 0; i < d.numel(); ++i)
        d[i] -= static_cast<T>(g * (static_cast<double>(av[i]) - bv[i]));
    });
  });
}

template <typename T>
Var<T> masked_onehot_mse(const Var<T>& probs, std::span<const std::uint8_t> labels) {
  const Shape s = probs.shape();
  const std::size_t plane = s.plane();
  if (labels.size() != static_cast<std::size_t>(s.n) * plane)
    throw ShapeError("masked_onehot_mse: " + std::to_string(labels.size()) + " labels for scores " +
                     s.str());
  auto lab = std::make_shared<std::vector<std::uint8_t>>(labels.begin(), labels.end());
  std::size_t valid = 0;
  double sum = 0;
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::uint8_t l = (*lab)[n * plane + i];
      if (l == kIgnoreLabel) continue;
      if (l >= s.c)
        throw ValidationError("label " + std::to_string(l) + " out of range for " +
                              std::to_string(s.c) + " classes");
      ++valid;
      for (int c = 0; c < s.c; ++c) {
        const double d = static_cast<double>(probs.value().plane(n, c)[i]) - (c == l ? 1.0 : 0.0);
        sum += d * d;
      }
    }
  const double norm = valid ? 1.0 / (static_cast<double>(valid) * s.c) : 0.0;
  return Var<T>::make(scalar_tensor<T>(sum * norm), {probs}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      const Tensor<T>& pv = self.inputs[0]->value;
      const double g = 2.0 * self.grad[0] * norm;
      for (int n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::uint8_t l = (*lab)[n * plane + i];
          if (l == kIgnoreLabel) continue;
          for (int c = 0; c < s.c; ++c) {
            const double p = pv.plane(n, c)[i];
            d.plane(n, c)[i] += static_cast<T>(g * (p - (c == l ? 1.0 : 0.0)));
          }
        }
    });
  });
}

template <typename T>
Var<T> masked_cross_entropy(const Var<T>& logits, std::span<const std::uint8_t> labels) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  if (labels.size() != static_cast<std::size_t>(s.n) * plane)
    throw ShapeError("masked_cross_entropy: " + std::to_string(labels.size()) + " labels for scores " +
                     s.str());
  auto lab = std::make_shared<std::vector<std::uint8_t>>(labels.begin(), labels.end());
  // softmax kept for the backward pass
  auto prob = std::make_shared<Tensor<T>>(s);
  std::size_t valid = 0;
  double sum = 0;
  const Tensor<T>& x = logits.value();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::uint8_t l = (*lab)[n * plane + i];
      if (l != kIgnoreLabel && l >= s.c)
        throw ValidationError("label " + std::to_string(l) + " out of range for " +
                              std::to_string(s.c) + " classes");
      double mx = x.plane(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, static_cast<double>(x.plane(n, c)[i]));
      double z = 0;
      for (int c = 0; c < s.c; ++c) z += std::exp(x.plane(n, c)[i] - mx);
      for (int c = 0; c < s.c; ++c) prob->plane(n, c)[i] = static_cast<T>(std::exp(x.plane(n, c)[i] - mx) / z);
      if (l == kIgnoreLabel) continue;
      ++valid;
      sum += std::log(z) + mx - x.plane(n, l)[i];
    }
  const double norm = valid ? 1.0 / static_cast<double>(valid) : 0.0;
  return Var<T>::make(scalar_tensor<T>(sum * norm), {logits}, [=](Node<T>& self) {
    accumulate(*self.inputs[0], [&](Tensor<T>& d) {
      const double g = self.grad[0] * norm;
      for (int n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::uint8_t l = (*lab)[n * plane + i];
          if (l == kIgnoreLabel) continue;
          for (int c = 0; c < s.c; ++c)
            d.plane(n, c)[i] += static_cast<T>(g * (prob->plane(n, c)[i] - (c == l ? 1.0 : 0.0)));
        }
    });
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: term/weight count mismatch");
  T total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().numel() != 1) throw ShapeError("weighted_sum: non-scalar term");
    total += weights[i] * terms[i].item();
  }
  return Var<T>::make(scalar_tensor<T>(total), terms, [weights](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      accumulate(*self.inputs[i], [&](Tensor<T>& d) { d[0] += weights[i] * self.grad[0]; });
  });
}

#define DFS_INSTANTIATE_OPS(T)                                                                 \
  template void backward<T>(const Var<T>&);                                                    \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);            \
  template Var<T> reflect_pad<T>(const Var<T>&, int);                                          \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                                        \
  template Var<T> max_pool2x2<T>(const Var<T>&);                                               \
  template Var<T> instance_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);            \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);               \
  template Var<T> relu<T>(const Var<T>&);                                                      \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                             \
  template Var<T> tanh<T>(const Var<T>&);                                                      \
  template Var<T> affine<T>(const Var<T>&, T, T);                                              \
  template Var<T> channel_affine<T>(const Var<T>&, std::span<const T>, std::span<const T>);    \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> softmax_channels<T>(const Var<T>&);                                          \
  template Var<T> bce_with_logits<T>(const Var<T>&, T);                                        \
  template Var<T> mean_square_to<T>(const Var<T>&, T);                                         \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> mean_square_diff<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> masked_onehot_mse<T>(const Var<T>&, std::span<const std::uint8_t>);          \
  template Var<T> masked_cross_entropy<T>(const Var<T>&, std::span<const std::uint8_t>);       \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);

DFS_INSTANTIATE_OPS(float)
DFS_INSTANTIATE_OPS(double)

}  // namespace dfs::nn
