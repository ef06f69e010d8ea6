#include "fetalseg/nnet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace fseg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

int pad_before(int k) { return (k - 1) / 2; }

// col has shape (C*k*k) x (H*W): row (c, ky, kx), column (y, x).
template <typename T>
void im2col(const T* src, int channels, int h, int w, int k, T* col) {
  const int pb = pad_before(k);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = src + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int oy = ky - pb, ox = kx - pb;
        for (int y = 0; y < h; ++y) {
          const int sy = y + oy;
          T* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T{});
            continue;
          }
          const T* s = plane + static_cast<std::size_t>(sy) * w;
          const int x_lo = std::max(0, -ox);
          const int x_hi = std::min(w, w - ox);
          std::fill(dst, dst + x_lo, T{});
          std::copy(s + x_lo + ox, s + x_hi + ox, dst + x_lo);
          std::fill(dst + x_hi, dst + w, T{});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int k, T* dst) {
  const int pb = pad_before(k);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* plane = dst + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int oy = ky - pb, ox = kx - pb;
        for (int y = 0; y < h; ++y) {
          const int sy = y + oy;
          if (sy < 0 || sy >= h) continue;
          const T* s = row + static_cast<std::size_t>(y) * w;
          T* d = plane + static_cast<std::size_t>(sy) * w;
          const int x_lo = std::max(0, -ox);
          const int x_hi = std::min(w, w - ox);
          for (int x = x_lo; x < x_hi; ++x) d[x + ox] += s[x];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
ConvParams<T>::ConvParams(int in_c, int out_c, int k, bool with_bias)
    : in_channels(in_c), out_channels(out_c), kernel(k) {
  if (in_c <= 0 || out_c <= 0 || k <= 0) throw ShapeError("convolution shape must be positive");
  weight.assign(static_cast<std::size_t>(out_c) * in_c * k * k, T{});
  if (with_bias) bias.assign(static_cast<std::size_t>(out_c), T{});
}

template <typename T>
Tensor4<T> conv_forward(const Tensor4<T>& x, const ConvParams<T>& p) {
  if (x.c() != p.in_channels) throw ShapeError("conv: input channel count does not match kernel");
  const int h = x.h(), w = x.w(), k = p.kernel;
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index kdim = static_cast<Eigen::Index>(p.fan_in());
  Tensor4<T> y(x.n(), p.out_channels, h, w);
  ConstMapMat<T> wmat(p.weight.data(), p.out_channels, kdim);
  std::vector<T> col(k == 1 ? 0 : static_cast<std::size_t>(kdim * hw));
  for (int n = 0; n < x.n(); ++n) {
    const T* colp = x.sample_ptr(n);
    if (k != 1) {
      im2col(x.sample_ptr(n), p.in_channels, h, w, k, col.data());
      colp = col.data();
    }
    MapMat<T> out(y.sample_ptr(n), p.out_channels, hw);
    out.noalias() = wmat * ConstMapMat<T>(colp, kdim, hw);
    if (!p.bias.empty())
      for (int c = 0; c < p.out_channels; ++c) out.row(c).array() += p.bias[c];
  }
  return y;
}

template <typename T>
Tensor4<T> conv_backward(const Tensor4<T>& x, const ConvParams<T>& p, const Tensor4<T>& dy, ConvGrads<T>& grads) {
  if (dy.n() != x.n() || dy.c() != p.out_channels || dy.h() != x.h() || dy.w() != x.w())
    throw ShapeError("conv backward: gradient shape mismatch");
  const int h = x.h(), w = x.w(), k = p.kernel;
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index kdim = static_cast<Eigen::Index>(p.fan_in());
  Tensor4<T> dx(x.n(), x.c(), h, w);
  ConstMapMat<T> wmat(p.weight.data(), p.out_channels, kdim);
  MapMat<T> dw(grads.weight.data(), p.out_channels, kdim);
  std::vector<T> col(k == 1 ? 0 : static_cast<std::size_t>(kdim * hw));
  std::vector<T> dcol(k == 1 ? 0 : static_cast<std::size_t>(kdim * hw));
  for (int n = 0; n < x.n(); ++n) {
    ConstMapMat<T> g(dy.sample_ptr(n), p.out_channels, hw);
    const T* colp = x.sample_ptr(n);
    if (k != 1) {
      im2col(x.sample_ptr(n), p.in_channels, h, w, k, col.data());
      colp = col.data();
    }
    dw.noalias() += g * ConstMapMat<T>(colp, kdim, hw).transpose();
    if (!grads.bias.empty())
      for (int c = 0; c < p.out_channels; ++c) {
        // Eigen's vectorised sum() splits the row by address alignment; keep one order.
        const T* row = dy.sample_ptr(n) + c * hw;
        T acc = 0;
        for (Eigen::Index i = 0; i < hw; ++i) acc += row[i];
        grads.bias[c] += acc;
      }
    if (k == 1) {
      MapMat<T>(dx.sample_ptr(n), kdim, hw).noalias() = wmat.transpose() * g;
    } else {
      MapMat<T>(dcol.data(), kdim, hw).noalias() = wmat.transpose() * g;
      col2im_add(dcol.data(), p.in_channels, h, w, k, dx.sample_ptr(n));
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  for (auto& v : y.data()) v = v > T{} ? v : T{};
  return y;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  require_same_shape(y, dy, "relu backward");
  Tensor4<T> dx = dy;
  auto yd = y.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(yd[i] > T{})) d[i] = T{};
  return dx;
}

template <typename T>
BatchNormParams<T>::BatchNormParams(int channels)
    : gamma(static_cast<std::size_t>(channels), T{1}),
      beta(static_cast<std::size_t>(channels), T{}),
      running_mean(static_cast<std::size_t>(channels), T{}),
      running_var(static_cast<std::size_t>(channels), T{1}) {}

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, BatchNormParams<T>& p, bool training, BatchNormCache<T>* cache) {
  if (x.c() != p.channels()) throw ShapeError("batchnorm: channel count mismatch");
  const int C = x.c();
  const std::size_t hw = x.plane();
  const double count = static_cast<double>(x.n()) * static_cast<double>(hw);
  Tensor4<T> y(x.n(), C, x.h(), x.w());
  if (cache) {
    cache->xhat = Tensor4<T>(x.n(), C, x.h(), x.w());
    cache->inv_std.assign(static_cast<std::size_t>(C), T{});
  }
  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* px = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) s += px[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* px = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) {
          const double dv = px[i] - mean;
          ss += dv * dv;
        }
      }
      var = ss / count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      p.running_mean[c] = static_cast<T>(p.momentum * p.running_mean[c] + (1 - p.momentum) * mean);
      p.running_var[c] = static_cast<T>(p.momentum * p.running_var[c] + (1 - p.momentum) * unbiased);
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + p.eps));
    const T m = static_cast<T>(mean);
    const T g = p.gamma[c], b = p.beta[c];
    if (cache) cache->inv_std[c] = inv_std;
    for (int n = 0; n < x.n(); ++n) {
      const T* px = x.plane_ptr(n, c);
      T* py = y.plane_ptr(n, c);
      T* ph = cache ? cache->xhat.plane_ptr(n, c) : nullptr;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (px[i] - m) * inv_std;
        if (ph) ph[i] = xh;
        py[i] = g * xh + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormParams<T>& p, const Tensor4<T>& dy,
                              std::vector<T>& dgamma, std::vector<T>& dbeta) {
  require_same_shape(cache.xhat, dy, "batchnorm backward");
  const int C = dy.c();
  const std::size_t hw = dy.plane();
  const double count = static_cast<double>(dy.n()) * static_cast<double>(hw);
  Tensor4<T> dx(dy.n(), C, dy.h(), dy.w());
  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const T* g = dy.plane_ptr(n, c);
      const T* xh = cache.xhat.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += g[i];
        sum_dy_xh += static_cast<double>(g[i]) * xh[i];
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xh);
    dbeta[c] += static_cast<T>(sum_dy);
    const T scale = static_cast<T>(p.gamma[c] * cache.inv_std[c]);
    const T mean_dy = static_cast<T>(sum_dy / count);
    const T mean_dy_xh = static_cast<T>(sum_dy_xh / count);
    for (int n = 0; n < dy.n(); ++n) {
      const T* g = dy.plane_ptr(n, c);
      const T* xh = cache.xhat.plane_ptr(n, c);
      T* d = dx.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) d[i] = scale * (g[i] - mean_dy - xh[i] * mean_dy_xh);
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> maxpool2x2_forward(const Tensor4<T>& x, std::vector<std::size_t>* argmax) {
  if (x.h() % 2 || x.w() % 2) throw ShapeError("maxpool: spatial size must be even");
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor4<T> y(x.n(), x.c(), oh, ow);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx, ++o) {
          std::size_t best = x.index(n, c, 2 * yy, 2 * xx);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = x.index(n, c, 2 * yy + dy, 2 * xx + dx);
              if (x.data()[i] > x.data()[best]) best = i;
            }
          y.data()[o] = x.data()[best];
          if (argmax) (*argmax)[o] = best;
        }
  return y;
}

template <typename T>
Tensor4<T> maxpool2x2_backward(const Tensor4<T>& dy, const std::vector<std::size_t>& argmax, int in_h, int in_w) {
  if (argmax.size() != dy.size()) throw ShapeError("maxpool backward: argmax size mismatch");
  Tensor4<T> dx(dy.n(), dy.c(), in_h, in_w);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx.data()[argmax[o]] += dy.data()[o];
  return dx;
}

template <typename T>
Tensor4<T> upsample2x_forward(const Tensor4<T>& x) {
  Tensor4<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* s = x.plane_ptr(n, c);
      T* d = y.plane_ptr(n, c);
      for (int yy = 0; yy < y.h(); ++yy)
        for (int xx = 0; xx < y.w(); ++xx) d[yy * y.w() + xx] = s[(yy / 2) * x.w() + xx / 2];
    }
  return y;
}

template <typename T>
Tensor4<T> upsample2x_backward(const Tensor4<T>& dy) {
  if (dy.h() % 2 || dy.w() % 2) throw ShapeError("upsample backward: spatial size must be even");
  Tensor4<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const T* s = dy.plane_ptr(n, c);
      T* d = dx.plane_ptr(n, c);
      for (int yy = 0; yy < dy.h(); ++yy)
        for (int xx = 0; xx < dy.w(); ++xx) d[(yy / 2) * dx.w() + xx / 2] += s[yy * dy.w() + xx];
    }
  return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) throw ShapeError("concat: batch or spatial size mismatch");
  Tensor4<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t sa = a.plane() * a.c(), sb = b.plane() * b.c();
  for (int n = 0; n < a.n(); ++n) {
    std::copy(a.sample_ptr(n), a.sample_ptr(n) + sa, y.sample_ptr(n));
    std::copy(b.sample_ptr(n), b.sample_ptr(n) + sb, y.sample_ptr(n) + sa);
  }
  return y;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& d, int a_channels) {
  if (a_channels <= 0 || a_channels >= d.c()) throw ShapeError("split: bad channel split");
  Tensor4<T> da(d.n(), a_channels, d.h(), d.w());
  Tensor4<T> db(d.n(), d.c() - a_channels, d.h(), d.w());
  const std::size_t sa = da.plane() * da.c(), sb = db.plane() * db.c();
  for (int n = 0; n < d.n(); ++n) {
    std::copy(d.sample_ptr(n), d.sample_ptr(n) + sa, da.sample_ptr(n));
    std::copy(d.sample_ptr(n) + sa, d.sample_ptr(n) + sa + sb, db.sample_ptr(n));
  }
  return {std::move(da), std::move(db)};
}

template <typename T>
Tensor4<T> softmax_forward(const Tensor4<T>& logits) {
  Tensor4<T> p(logits.n(), logits.c(), logits.h(), logits.w());
  const std::size_t hw = logits.plane();
  const int C = logits.c();
  for (int n = 0; n < logits.n(); ++n) {
    const T* z = logits.sample_ptr(n);
    T* out = p.sample_ptr(n);
    for (std::size_t i = 0; i < hw; ++i) {
      T mx = z[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, z[c * hw + i]);
      T sum{};
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(z[c * hw + i] - mx);
        out[c * hw + i] = e;
        sum += e;
      }
      const T inv = T{1} / sum;
      for (int c = 0; c < C; ++c) out[c * hw + i] *= inv;
    }
  }
  return p;
}

template <typename T>
Tensor4<T> softmax_backward(const Tensor4<T>& probs, const Tensor4<T>& dprobs) {
  require_same_shape(probs, dprobs, "softmax backward");
  Tensor4<T> dz(probs.n(), probs.c(), probs.h(), probs.w());
  const std::size_t hw = probs.plane();
  const int C = probs.c();
  for (int n = 0; n < probs.n(); ++n) {
    const T* p = probs.sample_ptr(n);
    const T* g = dprobs.sample_ptr(n);
    T* d = dz.sample_ptr(n);
    for (std::size_t i = 0; i < hw; ++i) {
      T dot{};
      for (int c = 0; c < C; ++c) dot += p[c * hw + i] * g[c * hw + i];
      for (int c = 0; c < C; ++c) d[c * hw + i] = p[c * hw + i] * (g[c * hw + i] - dot);
    }
  }
  return dz;
}

#define FSEG_INSTANTIATE(T)                                                                                    \
  template struct ConvParams<T>;                                                                               \
  template struct BatchNormParams<T>;                                                                          \
  template Tensor4<T> conv_forward(const Tensor4<T>&, const ConvParams<T>&);                                   \
  template Tensor4<T> conv_backward(const Tensor4<T>&, const ConvParams<T>&, const Tensor4<T>&, ConvGrads<T>&); \
  template Tensor4<T> relu_forward(const Tensor4<T>&);                                                         \
  template Tensor4<T> relu_backward(const Tensor4<T>&, const Tensor4<T>&);                                     \
  template Tensor4<T> batchnorm_forward(const Tensor4<T>&, BatchNormParams<T>&, bool, BatchNormCache<T>*);     \
  template Tensor4<T> batchnorm_backward(const BatchNormCache<T>&, const BatchNormParams<T>&, const Tensor4<T>&, \
                                         std::vector<T>&, std::vector<T>&);                                    \
  template Tensor4<T> maxpool2x2_forward(const Tensor4<T>&, std::vector<std::size_t>*);                        \
  template Tensor4<T> maxpool2x2_backward(const Tensor4<T>&, const std::vector<std::size_t>&, int, int);       \
  template Tensor4<T> upsample2x_forward(const Tensor4<T>&);                                                   \
  template Tensor4<T> upsample2x_backward(const Tensor4<T>&);                                                  \
  template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);                                   \
  template std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>&, int);                           \
  template Tensor4<T> softmax_forward(const Tensor4<T>&);                                                      \
  template Tensor4<T> softmax_backward(const Tensor4<T>&, const Tensor4<T>&);

FSEG_INSTANTIATE(float)
FSEG_INSTANTIATE(double)
#undef FSEG_INSTANTIATE

}  // namespace fseg::nn
