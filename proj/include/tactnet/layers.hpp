#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "tactnet/tensor.hpp"

namespace tactnet {

enum class Padding { kSame, kValid };
enum class Mode { kTrain, kInfer };

inline Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

// ---------------------------------------------------------------------------
// conv2d: NHWC activations, HWIO weights, cross-correlation (no kernel flip).
// Forward lowers each batch to an im2col matrix and runs one GEMM per call.
// ---------------------------------------------------------------------------

struct ConvGeometry {
  Index batch = 0, in_h = 0, in_w = 0, in_c = 0;
  Index kh = 0, kw = 0, out_c = 0, stride = 1;
  Index out_h = 0, out_w = 0;
  Index pad_top = 0, pad_left = 0;
};

inline ConvGeometry conv_geometry(const std::vector<Index>& x_shape,
                                  const std::vector<Index>& w_shape, Index stride,
                                  Padding pad) {
  require(x_shape.size() == 4, "conv2d: input must be [N,H,W,C], got " + shape_string(x_shape));
  require(w_shape.size() == 4, "conv2d: weights must be [KH,KW,Cin,Cout], got " + shape_string(w_shape));
  require(stride >= 1, "conv2d: stride must be >= 1");

  ConvGeometry g;
  g.batch = x_shape[0];
  g.in_h = x_shape[1];
  g.in_w = x_shape[2];
  g.in_c = x_shape[3];
  g.kh = w_shape[0];
  g.kw = w_shape[1];
  g.out_c = w_shape[3];
  g.stride = stride;

  require(g.kh % 2 == 1 && g.kw % 2 == 1, "conv2d: filter extents must be odd");
  require(w_shape[2] == g.in_c, "conv2d: weight input channels " + std::to_string(w_shape[2]) +
                                    " do not match input channels " + std::to_string(g.in_c));

  if (pad == Padding::kSame) {
    g.out_h = ceil_div(g.in_h, stride);
    g.out_w = ceil_div(g.in_w, stride);
    const Index pad_h = std::max<Index>((g.out_h - 1) * stride + g.kh - g.in_h, 0);
    const Index pad_w = std::max<Index>((g.out_w - 1) * stride + g.kw - g.in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    require(g.in_h >= g.kh && g.in_w >= g.kw,
            "conv2d: input " + std::to_string(g.in_h) + "x" + std::to_string(g.in_w) +
                " smaller than filter under valid padding");
    g.out_h = (g.in_h - g.kh) / stride + 1;
    g.out_w = (g.in_w - g.kw) / stride + 1;
  }
  return g;
}

// col is (N*OH*OW) x (KH*KW*Cin); out-of-image taps are zero
template <typename S>
void im2col(const Tensor<S>& x, const ConvGeometry& g, RowMat<S>& col) {
  const Index patch = g.kh * g.kw * g.in_c;
  col.setZero(g.batch * g.out_h * g.out_w, patch);
  const S* src = x.data();
  for (Index n = 0; n < g.batch; ++n) {
    const S* img = src + n * g.in_h * g.in_w * g.in_c;
    for (Index oh = 0; oh < g.out_h; ++oh) {
      const Index ih0 = oh * g.stride - g.pad_top;
      for (Index ow = 0; ow < g.out_w; ++ow) {
        const Index iw0 = ow * g.stride - g.pad_left;
        S* dst = col.data() + ((n * g.out_h + oh) * g.out_w + ow) * patch;
        for (Index dh = 0; dh < g.kh; ++dh) {
          const Index ih = ih0 + dh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (Index dw = 0; dw < g.kw; ++dw) {
            const Index iw = iw0 + dw;
            if (iw < 0 || iw >= g.in_w) continue;
            std::copy_n(img + (ih * g.in_w + iw) * g.in_c, g.in_c,
                        dst + (dh * g.kw + dw) * g.in_c);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const RowMat<S>& col, const ConvGeometry& g, Tensor<S>& dx) {
  const Index patch = g.kh * g.kw * g.in_c;
  S* base = dx.data();
  for (Index n = 0; n < g.batch; ++n) {
    S* img = base + n * g.in_h * g.in_w * g.in_c;
    for (Index oh = 0; oh < g.out_h; ++oh) {
      const Index ih0 = oh * g.stride - g.pad_top;
      for (Index ow = 0; ow < g.out_w; ++ow) {
        const Index iw0 = ow * g.stride - g.pad_left;
        const S* src = col.data() + ((n * g.out_h + oh) * g.out_w + ow) * patch;
        for (Index dh = 0; dh < g.kh; ++dh) {
          const Index ih = ih0 + dh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (Index dw = 0; dw < g.kw; ++dw) {
            const Index iw = iw0 + dw;
            if (iw < 0 || iw >= g.in_w) continue;
            S* dst = img + (ih * g.in_w + iw) * g.in_c;
            const S* s = src + (dh * g.kw + dw) * g.in_c;
            for (Index c = 0; c < g.in_c; ++c) dst[c] += s[c];
          }
        }
      }
    }
  }
}

template <typename S>
struct Conv2dCache {
  ConvGeometry geom;
  RowMat<S> col;
  Tensor<S> weights;
};

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                 Padding pad, Conv2dCache<S>* cache = nullptr) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  require(b.size() == g.out_c, "conv2d: bias size " + std::to_string(b.size()) +
                                   " does not match output channels " + std::to_string(g.out_c));

  RowMat<S> local;
  RowMat<S>& col = cache ? cache->col : local;
  im2col(x, g, col);

  Tensor<S> y({g.batch, g.out_h, g.out_w, g.out_c});
  auto ymat = y.matrix(g.batch * g.out_h * g.out_w, g.out_c);
  auto wmat = w.matrix(g.kh * g.kw * g.in_c, g.out_c);
  // one product per image so a frame's activations do not depend on its batch
  // position or on the batch size (batched GEMM rounds row blocks differently)
  const Index img_rows = g.out_h * g.out_w;
  for (Index n = 0; n < g.batch; ++n)
    ymat.middleRows(n * img_rows, img_rows).noalias() =
        col.middleRows(n * img_rows, img_rows) * wmat;
  ymat.rowwise() += b.matrix(1, g.out_c).row(0);

  if (cache) {
    cache->geom = g;
    cache->weights = w;
  }
  return y;
}

template <typename S>
struct Conv2dGrads {
  Tensor<S> dx, dw, db;
};

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& dy, const Conv2dCache<S>& cache) {
  const ConvGeometry& g = cache.geom;
  const Index rows = g.batch * g.out_h * g.out_w;
  const Index patch = g.kh * g.kw * g.in_c;
  auto dymat = dy.matrix(rows, g.out_c);

  Conv2dGrads<S> grads;
  grads.dw = Tensor<S>({g.kh, g.kw, g.in_c, g.out_c});
  grads.dw.matrix(patch, g.out_c).noalias() = cache.col.transpose() * dymat;

  grads.db = Tensor<S>({g.out_c});
  grads.db.matrix(1, g.out_c) = dymat.colwise().sum();

  RowMat<S> dcol(rows, patch);
  dcol.noalias() = dymat * cache.weights.matrix(patch, g.out_c).transpose();
  grads.dx = Tensor<S>({g.batch, g.in_h, g.in_w, g.in_c});
  col2im_add(dcol, g, grads.dx);
  return grads;
}

// ---------------------------------------------------------------------------
// batchnorm over the channel (last) dimension
// ---------------------------------------------------------------------------

template <typename S>
struct BatchNormCache {
  Mode mode = Mode::kTrain;
  std::vector<Index> x_shape;
  RowMat<S> xhat;      // M x C
  ColVec<S> inv_std;   // per channel
  Tensor<S> gamma;
};

template <typename S>
Tensor<S> batchnorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                    Tensor<S>& running_mean, Tensor<S>& running_var, Mode mode, S epsilon,
                    S momentum = S(0.9), BatchNormCache<S>* cache = nullptr) {
  require(x.rank() >= 2, "batchnorm: input rank must be >= 2");
  const Index channels = x.dim(x.rank() - 1);
  const Index m = x.size() / channels;
  require(gamma.size() == channels && beta.size() == channels,
          "batchnorm: gamma/beta size must match channel count " + std::to_string(channels));
  require(running_mean.size() == channels && running_var.size() == channels,
          "batchnorm: running stats size must match channel count");
  require((running_var.array() >= S(0)).all(), "batchnorm: running variance must be >= 0");

  auto xm = x.matrix(m, channels);
  ColVec<S> mean(channels), inv_std(channels);

  if (mode == Mode::kTrain) {
    require(x.dim(0) >= 2, "batchnorm: training mode requires batch size >= 2");
    mean = xm.colwise().mean();
    ColVec<S> var = (xm.rowwise() - mean.transpose()).array().square().colwise().mean();
    inv_std = (var.array() + epsilon).rsqrt();
    running_mean.array() = momentum * running_mean.array() + (S(1) - momentum) * mean.array();
    running_var.array() = momentum * running_var.array() + (S(1) - momentum) * var.array();
  } else {
    mean = running_mean.matrix(channels, 1);
    inv_std = (running_var.matrix(channels, 1).array() + epsilon).rsqrt();
  }

  RowMat<S> xhat = (xm.rowwise() - mean.transpose()).array().rowwise() *
                   inv_std.transpose().array();
  Tensor<S> y(x.shape());
  y.matrix(m, channels) = (xhat.array().rowwise() * gamma.matrix(1, channels).row(0).array())
                              .rowwise() +
                          beta.matrix(1, channels).row(0).array();
  if (cache) {
    cache->mode = mode;
    cache->x_shape = x.shape();
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->gamma = gamma;
  }
  return y;
}

template <typename S>
struct BatchNormGrads {
  Tensor<S> dx, dgamma, dbeta;
};

template <typename S>
BatchNormGrads<S> batchnorm_backward(const Tensor<S>& dy, const BatchNormCache<S>& cache) {
  const Index channels = cache.inv_std.size();
  const Index m = dy.size() / channels;
  auto dym = dy.matrix(m, channels);

  BatchNormGrads<S> g;
  g.dbeta = Tensor<S>({channels});
  g.dgamma = Tensor<S>({channels});
  g.dbeta.matrix(1, channels) = dym.colwise().sum();
  g.dgamma.matrix(1, channels) = (dym.array() * cache.xhat.array()).colwise().sum();

  g.dx = Tensor<S>(cache.x_shape);
  auto gi = (cache.gamma.matrix(1, channels).row(0).transpose().array() *
             cache.inv_std.array())
                .matrix();
  if (cache.mode == Mode::kTrain) {
    // dx = gamma*inv_std * (dy - mean(dy) - xhat * mean(dy*xhat)) per channel
    ColVec<S> mean_dy = dym.colwise().mean();
    ColVec<S> mean_dyxh = (dym.array() * cache.xhat.array()).colwise().mean();
    g.dx.matrix(m, channels) =
        ((dym.rowwise() - mean_dy.transpose()).array() -
         cache.xhat.array().rowwise() * mean_dyxh.transpose().array())
            .rowwise() *
        gi.transpose().array();
  } else {
    g.dx.matrix(m, channels) = dym.array().rowwise() * gi.transpose().array();
  }
  return g;
}

// ---------------------------------------------------------------------------
// relu / maxpool
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& x, Tensor<S>* cache_input = nullptr) {
  Tensor<S> y(x.shape());
  y.array() = x.array().max(S(0));
  if (cache_input) *cache_input = x;
  return y;
}

template <typename S>
Tensor<S> relu_backward(const Tensor<S>& dy, const Tensor<S>& x_in) {
  Tensor<S> dx(dy.shape());
  dx.array() = (x_in.array() > S(0)).select(dy.array(), S(0));
  return dx;
}

template <typename S>
struct MaxPoolCache {
  std::vector<Index> x_shape;
  std::vector<Index> argmax;  // flat source index per output element
};

// ceil-mode extents: out = ceil((H - window + stride) / stride); the trailing
// window is clipped to the image.  Gradient goes to the first max in
// row-major window scan order.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, Index window = 2, Index stride = 2,
                    MaxPoolCache<S>* cache = nullptr) {
  require(x.rank() == 4, "maxpool2d: input must be [N,H,W,C], got " + shape_string(x.shape()));
  require(window >= 1 && stride >= 1, "maxpool2d: window and stride must be >= 1");
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require(h >= 1 && w >= 1, "maxpool2d: empty spatial extent");
  const Index oh = ceil_div(std::max<Index>(h - window + stride, 1), stride);
  const Index ow = ceil_div(std::max<Index>(w - window + stride, 1), stride);

  Tensor<S> y({n, oh, ow, c});
  if (cache) {
    cache->x_shape = x.shape();
    cache->argmax.assign(static_cast<std::size_t>(y.size()), 0);
  }
  const S* src = x.data();
  S* dst = y.data();
  for (Index in = 0; in < n; ++in) {
    for (Index io = 0; io < oh; ++io) {
      const Index h0 = io * stride, h1 = std::min(h0 + window, h);
      for (Index jo = 0; jo < ow; ++jo) {
        const Index w0 = jo * stride, w1 = std::min(w0 + window, w);
        for (Index ic = 0; ic < c; ++ic) {
          S best = -std::numeric_limits<S>::infinity();
          Index best_idx = 0;
          for (Index ih = h0; ih < h1; ++ih) {
            for (Index iw = w0; iw < w1; ++iw) {
              const Index idx = ((in * h + ih) * w + iw) * c + ic;
              if (src[idx] > best) {
                best = src[idx];
                best_idx = idx;
              }
            }
          }
          const Index out_idx = ((in * oh + io) * ow + jo) * c + ic;
          dst[out_idx] = best;
          if (cache) cache->argmax[static_cast<std::size_t>(out_idx)] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename S>
Tensor<S> maxpool2d_backward(const Tensor<S>& dy, const MaxPoolCache<S>& cache) {
  Tensor<S> dx(cache.x_shape);
  const S* src = dy.data();
  S* dst = dx.data();
  for (Index i = 0; i < dy.size(); ++i)
    dst[cache.argmax[static_cast<std::size_t>(i)]] += src[i];
  return dx;
}

// ---------------------------------------------------------------------------
// fully connected: trailing dims of x are flattened into the feature axis
// ---------------------------------------------------------------------------

template <typename S>
struct FcCache {
  RowMat<S> x2d;
  Tensor<S> weights;
  std::vector<Index> x_shape;
};

template <typename S>
Tensor<S> fully_connected(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                          FcCache<S>* cache = nullptr) {
  require(x.rank() >= 2, "fully_connected: input rank must be >= 2");
  require(w.rank() == 2, "fully_connected: weights must be [D,K]");
  const Index n = x.dim(0);
  const Index d = x.size() / n;
  const Index k = w.dim(1);
  require(w.dim(0) == d, "fully_connected: input features " + std::to_string(d) +
                             " do not match weight rows " + std::to_string(w.dim(0)));
  require(b.size() == k, "fully_connected: bias size mismatch");

  Tensor<S> y({n, k});
  auto xm = x.matrix(n, d);
  auto ym = y.matrix(n, k);
  auto wm = w.matrix(d, k);
  // row-at-a-time so each sample's logits are independent of batch layout
  for (Index i = 0; i < n; ++i) ym.middleRows(i, 1).noalias() = xm.middleRows(i, 1) * wm;
  ym.rowwise() += b.matrix(1, k).row(0);
  if (cache) {
    cache->x2d = xm;
    cache->weights = w;
    cache->x_shape = x.shape();
  }
  return y;
}

template <typename S>
struct FcGrads {
  Tensor<S> dx, dw, db;
};

template <typename S>
FcGrads<S> fully_connected_backward(const Tensor<S>& dy, const FcCache<S>& cache) {
  const Index n = cache.x2d.rows(), d = cache.x2d.cols(), k = cache.weights.dim(1);
  auto dym = dy.matrix(n, k);

  FcGrads<S> g;
  g.dw = Tensor<S>({d, k});
  g.dw.matrix(d, k).noalias() = cache.x2d.transpose() * dym;
  g.db = Tensor<S>({k});
  g.db.matrix(1, k) = dym.colwise().sum();
  g.dx = Tensor<S>(cache.x_shape);
  g.dx.matrix(n, d).noalias() = dym * cache.weights.matrix(d, k).transpose();
  return g;
}

// ---------------------------------------------------------------------------
// softmax + cross entropy (mean NLL); grad = (probs - onehot) / N
// ---------------------------------------------------------------------------

template <typename S>
struct SoftmaxLoss {
  S loss = S(0);
  Tensor<S> grad;
  Tensor<S> probs;
};

template <typename S>
SoftmaxLoss<S> softmax_cross_entropy(const Tensor<S>& logits, std::span<const int> labels) {
  require(logits.rank() == 2, "softmax_cross_entropy: logits must be [N,K]");
  const Index n = logits.dim(0), k = logits.dim(1);
  require(static_cast<Index>(labels.size()) == n,
          "softmax_cross_entropy: label count does not match batch");
  for (int lab : labels)
    require(lab >= 0 && lab < k,
            "softmax_cross_entropy: label " + std::to_string(lab) + " out of range [0," +
                std::to_string(k) + ")");

  SoftmaxLoss<S> out;
  out.probs = Tensor<S>({n, k});
  out.grad = Tensor<S>({n, k});
  auto lm = logits.matrix(n, k);
  auto pm = out.probs.matrix(n, k);

  pm = (lm.colwise() - lm.rowwise().maxCoeff()).array().exp();
  pm.array().colwise() /= pm.rowwise().sum().array();

  S loss = S(0);
  for (Index i = 0; i < n; ++i)
    loss -= std::log(std::max(pm(i, labels[static_cast<std::size_t>(i)]),
                              std::numeric_limits<S>::min()));
  out.loss = loss / static_cast<S>(n);

  out.grad.matrix(n, k) = pm / static_cast<S>(n);
  for (Index i = 0; i < n; ++i)
    out.grad(i, labels[static_cast<std::size_t>(i)]) -= S(1) / static_cast<S>(n);
  return out;
}

// ---------------------------------------------------------------------------
// SGD with momentum:  v <- mu*v - lr*(g + wd*p);  p <- p + v
// ---------------------------------------------------------------------------

template <typename S>
void sgd_step(Tensor<S>& param, const Tensor<S>& grad, Tensor<S>& velocity, S lr, S momentum,
              S weight_decay) {
  require(lr > S(0), "sgd_step: learning rate must be > 0");
  require(momentum >= S(0) && momentum < S(1), "sgd_step: momentum must be in [0,1)");
  require(param.same_shape(grad), "sgd_step: param/grad shape mismatch");
  if (velocity.size() == 0) velocity = Tensor<S>::zeros(param.shape());
  if (!grad.all_finite())
    throw std::runtime_error("sgd_step: non-finite gradient encountered");
  velocity.array() = momentum * velocity.array() - lr * (grad.array() + weight_decay * param.array());
  param.array() += velocity.array();
}

}  // namespace tactnet
