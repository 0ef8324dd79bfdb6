#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here favours directness over speed: plain nested loops and
// closed-form formulas, sharing nothing with the headers under test beyond
// the Tensor container itself.  Treat these as frozen -- when a test
// disagrees with an oracle, suspect the library first.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tactnet/image_ops.hpp"
#include "tactnet/model.hpp"
#include "tactnet/rng.hpp"
#include "tactnet/tensor.hpp"

namespace oracles {

using tactnet::Index;
using tactnet::Tensor;

// ---------------------------------------------------------------------------
// Naive cross-correlation: direct seven-loop evaluation on NHWC input and
// HWIO weights, accumulating in double.  Same padding means
// out = ceil(in/stride) with the zero margin split low on the top/left side;
// valid padding means out = (in - k)/stride + 1 with no margin.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> naive_conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                       Index stride, tactnet::Padding pad) {
  const Index n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
  const Index kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  Index oh = 0, ow = 0, pad_top = 0, pad_left = 0;
  if (pad == tactnet::Padding::kSame) {
    oh = (h + stride - 1) / stride;
    ow = (wd + stride - 1) / stride;
    pad_top = std::max<Index>((oh - 1) * stride + kh - h, 0) / 2;
    pad_left = std::max<Index>((ow - 1) * stride + kw - wd, 0) / 2;
  } else {
    oh = (h - kh) / stride + 1;
    ow = (wd - kw) / stride + 1;
  }
  Tensor<S> y({n, oh, ow, cout});
  for (Index in = 0; in < n; ++in)
    for (Index io = 0; io < oh; ++io)
      for (Index jo = 0; jo < ow; ++jo)
        for (Index oc = 0; oc < cout; ++oc) {
          double acc = static_cast<double>(b[oc]);
          for (Index a = 0; a < kh; ++a)
            for (Index bq = 0; bq < kw; ++bq)
              for (Index ic = 0; ic < cin; ++ic) {
                const Index si = io * stride - pad_top + a;
                const Index sj = jo * stride - pad_left + bq;
                if (si < 0 || si >= h || sj < 0 || sj >= wd) continue;
                acc += static_cast<double>(x(in, si, sj, ic)) *
                       static_cast<double>(w(a, bq, ic, oc));
              }
          y(in, io, jo, oc) = static_cast<S>(acc);
        }
  return y;
}

// ---------------------------------------------------------------------------
// Bicubic resize as the literal published double sum
//   T'(r',c') = sum_i sum_j (r_i * c_j) * T(i,j)
// over the 4x4 neighbourhood, with each weight evaluated inline as the
// product-form Lagrange basis
//   r_i = prod_{k != i} (u - n_k) / (n_i - n_k)
// at the mapped source coordinate u = r' * (R / R').  The neighbourhood base
// is clamp(floor(u) - 1, 0, R - 4) -- the window, not individual taps, is
// clamped at the borders.  Output values are clamped to [0,1].
// ---------------------------------------------------------------------------

inline double lagrange_product(double u, Index base, int i) {
  double w = 1.0;
  for (int k = 0; k < 4; ++k) {
    if (k == i) continue;
    w *= (u - static_cast<double>(base + k)) / static_cast<double>(i - k);
  }
  return w;
}

inline tactnet::TactileFrame bicubic_oracle(const tactnet::TactileFrame& src, Index out_rows,
                                            Index out_cols) {
  const Index r = src.rows(), c = src.cols();
  if (r < 4 || c < 4) throw std::invalid_argument("bicubic_oracle: source must be at least 4x4");
  const double sr = static_cast<double>(r) / static_cast<double>(out_rows);
  const double sc = static_cast<double>(c) / static_cast<double>(out_cols);

  tactnet::TactileFrame out;
  out.label = src.label;
  out.source_id = src.source_id;
  out.values.resize(out_rows, out_cols);
  for (Index i = 0; i < out_rows; ++i) {
    const double u = static_cast<double>(i) * sr;
    const Index rb = std::clamp<Index>(static_cast<Index>(std::floor(u)) - 1, 0, r - 4);
    for (Index j = 0; j < out_cols; ++j) {
      const double v = static_cast<double>(j) * sc;
      const Index cb = std::clamp<Index>(static_cast<Index>(std::floor(v)) - 1, 0, c - 4);
      double acc = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int bq = 0; bq < 4; ++bq)
          acc += lagrange_product(u, rb, a) * lagrange_product(v, cb, bq) *
                 src.values(rb + a, cb + bq);
      out.values(i, j) = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Central finite differences of an arbitrary scalar function with respect to
// every entry of x, and the matching relative-error reduction.
// ---------------------------------------------------------------------------

inline Tensor<double> numeric_gradient(Tensor<double>& x, const std::function<double()>& loss,
                                       double h = 1e-5) {
  Tensor<double> g(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const Tensor<double>& a, const Tensor<double>& b,
                          double floor = 1e-3) {
  if (a.size() != b.size()) throw std::invalid_argument("max_rel_err: size mismatch");
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::abs(a[i]) + std::abs(b[i]), floor);
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Closed-form parameter audit: counts learnable parameters from the layer
// specifications alone, by formula, never touching the allocated tensors.
// Batch-norm running statistics are not learnable and are excluded.
// ---------------------------------------------------------------------------

inline std::int64_t spec_param_count(const tactnet::LayerSpec& s) {
  using K = tactnet::LayerKind;
  const auto conv = [](std::int64_t f, std::int64_t cin, std::int64_t cout) {
    return f * f * cin * cout + cout;
  };
  const auto bn = [](std::int64_t ch) { return 2 * ch; };
  switch (s.kind) {
    case K::kConv:
      return conv(s.filter, s.in_ch, s.out_ch);
    case K::kBatchNorm:
      return bn(s.in_ch);
    case K::kFullyConnected:
      return static_cast<std::int64_t>(s.fc_in) * s.fc_out + s.fc_out;
    case K::kResidual: {
      std::int64_t total = conv(3, s.in_ch, s.out_ch) + bn(s.out_ch) +
                           conv(3, s.out_ch, s.out_ch) + bn(s.out_ch);
      if (s.projection) total += conv(1, s.in_ch, s.out_ch) + bn(s.out_ch);
      return total;
    }
    default:
      return 0;  // relu / maxpool carry no parameters
  }
}

template <typename S>
std::int64_t param_count_oracle(const tactnet::ModelGraph<S>& graph) {
  std::int64_t total = 0;
  for (const auto& layer : graph.layers) total += spec_param_count(layer.spec);
  return total;
}

// ---------------------------------------------------------------------------
// Test plumbing (not oracles): disposable directories, file slurping and
// random frames.
// ---------------------------------------------------------------------------

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "tactnet-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("TempDir: mkdtemp failed");
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("slurp: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline tactnet::TactileFrame random_frame(tactnet::Rng& rng, Index rows, Index cols,
                                          int label = 0) {
  tactnet::TactileFrame f;
  f.label = label;
  f.source_id = "random";
  f.values.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) f.values(i, j) = rng.uniform();
  return f;
}

}  // namespace oracles
