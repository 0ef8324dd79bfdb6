#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "tactnet/rng.hpp"
#include "tactnet/tensor.hpp"

namespace tactnet {

// Native sensor geometry: 1400 tactels in a 28x50 grid, full scale 34 kPa.
inline constexpr Index kNativeRows = 28;
inline constexpr Index kNativeCols = 50;
inline constexpr double kFullScaleKpa = 34.0;
inline constexpr int kNumClasses = 22;

// One pressure image, values normalized to [0,1] of full scale.
struct TactileFrame {
  Eigen::MatrixXd values;  // rows x cols
  int label = -1;          // 0..21, or -1 when unlabeled
  std::string source_id;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

// ---------------------------------------------------------------------------
// Bicubic resize.  Each output pixel is the Lagrange-cubic combination of its
// 4x4 source neighbourhood; the 1-d weights along each axis are the cubic
// Lagrange basis at the mapped source coordinate, so they sum to 1 and the
// resize is exact on polynomials up to degree 3.  At the borders the window
// (not the individual taps) is clamped into range, which keeps the nodes
// distinct and preserves polynomial exactness.
// ---------------------------------------------------------------------------

struct CubicTaps {
  std::array<Index, 4> node = {0, 0, 0, 0};
  std::array<double, 4> weight = {0.0, 0.0, 0.0, 0.0};
  int count = 0;
};

// Lagrange weights for source coordinate u over a window of `count` integer
// nodes starting at the clamped base index.
inline CubicTaps cubic_taps(double u, Index extent) {
  CubicTaps t;
  t.count = static_cast<int>(std::min<Index>(4, extent));
  const Index lo = static_cast<Index>(std::floor(u)) - 1;
  const Index base = std::clamp<Index>(lo, 0, extent - t.count);
  for (int i = 0; i < t.count; ++i) t.node[static_cast<std::size_t>(i)] = base + i;
  for (int i = 0; i < t.count; ++i) {
    double w = 1.0;
    for (int k = 0; k < t.count; ++k) {
      if (k == i) continue;
      w *= (u - static_cast<double>(base + k)) / static_cast<double>(i - k);
    }
    t.weight[static_cast<std::size_t>(i)] = w;
  }
  return t;
}

inline TactileFrame bicubic_resize(const TactileFrame& frame, Index out_rows, Index out_cols) {
  const Index r = frame.rows(), c = frame.cols();
  require(r >= 2 && c >= 2, "bicubic_resize: source must be at least 2x2, got " +
                                std::to_string(r) + "x" + std::to_string(c));
  require(out_rows >= 2 && out_cols >= 2, "bicubic_resize: target must be at least 2x2");

  const double scale_r = static_cast<double>(r) / static_cast<double>(out_rows);
  const double scale_c = static_cast<double>(c) / static_cast<double>(out_cols);

  std::vector<CubicTaps> row_taps(static_cast<std::size_t>(out_rows));
  std::vector<CubicTaps> col_taps(static_cast<std::size_t>(out_cols));
  for (Index i = 0; i < out_rows; ++i)
    row_taps[static_cast<std::size_t>(i)] = cubic_taps(static_cast<double>(i) * scale_r, r);
  for (Index j = 0; j < out_cols; ++j)
    col_taps[static_cast<std::size_t>(j)] = cubic_taps(static_cast<double>(j) * scale_c, c);

  TactileFrame out;
  out.label = frame.label;
  out.source_id = frame.source_id;
  out.values.resize(out_rows, out_cols);
  for (Index i = 0; i < out_rows; ++i) {
    const CubicTaps& rt = row_taps[static_cast<std::size_t>(i)];
    for (Index j = 0; j < out_cols; ++j) {
      const CubicTaps& ct = col_taps[static_cast<std::size_t>(j)];
      double acc = 0.0;
      for (int a = 0; a < rt.count; ++a) {
        double row_acc = 0.0;
        for (int b = 0; b < ct.count; ++b)
          row_acc += ct.weight[static_cast<std::size_t>(b)] *
                     frame.values(rt.node[static_cast<std::size_t>(a)],
                                  ct.node[static_cast<std::size_t>(b)]);
        acc += rt.weight[static_cast<std::size_t>(a)] * row_acc;
      }
      out.values(i, j) = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

// All three channels carry the same pressure map.
template <typename S = float>
Tensor<S> replicate_channels(const TactileFrame& frame) {
  const Index r = frame.rows(), c = frame.cols();
  Tensor<S> out({r, c, 3});
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) {
      const S v = static_cast<S>(frame.values(i, j));
      out(i, j, 0) = v;
      out(i, j, 1) = v;
      out(i, j, 2) = v;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Resolution ladder: ~x1/16 .. x1 of the 28x50 sensor grid.
// ---------------------------------------------------------------------------

enum class ResolutionLevel { kSixteenth, kEighth, kQuarter, kHalf, kFull };

inline constexpr std::array<ResolutionLevel, 5> kResolutionLadder = {
    ResolutionLevel::kSixteenth, ResolutionLevel::kEighth, ResolutionLevel::kQuarter,
    ResolutionLevel::kHalf, ResolutionLevel::kFull};

inline std::pair<Index, Index> resolution_grid(ResolutionLevel level) {
  switch (level) {
    case ResolutionLevel::kSixteenth: return {7, 13};
    case ResolutionLevel::kEighth: return {10, 18};
    case ResolutionLevel::kQuarter: return {14, 25};
    case ResolutionLevel::kHalf: return {20, 35};
    case ResolutionLevel::kFull: return {28, 50};
  }
  throw std::invalid_argument("resolution_grid: unknown level");
}

inline std::string resolution_name(ResolutionLevel level) {
  switch (level) {
    case ResolutionLevel::kSixteenth: return "1/16";
    case ResolutionLevel::kEighth: return "1/8";
    case ResolutionLevel::kQuarter: return "1/4";
    case ResolutionLevel::kHalf: return "1/2";
    case ResolutionLevel::kFull: return "1";
  }
  throw std::invalid_argument("resolution_name: unknown level");
}

inline ResolutionLevel resolution_from_name(const std::string& name) {
  for (ResolutionLevel level : kResolutionLadder)
    if (resolution_name(level) == name) return level;
  throw std::invalid_argument("unknown resolution level '" + name +
                              "' (expected 1/16, 1/8, 1/4, 1/2 or 1)");
}

inline TactileFrame degrade_resolution(const TactileFrame& frame, ResolutionLevel level) {
  const auto [rows, cols] = resolution_grid(level);
  if (level == ResolutionLevel::kFull && frame.rows() == rows && frame.cols() == cols)
    return frame;
  return bicubic_resize(frame, rows, cols);
}

// ---------------------------------------------------------------------------
// Label-preserving augmentation: reflections, small rotations (bilinear, zero
// fill) and integer translations (zero fill).
// ---------------------------------------------------------------------------

struct AugmentationSpec {
  enum class Kind { kIdentity, kHorizontalReflection, kVerticalReflection, kRotation, kTranslation };
  Kind kind = Kind::kIdentity;
  double angle_deg = 0.0;  // rotation, |angle| <= 15
  int dx = 0;              // translation along columns, |dx| <= 7 at native width
  int dy = 0;              // translation along rows, |dy| <= 4 at native height

  static AugmentationSpec identity() { return {}; }
  static AugmentationSpec horizontal_reflection() { return {Kind::kHorizontalReflection, 0.0, 0, 0}; }
  static AugmentationSpec vertical_reflection() { return {Kind::kVerticalReflection, 0.0, 0, 0}; }
  static AugmentationSpec rotation(double angle_deg) { return {Kind::kRotation, angle_deg, 0, 0}; }
  static AugmentationSpec translation(int dx, int dy) { return {Kind::kTranslation, 0.0, dx, dy}; }
};

// Translation bounds scale with the frame so shifted objects stay in frame;
// at native 28x50 they are the documented +-7 / +-4 tactels.
inline std::pair<int, int> translation_bounds(Index rows, Index cols) {
  const int max_dx = std::max(1, static_cast<int>(7 * cols / kNativeCols));
  const int max_dy = std::max(1, static_cast<int>(4 * rows / kNativeRows));
  return {max_dx, max_dy};
}

inline TactileFrame augment(const TactileFrame& frame, const AugmentationSpec& spec) {
  using Kind = AugmentationSpec::Kind;
  const Index r = frame.rows(), c = frame.cols();
  TactileFrame out;
  out.label = frame.label;
  out.source_id = frame.source_id;

  switch (spec.kind) {
    case Kind::kIdentity:
      out.values = frame.values;
      break;
    case Kind::kHorizontalReflection:
      out.values = frame.values.rowwise().reverse();
      break;
    case Kind::kVerticalReflection:
      out.values = frame.values.colwise().reverse();
      break;
    case Kind::kRotation: {
      require(std::abs(spec.angle_deg) <= 15.0, "augment: |rotation angle| must be <= 15 degrees");
      const double theta = spec.angle_deg * std::numbers::pi / 180.0;
      const double ct = std::cos(theta), st = std::sin(theta);
      const double cy = (static_cast<double>(r) - 1.0) / 2.0;
      const double cx = (static_cast<double>(c) - 1.0) / 2.0;
      out.values.setZero(r, c);
      // inverse mapping + bilinear sample, zero outside
      for (Index i = 0; i < r; ++i) {
        for (Index j = 0; j < c; ++j) {
          const double yr = static_cast<double>(i) - cy;
          const double xr = static_cast<double>(j) - cx;
          const double sy = ct * yr + st * xr + cy;
          const double sx = -st * yr + ct * xr + cx;
          const Index y0 = static_cast<Index>(std::floor(sy));
          const Index x0 = static_cast<Index>(std::floor(sx));
          const double fy = sy - static_cast<double>(y0);
          const double fx = sx - static_cast<double>(x0);
          auto sample = [&](Index y, Index x) -> double {
            return (y >= 0 && y < r && x >= 0 && x < c) ? frame.values(y, x) : 0.0;
          };
          out.values(i, j) = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                             fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
        }
      }
      break;
    }
    case Kind::kTranslation: {
      const auto [max_dx, max_dy] = translation_bounds(r, c);
      require(std::abs(spec.dx) <= max_dx && std::abs(spec.dy) <= max_dy,
              "augment: translation (" + std::to_string(spec.dx) + "," + std::to_string(spec.dy) +
                  ") exceeds bounds (+-" + std::to_string(max_dx) + ",+-" + std::to_string(max_dy) +
                  ")");
      out.values.setZero(r, c);
      for (Index i = 0; i < r; ++i) {
        const Index si = i - spec.dy;
        if (si < 0 || si >= r) continue;
        for (Index j = 0; j < c; ++j) {
          const Index sj = j - spec.dx;
          if (sj < 0 || sj >= c) continue;
          out.values(i, j) = frame.values(si, sj);
        }
      }
      break;
    }
  }
  return out;
}

// x6 expansion: identity, both reflections, rotations by +-10 degrees and one
// seeded random translation per frame.  Outputs keep their source's label and
// carry a lineage suffix on the source id.
inline std::vector<TactileFrame> expand_set(const std::vector<TactileFrame>& frames,
                                            int factor, std::uint64_t rng_seed) {
  require(factor == 6, "expand_set: only the x6 expansion is defined");
  Rng rng(rng_seed);
  std::vector<TactileFrame> out;
  out.reserve(frames.size() * 6);
  const char* suffix[6] = {"#id", "#hr", "#vr", "#r+10", "#r-10", "#tr"};
  for (const TactileFrame& f : frames) {
    const auto [max_dx, max_dy] = translation_bounds(f.rows(), f.cols());
    const AugmentationSpec specs[6] = {
        AugmentationSpec::identity(),
        AugmentationSpec::horizontal_reflection(),
        AugmentationSpec::vertical_reflection(),
        AugmentationSpec::rotation(10.0),
        AugmentationSpec::rotation(-10.0),
        AugmentationSpec::translation(static_cast<int>(rng.uniform_int(-max_dx, max_dx)),
                                      static_cast<int>(rng.uniform_int(-max_dy, max_dy))),
    };
    for (int k = 0; k < 6; ++k) {
      TactileFrame a = augment(f, specs[k]);
      a.source_id = f.source_id + suffix[k];
      out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace tactnet
