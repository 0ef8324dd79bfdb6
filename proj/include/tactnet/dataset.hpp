#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tactnet/image_ops.hpp"
#include "tactnet/io.hpp"
#include "tactnet/rng.hpp"
#include "tactnet/tensor.hpp"

namespace tactnet {

inline const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names = {
      "adhesive", "allen_key", "arm",  "ball",    "bottle",          "box",
      "branch",   "cable",     "cable_pipe", "caliper", "can",       "finger",
      "hand",     "highlighter_pen", "key", "pen",     "pliers",     "rock",
      "rubber",   "scissors",  "sticky_tape", "tube"};
  return names;
}

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<TactileFrame> frames;

  Index size() const { return static_cast<Index>(frames.size()); }
  Index n_classes() const { return static_cast<Index>(class_names.size()); }
};

inline void validate_dataset(const Dataset& ds) {
  require(!ds.class_names.empty(), "dataset: empty class table");
  for (const TactileFrame& f : ds.frames) {
    require(f.label >= 0 && f.label < ds.n_classes(),
            "dataset: frame '" + f.source_id + "' has label " + std::to_string(f.label) +
                " outside the class table");
    require(f.rows() > 0 && f.cols() > 0, "dataset: empty frame '" + f.source_id + "'");
    require((f.values.array() >= 0.0).all() && (f.values.array() <= 1.0).all(),
            "dataset: frame '" + f.source_id + "' has values outside [0,1]");
  }
}

// ---------------------------------------------------------------------------
// TDAT container: magic, version, class-name table, frame count and grid
// size, then one record per frame (label byte + row-major f32 values).
// All frames in one file share a grid size.
// ---------------------------------------------------------------------------

inline constexpr char kDatasetMagic[4] = {'T', 'D', 'A', 'T'};
inline constexpr std::uint16_t kDatasetVersion = 1;

inline void write_dataset_stream(const Dataset& ds, std::ostream& os) {
  validate_dataset(ds);
  const Index rows = ds.frames.empty() ? 0 : ds.frames.front().rows();
  const Index cols = ds.frames.empty() ? 0 : ds.frames.front().cols();
  for (const TactileFrame& f : ds.frames)
    require(f.rows() == rows && f.cols() == cols,
            "write_dataset: mixed grid sizes (expected " + std::to_string(rows) + "x" +
                std::to_string(cols) + ", frame '" + f.source_id + "' is " +
                std::to_string(f.rows()) + "x" + std::to_string(f.cols()) + ")");
  os.write(kDatasetMagic, 4);
  detail::put_u16(os, kDatasetVersion);
  detail::put_u16(os, static_cast<std::uint16_t>(ds.class_names.size()));
  for (const std::string& name : ds.class_names) detail::put_string(os, name);
  detail::put_u32(os, static_cast<std::uint32_t>(ds.frames.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(rows));
  detail::put_u32(os, static_cast<std::uint32_t>(cols));
  for (const TactileFrame& f : ds.frames) {
    os.put(static_cast<char>(f.label));
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) detail::put_f32(os, static_cast<float>(f.values(r, c)));
  }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_dataset: cannot open '" + path + "' for writing");
  write_dataset_stream(ds, os);
  if (!os) throw std::runtime_error("save_dataset: write failed for '" + path + "'");
}

inline Dataset read_dataset_stream(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw std::runtime_error("load_dataset: not a TDAT container");
  const std::uint16_t version = detail::get_u16(is);
  if (version != kDatasetVersion)
    throw std::runtime_error("load_dataset: unsupported version " + std::to_string(version));
  Dataset ds;
  const std::uint16_t n_classes = detail::get_u16(is);
  if (n_classes == 0) throw std::runtime_error("load_dataset: empty class table");
  ds.class_names.reserve(n_classes);
  for (std::uint16_t i = 0; i < n_classes; ++i) ds.class_names.push_back(detail::get_string(is));
  const std::uint32_t n = detail::get_u32(is);
  const auto rows = static_cast<Index>(detail::get_u32(is));
  const auto cols = static_cast<Index>(detail::get_u32(is));
  if (n > 0 && (rows <= 0 || cols <= 0 || rows * cols > (Index(1) << 24)))
    throw std::runtime_error("load_dataset: implausible grid size");
  ds.frames.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    TactileFrame f;
    const int label = is.get();
    if (label < 0) throw std::runtime_error("load_dataset: truncated frame record");
    if (label >= n_classes)
      throw std::runtime_error("load_dataset: frame " + std::to_string(i) + " has label " +
                               std::to_string(label) + " outside the class table");
    f.label = label;
    f.values.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) f.values(r, c) = detail::get_f32(is);
    f.source_id = ds.class_names[static_cast<std::size_t>(label)] + "_" + std::to_string(i);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
  Dataset ds = read_dataset_stream(is);
  is.peek();
  if (!is.eof()) throw std::runtime_error("load_dataset: trailing bytes in '" + path + "'");
  return ds;
}

// Checksum of the serialized container; stable across runs for equal content.
inline std::uint64_t dataset_checksum(const Dataset& ds) {
  std::ostringstream os(std::ios::binary);
  write_dataset_stream(ds, os);
  const std::string bytes = os.str();
  return fnv1a64(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// splits: per-class shuffle, then fixed 32 train / 8 val / 10 test per class
// ---------------------------------------------------------------------------

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<Index> train, val, test;
};

inline constexpr Index kTrainPerClass = 32;
inline constexpr Index kValPerClass = 8;
inline constexpr Index kTestPerClass = 10;

inline SplitPlan make_splits(const Dataset& ds, std::uint64_t seed) {
  validate_dataset(ds);
  const Index need = kTrainPerClass + kValPerClass + kTestPerClass;
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(ds.n_classes()));
  for (Index i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.frames[static_cast<std::size_t>(i)].label)].push_back(i);
  SplitPlan plan;
  plan.seed = seed;
  for (Index k = 0; k < ds.n_classes(); ++k) {
    auto& ids = by_class[static_cast<std::size_t>(k)];
    require(static_cast<Index>(ids.size()) >= need,
            "make_splits: class '" + ds.class_names[static_cast<std::size_t>(k)] + "' has " +
                std::to_string(ids.size()) + " frames, needs at least " + std::to_string(need));
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(k)));
    rng.shuffle(ids);
    auto it = ids.begin();
    plan.train.insert(plan.train.end(), it, it + kTrainPerClass);
    it += kTrainPerClass;
    plan.val.insert(plan.val.end(), it, it + kValPerClass);
    it += kValPerClass;
    plan.test.insert(plan.test.end(), it, it + kTestPerClass);
  }
  return plan;
}

inline std::vector<TactileFrame> gather(const Dataset& ds, const std::vector<Index>& indices) {
  std::vector<TactileFrame> out;
  out.reserve(indices.size());
  for (Index i : indices) {
    require(i >= 0 && i < ds.size(), "gather: index " + std::to_string(i) + " out of range");
    out.push_back(ds.frames[static_cast<std::size_t>(i)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

template <typename S = float>
Tensor<S> frames_to_batch(const std::vector<TactileFrame>& frames) {
  require(!frames.empty(), "frames_to_batch: no frames");
  const Index rows = frames.front().rows();
  const Index cols = frames.front().cols();
  Tensor<S> batch({static_cast<Index>(frames.size()), rows, cols, Index(1)});
  S* dst = batch.data();
  for (const TactileFrame& f : frames) {
    require(f.rows() == rows && f.cols() == cols, "frames_to_batch: mixed grid sizes");
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) *dst++ = static_cast<S>(f.values(r, c));
  }
  return batch;
}

inline std::vector<int> labels_of(const std::vector<TactileFrame>& frames) {
  std::vector<int> labels;
  labels.reserve(frames.size());
  for (const TactileFrame& f : frames) labels.push_back(f.label);
  return labels;
}

// ---------------------------------------------------------------------------
// synthetic pressure frames: each class is a distinct contact silhouette
// built from signed-distance primitives, rendered with a smooth pressure
// skirt, posed with small per-frame jitter, and dusted with sensor noise.
// ---------------------------------------------------------------------------

namespace shapes {

using Vec2 = Eigen::Vector2d;

inline double sd_circle(const Vec2& p, const Vec2& c, double r) { return (p - c).norm() - r; }

inline double sd_segment(const Vec2& p, const Vec2& a, const Vec2& b, double r) {
  const Vec2 pa = p - a, ba = b - a;
  const double h = std::clamp(pa.dot(ba) / ba.squaredNorm(), 0.0, 1.0);
  return (pa - ba * h).norm() - r;
}

inline double sd_box(const Vec2& p, const Vec2& c, const Vec2& half) {
  const Vec2 d = (p - c).cwiseAbs() - half;
  return d.cwiseMax(0.0).norm() + std::min(std::max(d.x(), d.y()), 0.0);
}

inline double sd_ring(const Vec2& p, const Vec2& c, double radius, double width) {
  return std::abs((p - c).norm() - radius) - width;
}

// open arc of a ring between angles a0..a1 (radians, counter-clockwise)
inline double sd_arc(const Vec2& p, const Vec2& c, double radius, double width, double a0,
                     double a1) {
  const Vec2 d = p - c;
  double ang = std::atan2(d.y(), d.x());
  while (ang < a0) ang += 2.0 * M_PI;
  if (ang <= a1) return std::abs(d.norm() - radius) - width;
  const Vec2 e0 = c + radius * Vec2(std::cos(a0), std::sin(a0));
  const Vec2 e1 = c + radius * Vec2(std::cos(a1), std::sin(a1));
  return std::min((p - e0).norm(), (p - e1).norm()) - width;
}

// capsule whose radius tapers from ra at a to rb at b
inline double sd_taper(const Vec2& p, const Vec2& a, const Vec2& b, double ra, double rb) {
  const Vec2 pa = p - a, ba = b - a;
  const double h = std::clamp(pa.dot(ba) / ba.squaredNorm(), 0.0, 1.0);
  return (pa - ba * h).norm() - (ra + (rb - ra) * h);
}

struct Pose {
  double cos_t = 1.0, sin_t = 0.0, scale = 1.0;
  Vec2 shift = Vec2::Zero();
  Vec2 apply(const Vec2& p) const {
    const Vec2 q = p - shift;
    return Vec2(cos_t * q.x() + sin_t * q.y(), -sin_t * q.x() + cos_t * q.y()) / scale;
  }
};

inline Pose random_pose(Rng& rng) {
  Pose pose;
  const double theta = rng.uniform(-0.21, 0.21);  // about +/-12 degrees
  pose.cos_t = std::cos(theta);
  pose.sin_t = std::sin(theta);
  pose.scale = rng.uniform(0.9, 1.1);
  pose.shift = Vec2(rng.uniform(-0.12, 0.12), rng.uniform(-0.10, 0.10));
  return pose;
}

using Sdf = std::function<double(const Vec2&)>;

// Per-class silhouettes on a canvas where y spans [-1,1] and x spans
// [-aspect, aspect].  Order matches default_class_names().
inline Sdf make_shape(int cls, Rng& rng) {
  auto u = [&rng](double lo, double hi) { return rng.uniform(lo, hi); };
  switch (cls) {
    case 0: {  // adhesive: wide open tape arc
      const double r = u(0.55, 0.65), w = u(0.14, 0.18), start = u(-0.4, 0.1);
      return [=](const Vec2& p) { return sd_arc(p, Vec2(0, 0), r, w, start, start + 3.6); };
    }
    case 1: {  // allen_key: L of two thin arms
      const double long_len = u(1.0, 1.2), short_len = u(0.45, 0.6), r = 0.09;
      return [=](const Vec2& p) {
        const Vec2 corner(-long_len / 2, 0.25);
        return std::min(sd_segment(p, corner, corner + Vec2(long_len, 0), r),
                        sd_segment(p, corner, corner + Vec2(0, -short_len), r));
      };
    }
    case 2: {  // arm: single fat bar across the pad
      const double half = u(0.55, 0.7), r = u(0.33, 0.4);
      return [=](const Vec2& p) { return sd_segment(p, Vec2(-half, 0), Vec2(half, 0), r); };
    }
    case 3: {  // ball: solid disc
      const double r = u(0.4, 0.5);
      return [=](const Vec2& p) { return sd_circle(p, Vec2(0, 0), r); };
    }
    case 4: {  // bottle: body ring plus neck stem
      const double r = u(0.42, 0.5), w = 0.11, neck = u(0.55, 0.75);
      return [=](const Vec2& p) {
        return std::min(sd_ring(p, Vec2(-0.35, 0), r, w),
                        sd_segment(p, Vec2(-0.35 + r, 0), Vec2(-0.35 + r + neck, 0), 0.13));
      };
    }
    case 5: {  // box: hollow rectangle outline
      const Vec2 half(u(0.55, 0.7), u(0.38, 0.48));
      return [=](const Vec2& p) { return std::abs(sd_box(p, Vec2(0, 0), half)) - 0.09; };
    }
    case 6: {  // branch: bent limb with a twig
      const double bend = u(0.25, 0.4);
      return [=](const Vec2& p) {
        const Vec2 a(-0.8, -bend), m(0.0, bend), b(0.8, -bend * 0.3);
        const Vec2 twig = m + Vec2(0.35, 0.45);
        return std::min({sd_segment(p, a, m, 0.12), sd_segment(p, m, b, 0.11),
                         sd_segment(p, m, twig, 0.08)});
      };
    }
    case 7: {  // cable: thin sinuous strand
      const double amp = u(0.25, 0.4), phase = u(0.0, 2.0 * M_PI);
      return [=](const Vec2& p) {
        double best = 1e9;
        Vec2 prev(-1.35, amp * std::sin(phase - 1.35 * 3.2));
        for (int i = 1; i <= 12; ++i) {
          const double x = -1.35 + 2.7 * i / 12.0;
          const Vec2 next(x, amp * std::sin(phase + x * 3.2));
          best = std::min(best, sd_segment(p, prev, next, 0.07));
          prev = next;
        }
        return best;
      };
    }
    case 8: {  // cable_pipe: fat hollow conduit
      const double half = u(0.75, 0.95), r = u(0.3, 0.36);
      return [=](const Vec2& p) {
        return std::abs(sd_segment(p, Vec2(-half, 0), Vec2(half, 0), r)) - 0.09;
      };
    }
    case 9: {  // caliper: spine with two parallel jaws
      const double gap = u(0.5, 0.7), jaw = u(0.5, 0.65);
      return [=](const Vec2& p) {
        const Vec2 base(-0.6, 0);
        return std::min({sd_segment(p, base + Vec2(0, -gap / 2), base + Vec2(0, gap / 2), 0.10),
                         sd_segment(p, base + Vec2(0, gap / 2), base + Vec2(jaw, gap / 2), 0.08),
                         sd_segment(p, base + Vec2(0, -gap / 2), base + Vec2(jaw * 0.8, -gap / 2),
                                    0.08)});
      };
    }
    case 10: {  // can: circular rim
      const double r = u(0.5, 0.6);
      return [=](const Vec2& p) { return sd_ring(p, Vec2(0, 0), r, 0.09); };
    }
    case 11: {  // finger: single fingertip pad
      const double len = u(0.35, 0.45);
      return [=](const Vec2& p) {
        return sd_taper(p, Vec2(-len / 2, 0), Vec2(len / 2, 0), 0.16, 0.24);
      };
    }
    case 12: {  // hand: palm with a fan of fingertips
      const double palm = u(0.32, 0.38);
      return [=](const Vec2& p) {
        double best = sd_circle(p, Vec2(-0.25, 0), palm);
        for (int i = 0; i < 4; ++i) {
          const double ang = -0.55 + 0.37 * i;
          const Vec2 tip = Vec2(-0.25, 0) + (palm + 0.42) * Vec2(std::cos(ang), std::sin(ang));
          best = std::min(best, sd_circle(p, tip, 0.11));
        }
        const Vec2 thumb = Vec2(-0.25, 0) + (palm + 0.3) * Vec2(std::cos(1.9), std::sin(1.9));
        return std::min(best, sd_circle(p, thumb, 0.10));
      };
    }
    case 13: {  // highlighter_pen: chisel body tapering to a wide tip
      const double len = u(0.9, 1.1);
      return [=](const Vec2& p) {
        return sd_taper(p, Vec2(-len / 2, 0), Vec2(len / 2, 0), 0.22, 0.08);
      };
    }
    case 14: {  // key: head ring, shaft and teeth
      const double shaft = u(0.75, 0.9);
      return [=](const Vec2& p) {
        const Vec2 head(-0.7, 0);
        double best = sd_ring(p, head, 0.22, 0.08);
        best = std::min(best, sd_segment(p, head + Vec2(0.22, 0), head + Vec2(0.22 + shaft, 0),
                                         0.07));
        const double tip_x = head.x() + 0.22 + shaft;
        best = std::min(best, sd_segment(p, Vec2(tip_x - 0.05, 0), Vec2(tip_x - 0.05, -0.18),
                                         0.05));
        best = std::min(best, sd_segment(p, Vec2(tip_x - 0.28, 0), Vec2(tip_x - 0.28, -0.14),
                                         0.05));
        return best;
      };
    }
    case 15: {  // pen: long slim rod
      const double half = u(0.75, 0.95);
      return [=](const Vec2& p) { return sd_segment(p, Vec2(-half, 0), Vec2(half, 0), 0.09); };
    }
    case 16: {  // pliers: two arms crossing at a pivot
      const double spread = u(0.3, 0.42);
      return [=](const Vec2& p) {
        const Vec2 pivot(0.1, 0);
        return std::min(
            sd_segment(p, pivot + Vec2(-1.0, -spread), pivot + Vec2(0.55, spread * 0.9), 0.11),
            sd_segment(p, pivot + Vec2(-1.0, spread), pivot + Vec2(0.55, -spread * 0.9), 0.11));
      };
    }
    case 17: {  // rock: irregular cluster of lobes
      Vec2 lobe1(u(-0.15, 0.05), u(-0.1, 0.1));
      Vec2 lobe2 = lobe1 + Vec2(u(0.2, 0.35), u(0.05, 0.2));
      Vec2 lobe3 = lobe1 + Vec2(u(-0.05, 0.15), u(-0.3, -0.15));
      double r1 = u(0.26, 0.34), r2 = u(0.18, 0.26), r3 = u(0.16, 0.24);
      return [=](const Vec2& p) {
        return std::min({sd_circle(p, lobe1, r1), sd_circle(p, lobe2, r2),
                         sd_circle(p, lobe3, r3)});
      };
    }
    case 18: {  // rubber: small solid block
      const Vec2 half(u(0.4, 0.5), u(0.22, 0.3));
      return [=](const Vec2& p) { return sd_box(p, Vec2(0, 0), half); };
    }
    case 19: {  // scissors: crossed blades with handle loops
      const double spread = u(0.22, 0.3);
      return [=](const Vec2& p) {
        const Vec2 pivot(0.15, 0);
        double best =
            std::min(sd_segment(p, pivot, pivot + Vec2(0.85, spread), 0.07),
                     sd_segment(p, pivot, pivot + Vec2(0.85, -spread), 0.07));
        best = std::min(best, sd_ring(p, pivot + Vec2(-0.55, 0.3), 0.16, 0.06));
        best = std::min(best, sd_ring(p, pivot + Vec2(-0.55, -0.3), 0.16, 0.06));
        best = std::min(best, sd_segment(p, pivot, pivot + Vec2(-0.42, 0.25), 0.06));
        return std::min(best, sd_segment(p, pivot, pivot + Vec2(-0.42, -0.25), 0.06));
      };
    }
    case 20: {  // sticky_tape: small roll beside its pulled tab
      const double r = u(0.3, 0.36);
      return [=](const Vec2& p) {
        return std::min(sd_ring(p, Vec2(-0.45, 0), r, 0.10),
                        sd_segment(p, Vec2(-0.45 + r, -r), Vec2(0.85, -r), 0.07));
      };
    }
    case 21: {  // tube: medium solid cylinder side-on
      const double half = u(0.65, 0.85), r = u(0.17, 0.22);
      return [=](const Vec2& p) { return sd_segment(p, Vec2(-half, 0), Vec2(half, 0), r); };
    }
    default:
      throw std::invalid_argument("make_shape: class index " + std::to_string(cls) +
                                  " out of range");
  }
}

}  // namespace shapes

// Full pressure inside the contact, smooth skirt outside.
inline double pressure_profile(double sdf, double skirt = 0.10) {
  if (sdf <= 0.0) return 1.0;
  const double t = sdf / skirt;
  return std::exp(-t * t);
}

inline TactileFrame synthesize_frame(int cls, const std::string& class_name, Rng& rng,
                                     Index rows = kNativeRows, Index cols = kNativeCols) {
  shapes::Sdf sdf = shapes::make_shape(cls, rng);
  const shapes::Pose pose = shapes::random_pose(rng);
  const double peak = rng.uniform(0.3, 1.0);
  const double half_rows = (static_cast<double>(rows) - 1.0) / 2.0;
  const double half_cols = (static_cast<double>(cols) - 1.0) / 2.0;

  TactileFrame frame;
  frame.label = cls;
  frame.values.resize(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const shapes::Vec2 p((static_cast<double>(c) - half_cols) / half_rows,
                           (static_cast<double>(r) - half_rows) / half_rows);
      const double d = sdf(pose.apply(p)) * pose.scale;
      double v = peak * pressure_profile(d) + rng.normal(0.0, 0.02);
      v = std::clamp(v, 0.0, 1.0);
      // values travel as f32 in the container; quantize now so that
      // synthesize -> save -> load round-trips bit-exactly
      frame.values(r, c) = static_cast<double>(static_cast<float>(v));
    }
  }
  frame.source_id = class_name;
  return frame;
}

inline Dataset synthesize_dataset(std::uint64_t seed, Index per_class = 50,
                                  Index rows = kNativeRows, Index cols = kNativeCols) {
  require(per_class > 0, "synthesize_dataset: per_class must be positive");
  require(rows >= 4 && cols >= 4, "synthesize_dataset: grid too small");
  Dataset ds;
  ds.class_names = default_class_names();
  ds.frames.reserve(static_cast<std::size_t>(ds.n_classes() * per_class));
  for (Index cls = 0; cls < ds.n_classes(); ++cls) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(cls)));
    for (Index i = 0; i < per_class; ++i) {
      TactileFrame f = synthesize_frame(static_cast<int>(cls),
                                        ds.class_names[static_cast<std::size_t>(cls)], rng, rows,
                                        cols);
      f.source_id += "_" + std::to_string(i);
      ds.frames.push_back(std::move(f));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// frame CSV: plain comma-separated grid, one file per frame, filenames
// shaped like <class>_<id>.csv
// ---------------------------------------------------------------------------

inline void write_frame_csv(const TactileFrame& frame, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_frame_csv: cannot open '" + path + "'");
  char buf[64];
  for (Index r = 0; r < frame.rows(); ++r) {
    for (Index c = 0; c < frame.cols(); ++c) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), frame.values(r, c));
      if (ec != std::errc{}) throw std::runtime_error("write_frame_csv: value formatting failed");
      if (c) os.put(',');
      os.write(buf, end - buf);
    }
    os.put('\n');
  }
  if (!os) throw std::runtime_error("write_frame_csv: write failed for '" + path + "'");
}

inline Eigen::MatrixXd read_frame_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_frame_csv: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    const char* ptr = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      while (ptr < end && (*ptr == ' ' || *ptr == '\t')) ++ptr;
      double v;
      const auto [next, ec] = std::from_chars(ptr, end, v);
      if (ec != std::errc{})
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected a number, got '" + std::string(ptr, end) + "'");
      row.push_back(v);
      ptr = next;
      while (ptr < end && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
      if (ptr == end) break;
      if (*ptr != ',')
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected ',' between values");
      ++ptr;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": ragged row (" +
                               std::to_string(row.size()) + " values, expected " +
                               std::to_string(rows.front().size()) + ")");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

// splits "<class>_<id>" on the final underscore; id must be all digits
inline bool split_frame_stem(const std::string& stem, std::string& cls, std::string& id) {
  const auto pos = stem.rfind('_');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= stem.size()) return false;
  id = stem.substr(pos + 1);
  if (!std::all_of(id.begin(), id.end(), [](unsigned char ch) { return std::isdigit(ch); }))
    return false;
  cls = stem.substr(0, pos);
  return true;
}

// Builds a dataset from a directory of frame CSVs; the class table is the
// sorted set of class names found in the filenames.
inline Dataset import_frames_csv(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), "import_frames_csv: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  require(!files.empty(), "import_frames_csv: no .csv files in '" + dir + "'");
  std::sort(files.begin(), files.end());

  std::vector<std::pair<std::string, fs::path>> named;  // (class, file)
  std::vector<std::string> classes;
  for (const fs::path& f : files) {
    std::string cls, id;
    if (!split_frame_stem(f.stem().string(), cls, id))
      throw std::runtime_error("import_frames_csv: filename '" + f.filename().string() +
                               "' does not match <class>_<id>.csv");
    named.emplace_back(cls, f);
    classes.push_back(cls);
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  Dataset ds;
  ds.class_names = classes;
  ds.frames.reserve(named.size());
  for (const auto& [cls, f] : named) {
    TactileFrame frame;
    frame.values = read_frame_csv(f.string());
    require((frame.values.array() >= 0.0).all() && (frame.values.array() <= 1.0).all(),
            "import_frames_csv: '" + f.filename().string() + "' has values outside [0,1]");
    frame.label = static_cast<int>(
        std::lower_bound(classes.begin(), classes.end(), cls) - classes.begin());
    frame.source_id = f.stem().string();
    ds.frames.push_back(std::move(frame));
  }
  const Index rows = ds.frames.front().rows(), cols = ds.frames.front().cols();
  for (const TactileFrame& f : ds.frames)
    require(f.rows() == rows && f.cols() == cols,
            "import_frames_csv: '" + f.source_id + "' grid size differs from the rest");
  return ds;
}

}  // namespace tactnet
