#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "nucleval/grid.hpp"
#include "nucleval/labelmap.hpp"
#include "nucleval/probloss.hpp"

namespace nucleval {

// Axis-aligned box in continuous pixel coordinates; valid when x2 > x1 and
// y2 > y1.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline void require_valid_box(const Box& b, const char* where) {
  if (!b.valid()) {
    throw std::invalid_argument(std::string(where) + ": degenerate box (" + std::to_string(b.x1) +
                                ", " + std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " +
                                std::to_string(b.y2) + ")");
  }
}

inline double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// One second-stage proposal with its fused posterior. label is the argmax
// foreground class of the posterior and score its probability.
struct Detection {
  Box box;
  ObjectnessScore objectness;
  ClassConditional cond;
  MaskGrid mask;
  ClassPosterior fused;
  int label = 0;
  double score = 0.0;
};

inline Detection make_detection(const Box& box, const ObjectnessScore& objectness,
                                const ClassConditional& cond, const MaskGrid& mask) {
  ClassPosterior fused = fuse_scores(objectness, cond);
  int label = 1;
  for (int c = 2; c <= fused.class_count(); ++c) {
    if (fused[c] > fused[label]) label = c;
  }
  const double score = fused[label];
  return Detection{box, objectness, cond, mask, std::move(fused), label, score};
}

// Greedy class-agnostic suppression: detections are visited in descending
// score order (ties broken by lower input index) and kept iff their box IoU
// with every already-kept box is <= iou_threshold. Output keeps that order.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (box_iou(dets[idx].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[idx]);
  }
  return kept;
}

// Dense C x H x W feature stack, row-major within each channel.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  FeatureMap() = default;

  FeatureMap(int channels, int height, int width, double fill = 0.0)
      : channels(channels),
        height(height),
        width(width),
        values(static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
                   static_cast<std::size_t>(width),
               fill) {
    if (channels < 0 || height < 0 || width < 0) {
      throw std::invalid_argument("FeatureMap: negative extent");
    }
  }

  double& at(int ch, int r, int c) {
    return values[(static_cast<std::size_t>(ch) * static_cast<std::size_t>(height) +
                   static_cast<std::size_t>(r)) *
                      static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(c)];
  }
  double at(int ch, int r, int c) const {
    return values[(static_cast<std::size_t>(ch) * static_cast<std::size_t>(height) +
                   static_cast<std::size_t>(r)) *
                      static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(c)];
  }
};

namespace detail {

// Bilinear interpolation with pixel centers at integer coordinates and
// clamping to the valid grid.
inline double bilinear_sample(const FeatureMap& fm, int ch, double y, double x) {
  x = std::clamp(x, 0.0, static_cast<double>(fm.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(fm.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, fm.width - 1);
  const int y1 = std::min(y0 + 1, fm.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = fm.at(ch, y0, x0) * (1.0 - fx) + fm.at(ch, y0, x1) * fx;
  const double bottom = fm.at(ch, y1, x0) * (1.0 - fx) + fm.at(ch, y1, x1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

inline double bilinear_sample(const RealGrid& g, double y, double x) {
  x = std::clamp(x, 0.0, static_cast<double>(g.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(g.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = g(y0, x0) * (1.0 - fx) + g(y0, x1) * fx;
  const double bottom = g(y1, x0) * (1.0 - fx) + g(y1, x1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace detail

// Samples the box on a regular out_h x out_w bin lattice. Each bin is read
// at sampling_ratio^2 uniformly spaced interior points placed at the centers
// of a sub-lattice, each point bilinearly interpolated, and averaged.
inline FeatureMap roi_align(const FeatureMap& fm, const Box& box, int out_h, int out_w,
                            int sampling_ratio = 2) {
  require_valid_box(box, "roi_align");
  if (fm.channels < 1 || fm.height < 1 || fm.width < 1) {
    throw std::invalid_argument("roi_align: empty feature map");
  }
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("roi_align: output extents must be >= 1");
  if (sampling_ratio < 1) throw std::invalid_argument("roi_align: sampling_ratio must be >= 1");

  const double bin_h = box.height() / out_h;
  const double bin_w = box.width() / out_w;
  const double inv_samples = 1.0 / (sampling_ratio * sampling_ratio);
  FeatureMap out(fm.channels, out_h, out_w);
  for (int ch = 0; ch < fm.channels; ++ch) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        double acc = 0.0;
        for (int sy = 0; sy < sampling_ratio; ++sy) {
          const double y = box.y1 + (i + (sy + 0.5) / sampling_ratio) * bin_h;
          for (int sx = 0; sx < sampling_ratio; ++sx) {
            const double x = box.x1 + (j + (sx + 0.5) / sampling_ratio) * bin_w;
            acc += detail::bilinear_sample(fm, ch, y, x);
          }
        }
        out.at(ch, i, j) = acc * inv_samples;
      }
    }
  }
  return out;
}

namespace detail {

// Mean of a binary grid over the fractional rectangle [y0,y1) x [x0,x1),
// weighting each source pixel by its overlap area.
inline double bin_mean(const BinaryGrid& g, double y0, double y1, double x0, double x1) {
  double sum = 0.0;
  const int r_begin = static_cast<int>(std::floor(y0));
  const int r_end = static_cast<int>(std::ceil(y1));
  const int c_begin = static_cast<int>(std::floor(x0));
  const int c_end = static_cast<int>(std::ceil(x1));
  for (int r = r_begin; r < r_end; ++r) {
    const double wr = std::min(y1, static_cast<double>(r) + 1.0) - std::max(y0, static_cast<double>(r));
    if (wr <= 0.0) continue;
    for (int c = c_begin; c < c_end; ++c) {
      if (g(r, c) == 0) continue;
      const double wc =
          std::min(x1, static_cast<double>(c) + 1.0) - std::max(x0, static_cast<double>(c));
      if (wc <= 0.0) continue;
      sum += wr * wc;
    }
  }
  return sum / ((y1 - y0) * (x1 - x0));
}

}  // namespace detail

// Downscales (or upscales) a binary ground-truth mask to the fixed predicted
// resolution by exact area-weighted average pooling, then thresholds each
// cell at 0.5.
inline MaskGrid resize_mask_to(const BinaryGrid& gt) {
  if (gt.height() < 1 || gt.width() < 1) {
    throw std::invalid_argument("resize_mask_to: empty source mask");
  }
  constexpr int n = MaskGrid::kExtent;
  const double sy = static_cast<double>(gt.height()) / n;
  const double sx = static_cast<double>(gt.width()) / n;
  RealGrid out(n, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double mean = detail::bin_mean(gt, i * sy, (i + 1) * sy, j * sx, (j + 1) * sx);
      out(i, j) = mean >= 0.5 ? 1.0 : 0.0;
    }
  }
  return MaskGrid(std::move(out));
}

// Resamples the fixed-size mask onto the box's pixel footprint, thresholds,
// and writes it into an img_h x img_w binary grid. Pixels outside the image
// are clipped.
inline BinaryGrid paste_mask(const MaskGrid& mask, const Box& box, int img_h, int img_w,
                             double threshold = 0.5) {
  require_valid_box(box, "paste_mask");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("paste_mask: threshold must lie in (0,1)");
  }
  BinaryGrid out(img_h, img_w, 0);
  const int r_begin = std::max(0, static_cast<int>(std::floor(box.y1)));
  const int r_end = std::min(img_h, static_cast<int>(std::ceil(box.y2)));
  const int c_begin = std::max(0, static_cast<int>(std::floor(box.x1)));
  const int c_end = std::min(img_w, static_cast<int>(std::ceil(box.x2)));
  constexpr int n = MaskGrid::kExtent;
  for (int r = r_begin; r < r_end; ++r) {
    const double my = (r + 0.5 - box.y1) / box.height() * n - 0.5;
    for (int c = c_begin; c < c_end; ++c) {
      const double mx = (c + 0.5 - box.x1) / box.width() * n - 0.5;
      const double v = detail::bilinear_sample(mask.grid(), my, mx);
      if (v >= threshold) out(r, c) = 1;
    }
  }
  return out;
}

// Renders detections into a label patch. Detections with score <=
// score_threshold are dropped; survivors are pasted in descending score
// order (ties broken by lower input index) and a pixel claimed by a
// higher-scoring instance is never overwritten. Instance IDs are assigned
// 1, 2, ... in processing order, skipping detections whose pasted mask ends
// up empty.
inline LabelPatch detections_to_labelpatch(const std::vector<Detection>& dets, int img_h,
                                           int img_w, double score_threshold = 0.5) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score > score_threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  LabelPatch patch = LabelPatch::zeros(img_h, img_w);
  std::int32_t next_id = 0;
  for (std::size_t idx : order) {
    const Detection& det = dets[idx];
    const BinaryGrid pasted = paste_mask(det.mask, det.box, img_h, img_w);
    bool wrote = false;
    for (int r = 0; r < img_h; ++r) {
      for (int c = 0; c < img_w; ++c) {
        if (pasted(r, c) == 0 || patch.instance_map(r, c) != 0) continue;
        if (!wrote) {
          ++next_id;
          wrote = true;
        }
        patch.instance_map(r, c) = next_id;
        patch.class_map(r, c) = det.label;
      }
    }
  }
  return patch;
}

}  // namespace nucleval
