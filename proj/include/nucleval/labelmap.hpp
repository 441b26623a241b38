#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nucleval/errors.hpp"
#include "nucleval/grid.hpp"

namespace nucleval {

// CoNIC nucleus classes: neutrophil, epithelial, lymphocyte, plasma,
// eosinophil, connective.
inline constexpr int kDefaultClassCount = 6;

struct Pixel {
  int row = 0;
  int col = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

// Tight integer bounding box, inclusive on both ends.
struct PixelBox {
  int min_row = 0;
  int min_col = 0;
  int max_row = 0;
  int max_col = 0;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

// Paired instance-ID / class-ID maps for one patch. ID 0 is background in
// both maps, and a pixel is background in one iff it is in the other.
struct LabelPatch {
  IdGrid instance_map;
  IdGrid class_map;

  int height() const { return instance_map.height(); }
  int width() const { return instance_map.width(); }

  static LabelPatch zeros(int height, int width) {
    return LabelPatch{IdGrid(height, width, 0), IdGrid(height, width, 0)};
  }

  friend bool operator==(const LabelPatch&, const LabelPatch&) = default;
};

// One labeled instance. `pixels` is sorted in raster order with no
// duplicates.
struct InstanceRecord {
  std::int32_t id = 0;
  std::int32_t class_id = 0;
  std::vector<Pixel> pixels;
  PixelBox bbox;

  int area() const { return static_cast<int>(pixels.size()); }
};

// Structural invariants only: equal map shapes, background agreement between
// the two maps, non-negative IDs, one class per instance. Throws
// IntegrityError naming the first offending pixel or instance.
inline void validate_label_patch(const LabelPatch& patch) {
  if (!patch.instance_map.same_shape(patch.class_map)) {
    throw IntegrityError("label patch: instance map is " +
                         std::to_string(patch.instance_map.height()) + "x" +
                         std::to_string(patch.instance_map.width()) + " but class map is " +
                         std::to_string(patch.class_map.height()) + "x" +
                         std::to_string(patch.class_map.width()));
  }
  std::unordered_map<std::int32_t, std::int32_t> class_of;
  for (int r = 0; r < patch.height(); ++r) {
    for (int c = 0; c < patch.width(); ++c) {
      const std::int32_t id = patch.instance_map(r, c);
      const std::int32_t cls = patch.class_map(r, c);
      const std::string at = "pixel (" + std::to_string(r) + ", " + std::to_string(c) + ")";
      if (id < 0) throw IntegrityError(at + ": negative instance ID " + std::to_string(id));
      if (cls < 0) throw IntegrityError(at + ": negative class ID " + std::to_string(cls));
      if ((id == 0) != (cls == 0)) {
        throw IntegrityError(at + ": instance ID " + std::to_string(id) + " with class ID " +
                             std::to_string(cls));
      }
      if (id == 0) continue;
      auto [it, inserted] = class_of.emplace(id, cls);
      if (!inserted && it->second != cls) {
        throw IntegrityError("instance " + std::to_string(id) + ": inconsistent class IDs " +
                             std::to_string(it->second) + " and " + std::to_string(cls) +
                             " (at " + at + ")");
      }
    }
  }
}

// Structural invariants plus the class-range invariant (class IDs <=
// class_count).
inline void validate_label_patch(const LabelPatch& patch, int class_count) {
  validate_label_patch(patch);
  for (int r = 0; r < patch.height(); ++r) {
    for (int c = 0; c < patch.width(); ++c) {
      const std::int32_t cls = patch.class_map(r, c);
      if (cls > class_count) {
        throw IntegrityError("pixel (" + std::to_string(r) + ", " + std::to_string(c) +
                             "): class ID " + std::to_string(cls) + " out of range [0, " +
                             std::to_string(class_count) + "]");
      }
    }
  }
}

// One record per distinct nonzero instance ID, sorted ascending by ID.
// Pixel sets partition the nonzero support of the instance map. Throws
// IntegrityError if one instance carries two class IDs.
inline std::vector<InstanceRecord> extract_instances(const LabelPatch& patch) {
  std::unordered_map<std::int32_t, std::size_t> slot_of;
  std::vector<InstanceRecord> records;
  for (int r = 0; r < patch.height(); ++r) {
    for (int c = 0; c < patch.width(); ++c) {
      const std::int32_t id = patch.instance_map(r, c);
      if (id == 0) continue;
      const std::int32_t cls = patch.class_map(r, c);
      auto [it, inserted] = slot_of.emplace(id, records.size());
      if (inserted) {
        records.push_back(InstanceRecord{id, cls, {}, PixelBox{r, c, r, c}});
      }
      InstanceRecord& rec = records[it->second];
      if (rec.class_id != cls) {
        throw IntegrityError("instance " + std::to_string(id) + ": inconsistent class IDs " +
                             std::to_string(rec.class_id) + " and " + std::to_string(cls));
      }
      rec.pixels.push_back(Pixel{r, c});
      rec.bbox.min_row = std::min(rec.bbox.min_row, r);
      rec.bbox.min_col = std::min(rec.bbox.min_col, c);
      rec.bbox.max_row = std::max(rec.bbox.max_row, r);
      rec.bbox.max_col = std::max(rec.bbox.max_col, c);
    }
  }
  std::sort(records.begin(), records.end(),
            [](const InstanceRecord& a, const InstanceRecord& b) { return a.id < b.id; });
  return records;
}

// Intersection over union of two pixel sets given in ascending raster order.
// Both empty yields 0 so that empty masks never match anything.
inline double mask_iou(const std::vector<Pixel>& a, const std::vector<Pixel>& b) {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Mirrors both maps left-to-right; column j maps to column W-1-j.
inline LabelPatch horizontal_flip(const LabelPatch& patch) {
  const int h = patch.height();
  const int w = patch.width();
  LabelPatch out = LabelPatch::zeros(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      out.instance_map(r, w - 1 - c) = patch.instance_map(r, c);
      out.class_map(r, w - 1 - c) = patch.class_map(r, c);
    }
  }
  return out;
}

enum class Connectivity { kFour = 4, kEight = 8 };

// Labels maximal connected foreground regions 1, 2, ... in raster order of
// each region's first-encountered pixel. Background stays 0.
inline IdGrid connected_components(const BinaryGrid& mask,
                                   Connectivity connectivity = Connectivity::kFour) {
  const int h = mask.height();
  const int w = mask.width();
  IdGrid labels(h, w, 0);
  std::vector<Pixel> stack;
  std::int32_t next_id = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (mask(r, c) == 0 || labels(r, c) != 0) continue;
      ++next_id;
      labels(r, c) = next_id;
      stack.push_back(Pixel{r, c});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == Connectivity::kFour && dr != 0 && dc != 0) continue;
            const int nr = p.row + dr;
            const int nc = p.col + dc;
            if (!mask.in_bounds(nr, nc)) continue;
            if (mask(nr, nc) == 0 || labels(nr, nc) != 0) continue;
            labels(nr, nc) = next_id;
            stack.push_back(Pixel{nr, nc});
          }
        }
      }
    }
  }
  return labels;
}

}  // namespace nucleval
