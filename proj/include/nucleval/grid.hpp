#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nucleval {

// Dense row-major H x W grid with value semantics.
template <typename T>
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, T fill = T{})
      : height_(checked_extent(height)),
        width_(checked_extent(width)),
        cells_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  T& operator()(int r, int c) { return cells_[index(r, c)]; }
  const T& operator()(int r, int c) const { return cells_[index(r, c)]; }

  std::vector<T>& cells() { return cells_; }
  const std::vector<T>& cells() const { return cells_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool in_bounds(int r, int c) const {
    return r >= 0 && r < height_ && c >= 0 && c < width_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static int checked_extent(int extent) {
    if (extent < 0) throw std::invalid_argument("Grid: negative extent");
    return extent;
  }

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> cells_;
};

using IdGrid = Grid<std::int32_t>;
using BinaryGrid = Grid<std::uint8_t>;
using RealGrid = Grid<double>;

}  // namespace nucleval
