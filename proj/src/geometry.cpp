#include "fovea/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fovea/error.hpp"

namespace fovea {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.left, b.left);
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
  return w > 0.0 && h > 0.0 ? w * h : 0.0;
}

GridGeometry::GridGeometry(double image_width, double image_height, int cols, int rows)
    : image_width_(image_width), image_height_(image_height), cols_(cols), rows_(rows) {
  if (cols < 1 || rows < 1) {
    throw InvalidInput("GridGeometry: grid dimensions must be >= 1");
  }
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw InvalidInput("GridGeometry: image dimensions must be > 0");
  }
}

double GridGeometry::half_diagonal() const { return 0.5 * std::hypot(image_width_, image_height_); }

std::size_t GridGeometry::index(Cell c) const {
  if (!contains(c)) {
    throw InvalidInput("cell (" + std::to_string(c.x) + "," + std::to_string(c.y) + ") outside grid");
  }
  return static_cast<std::size_t>(c.y) * cols_ + c.x;
}

Cell GridGeometry::cell_at(std::size_t index) const {
  return {static_cast<int>(index % cols_), static_cast<int>(index / cols_)};
}

BoundingBox GridGeometry::cell_rect(Cell c) const {
  return {c.x * cell_width(), c.y * cell_height(), cell_width(), cell_height()};
}

Point GridGeometry::cell_center(Cell c) const {
  return {(c.x + 0.5) * cell_width(), (c.y + 0.5) * cell_height()};
}

std::vector<Cell> cells_overlapped(const BoundingBox& box, const GridGeometry& geometry,
                                   double min_fraction) {
  std::vector<Cell> cells;
  if (!(box.width > 0.0) || !(box.height > 0.0)) return cells;
  const double cw = geometry.cell_width();
  const double ch = geometry.cell_height();
  // Candidate index range; exact membership is decided by the area test.
  const int x0 = std::clamp(static_cast<int>(std::floor(box.left / cw)), 0, geometry.cols() - 1);
  const int x1 = std::clamp(static_cast<int>(std::floor(box.right() / cw)), 0, geometry.cols() - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(box.top / ch)), 0, geometry.rows() - 1);
  const int y1 = std::clamp(static_cast<int>(std::floor(box.bottom() / ch)), 0, geometry.rows() - 1);
  const double cell_area = cw * ch;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Cell c{x, y};
      const double shared = intersection_area(box, geometry.cell_rect(c));
      if (shared > 0.0 && shared > min_fraction * cell_area) cells.push_back(c);
    }
  }
  return cells;
}

}  // namespace fovea
