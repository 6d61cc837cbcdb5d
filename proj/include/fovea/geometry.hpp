#pragma once

#include <compare>
#include <cstddef>
#include <vector>

namespace fovea {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

/// Grid cell coordinate; x is the column, y the row.
struct Cell {
  int x = 0;
  int y = 0;

  bool operator==(const Cell&) const = default;
  /// Row-major order, which is also the policies' tie-break order.
  std::strong_ordering operator<=>(const Cell& other) const {
    if (auto c = y <=> other.y; c != 0) return c;
    return x <=> other.x;
  }
};

/// Axis-aligned box in pixels.
struct BoundingBox {
  double left = 0.0;
  double top = 0.0;
  double width = 0.0;
  double height = 0.0;

  double right() const { return left + width; }
  double bottom() const { return top + height; }
  double area() const { return width * height; }
  Point center() const { return {left + 0.5 * width, top + 0.5 * height}; }

  bool operator==(const BoundingBox&) const = default;
};

/// Area of the intersection of two boxes, 0 when disjoint or only touching.
double intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Image-space layout of the X x Y fixation grid.
class GridGeometry {
public:
  GridGeometry(double image_width, double image_height, int cols, int rows);

  double image_width() const { return image_width_; }
  double image_height() const { return image_height_; }
  int cols() const { return cols_; }
  int rows() const { return rows_; }
  std::size_t num_cells() const { return static_cast<std::size_t>(cols_) * rows_; }
  double cell_width() const { return image_width_ / cols_; }
  double cell_height() const { return image_height_ / rows_; }
  double half_diagonal() const;

  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < cols_ && c.y < rows_; }
  std::size_t index(Cell c) const;
  Cell cell_at(std::size_t index) const;
  BoundingBox cell_rect(Cell c) const;
  Point cell_center(Cell c) const;
  BoundingBox image_rect() const { return {0.0, 0.0, image_width_, image_height_}; }

  bool operator==(const GridGeometry&) const = default;

private:
  double image_width_;
  double image_height_;
  int cols_;
  int rows_;
};

/// Cells whose rectangle shares positive area with the box, in row-major
/// order. With min_fraction > 0 the shared area must also exceed that
/// fraction of the cell area.
std::vector<Cell> cells_overlapped(const BoundingBox& box, const GridGeometry& geometry,
                                   double min_fraction = 0.0);

}  // namespace fovea
