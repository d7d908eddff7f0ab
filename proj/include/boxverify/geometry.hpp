#pragma once

#include <array>
#include <iosfwd>

namespace boxverify {

/// Axis-aligned rectangle in pixel coordinates covering the half-open
/// region [x1, x2) x [y1, y2). Construction rejects empty or non-finite boxes.
/// A default-constructed box is the unit square at the origin.
class Box {
 public:
  Box() = default;
  Box(double x1, double y1, double x2, double y2);

  static Box from_array(const std::array<double, 4>& xyxy);

  /// Converts a PASCAL-style inclusive pixel box to the half-open convention.
  static Box from_inclusive_pixels(double xmin, double ymin, double xmax, double ymax);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }

  std::array<double, 4> to_array() const { return {x1_, y1_, x2_, y2_}; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_ = 0.0, y1_ = 0.0, x2_ = 1.0, y2_ = 1.0;
};

std::ostream& operator<<(std::ostream& os, const Box& b);

double area(const Box& b);

/// Area of the overlap; zero when the interiors are disjoint.
double intersection_area(const Box& a, const Box& b);

double iou(const Box& a, const Box& b);

/// Intersection-over-A: |a ∩ b| / |a|. Equals 1 iff a lies inside b.
double ioa(const Box& a, const Box& b);

/// True when a lies inside b up to the IoA tolerance (ioa(a, b) >= tolerance).
bool inside(const Box& a, const Box& b, double tolerance = 1.0);

/// True when the box lies within [0, width) x [0, height).
bool within_bounds(const Box& b, double width, double height);

}  // namespace boxverify
