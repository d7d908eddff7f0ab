#include "boxverify/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace boxverify {

Box::Box(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw std::invalid_argument("box coordinates must be finite");
  }
  if (!(x1 < x2) || !(y1 < y2)) {
    std::ostringstream msg;
    msg << "degenerate box [" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << "]";
    throw std::invalid_argument(msg.str());
  }
}

Box Box::from_array(const std::array<double, 4>& xyxy) {
  return Box(xyxy[0], xyxy[1], xyxy[2], xyxy[3]);
}

Box Box::from_inclusive_pixels(double xmin, double ymin, double xmax, double ymax) {
  return Box(xmin, ymin, xmax + 1.0, ymax + 1.0);
}

std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << "[" << b.x1() << ", " << b.y1() << ", " << b.x2() << ", " << b.y2() << "]";
}

double area(const Box& b) { return b.width() * b.height(); }

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  if (a == b) return 1.0;
  return inter / (area(a) + area(b) - inter);
}

double ioa(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / area(a);
}

bool inside(const Box& a, const Box& b, double tolerance) { return ioa(a, b) >= tolerance; }

bool within_bounds(const Box& b, double width, double height) {
  return b.x1() >= 0.0 && b.y1() >= 0.0 && b.x2() <= width && b.y2() <= height;
}

}  // namespace boxverify
