#pragma once

// Independent reference implementations shared by the unit tests and the acceptance run.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "boxverify/annotator.hpp"
#include "boxverify/geometry.hpp"
#include "boxverify/ground_truth.hpp"
#include "boxverify/metrics.hpp"

namespace oracles {

using boxverify::Answer;
using boxverify::Box;

// Counts the unit pixels covered by integer boxes, independently of the library arithmetic.
struct PixelGrid {
  static constexpr int kSize = 48;

  static long long covered(const Box& b) {
    long long n = 0;
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) n += in(b, x, y);
    return n;
  }
  static long long both(const Box& a, const Box& b) {
    long long n = 0;
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) n += in(a, x, y) && in(b, x, y);
    return n;
  }
  static bool in(const Box& b, int x, int y) { return x >= b.x1() && x < b.x2() && y >= b.y1() && y < b.y2(); }
};

// Integer box covering pixels [x1, x2] x [y1, y2] of a size x size grid.
template <typename Rng>
Box random_box(Rng& rng, int size) {
  std::uniform_int_distribution<int> c(0, size - 1);
  int x1 = c(rng), x2 = c(rng), y1 = c(rng), y2 = c(rng);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  return Box(x1, y1, x2 + 1, y2 + 1);
}

// Keep predicate of each pruning rule for proposal p after an answer about d.
inline bool keeps(Answer rule, const Box& p, const Box& d) {
  const double u = boxverify::iou(p, d);
  switch (rule) {
    case Answer::No: return u < 0.5;
    case Answer::Part: return boxverify::ioa(d, p) > 0.9;
    case Answer::Container: return boxverify::ioa(p, d) > 0.9;
    case Answer::Mixed:
      return !(boxverify::ioa(p, d) > 0.9) && !(boxverify::ioa(d, p) > 0.9) && u != 0.0 && !(u >= 0.5);
    case Answer::Missed: return u == 0.0;
    case Answer::Yes: return true;
  }
  return true;
}

// Brute-force VOC07 AP: every detection prefix gives one (recall, precision) point; the
// interpolated precision at r is the best precision among points with recall >= r.
inline double brute_force_ap(std::vector<boxverify::Detection> dets, const boxverify::GroundTruth& gt,
                             const std::string& cls) {
  boxverify::rank_detections(dets);
  long npos = 0;
  for (const auto& [img, per] : gt.all()) {
    if (per.count(cls)) {
      for (const auto& g : per.at(cls)) npos += !g.difficult;
    }
  }
  std::vector<std::pair<double, double>> points;  // recall, precision
  std::map<std::string, std::vector<bool>> taken;
  long tp = 0, fp = 0;
  for (const auto& d : dets) {
    const auto& inst = gt.instances(d.image_id, cls);
    taken[d.image_id].resize(inst.size());
    // best-overlap instance, first index on ties
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < inst.size(); ++g) {
      const double o = boxverify::iou(d.box, inst[g].box);
      if (o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= 0.5) {
      if (inst[best].difficult) continue;
      if (taken[d.image_id][best]) {
        ++fp;
      } else {
        taken[d.image_id][best] = true;
        ++tp;
      }
    } else {
      ++fp;
    }
    points.emplace_back(static_cast<double>(tp) / npos, static_cast<double>(tp) / (tp + fp));
  }
  double ap = 0;
  for (int k = 0; k <= 10; ++k) {
    double p = 0;
    for (const auto& [r, prec] : points)
      if (r * 10 >= k - 1e-9) p = std::max(p, prec);
    ap += p / 11;
  }
  return ap;
}

}  // namespace oracles
