#pragma once

#include <map>
#include <string>
#include <vector>

#include "boxverify/geometry.hpp"

namespace boxverify {

struct GroundTruthBox {
  Box box;
  bool difficult = false;
  bool truncated = false;
};

/// Oracle-only annotation store. Only the simulated annotators and the
/// evaluation code include this header; the learner never sees it.
class GroundTruth {
 public:
  void add(const std::string& image_id, const std::string& cls, GroundTruthBox box);

  bool empty() const { return boxes_.empty(); }
  bool has(const std::string& image_id, const std::string& cls) const;

  /// Instances of `cls` in the image; empty when none are annotated.
  const std::vector<GroundTruthBox>& instances(const std::string& image_id, const std::string& cls) const;
  std::vector<Box> boxes(const std::string& image_id, const std::string& cls) const;

  /// image_id -> class -> instances.
  const std::map<std::string, std::map<std::string, std::vector<GroundTruthBox>>>& all() const { return boxes_; }

 private:
  std::map<std::string, std::map<std::string, std::vector<GroundTruthBox>>> boxes_;
};

}  // namespace boxverify
