#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "boxverify/dataset.hpp"
#include "boxverify/detector.hpp"

namespace boxverify {

struct MilConfig {
  int folds = 10;
  int max_iterations = 10;
  bool use_objectness = true;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::size_t max_background_per_image = kMaxBackgroundPerImage;
};

struct MilResult {
  std::map<std::string, Detection> detections;  // one per labeled image (D0)
  std::map<std::string, int> fold_of;           // image id -> fold
  int rounds = 0;                               // multi-fold relocalization rounds run
  bool converged = false;
  ScorerModel model;                            // trained on all final detections
  std::vector<std::string> warnings;
};

/// Weakly supervised initialization: whole-image positives first, then
/// multi-fold retrain/relocalize until two rounds select the same proposals
/// or max_iterations is reached. Throws std::invalid_argument for a class with no images.
MilResult run_mil(const Dataset& dataset, const std::string& class_name, const MilConfig& config);

}  // namespace boxverify
