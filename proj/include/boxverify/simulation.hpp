#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "boxverify/annotator.hpp"
#include "boxverify/dataset.hpp"
#include "boxverify/ground_truth.hpp"
#include "boxverify/loop.hpp"
#include "boxverify/mil_init.hpp"

namespace boxverify {

struct SimulationConfig {
  Strategy strategy = Strategy::RemovePcmm;
  std::optional<QuestionKind> question_kind;
  AnnotatorProfile profile;
  std::uint64_t seed = 0;
  int max_iterations = 10;
  MilConfig mil;  // mil.seed is replaced by `seed`
  TrainConfig train;
  std::string run_id = "run";
};

/// CorLoc callback over the labeled images of `cls`.
CorlocProbe make_corloc_probe(const Dataset& dataset, const GroundTruth& gt, const std::string& cls);

/// Full simulated pipeline for one class: MIL initialization (unless `d0` is
/// given), then the verification loop against a SimulatedAnnotator seeded from
/// config.seed. `options.corloc` is filled in when empty.
RunState simulate_class(const Dataset& dataset, const GroundTruth& gt, const std::string& cls,
                        const SimulationConfig& config, LoopOptions options = {},
                        const MilResult* d0 = nullptr);

/// IoU* of each detection with the ground truth of `cls`, by image id: the pool
/// that noise calibration runs on.
std::vector<double> detection_ious(const std::map<std::string, Detection>& detections, const GroundTruth& gt,
                                   const std::string& cls);

MilResult initialize(const Dataset& dataset, const std::string& cls, const SimulationConfig& config);

/// Fully supervised reference: trains on the proposal best overlapping each
/// ground-truth instance (IoU >= 0.5), then relocalizes every labeled image by
/// argmax score without objectness and returns the resulting CorLoc.
double supervised_corloc(const Dataset& dataset, const GroundTruth& gt, const std::string& cls,
                         const TrainConfig& train = {}, std::uint64_t seed = 0);

/// Cumulative verifications at which the curve first reaches `target` CorLoc,
/// interpolated linearly between the two curve points that bracket the crossing.
/// nullopt when the curve never gets there.
std::optional<double> verifications_to_reach(const RunState& state, double target);
std::optional<double> seconds_to_reach(const RunState& state, double target);

}  // namespace boxverify
