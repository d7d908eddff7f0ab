#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "boxverify/annotator.hpp"
#include "boxverify/curve.hpp"
#include "boxverify/detector.hpp"
#include "boxverify/ground_truth.hpp"

namespace boxverify {

inline constexpr double kCorrectIoU = 0.5;

/// True when the box overlaps some instance of `cls` in the image with IoU >= 0.5.
bool correctly_localized(const GroundTruth& gt, const std::string& cls, const Detection& det);

/// Fraction of `labeled_images` whose detection is correct; images without a
/// detection count as failures. Returns 0 for an empty image list.
double corloc(const std::map<std::string, Detection>& detections, const GroundTruth& gt, const std::string& cls,
              std::span<const std::string> labeled_images);

/// Orders detections by score descending, then image id, then box coordinates.
void rank_detections(std::vector<Detection>& detections);

/// PASCAL VOC 2007 11-point interpolated AP for one class. Detections are ranked
/// with rank_detections first. Each instance matches at most once; a detection
/// whose best match is a difficult instance counts as neither TP nor FP.
/// nullopt when the class has no non-difficult instance.
std::optional<double> voc_ap(std::vector<Detection> detections, const GroundTruth& gt, const std::string& cls,
                             double iou_threshold = kCorrectIoU);

/// Mean over the classes with a defined AP. nullopt when none is defined.
std::optional<double> mean_ap(const std::map<std::string, std::optional<double>>& per_class);

/// Sum of elapsed seconds over the events.
double annotation_seconds(std::span<const VerificationEvent> events);

enum class DrawingCost { Plain, QualityControlled };

/// Seconds to draw one box: 26 plain, 42 with quality control.
double drawing_seconds_per_box(DrawingCost cost);
double drawing_baseline_seconds(std::size_t boxes, DrawingCost cost);

struct LabeledCurve {
  std::string label;
  std::vector<CurvePoint> points;

  friend bool operator==(const LabeledCurve&, const LabeledCurve&) = default;
};

/// CSV with header label,iteration,verifications,seconds,corloc,fixed_fraction.
/// Rows are grouped by run in the given order and sorted by iteration within a run.
std::string curves_to_csv(std::span<const LabeledCurve> runs);
std::vector<LabeledCurve> curves_from_csv(const std::string& text);
void export_curves(const std::filesystem::path& path, std::span<const LabeledCurve> runs);
std::vector<LabeledCurve> read_curves(const std::filesystem::path& path);

struct ClassSummary {
  std::optional<double> corloc;
  std::optional<double> ap;
  double seconds = 0.0;
  std::uint64_t verifications = 0;
  double fixed_fraction = 0.0;
};

/// {"classes": {cls: {...}}, "mAP": ..., "hours": ...}; absent values are null.
std::string summary_json(const std::map<std::string, ClassSummary>& classes);

}  // namespace boxverify
