#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "boxverify/dataset.hpp"
#include "boxverify/geometry.hpp"

namespace boxverify {

struct Detection {
  std::string image_id;
  std::string class_name;
  std::size_t proposal_index = 0;
  Box box;
  double score = 0.0;
};

struct TrainingMeta {
  int iteration = 0;
  std::size_t positives = 0;
  std::size_t background = 0;
  std::uint64_t seed = 0;
  bool degenerate = false;  // inputs carried no usable signal; weights are zero
  double final_loss = 0.0;
};

/// Linear proposal scorer: score = weights . features + bias.
struct ScorerModel {
  std::string class_name;
  std::vector<double> weights;
  double bias = 0.0;
  TrainingMeta meta;

  std::size_t feature_dim() const { return weights.size(); }
  double score(std::span<const double> features) const;

  static ScorerModel zero(std::string class_name, std::size_t feature_dim);
};

/// A proposal picked as a background (negative) training sample.
struct ProposalRef {
  std::string image_id;
  std::size_t index = 0;
};

inline constexpr std::size_t kMaxBackgroundPerImage = 50;

/// Proposals with IoU < 0.5 to every positive box of their image, at most
/// `max_per_image` per image drawn uniformly with `seed`. Only images holding a
/// positive contribute. Throws std::invalid_argument when `positives` is empty.
std::vector<ProposalRef> sample_background(const Dataset& dataset, std::span<const Detection> positives,
                                           std::uint64_t seed, std::size_t max_per_image = kMaxBackgroundPerImage);

enum class Loss { Logistic, SquaredHinge };

struct TrainConfig {
  Loss loss = Loss::Logistic;
  double l2 = 1e-3;
  int iterations = 200;
  // Stops early once the gradient norm drops below this.
  double tolerance = 1e-4;
  // Verify after every step that the objective did not increase (throws std::logic_error).
  bool check_monotone = false;
  // Filled with the objective before each step and after the last one when set.
  std::vector<double>* loss_trace = nullptr;
};

/// Binary linear classifier trained by deterministic full-batch gradient descent
/// with backtracking on a class-balanced, L2-regularized convex loss (bias unregularized).
/// Throws std::invalid_argument when either side is empty or dimensions disagree.
/// All-identical inputs yield a zero model with meta.degenerate set.
ScorerModel train_detector(const std::vector<std::vector<double>>& positives,
                           const std::vector<std::vector<double>>& background, const TrainConfig& config,
                           std::uint64_t seed, std::string class_name = {});

/// Scores every proposal of the image; adds lambda * log(objectness) when requested.
std::vector<double> score_proposals(const ScorerModel& model, const ImageRecord& image, bool use_objectness = false,
                                    double lambda = 1.0);

/// Greedy non-maximum suppression: visits boxes by descending score (ties by index)
/// and drops those with IoU >= iou_threshold to a kept box. Returns kept indices in visit order.
std::vector<std::size_t> non_maximum_suppression(std::span<const Box> boxes, std::span<const double> scores,
                                                 double iou_threshold);

/// Test-time detections over every image, sorted by score descending.
std::vector<Detection> detect_test(const ScorerModel& model, const Dataset& dataset, double nms_iou = 0.3,
                                   double score_min = -std::numeric_limits<double>::infinity());

std::string model_to_json(const ScorerModel& model);
ScorerModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const ScorerModel& model);
ScorerModel load_model(const std::filesystem::path& path);

}  // namespace boxverify
