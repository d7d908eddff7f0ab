#include "boxverify/mil_init.hpp"

#include <algorithm>
#include <stdexcept>

#include "hashing.hpp"

namespace boxverify {

namespace {

std::size_t argmax(const std::vector<double>& scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

Detection make_detection(const ImageRecord& img, const std::string& cls, std::size_t index, double score) {
  return Detection{img.id, cls, index, img.proposals[index].box, score};
}

/// Trains on the given detections with background from the same images.
/// Falls back to a zero model (objectness-only relocalization) when no background exists.
ScorerModel train_on(const Dataset& dataset, const std::string& cls, const std::vector<Detection>& positives,
                     const MilConfig& config, std::uint64_t seed, std::vector<std::string>& warnings) {
  const auto bg = sample_background(dataset, positives, seed, config.max_background_per_image);
  if (bg.empty()) {
    warnings.push_back("no background proposals available; relocalizing with objectness only");
    return ScorerModel::zero(cls, dataset.feature_dim());
  }
  std::vector<std::vector<double>> pos, neg;
  pos.reserve(positives.size());
  for (const auto& d : positives) pos.push_back(dataset.image(d.image_id).proposals[d.proposal_index].features);
  neg.reserve(bg.size());
  for (const auto& r : bg) neg.push_back(dataset.image(r.image_id).proposals[r.index].features);
  ScorerModel m = train_detector(pos, neg, config.train, seed, cls);
  if (m.meta.degenerate) warnings.push_back("degenerate training set; zero-weight model used");
  return m;
}

}  // namespace

MilResult run_mil(const Dataset& dataset, const std::string& class_name, const MilConfig& config) {
  const auto ids = dataset.images_with_label(class_name);
  if (ids.empty()) throw std::invalid_argument("class '" + class_name + "' has no labeled images");
  if (config.folds < 1 || config.max_iterations < 1) throw std::invalid_argument("folds and max_iterations must be >= 1");

  MilResult result;
  int folds = config.folds;
  if (static_cast<std::size_t>(folds) > ids.size()) {
    folds = static_cast<int>(ids.size());
    result.warnings.push_back("class '" + class_name + "' has fewer images than folds; using " + std::to_string(folds));
  }

  // Balanced, seed-dependent partition: rank images by a keyed hash, deal round-robin.
  std::vector<std::string> ranked = ids;
  std::sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
    const auto ha = detail::derive_seed(config.seed, a), hb = detail::derive_seed(config.seed, b);
    return ha != hb ? ha < hb : a < b;
  });
  std::vector<std::vector<std::string>> members(folds);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    members[r % folds].push_back(ranked[r]);
    result.fold_of[ranked[r]] = static_cast<int>(r % folds);
  }

  auto relocalize = [&](const ScorerModel& model, const std::string& id) {
    const ImageRecord& img = dataset.image(id);
    const auto scores = score_proposals(model, img, config.use_objectness, config.lambda);
    const std::size_t best = argmax(scores);
    return make_detection(img, class_name, best, scores[best]);
  };

  // Initialization: the proposal closest to the whole image is the positive of every image.
  std::vector<Detection> whole;
  for (const auto& id : ids) {
    const ImageRecord& img = dataset.image(id);
    const Box full = img.full_image();
    std::size_t best = 0;
    for (std::size_t i = 1; i < img.proposals.size(); ++i) {
      if (iou(img.proposals[i].box, full) > iou(img.proposals[best].box, full)) best = i;
    }
    whole.push_back(make_detection(img, class_name, best, 0.0));
  }
  const ScorerModel init = train_on(dataset, class_name, whole, config, detail::derive_seed(config.seed, "init"),
                                    result.warnings);
  std::map<std::string, Detection> current;
  for (const auto& id : ids) current.emplace(id, relocalize(init, id));

  for (int round = 1; round <= config.max_iterations; ++round) {
    std::map<std::string, Detection> next;
    for (int f = 0; f < folds; ++f) {
      std::vector<Detection> training;
      for (const auto& [id, det] : current) {
        if (folds == 1 || result.fold_of.at(id) != f) training.push_back(det);
      }
      const ScorerModel model = train_on(dataset, class_name, training, config,
                                         detail::derive_seed(config.seed, "fold", round * 1000 + f), result.warnings);
      for (const auto& id : members[f]) next.emplace(id, relocalize(model, id));
    }
    result.rounds = round;
    const bool same = std::equal(current.begin(), current.end(), next.begin(), [](const auto& a, const auto& b) {
      return a.second.proposal_index == b.second.proposal_index;
    });
    current = std::move(next);
    if (same) {
      result.converged = true;
      break;
    }
  }

  std::vector<Detection> all;
  for (const auto& [id, det] : current) all.push_back(det);
  result.model = train_on(dataset, class_name, all, config, detail::derive_seed(config.seed, "final"), result.warnings);
  result.detections = std::move(current);
  return result;
}

}  // namespace boxverify
