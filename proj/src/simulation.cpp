#include "boxverify/simulation.hpp"

#include <stdexcept>

#include "boxverify/metrics.hpp"
#include "boxverify/simulated_annotator.hpp"
#include "hashing.hpp"

namespace boxverify {

CorlocProbe make_corloc_probe(const Dataset& dataset, const GroundTruth& gt, const std::string& cls) {
  auto ids = dataset.images_with_label(cls);
  return [&gt, cls, ids = std::move(ids)](const std::map<std::string, Detection>& detections) {
    return corloc(detections, gt, cls, ids);
  };
}

std::vector<double> detection_ious(const std::map<std::string, Detection>& detections, const GroundTruth& gt,
                                   const std::string& cls) {
  std::vector<double> out;
  out.reserve(detections.size());
  for (const auto& [id, d] : detections) out.push_back(oracle_yes_no(gt.boxes(id, cls), d.box).iou_star);
  return out;
}

MilResult initialize(const Dataset& dataset, const std::string& cls, const SimulationConfig& config) {
  MilConfig mil = config.mil;
  mil.seed = detail::derive_seed(config.seed, "mil", 0);
  mil.train = config.train;
  return run_mil(dataset, cls, mil);
}

RunState simulate_class(const Dataset& dataset, const GroundTruth& gt, const std::string& cls,
                        const SimulationConfig& config, LoopOptions options, const MilResult* d0) {
  std::optional<MilResult> own;
  if (!d0) {
    own = initialize(dataset, cls, config);
    d0 = &*own;
  }
  LoopConfig lc{config.strategy, config.question_kind, config.max_iterations, config.seed};
  RunState state = init_state(dataset, cls, lc, d0->detections, d0->model, config.run_id);
  state.warnings.insert(state.warnings.begin(), d0->warnings.begin(), d0->warnings.end());
  if (!options.corloc) options.corloc = make_corloc_probe(dataset, gt, cls);
  options.train = config.train;
  SimulatedAnnotator annotator(gt, config.profile, detail::derive_seed(config.seed, "annotator", 0));
  if (options.on_round) options.on_round(state);
  run_loop(state, dataset, annotator, options);
  return state;
}

double supervised_corloc(const Dataset& dataset, const GroundTruth& gt, const std::string& cls,
                         const TrainConfig& train, std::uint64_t seed) {
  const auto ids = dataset.images_with_label(cls);
  std::vector<Detection> positives;
  for (const auto& id : ids) {
    const ImageRecord& img = dataset.image(id);
    for (const auto& g : gt.instances(id, cls)) {
      std::size_t best = 0;
      double best_iou = -1.0;
      for (std::size_t i = 0; i < img.proposals.size(); ++i) {
        const double o = iou(img.proposals[i].box, g.box);
        if (o > best_iou) {
          best_iou = o;
          best = i;
        }
      }
      if (best_iou >= kCorrectIoU) positives.push_back({id, cls, best, img.proposals[best].box, 0.0});
    }
  }
  if (positives.empty()) return 0.0;
  const auto bg = sample_background(dataset, positives, seed);
  if (bg.empty()) throw std::runtime_error("supervised reference: no background proposals");
  std::vector<std::vector<double>> pos, neg;
  for (const auto& d : positives) pos.push_back(dataset.image(d.image_id).proposals[d.proposal_index].features);
  for (const auto& r : bg) neg.push_back(dataset.image(r.image_id).proposals[r.index].features);
  const ScorerModel model = train_detector(pos, neg, train, seed, cls);
  std::map<std::string, Detection> dets;
  for (const auto& id : ids) {
    const ImageRecord& img = dataset.image(id);
    const auto scores = score_proposals(model, img, false);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    dets.emplace(id, Detection{id, cls, best, img.proposals[best].box, scores[best]});
  }
  return corloc(dets, gt, cls, ids);
}

namespace {

template <typename Field>
std::optional<double> cost_to_reach(const RunState& state, double target, Field field) {
  const CurvePoint* prev = nullptr;
  for (const auto& p : state.curve) {
    if (p.corloc && *p.corloc >= target) {
      if (!prev || !prev->corloc) return field(p);
      const double a = field(*prev), b = field(p);
      return a + (target - *prev->corloc) / (*p.corloc - *prev->corloc) * (b - a);
    }
    prev = &p;
  }
  return std::nullopt;
}

}  // namespace

std::optional<double> verifications_to_reach(const RunState& state, double target) {
  return cost_to_reach(state, target, [](const CurvePoint& p) { return double(p.cumulative_verifications); });
}

std::optional<double> seconds_to_reach(const RunState& state, double target) {
  return cost_to_reach(state, target, [](const CurvePoint& p) { return p.cumulative_seconds; });
}

}  // namespace boxverify
