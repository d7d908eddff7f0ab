#include "boxverify/simulated_annotator.hpp"

#include <stdexcept>

#include "hashing.hpp"

namespace boxverify {

SimulatedAnnotator::SimulatedAnnotator(const GroundTruth& truth, AnnotatorProfile profile, std::uint64_t seed,
                                       std::string annotator_id)
    : truth_(truth), profile_(profile), seed_(seed), annotator_id_(std::move(annotator_id)) {
  profile_.validate();
}

std::optional<AnswerRecord> SimulatedAnnotator::answer(const VerificationQuestion& question) {
  const auto truth = truth_.boxes(question.image_id, question.class_name);
  if (truth.empty()) {
    throw std::logic_error("no ground truth for image '" + question.image_id + "' class '" + question.class_name + "'");
  }
  const std::uint64_t key = std::stoull(question_id("", question), nullptr, 16);
  std::mt19937_64 rng(detail::splitmix64(seed_ ^ detail::splitmix64(key)));
  const double iou_star = oracle_yes_no(truth, question.detection).iou_star;
  AnswerRecord rec;
  rec.answer = noisy_answer(profile_, truth, question, rng);
  rec.elapsed_seconds = response_cost(profile_, question.kind, iou_star);
  rec.source = AnswerOrigin::Simulated;
  rec.annotator_id = annotator_id_;
  return rec;
}

}  // namespace boxverify
