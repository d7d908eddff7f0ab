#pragma once

#include <cstdint>
#include <string>

#include "boxverify/annotator.hpp"
#include "boxverify/ground_truth.hpp"

namespace boxverify {

/// Answers from ground truth: the perfect oracle at temperature 0, the
/// calibrated noisy annotator otherwise. Each answer draws from a generator
/// seeded by (seed, image, proposal, kind), so answers do not depend on the
/// order in which questions are asked.
class SimulatedAnnotator : public AnswerSource {
 public:
  SimulatedAnnotator(const GroundTruth& truth, AnnotatorProfile profile, std::uint64_t seed,
                     std::string annotator_id = "sim");

  std::optional<AnswerRecord> answer(const VerificationQuestion& question) override;

  const AnnotatorProfile& profile() const { return profile_; }

 private:
  const GroundTruth& truth_;
  AnnotatorProfile profile_;
  std::uint64_t seed_;
  std::string annotator_id_;
};

}  // namespace boxverify
