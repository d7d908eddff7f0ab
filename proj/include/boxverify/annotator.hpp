#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxverify/geometry.hpp"

namespace boxverify {

enum class QuestionKind { YesNo, Ypcmm };

enum class Answer { Yes, No, Part, Container, Mixed, Missed };

enum class AnswerOrigin { Simulated, Human };

std::string_view to_string(QuestionKind kind);
std::string_view to_string(Answer answer);
std::string_view to_string(AnswerOrigin origin);
QuestionKind parse_question_kind(std::string_view text);
Answer parse_answer(std::string_view text);
AnswerOrigin parse_answer_origin(std::string_view text);

/// Yes/No for Yes/No questions; the five YPCMM categories otherwise.
bool is_legal(Answer answer, QuestionKind kind);

struct VerificationQuestion {
  std::string image_id;
  std::string class_name;
  std::size_t proposal_index = 0;
  Box detection;
  QuestionKind kind = QuestionKind::YesNo;
  int iteration = 0;
};

/// Stable content hash of (run, image, proposal, kind), as 16 hex digits.
std::string question_id(std::string_view run_id, const VerificationQuestion& q);

struct VerificationEvent {
  std::uint64_t seq = 0;
  std::string run_id;
  std::string question_id;
  VerificationQuestion question;
  Answer answer = Answer::No;
  double elapsed_seconds = 0.0;
  AnswerOrigin source = AnswerOrigin::Simulated;
  std::string annotator_id;
  // Simulated events: the run's simulated clock in seconds. Human events: Unix time in seconds.
  double timestamp = 0.0;
};

enum class CostMode { Flat, Curve };

struct AnnotatorProfile {
  // Logistic temperature of the Yes response around IoU 0.5; 0 is the perfect oracle.
  double noise_temperature = 0.0;
  // Part / Container need IoA strictly above this. Equal to the pruning
  // tolerance so a Mixed diagnosis never discards the true box.
  double containment_tolerance = 0.9;
  CostMode cost_mode = CostMode::Flat;
  // Response-time curve: slow near IoU 0.5, fast far from it.
  double t_far = 1.4;
  double t_peak = 2.2;
  double sigma_t = 0.1;
  double yesno_cost = 1.6;
  double ypcmm_cost = 2.4;

  void validate() const;
};

struct OracleResult {
  Answer answer;
  std::size_t matched = 0;  // index of the max-IoU ground-truth instance
  double iou_star = 0.0;
};

/// Yes iff the best-overlapping instance has IoU >= 0.5. Throws on empty `truth`.
OracleResult oracle_yes_no(std::span<const Box> truth, const Box& detection);

/// Five-way diagnosis against the best-overlapping instance. Throws on empty `truth`.
OracleResult oracle_ypcmm(std::span<const Box> truth, const Box& detection, double containment_tolerance = 0.9);

/// Probability that a noisy annotator contradicts the perfect oracle at `iou_star`.
double flip_probability(double temperature, double iou_star);

/// Probability of a Yes answer at `iou_star`: logistic((iou_star - 0.5) / temperature).
double yes_probability(double temperature, double iou_star);

/// Noisy answer; `rng` carries all randomness so the result is reproducible.
Answer noisy_answer(const AnnotatorProfile& profile, std::span<const Box> truth, const VerificationQuestion& question,
                    std::mt19937_64& rng);

/// Simulated response time in seconds.
double response_cost(const AnnotatorProfile& profile, QuestionKind kind, double iou_star);

/// Supplies answers to the loop. Returning nullopt means no answer is available yet
/// (the human queue is empty); the loop then suspends.
struct AnswerRecord {
  Answer answer = Answer::No;
  double elapsed_seconds = 0.0;
  AnswerOrigin source = AnswerOrigin::Simulated;
  std::string annotator_id;
  std::optional<double> timestamp;  // filled from the simulated clock when absent
};

class AnswerSource {
 public:
  virtual ~AnswerSource() = default;
  virtual std::optional<AnswerRecord> answer(const VerificationQuestion& question) = 0;
};

// Noise calibration against a pool of detection IoUs.

struct ErrorRates {
  double incorrect_yes = 0.0;  // fraction of Yes answers given to detections with IoU < 0.5
  double incorrect_no = 0.0;   // fraction of No answers given to detections with IoU >= 0.5
};

/// Expected Yes/No error rates over `pool_ious` at the given temperature.
ErrorRates expected_error_rates(std::span<const double> pool_ious, double temperature);

struct NoiseCalibration {
  double temperature = 0.0;
  ErrorRates rates;
};

/// Bisection over the temperature so incorrect_yes + incorrect_no equals the sum of
/// the targets; a single temperature then misses each target by the same amount in
/// opposite directions. Throws when the pool lacks detections on either side of 0.5.
NoiseCalibration calibrate_temperature(std::span<const double> pool_ious, double target_incorrect_yes = 0.148,
                                       double target_incorrect_no = 0.085);

/// Solves for t_far so the mean curve-mode cost over the pool equals `target_mean`
/// (t_peak and sigma_t held fixed). Returns the fitted profile.
AnnotatorProfile fit_time_curve(AnnotatorProfile profile, std::span<const double> pool_ious, double target_mean = 1.6);

}  // namespace boxverify
