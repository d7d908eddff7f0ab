#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "boxverify/annotator.hpp"
#include "boxverify/curve.hpp"
#include "boxverify/dataset.hpp"
#include "boxverify/detector.hpp"
#include "boxverify/pruning.hpp"

namespace boxverify {

struct AnswerKey {
  std::string image_id;
  std::size_t proposal_index = 0;
  QuestionKind kind = QuestionKind::YesNo;

  friend auto operator<=>(const AnswerKey& a, const AnswerKey& b) {
    return std::tie(a.image_id, a.proposal_index, a.kind) <=> std::tie(b.image_id, b.proposal_index, b.kind);
  }
  friend bool operator==(const AnswerKey&, const AnswerKey&) = default;
};

struct LoopConfig {
  Strategy strategy = Strategy::RemoveExtNeg;
  std::optional<QuestionKind> question_kind;  // defaults to the strategy's kind
  int max_iterations = 10;
  std::uint64_t seed = 0;
};

/// Everything the loop knows about one class. Ground truth is never part of it.
struct RunState {
  std::string run_id;
  std::string class_name;
  Strategy strategy = Strategy::RemoveExtNeg;
  QuestionKind question_kind = QuestionKind::YesNo;
  int max_iterations = 10;
  std::uint64_t seed = 0;

  int iteration = 0;  // completed verification rounds
  std::set<std::string> active;
  std::set<std::string> exhausted;  // search space emptied; counted as failures
  std::map<std::string, SearchSpace> spaces;
  std::map<std::string, Detection> fixed_positives;
  std::map<std::string, Detection> current_detections;  // active images only
  std::map<AnswerKey, Answer> answer_cache;

  std::vector<std::string> pending;  // images still to be asked this round, ascending
  std::uint64_t round_events = 0;    // new events in the current round
  std::uint64_t events_applied = 0;  // length of the event log consumed so far
  double total_seconds = 0.0;

  std::optional<ScorerModel> model;
  std::vector<CurvePoint> curve;
  bool finished = false;
  std::string finish_reason;
  std::vector<std::string> warnings;

  // In memory only: the checkpoint refers to the event log file instead.
  std::vector<VerificationEvent> event_log;

  std::size_t labeled_images() const { return active.size() + fixed_positives.size() + exhausted.size(); }
  /// The question for a pending image.
  VerificationQuestion question_for(const std::string& image_id) const;
};

/// Submitted answer does not match a pending question (stale, duplicate, wrong kind).
class StaleAnswerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Computes CorLoc for the detections of labeled images (missing ones count as wrong).
using CorlocProbe = std::function<double(const std::map<std::string, Detection>&)>;

struct LoopOptions {
  TrainConfig train;
  std::size_t max_background_per_image = kMaxBackgroundPerImage;
  CorlocProbe corloc;
  // Called before an event is applied; the durable log append belongs here.
  std::function<void(const VerificationEvent&)> on_event;
  // Called at every round boundary and when the run finishes; checkpoints belong here.
  std::function<void(const RunState&)> on_round;
};

/// Initial state: every labeled image active with its full proposal set and
/// its D0 detection. Opens round 1. Throws std::invalid_argument when the class
/// has no images or D0 misses one of them.
RunState init_state(const Dataset& dataset, const std::string& class_name, const LoopConfig& config,
                    const std::map<std::string, Detection>& initial_detections,
                    std::optional<ScorerModel> initial_model = std::nullopt, std::string run_id = "run");

/// Starts a round: re-applies cached answers, queues the rest. A round with
/// nothing to ask finishes the run.
void begin_round(RunState& state, const Dataset& dataset, const LoopOptions& options);

/// Builds the log event for an answer to the pending question of `image_id`.
VerificationEvent make_event(const RunState& state, const std::string& image_id, const AnswerRecord& record);

/// Applies one verification event (live or replayed). Throws StaleAnswerError
/// when it does not answer a pending question or its sequence number is off.
void record_answer(RunState& state, const Dataset& dataset, const VerificationEvent& event);

/// record_answer followed by complete_round when the round has drained. Records the
/// iteration-0 curve point first if the curve is still empty, as run_loop does.
void submit(RunState& state, const Dataset& dataset, const VerificationEvent& event, const LoopOptions& options);

/// Retrains from every fixed positive. With no positives the previous model is
/// reused (a warning is recorded); with positives but no eligible background this throws.
ScorerModel retrain_round(RunState& state, const Dataset& dataset, const LoopOptions& options);

/// Moves every active image to the best-scoring alive proposal (ties: lowest
/// index). Images whose space is empty become exhausted.
void relocalize_round(RunState& state, const ScorerModel& model, const Dataset& dataset);

/// Retrain, relocalize, record a curve point, then finish or open the next round.
void complete_round(RunState& state, const Dataset& dataset, const LoopOptions& options);

enum class RoundStatus { Completed, Suspended };

/// Asks `source` for every pending question of the current round, then completes it.
/// Suspends when the source has no answer yet.
RoundStatus verify_round(RunState& state, const Dataset& dataset, AnswerSource& source, const LoopOptions& options);

/// Drives rounds until the run finishes or the source suspends. Records the
/// iteration-0 curve point first if the curve is still empty.
RoundStatus run_loop(RunState& state, const Dataset& dataset, AnswerSource& source, const LoopOptions& options);

/// Current detection per labeled image: fixed positives plus active detections.
std::map<std::string, Detection> detections_of(const RunState& state);

CurvePoint make_curve_point(const RunState& state, const LoopOptions& options);

}  // namespace boxverify
