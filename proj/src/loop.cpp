#include "boxverify/loop.hpp"

#include <algorithm>

#include "hashing.hpp"

namespace boxverify {

namespace {

std::vector<Box> proposal_boxes(const ImageRecord& img) {
  std::vector<Box> boxes;
  boxes.reserve(img.proposals.size());
  for (const auto& p : img.proposals) boxes.push_back(p.box);
  return boxes;
}

void apply_answer(RunState& state, const Dataset& dataset, const VerificationQuestion& q, Answer answer) {
  const std::string& id = q.image_id;
  if (answer == Answer::Yes) {
    state.fixed_positives.insert_or_assign(id, state.current_detections.at(id));
    state.active.erase(id);
    state.current_detections.erase(id);
    return;
  }
  SearchSpace& space = state.spaces.at(id);
  // Only strategy I can re-propose an answered box; its rule is a no-op.
  if (!space.contains(q.proposal_index)) return;
  const auto boxes = proposal_boxes(dataset.image(id));
  space = apply_strategy(state.strategy, space, boxes, q, answer);
}

void finish(RunState& state, std::string reason) {
  state.finished = true;
  state.pending.clear();
  state.finish_reason = std::move(reason);
}

void begin_round_impl(RunState& state, const Dataset& dataset) {
  state.pending.clear();
  state.round_events = 0;
  if (state.active.empty()) {
    finish(state, "no active images left");
    return;
  }
  const std::vector<std::string> ids(state.active.begin(), state.active.end());
  for (const auto& id : ids) {
    const VerificationQuestion q = state.question_for(id);
    const auto cached = state.answer_cache.find({id, q.proposal_index, q.kind});
    if (cached == state.answer_cache.end()) {
      state.pending.push_back(id);
    } else {
      apply_answer(state, dataset, q, cached->second);
    }
  }
  if (state.pending.empty()) finish(state, "no new verification events");
}

}  // namespace

VerificationQuestion RunState::question_for(const std::string& image_id) const {
  const Detection& det = current_detections.at(image_id);
  return VerificationQuestion{image_id, class_name, det.proposal_index, det.box, question_kind, iteration + 1};
}

RunState init_state(const Dataset& dataset, const std::string& class_name, const LoopConfig& config,
                    const std::map<std::string, Detection>& initial_detections, std::optional<ScorerModel> initial_model,
                    std::string run_id) {
  const auto ids = dataset.images_with_label(class_name);
  if (ids.empty()) throw std::invalid_argument("class '" + class_name + "' has no labeled images");
  if (config.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  const QuestionKind kind = config.question_kind.value_or(default_question_kind(config.strategy));
  if (!compatible(config.strategy, kind)) {
    throw std::invalid_argument("strategy " + std::string(to_string(config.strategy)) + " cannot use " +
                                std::string(to_string(kind)) + " questions");
  }

  RunState state;
  state.run_id = std::move(run_id);
  state.class_name = class_name;
  state.strategy = config.strategy;
  state.question_kind = kind;
  state.max_iterations = config.max_iterations;
  state.seed = config.seed;
  state.model = std::move(initial_model);
  for (const auto& id : ids) {
    const auto it = initial_detections.find(id);
    if (it == initial_detections.end()) throw std::invalid_argument("initial detections miss image '" + id + "'");
    const ImageRecord& img = dataset.image(id);
    const Detection& det = it->second;
    if (det.proposal_index >= img.proposals.size() || !(det.box == img.proposals[det.proposal_index].box)) {
      throw std::invalid_argument("initial detection of image '" + id + "' is not one of its proposals");
    }
    state.active.insert(id);
    state.spaces.emplace(id, full_space(id, img.proposals.size()));
    Detection d = det;
    d.class_name = class_name;
    state.current_detections.emplace(id, std::move(d));
  }
  begin_round_impl(state, dataset);
  return state;
}

void begin_round(RunState& state, const Dataset& dataset, const LoopOptions&) { begin_round_impl(state, dataset); }

VerificationEvent make_event(const RunState& state, const std::string& image_id, const AnswerRecord& record) {
  VerificationEvent ev;
  ev.seq = state.events_applied;
  ev.run_id = state.run_id;
  ev.question = state.question_for(image_id);
  ev.question_id = question_id(state.run_id, ev.question);
  ev.answer = record.answer;
  ev.elapsed_seconds = record.elapsed_seconds;
  ev.source = record.source;
  ev.annotator_id = record.annotator_id;
  ev.timestamp = record.timestamp.value_or(state.total_seconds + record.elapsed_seconds);
  return ev;
}

void record_answer(RunState& state, const Dataset& dataset, const VerificationEvent& event) {
  if (state.finished) throw StaleAnswerError("run '" + state.run_id + "' has finished");
  if (event.run_id != state.run_id) {
    throw StaleAnswerError("event belongs to run '" + event.run_id + "', not '" + state.run_id + "'");
  }
  if (event.seq != state.events_applied) {
    throw StaleAnswerError("event seq " + std::to_string(event.seq) + " does not follow " +
                           std::to_string(state.events_applied));
  }
  const std::string& id = event.question.image_id;
  const auto pos = std::find(state.pending.begin(), state.pending.end(), id);
  if (pos == state.pending.end()) throw StaleAnswerError("no pending question for image '" + id + "'");
  const VerificationQuestion q = state.question_for(id);
  if (event.question_id != question_id(state.run_id, q) || event.question.proposal_index != q.proposal_index ||
      event.question.kind != q.kind) {
    throw StaleAnswerError("answer does not match the pending question for image '" + id + "'");
  }
  if (!is_legal(event.answer, q.kind)) {
    throw std::invalid_argument("answer '" + std::string(to_string(event.answer)) + "' is not legal for " +
                                std::string(to_string(q.kind)) + " questions");
  }
  if (!(event.elapsed_seconds >= 0.0)) throw std::invalid_argument("elapsed_seconds must be non-negative");

  state.answer_cache.insert_or_assign(AnswerKey{id, q.proposal_index, q.kind}, event.answer);
  apply_answer(state, dataset, q, event.answer);
  state.pending.erase(pos);
  ++state.round_events;
  ++state.events_applied;
  state.total_seconds += event.elapsed_seconds;
  state.event_log.push_back(event);
}

void submit(RunState& state, const Dataset& dataset, const VerificationEvent& event, const LoopOptions& options) {
  if (state.curve.empty()) state.curve.push_back(make_curve_point(state, options));
  record_answer(state, dataset, event);
  if (state.pending.empty()) complete_round(state, dataset, options);
}

ScorerModel retrain_round(RunState& state, const Dataset& dataset, const LoopOptions& options) {
  const int round = state.iteration + 1;
  if (state.fixed_positives.empty()) {
    state.warnings.push_back("round " + std::to_string(round) + ": no verified positives; previous model kept");
    return state.model.value_or(ScorerModel::zero(state.class_name, dataset.feature_dim()));
  }
  std::vector<Detection> positives;
  positives.reserve(state.fixed_positives.size());
  for (const auto& [id, det] : state.fixed_positives) positives.push_back(det);
  const std::uint64_t seed = detail::derive_seed(state.seed, "retrain", static_cast<std::uint64_t>(round));
  const auto bg = sample_background(dataset, positives, seed, options.max_background_per_image);
  if (bg.empty()) {
    throw std::runtime_error("round " + std::to_string(round) + ": no background proposals with IoU < 0.5 to the " +
                             "verified positives");
  }
  std::vector<std::vector<double>> pos, neg;
  for (const auto& d : positives) pos.push_back(dataset.image(d.image_id).proposals[d.proposal_index].features);
  for (const auto& r : bg) neg.push_back(dataset.image(r.image_id).proposals[r.index].features);
  ScorerModel model = train_detector(pos, neg, options.train, seed, state.class_name);
  model.meta.iteration = round;
  if (model.meta.degenerate) {
    state.warnings.push_back("round " + std::to_string(round) + ": degenerate training set; zero-weight model used");
  }
  return model;
}

void relocalize_round(RunState& state, const ScorerModel& model, const Dataset& dataset) {
  const std::vector<std::string> ids(state.active.begin(), state.active.end());
  for (const auto& id : ids) {
    const SearchSpace& space = state.spaces.at(id);
    if (space.alive.empty()) {
      state.active.erase(id);
      state.current_detections.erase(id);
      state.exhausted.insert(id);
      continue;
    }
    const ImageRecord& img = dataset.image(id);
    std::size_t best = space.alive.front();
    double best_score = model.score(img.proposals[best].features);
    for (std::size_t i : space.alive) {
      const double s = model.score(img.proposals[i].features);
      if (s > best_score) {
        best = i;
        best_score = s;
      }
    }
    state.current_detections.insert_or_assign(
        id, Detection{id, state.class_name, best, img.proposals[best].box, best_score});
  }
}

void complete_round(RunState& state, const Dataset& dataset, const LoopOptions& options) {
  if (!state.pending.empty()) throw std::logic_error("round still has pending questions");
  ScorerModel model = retrain_round(state, dataset, options);
  relocalize_round(state, model, dataset);
  state.model = std::move(model);
  ++state.iteration;
  state.curve.push_back(make_curve_point(state, options));
  if (state.active.empty()) {
    finish(state, "no active images left");
  } else if (state.iteration >= state.max_iterations) {
    finish(state, "iteration limit reached");
  } else {
    begin_round_impl(state, dataset);
  }
  if (options.on_round) options.on_round(state);
}

RoundStatus verify_round(RunState& state, const Dataset& dataset, AnswerSource& source, const LoopOptions& options) {
  if (state.finished) return RoundStatus::Completed;
  while (!state.pending.empty()) {
    const std::string id = state.pending.front();
    const auto record = source.answer(state.question_for(id));
    if (!record) return RoundStatus::Suspended;
    const VerificationEvent ev = make_event(state, id, *record);
    if (options.on_event) options.on_event(ev);
    record_answer(state, dataset, ev);
  }
  complete_round(state, dataset, options);
  return RoundStatus::Completed;
}

RoundStatus run_loop(RunState& state, const Dataset& dataset, AnswerSource& source, const LoopOptions& options) {
  if (state.curve.empty()) state.curve.push_back(make_curve_point(state, options));
  while (!state.finished) {
    if (verify_round(state, dataset, source, options) == RoundStatus::Suspended) return RoundStatus::Suspended;
  }
  return RoundStatus::Completed;
}

std::map<std::string, Detection> detections_of(const RunState& state) {
  std::map<std::string, Detection> out = state.fixed_positives;
  out.insert(state.current_detections.begin(), state.current_detections.end());
  return out;
}

CurvePoint make_curve_point(const RunState& state, const LoopOptions& options) {
  CurvePoint p;
  p.iteration = state.iteration;
  p.cumulative_verifications = state.events_applied;
  p.cumulative_seconds = state.total_seconds;
  if (options.corloc) p.corloc = options.corloc(detections_of(state));
  const std::size_t labeled = state.labeled_images();
  p.fixed_fraction = labeled == 0 ? 0.0 : static_cast<double>(state.fixed_positives.size()) / labeled;
  return p;
}

}  // namespace boxverify
