#include "boxverify/pruning.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace boxverify {

namespace {

template <typename Keep>
SearchSpace filter(const SearchSpace& space, std::span<const Box> boxes, Keep keep) {
  SearchSpace out{space.image_id, {}};
  out.alive.reserve(space.alive.size());
  for (std::size_t idx : space.alive) {
    if (idx >= boxes.size()) throw std::out_of_range("proposal index out of range in search space");
    if (keep(boxes[idx])) out.alive.push_back(idx);
  }
  return out;
}

}  // namespace

bool SearchSpace::contains(std::size_t index) const {
  return std::binary_search(alive.begin(), alive.end(), index);
}

SearchSpace full_space(std::string image_id, std::size_t proposal_count) {
  SearchSpace s{std::move(image_id), std::vector<std::size_t>(proposal_count)};
  std::iota(s.alive.begin(), s.alive.end(), std::size_t{0});
  return s;
}

SearchSpace prune_neg(const SearchSpace& space, std::size_t detection_index) {
  if (!space.contains(detection_index)) {
    throw std::logic_error("prune_neg: proposal " + std::to_string(detection_index) + " is not alive in image '" +
                           space.image_id + "'");
  }
  SearchSpace out = space;
  out.alive.erase(std::lower_bound(out.alive.begin(), out.alive.end(), detection_index));
  return out;
}

SearchSpace prune_extneg(const SearchSpace& space, std::span<const Box> boxes, const Box& detection) {
  return filter(space, boxes, [&](const Box& p) { return iou(p, detection) < kCorrectOverlap; });
}

SearchSpace prune_part(const SearchSpace& space, std::span<const Box> boxes, const Box& detection) {
  return filter(space, boxes, [&](const Box& p) { return ioa(detection, p) > kPruneContainment; });
}

SearchSpace prune_container(const SearchSpace& space, std::span<const Box> boxes, const Box& detection) {
  return filter(space, boxes, [&](const Box& p) { return ioa(p, detection) > kPruneContainment; });
}

SearchSpace prune_mixed(const SearchSpace& space, std::span<const Box> boxes, const Box& detection) {
  return filter(space, boxes, [&](const Box& p) {
    const double overlap = iou(p, detection);
    const bool is_inside = ioa(p, detection) > kPruneContainment;
    const bool contains_it = ioa(detection, p) > kPruneContainment;
    return !(is_inside || contains_it || overlap == 0.0 || overlap >= kCorrectOverlap);
  });
}

SearchSpace prune_missed(const SearchSpace& space, std::span<const Box> boxes, const Box& detection) {
  return filter(space, boxes, [&](const Box& p) { return iou(p, detection) == 0.0; });
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::OnlyRetrain: return "I";
    case Strategy::RemoveNeg: return "II";
    case Strategy::RemoveExtNeg: return "III";
    case Strategy::RemovePcmm: return "IV";
  }
  return "?";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "I") return Strategy::OnlyRetrain;
  if (text == "II") return Strategy::RemoveNeg;
  if (text == "III") return Strategy::RemoveExtNeg;
  if (text == "IV") return Strategy::RemovePcmm;
  throw std::invalid_argument("unknown strategy '" + std::string(text) + "' (expected I, II, III or IV)");
}

QuestionKind default_question_kind(Strategy s) {
  return s == Strategy::RemovePcmm ? QuestionKind::Ypcmm : QuestionKind::YesNo;
}

bool compatible(Strategy s, QuestionKind kind) {
  switch (s) {
    case Strategy::OnlyRetrain: return true;
    case Strategy::RemoveNeg:
    case Strategy::RemoveExtNeg: return kind == QuestionKind::YesNo;
    case Strategy::RemovePcmm: return kind == QuestionKind::Ypcmm;
  }
  return false;
}

SearchSpace apply_strategy(Strategy strategy, const SearchSpace& space, std::span<const Box> boxes,
                           const VerificationQuestion& question, Answer answer) {
  if (question.image_id != space.image_id) {
    throw std::invalid_argument("verification for image '" + question.image_id + "' applied to space of '" +
                                space.image_id + "'");
  }
  if (!is_legal(answer, question.kind)) {
    throw std::invalid_argument("answer '" + std::string(to_string(answer)) + "' is not legal for a " +
                                std::string(to_string(question.kind)) + " question");
  }
  if (!compatible(strategy, question.kind)) {
    throw std::invalid_argument("strategy " + std::string(to_string(strategy)) + " cannot use " +
                                std::string(to_string(question.kind)) + " answers");
  }
  if (answer == Answer::Yes || strategy == Strategy::OnlyRetrain) return space;

  const Box& d = question.detection;
  switch (strategy) {
    case Strategy::RemoveNeg: return prune_neg(space, question.proposal_index);
    case Strategy::RemoveExtNeg: return prune_extneg(space, boxes, d);
    case Strategy::RemovePcmm: {
      SearchSpace out;
      switch (answer) {
        case Answer::Part: out = prune_part(space, boxes, d); break;
        case Answer::Container: out = prune_container(space, boxes, d); break;
        case Answer::Mixed: out = prune_mixed(space, boxes, d); break;
        case Answer::Missed: out = prune_missed(space, boxes, d); break;
        default: throw std::invalid_argument("unexpected answer under strategy IV");
      }
      auto it = std::lower_bound(out.alive.begin(), out.alive.end(), question.proposal_index);
      if (it != out.alive.end() && *it == question.proposal_index) out.alive.erase(it);
      return out;
    }
    case Strategy::OnlyRetrain: break;
  }
  return space;
}

SearchSpace apply_strategy(Strategy strategy, const SearchSpace& space, std::span<const Box> boxes,
                           const VerificationEvent& event) {
  return apply_strategy(strategy, space, boxes, event.question, event.answer);
}

}  // namespace boxverify
