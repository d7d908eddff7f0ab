#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxverify/annotator.hpp"
#include "boxverify/geometry.hpp"

namespace boxverify {

/// Tolerance on IoA for "inside" / "contains" decisions during pruning.
inline constexpr double kPruneContainment = 0.9;
/// A No answer rules out every proposal overlapping the detection at least this much.
inline constexpr double kCorrectOverlap = 0.5;

/// Surviving proposal indices of one image, ascending. Only ever shrinks.
struct SearchSpace {
  std::string image_id;
  std::vector<std::size_t> alive;

  bool contains(std::size_t index) const;
  friend bool operator==(const SearchSpace&, const SearchSpace&) = default;
};

SearchSpace full_space(std::string image_id, std::size_t proposal_count);

// Each rule takes the image's proposal boxes (indexed like the proposals).

/// Removes exactly the verified proposal. Throws std::logic_error if it is not alive.
SearchSpace prune_neg(const SearchSpace& space, std::size_t detection_index);

/// Removes every proposal with IoU >= 0.5 to the detection.
SearchSpace prune_extneg(const SearchSpace& space, std::span<const Box> boxes, const Box& detection);

/// Keeps proposals that contain the detection: IoA(detection, p) > 0.9.
SearchSpace prune_part(const SearchSpace& space, std::span<const Box> boxes, const Box& detection);

/// Keeps proposals inside the detection: IoA(p, detection) > 0.9.
SearchSpace prune_container(const SearchSpace& space, std::span<const Box> boxes, const Box& detection);

/// Keeps only partial overlaps: drops proposals inside the detection, containing it,
/// disjoint from it, or overlapping it with IoU >= 0.5.
SearchSpace prune_mixed(const SearchSpace& space, std::span<const Box> boxes, const Box& detection);

/// Keeps proposals with zero IoU to the detection.
SearchSpace prune_missed(const SearchSpace& space, std::span<const Box> boxes, const Box& detection);

/// How verification answers are used.
enum class Strategy {
  OnlyRetrain,   // I
  RemoveNeg,     // II
  RemoveExtNeg,  // III
  RemovePcmm,    // IV
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

/// The question kind a strategy asks by default (YPCMM for IV, Yes/No otherwise).
QuestionKind default_question_kind(Strategy s);
/// False for combinations that cannot be dispatched (II/III need Yes/No, IV needs YPCMM).
bool compatible(Strategy s, QuestionKind kind);

/// Applies one verification outcome to the image's space. Under IV the verified
/// detection itself is also dropped, since the answer ruled it out. Yes leaves the
/// space unchanged (the image is fixed). Throws std::invalid_argument on an answer
/// the strategy cannot dispatch.
SearchSpace apply_strategy(Strategy strategy, const SearchSpace& space, std::span<const Box> boxes,
                           const VerificationQuestion& question, Answer answer);
SearchSpace apply_strategy(Strategy strategy, const SearchSpace& space, std::span<const Box> boxes,
                           const VerificationEvent& event);

}  // namespace boxverify
