#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "boxverify/loop.hpp"
#include "boxverify/metrics.hpp"
#include "boxverify/simulated_annotator.hpp"
#include "boxverify/simulation.hpp"
#include "boxverify/synthetic.hpp"

using namespace boxverify;

namespace {

ImageRecord make_image(const std::string& id, std::vector<Box> boxes, std::vector<double> signal) {
  ImageRecord img;
  img.id = id;
  img.width = 100;
  img.height = 100;
  img.labels = {"cat"};
  for (std::size_t i = 0; i < boxes.size(); ++i) img.proposals.push_back({boxes[i], {signal[i], 1.0}, 1.0});
  return img;
}

Detection det_of(const Dataset& ds, const std::string& id, std::size_t index) {
  return {id, "cat", index, ds.image(id).proposals[index].box, 0.0};
}

class Scripted : public AnswerSource {
 public:
  explicit Scripted(std::function<std::optional<Answer>(const VerificationQuestion&)> f) : f_(std::move(f)) {}
  std::optional<AnswerRecord> answer(const VerificationQuestion& q) override {
    asked.push_back(q);
    const auto a = f_(q);
    if (!a) return std::nullopt;
    return AnswerRecord{*a, q.kind == QuestionKind::YesNo ? 1.6 : 2.4, AnswerOrigin::Simulated, "script", {}};
  }
  std::vector<VerificationQuestion> asked;

 private:
  std::function<std::optional<Answer>(const VerificationQuestion&)> f_;
};

// Three images; in each, proposal 0 is the object, 1 overlaps it, 2 and 3 are elsewhere.
Dataset toy() {
  std::vector<ImageRecord> images;
  for (const char* id : {"a", "b", "c"}) {
    images.push_back(make_image(id, {Box(0, 0, 20, 20), Box(2, 2, 22, 22), Box(50, 50, 70, 70), Box(52, 50, 72, 70)},
                                {1.0, 0.2, 0.5, 0.4}));
  }
  return Dataset({"cat"}, 2, images);
}

std::map<std::string, Detection> d0_at(const Dataset& ds, std::size_t index) {
  std::map<std::string, Detection> d;
  for (const auto& img : ds.images()) d.emplace(img.id, det_of(ds, img.id, index));
  return d;
}

LoopConfig cfg(Strategy s, int max_iterations = 10) {
  LoopConfig c;
  c.strategy = s;
  c.max_iterations = max_iterations;
  return c;
}

VerificationEvent answer_event(const RunState& s, const std::string& id, Answer a, double cost = 1.6) {
  return make_event(s, id, AnswerRecord{a, cost, AnswerOrigin::Human, "u", 1.0});
}

}  // namespace

TEST(InitState, FullSpacesAndActiveSet) {
  const Dataset ds = toy();
  const RunState s = init_state(ds, "cat", cfg(Strategy::RemoveExtNeg), d0_at(ds, 2));
  EXPECT_EQ(s.active.size(), 3u);
  std::size_t total = 0;
  for (const auto& [id, sp] : s.spaces) total += sp.alive.size();
  EXPECT_EQ(total, ds.total_proposals("cat"));
  EXPECT_EQ(s.iteration, 0);
  EXPECT_EQ(s.pending, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(s.event_log.empty());
  EXPECT_EQ(s.question_for("a").iteration, 1);
}

TEST(InitState, Errors) {
  const Dataset ds = toy();
  EXPECT_THROW(init_state(ds, "dog", cfg(Strategy::RemoveNeg), {}), std::invalid_argument);
  auto d0 = d0_at(ds, 0);
  d0.erase("b");
  EXPECT_THROW(init_state(ds, "cat", cfg(Strategy::RemoveNeg), d0), std::invalid_argument);
  d0 = d0_at(ds, 0);
  d0["a"].box = Box(1, 1, 2, 2);
  EXPECT_THROW(init_state(ds, "cat", cfg(Strategy::RemoveNeg), d0), std::invalid_argument);
  LoopConfig c = cfg(Strategy::RemoveExtNeg);
  c.question_kind = QuestionKind::Ypcmm;
  EXPECT_THROW(init_state(ds, "cat", c, d0_at(ds, 0)), std::invalid_argument);
  c = cfg(Strategy::RemoveNeg, 0);
  EXPECT_THROW(init_state(ds, "cat", c, d0_at(ds, 0)), std::invalid_argument);
}

TEST(RecordAnswer, YesFixesTheImage) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveExtNeg), d0_at(ds, 0));
  record_answer(s, ds, answer_event(s, "a", Answer::Yes));
  EXPECT_TRUE(s.fixed_positives.count("a"));
  EXPECT_FALSE(s.active.count("a"));
  EXPECT_EQ(s.pending, (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(s.events_applied, 1u);
  EXPECT_DOUBLE_EQ(s.total_seconds, 1.6);
}

TEST(RecordAnswer, ExtNegRemovesOverlappingNeighbour) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveExtNeg), d0_at(ds, 2));
  ASSERT_GE(iou(ds.image("a").proposals[2].box, ds.image("a").proposals[3].box), 0.5);
  record_answer(s, ds, answer_event(s, "a", Answer::No));
  EXPECT_EQ(s.spaces.at("a").alive, (std::vector<std::size_t>{0, 1}));
  RunState t = init_state(ds, "cat", cfg(Strategy::RemoveNeg), d0_at(ds, 2));
  record_answer(t, ds, answer_event(t, "a", Answer::No));
  EXPECT_EQ(t.spaces.at("a").alive, (std::vector<std::size_t>{0, 1, 3}));
}

TEST(RecordAnswer, RejectsStaleDuplicateAndIllegal) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveExtNeg), d0_at(ds, 2), std::nullopt, "r1");
  const VerificationEvent first = answer_event(s, "a", Answer::No);
  record_answer(s, ds, first);
  EXPECT_THROW(record_answer(s, ds, first), StaleAnswerError);  // seq already used
  VerificationEvent dup = first;
  dup.seq = s.events_applied;
  EXPECT_THROW(record_answer(s, ds, dup), StaleAnswerError);  // image no longer pending

  VerificationEvent wrong = answer_event(s, "b", Answer::No);
  wrong.run_id = "other";
  EXPECT_THROW(record_answer(s, ds, wrong), StaleAnswerError);
  wrong = answer_event(s, "b", Answer::No);
  wrong.question.proposal_index = 3;
  EXPECT_THROW(record_answer(s, ds, wrong), StaleAnswerError);
  wrong = answer_event(s, "b", Answer::No);
  wrong.question_id = "0000000000000000";
  EXPECT_THROW(record_answer(s, ds, wrong), StaleAnswerError);
  EXPECT_THROW(record_answer(s, ds, answer_event(s, "b", Answer::Part)), std::invalid_argument);
  EXPECT_THROW(record_answer(s, ds, answer_event(s, "b", Answer::No, -1.0)), std::invalid_argument);
  EXPECT_EQ(s.events_applied, 1u);
  EXPECT_NO_THROW(record_answer(s, ds, answer_event(s, "b", Answer::No)));
}

TEST(Relocalize, TiesGoToTheLowestIndex) {
  std::vector<ImageRecord> images{make_image("a", {Box(0, 0, 10, 10), Box(20, 20, 30, 30), Box(40, 40, 50, 50)},
                                             {0.1, 0.7, 0.7})};
  const Dataset ds({"cat"}, 2, images);
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveNeg), {{"a", det_of(ds, "a", 0)}});
  ScorerModel m = ScorerModel::zero("cat", 2);
  m.weights = {1.0, 0.0};
  relocalize_round(s, m, ds);
  EXPECT_EQ(s.current_detections.at("a").proposal_index, 1u);
  s.spaces.at("a").alive = {2};
  relocalize_round(s, m, ds);
  EXPECT_EQ(s.current_detections.at("a").proposal_index, 2u);
  s.spaces.at("a").alive.clear();
  relocalize_round(s, m, ds);
  EXPECT_TRUE(s.exhausted.count("a"));
  EXPECT_FALSE(s.active.count("a"));
}

TEST(Relocalize, MissedMovesTheArgmaxOutOfTheRegion) {
  // Detection 0 sits in an empty region with two overlapping boxes; the object is at 3.
  std::vector<ImageRecord> images{make_image(
      "a", {Box(0, 0, 20, 20), Box(10, 10, 30, 30), Box(15, 0, 35, 20), Box(60, 60, 90, 90)}, {0.9, 0.8, 0.7, 0.6})};
  const Dataset ds({"cat"}, 2, images);
  RunState s = init_state(ds, "cat", cfg(Strategy::RemovePcmm), {{"a", det_of(ds, "a", 0)}});
  record_answer(s, ds, answer_event(s, "a", Answer::Missed, 2.4));
  EXPECT_EQ(s.spaces.at("a").alive, (std::vector<std::size_t>{3}));
  ScorerModel m = ScorerModel::zero("cat", 2);
  m.weights = {1.0, 0.0};
  relocalize_round(s, m, ds);
  EXPECT_EQ(s.current_detections.at("a").proposal_index, 3u);
}

TEST(RetrainRound, FallbacksAndErrors) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveNeg), d0_at(ds, 2));
  ScorerModel prev = ScorerModel::zero("cat", 2);
  prev.bias = 4.0;
  s.model = prev;
  EXPECT_EQ(retrain_round(s, ds, {}).bias, 4.0);
  ASSERT_EQ(s.warnings.size(), 1u);

  record_answer(s, ds, answer_event(s, "a", Answer::Yes));
  const ScorerModel m = retrain_round(s, ds, {});
  EXPECT_EQ(m.meta.positives, 1u);
  EXPECT_EQ(m.meta.background, 2u);  // proposals 2 and 3 of "a"
  EXPECT_EQ(m.meta.iteration, 1);

  // An image whose every proposal overlaps the positive leaves no background.
  std::vector<ImageRecord> images{make_image("a", {Box(0, 0, 20, 20), Box(0, 0, 20, 19)}, {1.0, 0.5})};
  const Dataset tight({"cat"}, 2, images);
  RunState t = init_state(tight, "cat", cfg(Strategy::RemoveNeg), {{"a", det_of(tight, "a", 0)}});
  record_answer(t, tight, answer_event(t, "a", Answer::Yes));
  EXPECT_THROW(retrain_round(t, tight, {}), std::runtime_error);
}

TEST(RunLoop, AlwaysNoUnderStrategyIStopsOnceEverythingIsCached) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::OnlyRetrain), d0_at(ds, 2));
  Scripted never([](const VerificationQuestion&) { return Answer::No; });
  EXPECT_EQ(run_loop(s, ds, never, {}), RoundStatus::Completed);
  EXPECT_TRUE(s.finished);
  EXPECT_EQ(s.finish_reason, "no new verification events");
  // Round 1 asks the D0 boxes; with no positives the zero model ties everywhere and
  // moves each image to proposal 0, asked in round 2; round 3 would only repeat it.
  EXPECT_EQ(never.asked.size(), 6u);
  EXPECT_EQ(s.iteration, 2);
  EXPECT_EQ(s.warnings.size(), 2u);
}

TEST(RunLoop, AlwaysNoWithPruningEndsByExhaustionOrLimit) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveNeg, 10), d0_at(ds, 2));
  Scripted never([](const VerificationQuestion&) { return Answer::No; });
  run_loop(s, ds, never, {});
  EXPECT_TRUE(s.finished);
  EXPECT_EQ(s.exhausted.size(), 3u);
  EXPECT_EQ(s.finish_reason, "no active images left");
  EXPECT_EQ(never.asked.size(), 12u);  // every proposal asked exactly once
  std::set<std::pair<std::string, std::size_t>> unique;
  for (const auto& q : never.asked) unique.insert({q.image_id, q.proposal_index});
  EXPECT_EQ(unique.size(), 12u);
}

TEST(RunLoop, SuspendsAndResumes) {
  const Dataset ds = toy();
  auto oracle = [](const VerificationQuestion& q) -> std::optional<Answer> {
    return q.proposal_index == 0 ? Answer::Yes : Answer::No;
  };
  RunState whole = init_state(ds, "cat", cfg(Strategy::RemoveExtNeg), d0_at(ds, 2));
  Scripted all(oracle);
  run_loop(whole, ds, all, {});

  RunState part = init_state(ds, "cat", cfg(Strategy::RemoveExtNeg), d0_at(ds, 2));
  int budget = 2;
  Scripted limited([&](const VerificationQuestion& q) -> std::optional<Answer> {
    if (budget-- <= 0) return std::nullopt;
    return oracle(q);
  });
  EXPECT_EQ(run_loop(part, ds, limited, {}), RoundStatus::Suspended);
  EXPECT_FALSE(part.finished);
  EXPECT_EQ(part.pending.size(), 1u);
  Scripted rest(oracle);
  EXPECT_EQ(run_loop(part, ds, rest, {}), RoundStatus::Completed);
  EXPECT_EQ(part.fixed_positives.size(), whole.fixed_positives.size());
  EXPECT_EQ(part.events_applied, whole.events_applied);
  EXPECT_EQ(part.curve, whole.curve);
  EXPECT_EQ(part.fixed_positives.size(), 3u);
}

TEST(RunLoop, IterationLimit) {
  const Dataset ds = toy();
  RunState s = init_state(ds, "cat", cfg(Strategy::RemoveNeg, 1), d0_at(ds, 3));
  Scripted never([](const VerificationQuestion&) { return Answer::No; });
  run_loop(s, ds, never, {});
  EXPECT_EQ(s.finish_reason, "iteration limit reached");
  EXPECT_EQ(s.curve.size(), 2u);
  Scripted again([](const VerificationQuestion&) { return Answer::No; });
  EXPECT_EQ(verify_round(s, ds, again, {}), RoundStatus::Completed);
  EXPECT_TRUE(again.asked.empty());
}

namespace {

struct Invariants {
  const Dataset& ds;
  std::vector<std::string> labeled;
  std::map<std::string, std::vector<std::size_t>> last_spaces;
  std::set<std::string> last_fixed;

  void check(const RunState& s) {
    std::set<std::string> all;
    for (const auto& id : s.active) {
      ASSERT_FALSE(s.fixed_positives.count(id));
      ASSERT_FALSE(s.exhausted.count(id));
      all.insert(id);
      if (!s.finished || s.current_detections.count(id)) {
        ASSERT_TRUE(s.spaces.at(id).contains(s.current_detections.at(id).proposal_index));
      }
    }
    for (const auto& [id, d] : s.fixed_positives) all.insert(id);
    for (const auto& id : s.exhausted) all.insert(id);
    ASSERT_EQ(all, std::set<std::string>(labeled.begin(), labeled.end()));
    for (const auto& [id, sp] : s.spaces) {
      const auto& before = last_spaces[id];
      if (!before.empty()) {
        ASSERT_TRUE(std::includes(before.begin(), before.end(), sp.alive.begin(), sp.alive.end()));
      }
      last_spaces[id] = sp.alive;
    }
    for (const auto& id : last_fixed) ASSERT_TRUE(s.fixed_positives.count(id));
    last_fixed.clear();
    for (const auto& [id, d] : s.fixed_positives) last_fixed.insert(id);
    std::set<AnswerKey> asked;
    for (const auto& e : s.event_log) {
      ASSERT_TRUE(asked.insert({e.question.image_id, e.question.proposal_index, e.question.kind}).second);
    }
    for (const auto& [id, d] : s.fixed_positives) {
      ASSERT_EQ(s.answer_cache.at({id, d.proposal_index, s.question_kind}), Answer::Yes);
    }
    ASSERT_LE(s.events_applied, labeled.size() * static_cast<std::size_t>(s.max_iterations));
  }
};

LoadedDataset small_synthetic(std::uint64_t seed) {
  SyntheticConfig c = SyntheticConfig::tradeoff_benchmark();
  c.num_images = 30;
  c.proposals_per_image = 40;
  return generate_synthetic(c, seed);
}

}  // namespace

TEST(LoopProperty, InvariantsHoldEveryRound) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const LoadedDataset data = small_synthetic(seed);
    for (Strategy st : {Strategy::OnlyRetrain, Strategy::RemoveNeg, Strategy::RemoveExtNeg, Strategy::RemovePcmm}) {
      for (double tau : {0.0, 0.15}) {
        SimulationConfig sc;
        sc.strategy = st;
        sc.seed = seed;
        sc.profile.noise_temperature = tau;
        sc.mil.max_iterations = 2;
        Invariants inv{data.dataset, data.dataset.images_with_label("object"), {}, {}};
        LoopOptions opt;
        opt.on_round = [&](const RunState& s) { inv.check(s); };
        const RunState s = simulate_class(data.dataset, data.ground_truth, "object", sc, opt);
        ASSERT_TRUE(s.finished);
        for (std::size_t i = 1; i < s.curve.size(); ++i) {
          ASSERT_GE(s.curve[i].cumulative_verifications, s.curve[i - 1].cumulative_verifications);
          ASSERT_GE(s.curve[i].cumulative_seconds, s.curve[i - 1].cumulative_seconds);
        }
        if (tau == 0.0) {
          const auto ids = data.dataset.images_with_label("object");
          std::vector<std::string> fixed;
          for (const auto& [id, d] : s.fixed_positives) fixed.push_back(id);
          EXPECT_DOUBLE_EQ(corloc(s.fixed_positives, data.ground_truth, "object", fixed), 1.0);
          if (st != Strategy::OnlyRetrain) {
            EXPECT_TRUE(s.exhausted.empty());
          }
        }
      }
    }
  }
}

TEST(LoopProperty, IdenticalSeedsGiveIdenticalLogs) {
  const LoadedDataset data = small_synthetic(4);
  SimulationConfig sc;
  sc.strategy = Strategy::RemoveExtNeg;
  sc.profile.noise_temperature = 0.1;
  sc.mil.max_iterations = 2;
  const RunState a = simulate_class(data.dataset, data.ground_truth, "object", sc);
  const RunState b = simulate_class(data.dataset, data.ground_truth, "object", sc);
  ASSERT_EQ(a.event_log.size(), b.event_log.size());
  for (std::size_t i = 0; i < a.event_log.size(); ++i) {
    EXPECT_EQ(a.event_log[i].question_id, b.event_log[i].question_id);
    EXPECT_EQ(a.event_log[i].answer, b.event_log[i].answer);
  }
  EXPECT_EQ(a.curve, b.curve);
}

TEST(LoopProperty, PerfectOracleFixesEveryImageOnTheSeparableSet) {
  SyntheticConfig c = SyntheticConfig::separable_benchmark();
  c.num_images = 40;
  const LoadedDataset data = generate_synthetic(c, 9);
  // Start from the worst-scoring proposal instead of MIL so the loop has work to do.
  std::map<std::string, Detection> d0;
  for (const auto& id : data.dataset.images_with_label("object")) {
    const auto& img = data.dataset.image(id);
    std::size_t worst = 0;
    for (std::size_t i = 0; i < img.proposals.size(); ++i)
      if (img.proposals[i].features[0] < img.proposals[worst].features[0]) worst = i;
    d0.emplace(id, Detection{id, "object", worst, img.proposals[worst].box, 0.0});
  }
  for (Strategy st : {Strategy::RemoveNeg, Strategy::RemoveExtNeg, Strategy::RemovePcmm}) {
    LoopConfig lc = cfg(st);
    RunState s = init_state(data.dataset, "object", lc, d0);
    SimulatedAnnotator oracle(data.ground_truth, AnnotatorProfile{}, 0);
    run_loop(s, data.dataset, oracle, {});
    EXPECT_EQ(s.fixed_positives.size(), d0.size()) << to_string(st);
    EXPECT_LE(s.iteration, 10);
  }
}
