#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "boxverify/detector.hpp"
#include "boxverify/synthetic.hpp"

using namespace boxverify;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows cloud(std::mt19937_64& rng, double cx, double cy, int n, double spread = 0.2) {
  std::normal_distribution<double> noise(0.0, spread);
  Rows out;
  for (int i = 0; i < n; ++i) out.push_back({cx + noise(rng), cy + noise(rng)});
  return out;
}

ImageRecord image_with(std::vector<Box> boxes, std::vector<std::vector<double>> features,
                       std::vector<double> objectness = {}) {
  ImageRecord img;
  img.id = "img";
  img.width = 100;
  img.height = 100;
  img.labels = {"cat"};
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    img.proposals.push_back({boxes[i], features[i], objectness.empty() ? 1.0 : objectness[i]});
  }
  return img;
}

}  // namespace

TEST(TrainDetector, SeparatesToyClouds) {
  std::mt19937_64 rng(1);
  const Rows pos = cloud(rng, 1.0, 0.0, 40), neg = cloud(rng, 0.0, 1.0, 60);
  const ScorerModel m = train_detector(pos, neg, {}, 0, "cat");
  double min_pos = INFINITY, max_neg = -INFINITY;
  for (const auto& x : pos) min_pos = std::min(min_pos, m.score(x));
  for (const auto& x : neg) max_neg = std::max(max_neg, m.score(x));
  EXPECT_GT(min_pos, max_neg);
  EXPECT_EQ(m.meta.positives, 40u);
  EXPECT_EQ(m.meta.background, 60u);
  EXPECT_FALSE(m.meta.degenerate);
}

TEST(TrainDetector, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(2);
  for (Loss loss : {Loss::Logistic, Loss::SquaredHinge}) {
    // Overlapping clouds: the loss cannot reach zero, so many steps are taken.
    const Rows pos = cloud(rng, 0.3, 0.0, 50, 0.5), neg = cloud(rng, 0.0, 0.3, 50, 0.5);
    std::vector<double> trace;
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.check_monotone = true;
    cfg.loss_trace = &trace;
    ASSERT_NO_THROW(train_detector(pos, neg, cfg, 0));
    ASSERT_GT(trace.size(), 3u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
    EXPECT_LT(trace.back(), trace.front());
  }
}

TEST(TrainDetector, Deterministic) {
  std::mt19937_64 rng(3);
  const Rows pos = cloud(rng, 1.0, 0.0, 30, 0.6), neg = cloud(rng, 0.0, 1.0, 30, 0.6);
  const ScorerModel a = train_detector(pos, neg, {}, 9), b = train_detector(pos, neg, {}, 9);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(TrainDetector, DegenerateAndInvalidInputs) {
  const Rows same{{1.0, 2.0}, {1.0, 2.0}};
  const ScorerModel m = train_detector(same, same, {}, 0);
  EXPECT_TRUE(m.meta.degenerate);
  EXPECT_EQ(m.weights, (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(train_detector({}, same, {}, 0), std::invalid_argument);
  EXPECT_THROW(train_detector(same, {}, {}, 0), std::invalid_argument);
  EXPECT_THROW(train_detector(same, {{1.0}}, {}, 0), std::invalid_argument);
}

TEST(ScoreProposals, LinearPlusLogObjectness) {
  ScorerModel m = ScorerModel::zero("cat", 2);
  m.bias = 0.25;
  const ImageRecord img = image_with({Box(0, 0, 10, 10), Box(5, 5, 20, 20)}, {{1, 2}, {3, 4}}, {0.9, 0.1});
  EXPECT_EQ(score_proposals(m, img), (std::vector<double>{0.25, 0.25}));
  EXPECT_EQ(score_proposals(m, img, true, 0.0), score_proposals(m, img));
  const auto s = score_proposals(m, img, true, 1.0);
  EXPECT_GT(s[0], s[1]);
  EXPECT_DOUBLE_EQ(s[1], 0.25 + std::log(0.1));

  m.weights = {1.0, -1.0};
  EXPECT_DOUBLE_EQ(score_proposals(m, img)[1], 0.25 + 3 - 4);
  EXPECT_THROW(score_proposals(ScorerModel::zero("cat", 3), img), std::invalid_argument);
}

TEST(Nms, HandTrace) {
  // iou(A,B) = 0.6 and iou(B,C) = 0.6 with A, C disjoint cannot coexist, so B
  // overlaps C by 0.4 instead: still above 0.3, and B is already gone when C is visited.
  const Box a(0, 0, 6, 10), b(0, 0, 10, 10), c(6, 0, 10, 10);
  ASSERT_DOUBLE_EQ(iou(a, b), 0.6);
  ASSERT_DOUBLE_EQ(iou(b, c), 0.4);
  ASSERT_EQ(iou(a, c), 0.0);
  const std::vector<Box> boxes{a, b, c};
  const std::vector<double> scores{0.9, 0.8, 0.7};
  EXPECT_EQ(non_maximum_suppression(boxes, scores, 0.3), (std::vector<std::size_t>{0, 2}));
  // Without A, B suppresses C.
  EXPECT_EQ(non_maximum_suppression(std::vector<Box>{b, c}, std::vector<double>{0.8, 0.7}, 0.3),
            (std::vector<std::size_t>{0}));
}

TEST(Nms, IdenticalAndDisjoint) {
  const std::vector<Box> twins{Box(0, 0, 5, 5), Box(0, 0, 5, 5)};
  EXPECT_EQ(non_maximum_suppression(twins, std::vector<double>{1.0, 1.0}, 0.3).size(), 1u);
  const std::vector<Box> apart{Box(0, 0, 5, 5), Box(50, 50, 55, 55)};
  EXPECT_EQ(non_maximum_suppression(apart, std::vector<double>{1.0, 2.0}, 0.3), (std::vector<std::size_t>{1, 0}));
  EXPECT_THROW(non_maximum_suppression(apart, std::vector<double>{1.0}, 0.3), std::invalid_argument);
}

TEST(Nms, PropertyKeptBoxesOverlapLessThanThreshold) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> c(0, 60);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < 25; ++i) {
      int x1 = c(rng), x2 = c(rng), y1 = c(rng), y2 = c(rng);
      if (x1 > x2) std::swap(x1, x2);
      if (y1 > y2) std::swap(y1, y2);
      boxes.emplace_back(x1, y1, x2 + 1, y2 + 1);
      scores.push_back(u(rng));
    }
    const auto kept = non_maximum_suppression(boxes, scores, 0.3);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) ASSERT_LT(iou(boxes[kept[i]], boxes[kept[j]]), 0.3);
    // Every dropped box is covered by a higher-or-equal kept box.
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (std::find(kept.begin(), kept.end(), i) != kept.end()) continue;
      ASSERT_TRUE(std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
        return iou(boxes[i], boxes[k]) >= 0.3 && scores[k] >= scores[i];
      }));
    }
  }
}

TEST(SampleBackground, FiltersByOverlapAndCaps) {
  std::vector<ImageRecord> images;
  ImageRecord img = image_with({Box(0, 0, 10, 10), Box(0, 0, 10, 5), Box(0, 0, 10, 6), Box(50, 50, 60, 60)},
                               {{0}, {0}, {0}, {0}});
  images.push_back(img);
  img.id = "other";
  images.push_back(img);
  const Dataset ds({"cat"}, 1, images);
  const std::vector<Detection> pos{{"img", "cat", 0, Box(0, 0, 10, 10), 0.0}};
  const auto bg = sample_background(ds, pos, 0);
  // iou exactly 0.5 (index 1) is excluded; the positive-free image contributes nothing.
  ASSERT_EQ(bg.size(), 1u);
  EXPECT_EQ(bg[0].image_id, "img");
  EXPECT_EQ(bg[0].index, 3u);
  EXPECT_THROW(sample_background(ds, {}, 0), std::invalid_argument);
}

TEST(SampleBackground, UniformCapIsSeeded) {
  const LoadedDataset data = generate_synthetic(SyntheticConfig::separable_benchmark(), 1);
  std::vector<Detection> pos;
  for (const auto& img : data.dataset.images()) pos.push_back({img.id, "object", 0, img.proposals[0].box, 0.0});
  const auto a = sample_background(data.dataset, pos, 4, 10), b = sample_background(data.dataset, pos, 4, 10);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].index, b[i].index);
  std::map<std::string, int> per_image;
  for (const auto& r : a) {
    ++per_image[r.image_id];
    const auto& img = data.dataset.image(r.image_id);
    EXPECT_LT(iou(img.proposals[r.index].box, img.proposals[0].box), 0.5);
  }
  for (const auto& [id, n] : per_image) EXPECT_LE(n, 10);
}

TEST(DetectTest, NmsPerImageAndSortedGlobally) {
  ScorerModel m = ScorerModel::zero("cat", 1);
  m.weights = {1.0};
  ImageRecord a = image_with({Box(0, 0, 10, 10), Box(1, 0, 11, 10), Box(50, 50, 60, 60)}, {{3}, {2}, {1}});
  ImageRecord b = image_with({Box(0, 0, 10, 10)}, {{2.5}});
  b.id = "b";
  const Dataset ds({"cat"}, 1, {a, b});
  const auto dets = detect_test(m, ds);
  ASSERT_EQ(dets.size(), 3u);
  EXPECT_EQ(dets[0].score, 3.0);
  EXPECT_EQ(dets[1].image_id, "b");
  EXPECT_EQ(dets[2].proposal_index, 2u);
  EXPECT_EQ(detect_test(m, ds, 0.3, 2.6).size(), 1u);
}

TEST(ModelIo, RoundTripAndValidation) {
  ScorerModel m = ScorerModel::zero("cat", 3);
  m.weights = {0.1, -2.5, 1e-17};
  m.bias = 0.3;
  m.meta.positives = 4;
  m.meta.seed = 99;
  const auto path = std::filesystem::temp_directory_path() / "boxverify_model_test.json";
  save_model(path, m);
  const ScorerModel r = load_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(r.weights, m.weights);
  EXPECT_EQ(r.bias, m.bias);
  EXPECT_EQ(r.class_name, "cat");
  EXPECT_EQ(r.meta.positives, 4u);
  EXPECT_EQ(r.meta.seed, 99u);
  EXPECT_THROW(model_from_json(R"({"class":"c","feature_dim":2,"weights":[1],"bias":0,"meta":{}})"),
               std::invalid_argument);
}

TEST(Separable, TrueForegroundRanksAboveAllBackground) {
  const LoadedDataset data = generate_synthetic(SyntheticConfig::separable_benchmark(), 3);
  Rows pos, neg;
  for (const auto& img : data.dataset.images()) {
    const auto truth = data.ground_truth.boxes(img.id, "object");
    for (const auto& p : img.proposals) {
      const bool fg = std::any_of(truth.begin(), truth.end(), [&](const Box& g) { return iou(p.box, g) >= 0.5; });
      (fg ? pos : neg).push_back(p.features);
    }
  }
  const ScorerModel m = train_detector(pos, neg, {}, 0);
  double min_pos = INFINITY, max_neg = -INFINITY;
  for (const auto& x : pos) min_pos = std::min(min_pos, m.score(x));
  for (const auto& x : neg) max_neg = std::max(max_neg, m.score(x));
  EXPECT_GT(min_pos, max_neg);
}
