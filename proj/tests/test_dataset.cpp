#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <string>

#include <json.hpp>

#include "boxverify/dataset_io.hpp"
#include "boxverify/synthetic.hpp"

using namespace boxverify;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "classes": ["cat"], "feature_dim": 2,
    "images": [{"id": "a", "width": 20, "height": 10, "labels": ["cat"],
                "ground_truth": {"cat": [[1, 1, 9, 9]]},
                "proposals": [{"box": [0, 0, 10, 10], "features": [1, 0], "objectness": 0.5},
                              {"box": [10, 0, 20, 10], "features": [0, 1], "objectness": 0.2}]}]})");
}

template <typename E>
std::string error_of(const json& j) {
  try {
    parse_dataset(j.dump());
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST(Dataset, MinimalFile) {
  const LoadedDataset d = parse_dataset(minimal().dump());
  ASSERT_EQ(d.dataset.images().size(), 1u);
  const ImageRecord& img = d.dataset.image("a");
  EXPECT_EQ(img.proposals.size(), 2u);
  EXPECT_EQ(img.proposals[1].box, Box(10, 0, 20, 10));
  EXPECT_DOUBLE_EQ(img.proposals[0].objectness, 0.5);
  EXPECT_TRUE(img.has_label("cat"));
  EXPECT_EQ(d.ground_truth.boxes("a", "cat"), std::vector<Box>{Box(1, 1, 9, 9)});
  EXPECT_EQ(d.dataset.images_with_label("cat"), std::vector<std::string>{"a"});
  EXPECT_EQ(d.dataset.total_proposals("cat"), 2u);
}

TEST(Dataset, ProposalOutsideImageNamesImage) {
  json j = minimal();
  j["images"][0]["proposals"][1]["box"] = {10, 0, 21, 10};
  const std::string msg = error_of<DatasetValidationError>(j);
  EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("proposals[1]"), std::string::npos) << msg;
}

TEST(Dataset, FeatureLengthMismatchCitesFeatureDim) {
  json j = minimal();
  j["images"][0]["proposals"][0]["features"] = {1, 2, 3};
  const std::string msg = error_of<DatasetValidationError>(j);
  EXPECT_NE(msg.find("feature_dim"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
}

TEST(Dataset, InvariantViolations) {
  auto rejects = [](json j) { EXPECT_NE(error_of<DatasetValidationError>(j), "<no error>") << j.dump(); };
  json j = minimal();
  j["images"][0]["proposals"] = json::array();
  rejects(j);
  j = minimal();
  j["images"][0]["proposals"][0]["objectness"] = 0.0;
  rejects(j);
  j = minimal();
  j["images"].push_back(j["images"][0]);
  rejects(j);
  j = minimal();
  j["images"][0]["labels"] = {"dog"};
  rejects(j);
  j = minimal();
  j["images"][0]["ground_truth"] = {{"cat", json::array()}};
  rejects(j);
  j = minimal();
  j["images"][0]["width"] = 0;
  rejects(j);
  j = minimal();
  j["feature_dim"] = 0;
  rejects(j);
  j = minimal();
  j["classes"] = {"cat", "cat"};
  rejects(j);
  j = minimal();
  j["images"][0]["ground_truth"]["cat"] = {{1, 1, 30, 9}};
  rejects(j);
  // Degenerate box: x2 <= x1.
  j = minimal();
  j["images"][0]["proposals"][0]["box"] = {5, 0, 5, 10};
  rejects(j);
}

TEST(Dataset, MalformedFiles) {
  EXPECT_THROW(parse_dataset("{not json"), DatasetParseError);
  EXPECT_THROW(parse_dataset("[]"), DatasetParseError);
  json j = minimal();
  j["images"][0]["proposals"][0]["box"] = {0, 0, 10};
  EXPECT_THROW(parse_dataset(j.dump()), DatasetParseError);
  j = minimal();
  j["images"][0].erase("labels");
  EXPECT_THROW(parse_dataset(j.dump()), DatasetParseError);
  EXPECT_THROW(load_dataset("/nonexistent/boxverify.json"), DatasetParseError);
}

TEST(Dataset, GroundTruthIsOptional) {
  json j = minimal();
  j["images"][0].erase("ground_truth");
  const LoadedDataset d = parse_dataset(j.dump());
  EXPECT_TRUE(d.ground_truth.empty());
}

TEST(Dataset, DifficultFlagsRoundTrip) {
  json j = minimal();
  j["images"][0]["ground_truth"]["cat"] = {{1, 1, 9, 9}, {{"box", {11, 1, 19, 9}}, {"difficult", true}}};
  const LoadedDataset d = parse_dataset(j.dump());
  const auto& inst = d.ground_truth.instances("a", "cat");
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_FALSE(inst[0].difficult);
  EXPECT_TRUE(inst[1].difficult);
  const LoadedDataset again = parse_dataset(serialize_dataset(d.dataset, d.ground_truth));
  EXPECT_TRUE(again.ground_truth.instances("a", "cat")[1].difficult);
}

TEST(Dataset, SaveLoadRoundTrip) {
  SyntheticConfig c = SyntheticConfig::separable_benchmark();
  c.num_images = 5;
  c.proposals_per_image = 12;
  const LoadedDataset d = generate_synthetic(c, 3);
  const auto path = std::filesystem::temp_directory_path() / "boxverify_dataset_roundtrip.json";
  save_dataset(path, d.dataset, d.ground_truth);
  const LoadedDataset back = load_dataset(path);
  std::filesystem::remove(path);
  EXPECT_EQ(serialize_dataset(back.dataset, back.ground_truth), serialize_dataset(d.dataset, d.ground_truth));
}

TEST(Synthetic, DeterministicForSeed) {
  SyntheticConfig c = SyntheticConfig::tradeoff_benchmark();
  c.num_images = 8;
  const auto a = generate_synthetic(c, 11), b = generate_synthetic(c, 11), other = generate_synthetic(c, 12);
  EXPECT_EQ(serialize_dataset(a.dataset, a.ground_truth), serialize_dataset(b.dataset, b.ground_truth));
  EXPECT_NE(serialize_dataset(a.dataset, a.ground_truth), serialize_dataset(other.dataset, other.ground_truth));
}

TEST(Synthetic, FullCoverageContainsExactObject) {
  for (const auto& c : {SyntheticConfig::separable_benchmark(), SyntheticConfig::tradeoff_benchmark()}) {
    SyntheticConfig cfg = c;
    cfg.num_images = 30;
    const auto d = generate_synthetic(cfg, 5);
    for (const auto& img : d.dataset.images()) {
      ASSERT_EQ(img.proposals.size(), 100u);
      for (const auto& label : img.labels) {
        const Box g = d.ground_truth.boxes(img.id, label).front();
        bool exact = false;
        for (const auto& p : img.proposals) exact = exact || p.box == g;
        EXPECT_TRUE(exact) << img.id;
      }
    }
  }
}

TEST(Synthetic, PartialCoverageLeavesSomeImagesUncovered) {
  SyntheticConfig c = SyntheticConfig::separable_benchmark();
  c.num_images = 60;
  c.coverage = 0.5;
  const auto d = generate_synthetic(c, 9);
  int uncovered = 0;
  for (const auto& img : d.dataset.images()) {
    const Box g = d.ground_truth.boxes(img.id, "object").front();
    bool hit = false;
    for (const auto& p : img.proposals) hit = hit || iou(p.box, g) >= 0.5;
    uncovered += !hit;
  }
  EXPECT_GT(uncovered, 10);
  EXPECT_LT(uncovered, 50);
}

TEST(Synthetic, SeparableClassSignal) {
  SyntheticConfig c = SyntheticConfig::separable_benchmark();
  c.num_images = 20;
  const auto d = generate_synthetic(c, 2);
  double fg_min = 1e9, bg_max = -1e9;
  for (const auto& img : d.dataset.images()) {
    const Box g = d.ground_truth.boxes(img.id, "object").front();
    for (const auto& p : img.proposals) {
      if (iou(p.box, g) >= 0.5) {
        fg_min = std::min(fg_min, p.features[0]);
      } else {
        bg_max = std::max(bg_max, p.features[0]);
      }
    }
  }
  EXPECT_GE(fg_min - bg_max, 0.5);
}

TEST(Synthetic, InvalidConfig) {
  SyntheticConfig c;
  c.num_images = 0;
  EXPECT_THROW(generate_synthetic(c, 1), std::invalid_argument);
  c = {};
  c.separation_margin = 1.5;
  EXPECT_THROW(generate_synthetic(c, 1), std::invalid_argument);
  c = {};
  c.coverage = -0.1;
  EXPECT_THROW(generate_synthetic(c, 1), std::invalid_argument);
  c = {};
  c.proposals_per_image = 0;
  EXPECT_THROW(generate_synthetic(c, 1), std::invalid_argument);
}

// The learner's translation units must not reach ground truth, even transitively.
TEST(DependencyAudit, LearnerNeverIncludesGroundTruth) {
  const std::filesystem::path root = BOXVERIFY_SOURCE_DIR;
  const std::set<std::string> forbidden{"boxverify/ground_truth.hpp", "boxverify/dataset_io.hpp",
                                        "boxverify/simulated_annotator.hpp", "boxverify/metrics.hpp",
                                        "boxverify/simulation.hpp", "boxverify/synthetic.hpp"};
  const std::regex include_re(R"re(^\s*#\s*include\s*"([^"]+)")re");
  auto resolve = [&](const std::string& name) {
    for (const auto& dir : {root / "include", root / "src"}) {
      if (std::filesystem::exists(dir / name)) return dir / name;
    }
    return std::filesystem::path();
  };
  for (const std::string unit : {"detector", "mil_init", "loop", "pruning"}) {
    std::set<std::string> seen;
    std::vector<std::filesystem::path> todo{root / "src" / (unit + ".cpp")};
    while (!todo.empty()) {
      const auto file = todo.back();
      todo.pop_back();
      std::ifstream in(file);
      ASSERT_TRUE(in) << file;
      std::string line;
      std::smatch m;
      while (std::getline(in, line)) {
        if (!std::regex_search(line, m, include_re)) continue;
        const std::string name = m[1];
        EXPECT_FALSE(forbidden.count(name)) << unit << ".cpp reaches " << name << " via " << file.filename();
        if (!seen.insert(name).second) continue;
        const auto path = resolve(name);
        if (!path.empty()) todo.push_back(path);
      }
    }
    EXPECT_TRUE(seen.count("boxverify/" + unit + ".hpp")) << unit;
  }
}
