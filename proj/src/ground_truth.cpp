#include "boxverify/ground_truth.hpp"

namespace boxverify {

void GroundTruth::add(const std::string& image_id, const std::string& cls, GroundTruthBox box) {
  boxes_[image_id][cls].push_back(std::move(box));
}

bool GroundTruth::has(const std::string& image_id, const std::string& cls) const {
  auto it = boxes_.find(image_id);
  if (it == boxes_.end()) return false;
  auto jt = it->second.find(cls);
  return jt != it->second.end() && !jt->second.empty();
}

const std::vector<GroundTruthBox>& GroundTruth::instances(const std::string& image_id, const std::string& cls) const {
  static const std::vector<GroundTruthBox> kNone;
  auto it = boxes_.find(image_id);
  if (it == boxes_.end()) return kNone;
  auto jt = it->second.find(cls);
  return jt == it->second.end() ? kNone : jt->second;
}

std::vector<Box> GroundTruth::boxes(const std::string& image_id, const std::string& cls) const {
  std::vector<Box> out;
  for (const auto& g : instances(image_id, cls)) out.push_back(g.box);
  return out;
}

}  // namespace boxverify
