#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "boxverify/dataset_io.hpp"

namespace boxverify {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& image_id, const std::string& what) {
  throw DatasetValidationError("image '" + image_id + "': " + what);
}

void validate_image(const ImageRecord& img, const std::set<std::string>& classes, std::size_t feature_dim) {
  if (img.id.empty()) throw DatasetValidationError("image with empty id");
  if (img.width <= 0 || img.height <= 0) invalid(img.id, "width/height must be positive");
  if (img.proposals.empty()) invalid(img.id, "proposals: at least one proposal is required");
  for (const auto& label : img.labels) {
    if (!classes.count(label)) invalid(img.id, "labels: unknown class '" + label + "'");
  }
  for (std::size_t i = 0; i < img.proposals.size(); ++i) {
    const auto& p = img.proposals[i];
    const std::string where = "proposals[" + std::to_string(i) + "]";
    if (!within_bounds(p.box, img.width, img.height)) invalid(img.id, where + ".box lies outside the image bounds");
    if (p.features.size() != feature_dim) {
      invalid(img.id, where + ".features has length " + std::to_string(p.features.size()) +
                          " but feature_dim is " + std::to_string(feature_dim));
    }
    if (!std::all_of(p.features.begin(), p.features.end(), [](double v) { return std::isfinite(v); })) {
      invalid(img.id, where + ".features contains a non-finite value");
    }
    if (!(p.objectness > 0.0) || !std::isfinite(p.objectness)) invalid(img.id, where + ".objectness must be > 0");
  }
}

Box parse_box(const json& j, const std::string& image_id, const std::string& field) {
  if (!j.is_array() || j.size() != 4) throw DatasetParseError("image '" + image_id + "': " + field + " must be [x1,y1,x2,y2]");
  try {
    return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  } catch (const json::exception&) {
    throw DatasetParseError("image '" + image_id + "': " + field + " must contain numbers");
  } catch (const std::invalid_argument& e) {
    invalid(image_id, field + ": " + e.what());
  }
}

json box_json(const Box& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

}  // namespace

bool ImageRecord::has_label(const std::string& cls) const {
  return std::binary_search(labels.begin(), labels.end(), cls);
}

Dataset::Dataset(std::vector<std::string> classes, std::size_t feature_dim, std::vector<ImageRecord> images)
    : classes_(std::move(classes)), feature_dim_(feature_dim), images_(std::move(images)) {
  if (feature_dim_ == 0) throw DatasetValidationError("feature_dim must be positive");
  const std::set<std::string> class_set(classes_.begin(), classes_.end());
  if (class_set.size() != classes_.size()) throw DatasetValidationError("classes must be unique");
  for (std::size_t i = 0; i < images_.size(); ++i) {
    auto& img = images_[i];
    std::sort(img.labels.begin(), img.labels.end());
    img.labels.erase(std::unique(img.labels.begin(), img.labels.end()), img.labels.end());
    validate_image(img, class_set, feature_dim_);
    if (!index_.emplace(img.id, i).second) invalid(img.id, "duplicate image id");
  }
}

const ImageRecord& Dataset::image(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown image id '" + id + "'");
  return images_[it->second];
}

std::vector<std::string> Dataset::images_with_label(const std::string& cls) const {
  std::vector<std::string> ids;
  for (const auto& img : images_) {
    if (img.has_label(cls)) ids.push_back(img.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::size_t Dataset::total_proposals(const std::string& cls) const {
  std::size_t n = 0;
  for (const auto& img : images_) {
    if (img.has_label(cls)) n += img.proposals.size();
  }
  return n;
}

LoadedDataset parse_dataset(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DatasetParseError(std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("classes") || !root.contains("feature_dim") || !root.contains("images")) {
    throw DatasetParseError("dataset must be an object with classes, feature_dim and images");
  }

  LoadedDataset out;
  std::vector<std::string> classes;
  std::size_t feature_dim = 0;
  std::vector<ImageRecord> images;
  try {
    classes = root.at("classes").get<std::vector<std::string>>();
    const auto dim = root.at("feature_dim").get<long long>();
    if (dim <= 0) throw DatasetValidationError("feature_dim must be positive");
    feature_dim = static_cast<std::size_t>(dim);

    for (const auto& ji : root.at("images")) {
      ImageRecord img;
      img.id = ji.at("id").get<std::string>();
      img.width = ji.at("width").get<int>();
      img.height = ji.at("height").get<int>();
      img.labels = ji.at("labels").get<std::vector<std::string>>();
      if (ji.contains("image_uri") && !ji.at("image_uri").is_null()) img.image_uri = ji.at("image_uri").get<std::string>();
      const auto& props = ji.at("proposals");
      for (std::size_t i = 0; i < props.size(); ++i) {
        const auto& jp = props[i];
        const std::string field = "proposals[" + std::to_string(i) + "].box";
        img.proposals.push_back(ProposalRecord{parse_box(jp.at("box"), img.id, field),
                                               jp.at("features").get<std::vector<double>>(),
                                               jp.at("objectness").get<double>()});
      }
      if (ji.contains("ground_truth")) {
        for (const auto& [cls, list] : ji.at("ground_truth").items()) {
          if (!std::count(img.labels.begin(), img.labels.end(), cls)) {
            invalid(img.id, "ground_truth: class '" + cls + "' is not among the image labels");
          }
          for (std::size_t k = 0; k < list.size(); ++k) {
            const std::string field = "ground_truth." + cls + "[" + std::to_string(k) + "]";
            GroundTruthBox g{list[k].is_object() ? parse_box(list[k].at("box"), img.id, field)
                                                 : parse_box(list[k], img.id, field)};
            if (list[k].is_object()) {
              g.difficult = list[k].value("difficult", false);
              g.truncated = list[k].value("truncated", false);
            }
            if (!within_bounds(g.box, img.width, img.height)) invalid(img.id, field + " lies outside the image bounds");
            out.ground_truth.add(img.id, cls, g);
          }
        }
        for (const auto& label : img.labels) {
          if (!out.ground_truth.has(img.id, label)) {
            invalid(img.id, "ground_truth: labeled class '" + label + "' has no ground-truth box");
          }
        }
      }
      images.push_back(std::move(img));
    }
  } catch (const json::exception& e) {
    throw DatasetParseError(std::string("malformed dataset: ") + e.what());
  }
  out.dataset = Dataset(std::move(classes), feature_dim, std::move(images));
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetParseError("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string serialize_dataset(const Dataset& dataset, const GroundTruth& truth) {
  json root;
  root["classes"] = dataset.classes();
  root["feature_dim"] = dataset.feature_dim();
  root["images"] = json::array();
  for (const auto& img : dataset.images()) {
    json ji;
    ji["id"] = img.id;
    ji["width"] = img.width;
    ji["height"] = img.height;
    ji["labels"] = img.labels;
    if (img.image_uri) ji["image_uri"] = *img.image_uri;
    if (auto it = truth.all().find(img.id); it != truth.all().end()) {
      json gt = json::object();
      for (const auto& [cls, list] : it->second) {
        json arr = json::array();
        for (const auto& g : list) {
          if (g.difficult || g.truncated) {
            arr.push_back({{"box", box_json(g.box)}, {"difficult", g.difficult}, {"truncated", g.truncated}});
          } else {
            arr.push_back(box_json(g.box));
          }
        }
        gt[cls] = std::move(arr);
      }
      ji["ground_truth"] = std::move(gt);
    }
    json props = json::array();
    for (const auto& p : img.proposals) {
      props.push_back({{"box", box_json(p.box)}, {"features", p.features}, {"objectness", p.objectness}});
    }
    ji["proposals"] = std::move(props);
    root["images"].push_back(std::move(ji));
  }
  return root.dump();
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset, const GroundTruth& truth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  out << serialize_dataset(dataset, truth) << '\n';
}

}  // namespace boxverify
