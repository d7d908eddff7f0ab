#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "boxverify/geometry.hpp"

namespace boxverify {

/// Malformed dataset file (not valid JSON, or wrong shape).
class DatasetParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed file whose content violates a dataset invariant.
class DatasetValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProposalRecord {
  Box box;
  std::vector<double> features;
  double objectness = 1.0;
};

/// One training image as seen by the learner: labels and proposals only.
/// Ground-truth boxes live in GroundTruth and are never reachable from here.
struct ImageRecord {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<std::string> labels;  // sorted, unique
  std::vector<ProposalRecord> proposals;
  std::optional<std::string> image_uri;

  bool has_label(const std::string& cls) const;
  Box full_image() const { return Box(0.0, 0.0, width, height); }
};

/// Immutable after construction. Images are kept in file order.
class Dataset {
 public:
  Dataset() = default;
  /// Validates every invariant; throws DatasetValidationError naming the image and field.
  Dataset(std::vector<std::string> classes, std::size_t feature_dim, std::vector<ImageRecord> images);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::vector<ImageRecord>& images() const { return images_; }

  const ImageRecord& image(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  /// Ids of images labeled with `cls`, ascending.
  std::vector<std::string> images_with_label(const std::string& cls) const;

  std::size_t total_proposals(const std::string& cls) const;

 private:
  std::vector<std::string> classes_;
  std::size_t feature_dim_ = 0;
  std::vector<ImageRecord> images_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace boxverify
