#pragma once

#include <filesystem>
#include <string>

#include "boxverify/dataset.hpp"
#include "boxverify/ground_truth.hpp"

namespace boxverify {

/// What a dataset file yields: the learner-visible part and the oracle-only part.
struct LoadedDataset {
  Dataset dataset;
  GroundTruth ground_truth;
};

/// Parses and validates a dataset file. Throws DatasetParseError or
/// DatasetValidationError (the message names the offending image and field).
LoadedDataset load_dataset(const std::filesystem::path& path);
LoadedDataset parse_dataset(const std::string& json_text);

std::string serialize_dataset(const Dataset& dataset, const GroundTruth& truth);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset, const GroundTruth& truth);

}  // namespace boxverify
