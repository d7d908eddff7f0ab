#pragma once

#include <cstdint>

#include "boxverify/dataset_io.hpp"

namespace boxverify {

struct SyntheticConfig {
  int num_images = 200;
  std::vector<std::string> classes{"object"};
  int image_width = 500;
  int image_height = 375;
  int proposals_per_image = 100;
  int feature_dim = 16;
  // 1 means the class-signal distributions of foreground (IoU >= 0.5 with the
  // object) and background proposals are disjoint with a unit gap; 0 means identical.
  double separation_margin = 1.0;
  // Fraction of images whose proposal set contains a box with IoU >= 0.5 to the object.
  double coverage = 1.0;
  // Probability that a class is present in an image (multi-class only; at least one label per image).
  double label_probability = 0.5;
  // Clutter objects per image that are not of any labeled class.
  int max_distractors = 2;
  // How class-like proposals on clutter, object parts, and object containers look.
  double distractor_gain = 0.5;
  double part_gain = 0.25;
  double container_gain = 0.1;
  // Noise on the two cue dimensions that follow the class signals: overlap with
  // clutter, and containment in or of a labeled object (parts and containers).
  double cue_noise = 0.15;
  double nuisance_sigma = 0.3;
  double objectness_noise = 0.15;
  int jitter_per_object = 12;
  // 0..1: how much a background proposal's class evidence is pulled toward that
  // of the background proposals overlapping it.
  double feature_smoothing = 0.0;
  // Upper bound on a background proposal's class evidence. Foreground starts
  // at 2 * margin - 1, so with margin 1 this sets the gap between the classes.
  double max_background_signal = 0.95;

  void validate() const;

  /// 200 images, 1 class, 100 proposals, dim 16, full separation, full coverage.
  static SyntheticConfig separable_benchmark();
  /// Same layout with overlapping class-signal distributions, strong part/container
  /// evidence, noisy cues and clutter: MIL gets about a third of the images right.
  static SyntheticConfig tradeoff_benchmark();
};

/// Pure function of (config, seed).
LoadedDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace boxverify
