#include "boxverify/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

namespace boxverify {

namespace {

constexpr int kMinSide = 4;
// Caps how far background evidence is lifted, so margin 1 keeps classes disjoint.
constexpr double kMaxGain = 0.95;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Box clip_box(double x1, double y1, double x2, double y2, int width, int height) {
  x1 = std::clamp(std::round(x1), 0.0, double(width - kMinSide));
  y1 = std::clamp(std::round(y1), 0.0, double(height - kMinSide));
  x2 = std::clamp(std::round(x2), x1 + kMinSide, double(width));
  y2 = std::clamp(std::round(y2), y1 + kMinSide, double(height));
  return Box(x1, y1, x2, y2);
}

Box random_object(std::mt19937_64& rng, int width, int height) {
  const double w = uniform(rng, 0.15, 0.55) * width;
  const double h = std::clamp(w * uniform(rng, 0.6, 1.6), 0.15 * height, 0.8 * height);
  const double x1 = uniform(rng, 0.0, width - w);
  const double y1 = uniform(rng, 0.0, height - h);
  return clip_box(x1, y1, x1 + w, y1 + h, width, height);
}

/// A box around `b` with random rescaling and shift, covering a wide IoU range.
Box jitter(std::mt19937_64& rng, const Box& b, int width, int height) {
  const double cx = 0.5 * (b.x1() + b.x2()) + uniform(rng, -0.35, 0.35) * b.width();
  const double cy = 0.5 * (b.y1() + b.y2()) + uniform(rng, -0.35, 0.35) * b.height();
  const double w = b.width() * std::exp(uniform(rng, -0.8, 0.7));
  const double h = b.height() * std::exp(uniform(rng, -0.8, 0.7));
  return clip_box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h, width, height);
}

/// A box from a multi-scale, multi-aspect sliding-window grid.
Box grid_box(std::mt19937_64& rng, int width, int height) {
  static constexpr double kScales[] = {0.12, 0.2, 0.3, 0.45, 0.6, 0.8};
  static constexpr double kAspects[] = {0.5, 1.0, 2.0};
  const double s = kScales[std::uniform_int_distribution<int>(0, 5)(rng)];
  const double a = kAspects[std::uniform_int_distribution<int>(0, 2)(rng)];
  const double side = s * std::sqrt(double(width) * height);
  const double w = std::min(side * std::sqrt(a), 0.95 * width);
  const double h = std::min(side / std::sqrt(a), 0.95 * height);
  constexpr int kCells = 8;
  const int gx = std::uniform_int_distribution<int>(0, kCells - 1)(rng);
  const int gy = std::uniform_int_distribution<int>(0, kCells - 1)(rng);
  const double x1 = (width - w) * gx / (kCells - 1);
  const double y1 = (height - h) * gy / (kCells - 1);
  return clip_box(x1, y1, x1 + w, y1 + h, width, height);
}

double max_iou(const Box& p, const std::vector<Box>& objects) {
  double best = 0.0;
  for (const auto& o : objects) best = std::max(best, iou(p, o));
  return best;
}

bool hits_object(const Box& p, const std::vector<Box>& objects) { return max_iou(p, objects) >= 0.5; }

/// Blends each background proposal's class evidence with the IoU^2-weighted mean over
/// overlapping background proposals, and every proposal's remaining dimensions with
/// the mean over all overlapping proposals, so near-duplicate boxes look alike.
void smooth_background(ImageRecord& img, const std::vector<Box>& objects, const std::vector<int>& object_class,
                       double strength) {
  const std::size_t n = img.proposals.size();
  for (std::size_t c = 0; c < object_class.size(); ++c) {
    auto is_bg = [&](std::size_t i) {
      return object_class[c] < 0 || iou(img.proposals[i].box, objects[object_class[c]]) < 0.5;
    };
    std::vector<double> smoothed(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_bg(i)) continue;
      double sum = 0.0, norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!is_bg(j)) continue;
        const double o = iou(img.proposals[i].box, img.proposals[j].box);
        sum += o * o * img.proposals[j].features[c];
        norm += o * o;
      }
      smoothed[i] = sum / norm;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (is_bg(i)) {
        double& t = img.proposals[i].features[c];
        t = (1.0 - strength) * t + strength * smoothed[i];
      }
    }
  }
  // Cue dimensions are blended among proposals that are background for every class,
  // nuisance dimensions among all proposals.
  const std::size_t dim = img.proposals.empty() ? 0 : img.proposals.front().features.size();
  const std::size_t cues = object_class.size() + 2;
  std::vector<bool> all_bg(n);
  for (std::size_t i = 0; i < n; ++i) all_bg[i] = !hits_object(img.proposals[i].box, objects);
  std::vector<std::vector<double>> mixed(n, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0, cue_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double o = iou(img.proposals[i].box, img.proposals[j].box);
      if (o == 0.0) continue;
      const double w = o * o;
      const bool same_side = all_bg[i] && all_bg[j];
      for (std::size_t k = object_class.size(); k < dim; ++k) {
        if (k >= cues) {
          mixed[i][k] += w * img.proposals[j].features[k];
        } else if (same_side) {
          mixed[i][k] += w * img.proposals[j].features[k];
        }
      }
      norm += w;
      if (same_side) cue_norm += w;
    }
    for (std::size_t k = object_class.size(); k < dim; ++k) {
      if (k >= cues) {
        mixed[i][k] /= norm;
      } else {
        mixed[i][k] = cue_norm > 0.0 ? mixed[i][k] / cue_norm : img.proposals[i].features[k];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = object_class.size(); k < dim; ++k) {
      double& v = img.proposals[i].features[k];
      v = (1.0 - strength) * v + strength * mixed[i][k];
    }
  }
}

}  // namespace

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid synthetic config: " + what); };
  if (num_images <= 0) fail("num_images must be positive");
  if (classes.empty()) fail("at least one class is required");
  if (image_width < 32 || image_height < 32) fail("image size must be at least 32x32");
  if (proposals_per_image <= 0) fail("proposals_per_image must be positive");
  if (feature_dim < static_cast<int>(classes.size()) + 2) fail("feature_dim must be at least classes + 2");
  if (separation_margin < 0.0 || separation_margin > 1.0) fail("separation_margin must lie in [0,1]");
  if (coverage < 0.0 || coverage > 1.0) fail("coverage must lie in [0,1]");
  if (label_probability <= 0.0 || label_probability > 1.0) fail("label_probability must lie in (0,1]");
  if (max_distractors < 0 || jitter_per_object < 0) fail("counts must be non-negative");
  if (distractor_gain < 0.0 || part_gain < 0.0 || container_gain < 0.0) fail("gains must be non-negative");
  if (!(max_background_signal <= 1.0)) fail("max_background_signal must be at most 1");
  if (cue_noise < 0.0 || nuisance_sigma < 0.0 || objectness_noise < 0.0) fail("noise levels must be non-negative");
}

SyntheticConfig SyntheticConfig::separable_benchmark() {
  SyntheticConfig c;
  c.separation_margin = 1.0;
  c.coverage = 1.0;
  c.distractor_gain = 0.4;
  c.part_gain = 0.2;
  c.container_gain = 0.8;
  c.nuisance_sigma = 0.2;
  c.max_background_signal = 0.5;
  return c;
}

SyntheticConfig SyntheticConfig::tradeoff_benchmark() {
  SyntheticConfig c;
  c.separation_margin = 0.25;
  c.coverage = 1.0;
  c.max_distractors = 4;
  c.distractor_gain = 0.7;
  c.part_gain = 0.6;
  c.container_gain = 0.6;
  c.cue_noise = 1.3;
  c.nuisance_sigma = 0.3;
  c.objectness_noise = 0.8;
  c.jitter_per_object = 15;
  c.feature_smoothing = 1.0;
  return c;
}

LoadedDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int num_classes = static_cast<int>(cfg.classes.size());
  const double m = cfg.separation_margin;
  const int W = cfg.image_width;
  const int H = cfg.image_height;

  LoadedDataset out;
  std::vector<ImageRecord> images;
  images.reserve(cfg.num_images);

  for (int i = 0; i < cfg.num_images; ++i) {
    ImageRecord img;
    char id[32];
    std::snprintf(id, sizeof id, "img_%05d", i);
    img.id = id;
    img.width = W;
    img.height = H;

    std::vector<int> present;
    for (int c = 0; c < num_classes; ++c) {
      if (num_classes == 1 || uniform(rng, 0.0, 1.0) < cfg.label_probability) present.push_back(c);
    }
    if (present.empty()) present.push_back(std::uniform_int_distribution<int>(0, num_classes - 1)(rng));

    // Objects of the labeled classes, then unlabeled clutter kept apart from them.
    std::vector<Box> objects;
    std::vector<int> object_class(num_classes, -1);
    for (int c : present) {
      Box g = random_object(rng, W, H);
      for (int attempt = 0; attempt < 50 && max_iou(g, objects) > 0.1; ++attempt) g = random_object(rng, W, H);
      object_class[c] = static_cast<int>(objects.size());
      objects.push_back(g);
      img.labels.push_back(cfg.classes[c]);
      out.ground_truth.add(img.id, cfg.classes[c], GroundTruthBox{g});
    }
    std::vector<Box> clutter;
    const int n_clutter = std::uniform_int_distribution<int>(0, cfg.max_distractors)(rng);
    for (int k = 0; k < n_clutter; ++k) {
      Box q = random_object(rng, W, H);
      bool placed = false;
      for (int attempt = 0; attempt < 50; ++attempt) {
        if (max_iou(q, objects) == 0.0 && max_iou(q, clutter) < 0.1) {
          placed = true;
          break;
        }
        q = random_object(rng, W, H);
      }
      if (placed) clutter.push_back(q);
    }

    const bool covered = uniform(rng, 0.0, 1.0) < cfg.coverage;
    auto admissible = [&](const Box& b) { return covered || !hits_object(b, objects); };

    // Priority order: exact objects and clutter, whole image, jitter around objects and clutter, grid windows.
    std::vector<Box> boxes;
    const auto target = static_cast<std::size_t>(cfg.proposals_per_image);
    auto push = [&](const Box& b) {
      if (boxes.size() < target && admissible(b)) boxes.push_back(b);
    };
    if (covered) {
      for (const auto& g : objects) push(g);
    }
    for (const auto& q : clutter) push(q);
    push(img.full_image());
    for (const auto& g : objects) {
      for (int k = 0, tries = 0; k < cfg.jitter_per_object && tries < 20 * cfg.jitter_per_object; ++tries) {
        const Box b = jitter(rng, g, W, H);
        if (admissible(b)) {
          push(b);
          ++k;
        }
      }
    }
    for (const auto& q : clutter) {
      for (int k = 0, tries = 0; k < cfg.jitter_per_object && tries < 20 * cfg.jitter_per_object; ++tries) {
        const Box b = jitter(rng, q, W, H);
        if (admissible(b)) {
          push(b);
          ++k;
        }
      }
    }
    for (int tries = 0; boxes.size() < target && tries < 100 * cfg.proposals_per_image; ++tries) push(grid_box(rng, W, H));
    std::shuffle(boxes.begin(), boxes.end(), rng);

    // Each clutter object has its own class look-alike level; proposals near it inherit
    // that level in proportion to their overlap, so neighbouring boxes look alike.
    std::vector<std::vector<double>> lookalike(clutter.size(), std::vector<double>(num_classes));
    for (auto& per_class : lookalike) {
      for (double& v : per_class) v = cfg.distractor_gain * uniform(rng, -1.0 + 2.0 * m, 2.0 * m);
    }

    for (const auto& p : boxes) {
      ProposalRecord rec{p, std::vector<double>(cfg.feature_dim, 0.0), 1.0};
      double d = 0.0;
      std::size_t nearest = 0;
      for (std::size_t q = 0; q < clutter.size(); ++q) {
        const double o = iou(p, clutter[q]);
        if (o > d) {
          d = o;
          nearest = q;
        }
      }
      double partial_cue = 0.0;
      for (int c = 0; c < num_classes; ++c) {
        const double base = uniform(rng, -1.0, 0.0);
        double t = d > 0.0 ? (1.0 - d) * base + d * lookalike[nearest][c] : base;
        if (object_class[c] >= 0) {
          const Box& g = objects[object_class[c]];
          if (iou(p, g) >= 0.5) {
            rec.features[c] = uniform(rng, -1.0 + 2.0 * m, 2.0 * m);
            continue;
          }
          const double purity = ioa(p, g);
          const double cover = ioa(g, p);
          partial_cue = std::max({partial_cue, purity, cover});
          t += std::min(cfg.part_gain * purity + cfg.container_gain * cover, kMaxGain);
        }
        rec.features[c] = std::min(t, cfg.max_background_signal);
      }
      rec.features[num_classes] = d + cfg.cue_noise * gauss(rng);
      rec.features[num_classes + 1] = partial_cue + cfg.cue_noise * gauss(rng);
      for (int k = num_classes + 2; k < cfg.feature_dim; ++k) rec.features[k] = cfg.nuisance_sigma * gauss(rng);

      std::vector<Box> all_objects = objects;
      all_objects.insert(all_objects.end(), clutter.begin(), clutter.end());
      const double obj = 0.1 + 0.85 * max_iou(p, all_objects) + cfg.objectness_noise * gauss(rng);
      rec.objectness = std::clamp(obj, 0.01, 1.0);
      img.proposals.push_back(std::move(rec));
    }
    if (cfg.feature_smoothing > 0.0) smooth_background(img, objects, object_class, cfg.feature_smoothing);
    images.push_back(std::move(img));
  }

  out.dataset = Dataset(cfg.classes, static_cast<std::size_t>(cfg.feature_dim), std::move(images));
  return out;
}

}  // namespace boxverify
