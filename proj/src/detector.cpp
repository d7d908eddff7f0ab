#include "boxverify/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hashing.hpp"

namespace boxverify {

using nlohmann::json;

double ScorerModel::score(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw std::invalid_argument("feature dimension " + std::to_string(features.size()) + " does not match model (" +
                                std::to_string(weights.size()) + ")");
  }
  return std::inner_product(weights.begin(), weights.end(), features.begin(), bias);
}

ScorerModel ScorerModel::zero(std::string class_name, std::size_t feature_dim) {
  ScorerModel m;
  m.class_name = std::move(class_name);
  m.weights.assign(feature_dim, 0.0);
  return m;
}

std::vector<ProposalRef> sample_background(const Dataset& dataset, std::span<const Detection> positives,
                                           std::uint64_t seed, std::size_t max_per_image) {
  if (positives.empty()) throw std::invalid_argument("sample_background requires at least one positive");
  std::map<std::string, std::vector<Box>> positive_boxes;  // ordered: output is independent of input order
  for (const auto& d : positives) positive_boxes[d.image_id].push_back(d.box);

  std::vector<ProposalRef> out;
  for (const auto& [image_id, boxes] : positive_boxes) {
    const ImageRecord& img = dataset.image(image_id);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < img.proposals.size(); ++i) {
      const Box& p = img.proposals[i].box;
      if (std::all_of(boxes.begin(), boxes.end(), [&](const Box& b) { return iou(p, b) < 0.5; })) {
        eligible.push_back(i);
      }
    }
    if (eligible.size() > max_per_image) {
      std::mt19937_64 rng(detail::derive_seed(seed, image_id));
      std::vector<std::size_t> chosen;
      std::sample(eligible.begin(), eligible.end(), std::back_inserter(chosen), max_per_image, rng);
      eligible = std::move(chosen);
    }
    for (std::size_t i : eligible) out.push_back({image_id, i});
  }
  return out;
}

namespace {

double loss_value(Loss loss, double margin) {
  if (loss == Loss::Logistic) {
    return margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  }
  const double h = std::max(0.0, 1.0 - margin);
  return h * h;
}

double loss_slope(Loss loss, double margin) {
  if (loss == Loss::Logistic) {
    return margin > 0.0 ? -std::exp(-margin) / (1.0 + std::exp(-margin)) : -1.0 / (1.0 + std::exp(margin));
  }
  return -2.0 * std::max(0.0, 1.0 - margin);
}

/// Class-balanced training set stored row-major, with labels folded into the rows' signs.
struct Problem {
  std::size_t dim = 0;
  std::vector<double> x;       // n * dim
  std::vector<double> label;   // +1 / -1
  std::vector<double> weight;  // per-row loss weight
  Loss loss = Loss::Logistic;
  double l2 = 0.0;

  std::size_t rows() const { return label.size(); }

  void add(const std::vector<std::vector<double>>& set, double y, double w) {
    for (const auto& r : set) {
      x.insert(x.end(), r.begin(), r.end());
      label.push_back(y);
      weight.push_back(w);
    }
  }

  /// Signed margins y * (w . x + b).
  void margins(const std::vector<double>& w, double b, std::vector<double>& z) const {
    z.resize(rows());
    for (std::size_t i = 0; i < rows(); ++i) {
      z[i] = label[i] * std::inner_product(w.begin(), w.end(), x.begin() + i * dim, b);
    }
  }

  /// Objective at margins z + t * dz and weights w + t * dw.
  double objective(const std::vector<double>& z, const std::vector<double>& dz, double t, const std::vector<double>& w,
                   const std::vector<double>& dw) const {
    double f = 0.0;
    for (std::size_t i = 0; i < rows(); ++i) f += weight[i] * loss_value(loss, z[i] + t * dz[i]);
    double reg = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = w[k] + t * dw[k];
      reg += v * v;
    }
    return f + 0.5 * l2 * reg;
  }

  void gradient(const std::vector<double>& z, const std::vector<double>& w, std::vector<double>& gw, double& gb) const {
    gw.assign(dim, 0.0);
    gb = 0.0;
    for (std::size_t i = 0; i < rows(); ++i) {
      const double c = weight[i] * label[i] * loss_slope(loss, z[i]);
      const double* xi = x.data() + i * dim;
      for (std::size_t k = 0; k < dim; ++k) gw[k] += c * xi[k];
      gb += c;
    }
    for (std::size_t k = 0; k < dim; ++k) gw[k] += l2 * w[k];
  }
};

bool all_rows_identical(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  const auto& ref = a.front();
  auto same = [&](const std::vector<double>& x) { return x == ref; };
  return std::all_of(a.begin(), a.end(), same) && std::all_of(b.begin(), b.end(), same);
}

}  // namespace

ScorerModel train_detector(const std::vector<std::vector<double>>& positives,
                           const std::vector<std::vector<double>>& background, const TrainConfig& config,
                           std::uint64_t seed, std::string class_name) {
  if (positives.empty()) throw std::invalid_argument("train_detector: no positive samples");
  if (background.empty()) throw std::invalid_argument("train_detector: no background samples");
  const std::size_t dim = positives.front().size();
  for (const auto* set : {&positives, &background}) {
    for (const auto& x : *set) {
      if (x.size() != dim) throw std::invalid_argument("train_detector: inconsistent feature dimensions");
    }
  }

  ScorerModel model = ScorerModel::zero(std::move(class_name), dim);
  model.meta.positives = positives.size();
  model.meta.background = background.size();
  model.meta.seed = seed;
  if (all_rows_identical(positives, background)) {
    model.meta.degenerate = true;
    return model;
  }

  Problem prob;
  prob.dim = dim;
  prob.loss = config.loss;
  prob.l2 = config.l2;
  prob.add(positives, 1.0, 0.5 / positives.size());
  prob.add(background, -1.0, 0.5 / background.size());

  std::vector<double>& w = model.weights;
  double& b = model.bias;
  std::vector<double> z, dz(prob.rows()), gw, dw(dim);
  double gb = 0.0;
  prob.margins(w, b, z);
  double f = prob.objective(z, dz, 0.0, w, dw);
  double step = 1.0;
  for (int it = 0; it < config.iterations; ++it) {
    if (config.loss_trace) config.loss_trace->push_back(f);
    prob.gradient(z, w, gw, gb);
    const double gnorm2 = std::inner_product(gw.begin(), gw.end(), gw.begin(), gb * gb);
    if (gnorm2 < config.tolerance * config.tolerance) break;
    for (std::size_t k = 0; k < dim; ++k) dw[k] = -gw[k];
    prob.margins(dw, -gb, dz);
    // Backtracking line search (Armijo): each accepted step strictly decreases f.
    double f_new = f;
    bool accepted = false;
    for (; step > 1e-12; step *= 0.5) {
      f_new = prob.objective(z, dz, step, w, dw);
      if (f_new <= f - 0.5 * step * gnorm2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (config.check_monotone && f_new > f) throw std::logic_error("training objective increased");
    for (std::size_t k = 0; k < dim; ++k) w[k] += step * dw[k];
    b -= step * gb;
    prob.margins(w, b, z);
    f = f_new;
    step = std::min(step * 2.0, 1e3);
  }
  if (config.loss_trace) config.loss_trace->push_back(f);
  model.meta.final_loss = f;
  return model;
}

std::vector<double> score_proposals(const ScorerModel& model, const ImageRecord& image, bool use_objectness,
                                    double lambda) {
  std::vector<double> scores;
  scores.reserve(image.proposals.size());
  for (const auto& p : image.proposals) {
    double s = model.score(p.features);
    if (use_objectness) s += lambda * std::log(p.objectness);
    scores.push_back(s);
  }
  return scores;
}

std::vector<std::size_t> non_maximum_suppression(std::span<const Box> boxes, std::span<const double> scores,
                                                 double iou_threshold) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("boxes and scores differ in length");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](std::size_t k) { return iou(boxes[i], boxes[k]) >= iou_threshold; });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> detect_test(const ScorerModel& model, const Dataset& dataset, double nms_iou, double score_min) {
  std::vector<Detection> out;
  for (const auto& img : dataset.images()) {
    const auto scores = score_proposals(model, img);
    std::vector<Box> boxes;
    std::vector<double> kept_scores;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= score_min) {
        boxes.push_back(img.proposals[i].box);
        kept_scores.push_back(scores[i]);
        index.push_back(i);
      }
    }
    for (std::size_t k : non_maximum_suppression(boxes, kept_scores, nms_iou)) {
      out.push_back({img.id, model.class_name, index[k], boxes[k], kept_scores[k]});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

std::string model_to_json(const ScorerModel& model) {
  json j;
  j["class"] = model.class_name;
  j["feature_dim"] = model.feature_dim();
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["meta"] = {{"iteration", model.meta.iteration},   {"positives", model.meta.positives},
               {"background", model.meta.background}, {"seed", model.meta.seed},
               {"degenerate", model.meta.degenerate}, {"final_loss", model.meta.final_loss}};
  return j.dump();
}

ScorerModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  ScorerModel m;
  m.class_name = j.at("class").get<std::string>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  if (j.at("feature_dim").get<std::size_t>() != m.weights.size()) {
    throw std::invalid_argument("model weights do not match feature_dim");
  }
  if (!std::isfinite(m.bias) || !std::all_of(m.weights.begin(), m.weights.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("model parameters must be finite");
  }
  const auto& meta = j.at("meta");
  m.meta.iteration = meta.value("iteration", 0);
  m.meta.positives = meta.value("positives", std::size_t{0});
  m.meta.background = meta.value("background", std::size_t{0});
  m.meta.seed = meta.value("seed", std::uint64_t{0});
  m.meta.degenerate = meta.value("degenerate", false);
  m.meta.final_loss = meta.value("final_loss", 0.0);
  return m;
}

void save_model(const std::filesystem::path& path, const ScorerModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out << model_to_json(model) << '\n';
}

ScorerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace boxverify
