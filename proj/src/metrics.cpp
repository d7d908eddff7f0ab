#include "boxverify/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace boxverify {

bool correctly_localized(const GroundTruth& gt, const std::string& cls, const Detection& det) {
  const auto& inst = gt.instances(det.image_id, cls);
  return std::any_of(inst.begin(), inst.end(), [&](const GroundTruthBox& g) { return iou(det.box, g.box) >= kCorrectIoU; });
}

double corloc(const std::map<std::string, Detection>& detections, const GroundTruth& gt, const std::string& cls,
              std::span<const std::string> labeled_images) {
  if (labeled_images.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& id : labeled_images) {
    const auto it = detections.find(id);
    if (it != detections.end() && correctly_localized(gt, cls, it->second)) ++correct;
  }
  return static_cast<double>(correct) / labeled_images.size();
}

void rank_detections(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.box.to_array() < b.box.to_array();
  });
}

std::optional<double> voc_ap(std::vector<Detection> detections, const GroundTruth& gt, const std::string& cls,
                             double iou_threshold) {
  std::size_t npos = 0;
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [image_id, per_class] : gt.all()) {
    const auto it = per_class.find(cls);
    if (it == per_class.end()) continue;
    used[image_id].assign(it->second.size(), false);
    npos += std::count_if(it->second.begin(), it->second.end(), [](const GroundTruthBox& g) { return !g.difficult; });
  }
  if (npos == 0) return std::nullopt;

  rank_detections(detections);
  std::vector<std::size_t> tp_cum, fp_cum;
  std::size_t tp = 0, fp = 0;
  for (const auto& det : detections) {
    const auto& inst = gt.instances(det.image_id, cls);
    double best = -1.0;
    std::size_t match = 0;
    for (std::size_t g = 0; g < inst.size(); ++g) {
      const double o = iou(det.box, inst[g].box);
      if (o > best) {
        best = o;
        match = g;
      }
    }
    if (!inst.empty() && best >= iou_threshold) {
      if (inst[match].difficult) continue;
      auto& flags = used.at(det.image_id);
      if (!flags[match]) {
        flags[match] = true;
        ++tp;
      } else {
        ++fp;
      }
    } else {
      ++fp;
    }
    tp_cum.push_back(tp);
    fp_cum.push_back(fp);
  }

  double ap = 0.0;
  for (int k = 0; k <= 10; ++k) {
    // recall >= k/10, compared exactly in integers
    double p = 0.0;
    for (std::size_t i = 0; i < tp_cum.size(); ++i) {
      if (10 * tp_cum[i] >= static_cast<std::size_t>(k) * npos) {
        p = std::max(p, static_cast<double>(tp_cum[i]) / static_cast<double>(tp_cum[i] + fp_cum[i]));
      }
    }
    ap += p / 11.0;
  }
  return ap;
}

std::optional<double> mean_ap(const std::map<std::string, std::optional<double>>& per_class) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [cls, ap] : per_class) {
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

double annotation_seconds(std::span<const VerificationEvent> events) {
  double total = 0.0;
  for (const auto& e : events) total += e.elapsed_seconds;
  return total;
}

double drawing_seconds_per_box(DrawingCost cost) { return cost == DrawingCost::Plain ? 26.0 : 42.0; }

double drawing_baseline_seconds(std::size_t boxes, DrawingCost cost) {
  return static_cast<double>(boxes) * drawing_seconds_per_box(cost);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& field, std::size_t line) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw std::invalid_argument("curves CSV line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return v;
}

constexpr const char* kCurveHeader = "label,iteration,verifications,seconds,corloc,fixed_fraction";

}  // namespace

std::string curves_to_csv(std::span<const LabeledCurve> runs) {
  if (runs.empty()) throw std::invalid_argument("no curves to export");
  std::ostringstream out;
  out << kCurveHeader << '\n';
  for (const auto& run : runs) {
    if (run.label.find_first_of(",\"\n\r") != std::string::npos) {
      throw std::invalid_argument("curve label '" + run.label + "' contains a CSV delimiter");
    }
    std::vector<CurvePoint> points = run.points;
    std::stable_sort(points.begin(), points.end(),
                     [](const CurvePoint& a, const CurvePoint& b) { return a.iteration < b.iteration; });
    for (const auto& p : points) {
      out << run.label << ',' << p.iteration << ',' << p.cumulative_verifications << ','
          << format_double(p.cumulative_seconds) << ',' << (p.corloc ? format_double(*p.corloc) : "") << ','
          << format_double(p.fixed_fraction) << '\n';
    }
  }
  return out.str();
}

std::vector<LabeledCurve> curves_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw std::invalid_argument("curves CSV: missing header");
  std::vector<LabeledCurve> runs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 6) throw std::invalid_argument("curves CSV line " + std::to_string(lineno) + ": expected 6 fields");
    CurvePoint p;
    p.iteration = parse_number<int>(f[1], lineno);
    p.cumulative_verifications = parse_number<std::uint64_t>(f[2], lineno);
    p.cumulative_seconds = parse_number<double>(f[3], lineno);
    if (!f[4].empty()) p.corloc = parse_number<double>(f[4], lineno);
    p.fixed_fraction = parse_number<double>(f[5], lineno);
    if (runs.empty() || runs.back().label != f[0]) runs.push_back({f[0], {}});
    runs.back().points.push_back(p);
  }
  return runs;
}

void export_curves(const std::filesystem::path& path, std::span<const LabeledCurve> runs) {
  const std::string csv = curves_to_csv(runs);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<LabeledCurve> read_curves(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return curves_from_csv(buf.str());
}

std::string summary_json(const std::map<std::string, ClassSummary>& classes) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["classes"] = json::object();
  std::map<std::string, std::optional<double>> aps;
  double seconds = 0.0;
  for (const auto& [cls, s] : classes) {
    j["classes"][cls] = {{"corloc", opt(s.corloc)},
                         {"ap", opt(s.ap)},
                         {"seconds", s.seconds},
                         {"verifications", s.verifications},
                         {"fixed_fraction", s.fixed_fraction}};
    aps[cls] = s.ap;
    seconds += s.seconds;
  }
  j["mAP"] = opt(mean_ap(aps));
  j["hours"] = seconds / 3600.0;
  return j.dump(2);
}

}  // namespace boxverify
