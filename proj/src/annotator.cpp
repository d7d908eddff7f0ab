#include "boxverify/annotator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "hashing.hpp"

namespace boxverify {

namespace {

using detail::fnv1a;

constexpr double kCorrectIou = 0.5;

constexpr std::array<Answer, 5> kYpcmm = {Answer::Yes, Answer::Part, Answer::Container, Answer::Mixed,
                                          Answer::Missed};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

OracleResult best_match(std::span<const Box> truth, const Box& detection) {
  if (truth.empty()) throw std::invalid_argument("oracle requires at least one ground-truth box");
  OracleResult r{Answer::No, 0, -1.0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double v = iou(truth[i], detection);
    if (v > r.iou_star) {
      r.iou_star = v;
      r.matched = i;
    }
  }
  return r;
}

}  // namespace

std::string_view to_string(QuestionKind kind) { return kind == QuestionKind::YesNo ? "yesno" : "ypcmm"; }

std::string_view to_string(Answer answer) {
  switch (answer) {
    case Answer::Yes: return "yes";
    case Answer::No: return "no";
    case Answer::Part: return "part";
    case Answer::Container: return "container";
    case Answer::Mixed: return "mixed";
    case Answer::Missed: return "missed";
  }
  return "?";
}

std::string_view to_string(AnswerOrigin origin) { return origin == AnswerOrigin::Simulated ? "simulated" : "human"; }

QuestionKind parse_question_kind(std::string_view text) {
  if (text == "yesno") return QuestionKind::YesNo;
  if (text == "ypcmm") return QuestionKind::Ypcmm;
  throw std::invalid_argument("unknown question kind '" + std::string(text) + "'");
}

Answer parse_answer(std::string_view text) {
  for (Answer a : {Answer::Yes, Answer::No, Answer::Part, Answer::Container, Answer::Mixed, Answer::Missed}) {
    if (to_string(a) == text) return a;
  }
  throw std::invalid_argument("unknown answer '" + std::string(text) + "'");
}

AnswerOrigin parse_answer_origin(std::string_view text) {
  if (text == "simulated") return AnswerOrigin::Simulated;
  if (text == "human") return AnswerOrigin::Human;
  throw std::invalid_argument("unknown answer source '" + std::string(text) + "'");
}

bool is_legal(Answer answer, QuestionKind kind) {
  if (kind == QuestionKind::YesNo) return answer == Answer::Yes || answer == Answer::No;
  return answer != Answer::No;
}

std::string question_id(std::string_view run_id, const VerificationQuestion& q) {
  std::uint64_t h = fnv1a(run_id);
  h = fnv1a("|", h);
  h = fnv1a(q.image_id, h);
  h = fnv1a("|" + std::to_string(q.proposal_index) + "|", h);
  h = fnv1a(to_string(q.kind), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void AnnotatorProfile::validate() const {
  if (!(noise_temperature >= 0.0)) throw std::invalid_argument("noise temperature must be >= 0");
  if (!(containment_tolerance >= 0.0 && containment_tolerance < 1.0)) {
    throw std::invalid_argument("containment tolerance must lie in [0,1)");
  }
  if (!(t_far > 0.0 && t_peak >= t_far)) throw std::invalid_argument("time model requires t_peak >= t_far > 0");
  if (!(sigma_t > 0.0)) throw std::invalid_argument("sigma_t must be positive");
  if (!(yesno_cost > 0.0 && ypcmm_cost > 0.0)) throw std::invalid_argument("flat costs must be positive");
}

OracleResult oracle_yes_no(std::span<const Box> truth, const Box& detection) {
  OracleResult r = best_match(truth, detection);
  r.answer = r.iou_star >= kCorrectIou ? Answer::Yes : Answer::No;
  return r;
}

OracleResult oracle_ypcmm(std::span<const Box> truth, const Box& detection, double containment_tolerance) {
  OracleResult r = best_match(truth, detection);
  const Box& g = truth[r.matched];
  if (r.iou_star >= kCorrectIou) {
    r.answer = Answer::Yes;
  } else if (r.iou_star == 0.0) {
    // The best instance has zero overlap, hence so does every instance.
    r.answer = Answer::Missed;
  } else if (ioa(detection, g) > containment_tolerance) {
    r.answer = Answer::Part;
  } else if (ioa(g, detection) > containment_tolerance) {
    r.answer = Answer::Container;
  } else {
    r.answer = Answer::Mixed;
  }
  return r;
}

double yes_probability(double temperature, double iou_star) {
  if (temperature == 0.0) return iou_star >= kCorrectIou ? 1.0 : 0.0;
  return logistic((iou_star - kCorrectIou) / temperature);
}

double flip_probability(double temperature, double iou_star) {
  if (temperature == 0.0) return 0.0;
  return logistic(-std::abs(iou_star - kCorrectIou) / temperature);
}

Answer noisy_answer(const AnnotatorProfile& profile, std::span<const Box> truth, const VerificationQuestion& question,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (question.kind == QuestionKind::YesNo) {
    const OracleResult r = oracle_yes_no(truth, question.detection);
    if (profile.noise_temperature == 0.0) return r.answer;
    return u01(rng) < yes_probability(profile.noise_temperature, r.iou_star) ? Answer::Yes : Answer::No;
  }
  const OracleResult r = oracle_ypcmm(truth, question.detection, profile.containment_tolerance);
  if (profile.noise_temperature == 0.0) return r.answer;
  if (u01(rng) >= flip_probability(profile.noise_temperature, r.iou_star)) return r.answer;
  std::array<Answer, 4> others{};
  std::size_t n = 0;
  for (Answer a : kYpcmm) {
    if (a != r.answer) others[n++] = a;
  }
  return others[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
}

double response_cost(const AnnotatorProfile& profile, QuestionKind kind, double iou_star) {
  if (profile.cost_mode == CostMode::Flat) return kind == QuestionKind::YesNo ? profile.yesno_cost : profile.ypcmm_cost;
  const double z = (iou_star - kCorrectIou) / profile.sigma_t;
  const double t = profile.t_far + (profile.t_peak - profile.t_far) * std::exp(-0.5 * z * z);
  // The YPCMM curve keeps the shape, scaled by the flat-cost ratio.
  return kind == QuestionKind::YesNo ? t : t * profile.ypcmm_cost / profile.yesno_cost;
}

ErrorRates expected_error_rates(std::span<const double> pool_ious, double temperature) {
  double yes = 0.0, wrong_yes = 0.0, no = 0.0, wrong_no = 0.0;
  for (double v : pool_ious) {
    const double p = yes_probability(temperature, v);
    yes += p;
    no += 1.0 - p;
    if (v < kCorrectIou) {
      wrong_yes += p;
    } else {
      wrong_no += 1.0 - p;
    }
  }
  return {yes > 0.0 ? wrong_yes / yes : 0.0, no > 0.0 ? wrong_no / no : 0.0};
}

NoiseCalibration calibrate_temperature(std::span<const double> pool_ious, double target_incorrect_yes,
                                       double target_incorrect_no) {
  if (pool_ious.empty()) throw std::invalid_argument("calibration pool is empty");
  const bool mixed = std::any_of(pool_ious.begin(), pool_ious.end(), [](double v) { return v < kCorrectIou; }) &&
                     std::any_of(pool_ious.begin(), pool_ious.end(), [](double v) { return v >= kCorrectIou; });
  if (!mixed) throw std::invalid_argument("calibration pool needs detections on both sides of IoU 0.5");
  // Both rates grow with the temperature, so their sum is monotone; as tau grows
  // it tends to 1 (every answer a coin flip).
  const double target = target_incorrect_yes + target_incorrect_no;
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target error rates must sum to (0,1)");
  auto total = [&](double tau) {
    const ErrorRates r = expected_error_rates(pool_ious, tau);
    return r.incorrect_yes + r.incorrect_no;
  };
  double lo = 0.0, hi = 1.0;
  while (total(hi) < target && hi < 1e6) hi *= 2.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < target ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  return {tau, expected_error_rates(pool_ious, tau)};
}

AnnotatorProfile fit_time_curve(AnnotatorProfile profile, std::span<const double> pool_ious, double target_mean) {
  if (pool_ious.empty()) throw std::invalid_argument("time-curve pool is empty");
  double g = 0.0;
  for (double v : pool_ious) {
    const double z = (v - kCorrectIou) / profile.sigma_t;
    g += std::exp(-0.5 * z * z);
  }
  g /= static_cast<double>(pool_ious.size());
  if (g >= 1.0) throw std::invalid_argument("pool is concentrated at IoU 0.5; t_far is unidentifiable");
  profile.t_far = (target_mean - profile.t_peak * g) / (1.0 - g);
  profile.validate();
  return profile;
}

}  // namespace boxverify
