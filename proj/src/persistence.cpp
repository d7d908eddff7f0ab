#include "boxverify/persistence.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace boxverify {

using nlohmann::json;

namespace {

json box_json(const Box& b) { return json(b.to_array()); }
Box box_from(const json& j) { return Box::from_array(j.get<std::array<double, 4>>()); }

json detection_json(const Detection& d) {
  return {{"image_id", d.image_id},
          {"class", d.class_name},
          {"proposal_index", d.proposal_index},
          {"box", box_json(d.box)},
          {"score", d.score}};
}

Detection detection_from(const json& j) {
  return Detection{j.at("image_id").get<std::string>(), j.at("class").get<std::string>(),
                   j.at("proposal_index").get<std::size_t>(), box_from(j.at("box")), j.at("score").get<double>()};
}

json curve_json(const CurvePoint& p) {
  return {{"iteration", p.iteration},
          {"verifications", p.cumulative_verifications},
          {"seconds", p.cumulative_seconds},
          {"corloc", p.corloc ? json(*p.corloc) : json(nullptr)},
          {"fixed_fraction", p.fixed_fraction}};
}

CurvePoint curve_from(const json& j) {
  CurvePoint p;
  p.iteration = j.at("iteration").get<int>();
  p.cumulative_verifications = j.at("verifications").get<std::uint64_t>();
  p.cumulative_seconds = j.at("seconds").get<double>();
  if (!j.at("corloc").is_null()) p.corloc = j.at("corloc").get<double>();
  p.fixed_fraction = j.at("fixed_fraction").get<double>();
  return p;
}

[[noreturn]] void throw_errno(const std::string& what, const std::filesystem::path& path) {
  throw std::system_error(errno, std::generic_category(), what + " " + path.string());
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write failed for", path);
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string event_to_json(const VerificationEvent& e) {
  const json j = {{"seq", e.seq},
                  {"run_id", e.run_id},
                  {"question_id", e.question_id},
                  {"image_id", e.question.image_id},
                  {"class", e.question.class_name},
                  {"proposal_index", e.question.proposal_index},
                  {"box", box_json(e.question.detection)},
                  {"kind", to_string(e.question.kind)},
                  {"iteration", e.question.iteration},
                  {"answer", to_string(e.answer)},
                  {"elapsed_seconds", e.elapsed_seconds},
                  {"source", to_string(e.source)},
                  {"annotator_id", e.annotator_id},
                  {"timestamp", e.timestamp}};
  return j.dump();
}

VerificationEvent event_from_json(const std::string& line) {
  const json j = json::parse(line);
  VerificationEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.run_id = j.at("run_id").get<std::string>();
  e.question_id = j.at("question_id").get<std::string>();
  e.question.image_id = j.at("image_id").get<std::string>();
  e.question.class_name = j.at("class").get<std::string>();
  e.question.proposal_index = j.at("proposal_index").get<std::size_t>();
  e.question.detection = box_from(j.at("box"));
  e.question.kind = parse_question_kind(j.at("kind").get<std::string>());
  e.question.iteration = j.at("iteration").get<int>();
  e.answer = parse_answer(j.at("answer").get<std::string>());
  e.elapsed_seconds = j.at("elapsed_seconds").get<double>();
  e.source = parse_answer_origin(j.at("source").get<std::string>());
  e.annotator_id = j.at("annotator_id").get<std::string>();
  e.timestamp = j.at("timestamp").get<double>();
  return e;
}

std::string state_to_json(const RunState& s) {
  json j;
  j["format"] = "boxverify-checkpoint/1";
  j["run_id"] = s.run_id;
  j["class"] = s.class_name;
  j["strategy"] = to_string(s.strategy);
  j["question_kind"] = to_string(s.question_kind);
  j["max_iterations"] = s.max_iterations;
  j["seed"] = s.seed;
  j["iteration"] = s.iteration;
  j["active"] = s.active;
  j["exhausted"] = s.exhausted;
  json spaces = json::object();
  for (const auto& [id, sp] : s.spaces) spaces[id] = sp.alive;
  j["spaces"] = std::move(spaces);
  json fixed = json::object();
  for (const auto& [id, d] : s.fixed_positives) fixed[id] = detection_json(d);
  j["fixed_positives"] = std::move(fixed);
  json current = json::object();
  for (const auto& [id, d] : s.current_detections) current[id] = detection_json(d);
  j["current_detections"] = std::move(current);
  json cache = json::array();
  for (const auto& [key, answer] : s.answer_cache) {
    cache.push_back({{"image_id", key.image_id},
                     {"proposal_index", key.proposal_index},
                     {"kind", to_string(key.kind)},
                     {"answer", to_string(answer)}});
  }
  j["answer_cache"] = std::move(cache);
  j["pending"] = s.pending;
  j["round_events"] = s.round_events;
  j["events_applied"] = s.events_applied;
  j["total_seconds"] = s.total_seconds;
  j["model"] = s.model ? json::parse(model_to_json(*s.model)) : json(nullptr);
  json curve = json::array();
  for (const auto& p : s.curve) curve.push_back(curve_json(p));
  j["curve"] = std::move(curve);
  j["finished"] = s.finished;
  j["finish_reason"] = s.finish_reason;
  j["warnings"] = s.warnings;
  return j.dump(1);
}

RunState state_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "boxverify-checkpoint/1") throw std::invalid_argument("not a boxverify checkpoint");
  RunState s;
  s.run_id = j.at("run_id").get<std::string>();
  s.class_name = j.at("class").get<std::string>();
  s.strategy = parse_strategy(j.at("strategy").get<std::string>());
  s.question_kind = parse_question_kind(j.at("question_kind").get<std::string>());
  s.max_iterations = j.at("max_iterations").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.iteration = j.at("iteration").get<int>();
  s.active = j.at("active").get<std::set<std::string>>();
  s.exhausted = j.at("exhausted").get<std::set<std::string>>();
  for (const auto& [id, alive] : j.at("spaces").items()) {
    s.spaces.emplace(id, SearchSpace{id, alive.get<std::vector<std::size_t>>()});
  }
  for (const auto& [id, d] : j.at("fixed_positives").items()) s.fixed_positives.emplace(id, detection_from(d));
  for (const auto& [id, d] : j.at("current_detections").items()) s.current_detections.emplace(id, detection_from(d));
  for (const auto& c : j.at("answer_cache")) {
    s.answer_cache.emplace(AnswerKey{c.at("image_id").get<std::string>(), c.at("proposal_index").get<std::size_t>(),
                                     parse_question_kind(c.at("kind").get<std::string>())},
                           parse_answer(c.at("answer").get<std::string>()));
  }
  s.pending = j.at("pending").get<std::vector<std::string>>();
  s.round_events = j.at("round_events").get<std::uint64_t>();
  s.events_applied = j.at("events_applied").get<std::uint64_t>();
  s.total_seconds = j.at("total_seconds").get<double>();
  if (!j.at("model").is_null()) s.model = model_from_json(j.at("model").dump());
  for (const auto& p : j.at("curve")) s.curve.push_back(curve_from(p));
  s.finished = j.at("finished").get<bool>();
  s.finish_reason = j.at("finish_reason").get<std::string>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  return s;
}

void write_checkpoint(const std::filesystem::path& path, const RunState& state) {
  const std::string text = state_to_json(state) + "\n";
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("cannot create", tmp);
  try {
    write_all(fd, text, tmp);
    if (::fsync(fd) != 0) throw_errno("fsync failed for", tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

RunState read_checkpoint(const std::filesystem::path& path) { return state_from_json(slurp(path)); }

EventLog::EventLog(const std::filesystem::path& path, bool durable) : path_(path), durable_(durable) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw_errno("cannot open event log", path);
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const VerificationEvent& event) {
  write_all(fd_, event_to_json(event) + "\n", path_);
  if (durable_) sync();
}

void EventLog::sync() {
  if (::fsync(fd_) != 0) throw_errno("fsync failed for", path_);
}

LogContents read_event_log(const std::filesystem::path& path) {
  LogContents out;
  if (!std::filesystem::exists(path)) return out;
  const std::string data = slurp(path);
  std::size_t pos = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      out.corrupt_offset = pos;
      out.corrupt_reason = "truncated line";
      break;
    }
    try {
      out.events.push_back(event_from_json(data.substr(pos, nl - pos)));
    } catch (const std::exception& e) {
      out.corrupt_offset = pos;
      out.corrupt_reason = e.what();
      break;
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  return out;
}

void truncate_event_log(const std::filesystem::path& path, std::uint64_t valid_bytes) {
  std::filesystem::resize_file(path, valid_bytes);
}

void replay(RunState& state, const Dataset& dataset, std::span<const VerificationEvent> events,
            const LoopOptions& options) {
  for (const auto& ev : events) {
    if (ev.run_id != state.run_id) {
      throw RunIdMismatch("event log belongs to run '" + ev.run_id + "', checkpoint to '" + state.run_id + "'");
    }
    if (ev.seq < state.events_applied) {
      if (ev.seq == state.event_log.size()) state.event_log.push_back(ev);
      continue;
    }
    submit(state, dataset, ev, options);
  }
}

Recovery recover(const std::filesystem::path& checkpoint, const std::filesystem::path& event_log,
                 const Dataset& dataset, const LoopOptions& options) {
  Recovery r;
  r.state = read_checkpoint(checkpoint);
  LogContents log = read_event_log(event_log);
  const std::uint64_t before = r.state.events_applied;
  replay(r.state, dataset, log.events, options);
  r.replayed = r.state.events_applied - before;
  r.corrupt_offset = log.corrupt_offset;
  r.corrupt_reason = std::move(log.corrupt_reason);
  r.valid_bytes = log.valid_bytes;
  return r;
}

}  // namespace boxverify
