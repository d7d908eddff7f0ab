#include "boxverify/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "boxverify/persistence.hpp"
#include "boxverify/simulation.hpp"
#include "hashing.hpp"

namespace boxverify {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double unix_now() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

bool valid_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_.-]{1,64}");
  return std::regex_match(id, re) && id != "." && id != "..";
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Running: return "running";
    case SessionStatus::Suspended: return "suspended";
    case SessionStatus::Finished: return "finished";
  }
  return "unknown";
}

}  // namespace

struct Service::Run {
  std::mutex mu;
  RunState state;
  std::filesystem::path dir;
  std::unique_ptr<EventLog> log;
  LoopOptions options;
  struct Lease {
    std::string annotator;
    Clock::time_point expires;
  };
  std::map<std::string, Lease> leases;  // image id -> holder

  std::filesystem::path checkpoint_path() const { return dir / "checkpoint.json"; }
  std::filesystem::path log_path() const { return dir / "events.jsonl"; }
};

Service::Service(const Dataset& dataset, const GroundTruth* truth, ServiceConfig config)
    : dataset_(dataset), truth_(truth), config_(std::move(config)) {
  const auto runs_dir = config_.data_dir / "runs";
  std::filesystem::create_directories(runs_dir);
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    auto r = std::make_unique<Run>();
    r->dir = entry.path();
    if (!std::filesystem::exists(r->checkpoint_path())) continue;
    try {
      r->state = read_checkpoint(r->checkpoint_path());
      r->options.train = config_.train;
      if (truth_) r->options.corloc = make_corloc_probe(dataset_, *truth_, r->state.class_name);
      LogContents log = read_event_log(r->log_path());
      if (log.corrupt_offset) {
        notes_.push_back("run '" + r->state.run_id + "': event log corrupt at byte " + std::to_string(*log.corrupt_offset) +
                         " (" + log.corrupt_reason + "); truncated to the last valid line");
        truncate_event_log(r->log_path(), log.valid_bytes);
      }
      const std::uint64_t before = r->state.events_applied;
      replay(r->state, dataset_, log.events, r->options);
      if (r->state.events_applied > before) {
        notes_.push_back("run '" + r->state.run_id + "': replayed " + std::to_string(r->state.events_applied - before) +
                         " events");
      }
    } catch (const std::exception& e) {
      notes_.push_back("skipping " + entry.path().string() + ": " + e.what());
      continue;
    }
    const auto dir = r->dir;
    r->options.on_round = [dir](const RunState& s) { boxverify::write_checkpoint(dir / "checkpoint.json", s); };
    write_checkpoint_locked(*r);
    r->log = std::make_unique<EventLog>(r->log_path());
    const std::string id = r->state.run_id;
    runs_.emplace(id, std::move(r));
  }
}

Service::~Service() = default;

Service::Run& Service::run(const std::string& run_id) const {
  std::lock_guard lock(runs_mutex_);
  const auto it = runs_.find(run_id);
  if (it == runs_.end()) throw ServiceError(404, "unknown run '" + run_id + "'");
  return *it->second;
}

void Service::write_checkpoint_locked(Run& r) { boxverify::write_checkpoint(r.checkpoint_path(), r.state); }

std::string Service::create_run(const RunRequest& req) {
  const auto& classes = dataset_.classes();
  if (std::find(classes.begin(), classes.end(), req.class_name) == classes.end()) {
    throw ServiceError(400, "unknown class '" + req.class_name + "'");
  }
  if (!req.run_id.empty() && !valid_id(req.run_id)) {
    throw ServiceError(400, "run id must match [A-Za-z0-9_.-]{1,64}");
  }
  const QuestionKind kind = req.question_kind.value_or(default_question_kind(req.strategy));
  if (!compatible(req.strategy, kind)) {
    throw ServiceError(400, "strategy " + std::string(to_string(req.strategy)) + " cannot use " +
                                std::string(to_string(kind)) + " questions");
  }
  if (req.max_iterations < 1) throw ServiceError(400, "max_iterations must be >= 1");

  std::lock_guard create(create_mutex_);
  std::string id = req.run_id;
  {
    std::lock_guard lock(runs_mutex_);
    if (id.empty()) {
      for (int n = 1; id.empty() || runs_.count(id); ++n) id = req.class_name + "-" + std::to_string(n);
      if (!valid_id(id)) id = "run-" + std::to_string(runs_.size() + 1);
    } else if (runs_.count(id)) {
      throw ServiceError(409, "run '" + id + "' already exists");
    }
  }

  MilConfig mil = config_.mil;
  mil.seed = detail::derive_seed(req.seed, "mil", 0);
  mil.train = config_.train;
  const MilResult d0 = run_mil(dataset_, req.class_name, mil);

  auto r = std::make_unique<Run>();
  r->dir = config_.data_dir / "runs" / id;
  std::filesystem::create_directories(r->dir);
  std::filesystem::remove(r->log_path());
  r->options.train = config_.train;
  if (truth_) r->options.corloc = make_corloc_probe(dataset_, *truth_, req.class_name);
  const LoopConfig lc{req.strategy, kind, req.max_iterations, req.seed};
  r->state = init_state(dataset_, req.class_name, lc, d0.detections, d0.model, id);
  r->state.warnings.insert(r->state.warnings.begin(), d0.warnings.begin(), d0.warnings.end());
  r->state.curve.push_back(make_curve_point(r->state, r->options));
  const auto dir = r->dir;
  r->options.on_round = [dir](const RunState& s) { boxverify::write_checkpoint(dir / "checkpoint.json", s); };
  write_checkpoint_locked(*r);
  r->log = std::make_unique<EventLog>(r->log_path());

  std::lock_guard lock(runs_mutex_);
  runs_.emplace(id, std::move(r));
  return id;
}

json Service::progress_locked(const Run& r) const {
  const RunState& s = r.state;
  const std::size_t labeled = s.labeled_images();
  json j{{"run_id", s.run_id},
         {"class", s.class_name},
         {"strategy", to_string(s.strategy)},
         {"kind", to_string(s.question_kind)},
         {"iteration", s.iteration},
         {"fixed_fraction", labeled ? static_cast<double>(s.fixed_positives.size()) / labeled : 0.0},
         {"verifications", s.events_applied},
         {"seconds", s.total_seconds},
         {"pending", s.pending.size()},
         {"answered_this_round", s.round_events},
         {"round_total", s.round_events + s.pending.size()},
         {"active", s.active.size()},
         {"exhausted", s.exhausted.size()},
         {"finished", s.finished},
         {"finish_reason", s.finish_reason}};
  if (r.options.corloc) j["corloc"] = r.options.corloc(detections_of(s));
  return j;
}

json Service::list_runs() const {
  std::vector<Run*> all;
  {
    std::lock_guard lock(runs_mutex_);
    for (const auto& [id, r] : runs_) all.push_back(r.get());
  }
  json out = json::array();
  for (Run* r : all) {
    std::lock_guard lock(r->mu);
    out.push_back(progress_locked(*r));
  }
  return out;
}

json Service::list_sessions() const {
  std::lock_guard lock(sessions_mutex_);
  json out = json::array();
  for (const auto& [id, s] : sessions_) {
    out.push_back({{"session_id", s.session_id},
                   {"annotator", s.annotator_id},
                   {"class", s.class_name},
                   {"run_id", s.run_id},
                   {"strategy", to_string(s.strategy)},
                   {"created_at", s.created_at},
                   {"status", to_string(s.status)}});
  }
  return out;
}

void Service::close_sessions_locked(const Run& r) {
  if (!r.state.finished) return;
  std::lock_guard lock(sessions_mutex_);
  for (auto& [id, s] : sessions_) {
    if (s.run_id == r.state.run_id) s.status = SessionStatus::Finished;
  }
}

json Service::next(const std::string& run_id, const std::string& annotator) {
  if (annotator.empty()) throw ServiceError(400, "annotator is required");
  Run& r = run(run_id);
  std::lock_guard lock(r.mu);
  RunState& s = r.state;
  if (s.finished) {
    close_sessions_locked(r);
    return {{"status", "finished"}, {"progress", progress_locked(r)}};
  }
  {
    std::lock_guard sl(sessions_mutex_);
    for (const auto& [id, sess] : sessions_) {
      if (sess.annotator_id == annotator && sess.class_name == s.class_name && sess.run_id != run_id &&
          sess.status == SessionStatus::Running) {
        throw ServiceError(409, "annotator '" + annotator + "' already has a running session for class '" +
                                    s.class_name + "' on run '" + sess.run_id + "'");
      }
    }
    const std::string sid = run_id + ":" + annotator;
    auto [it, fresh] = sessions_.try_emplace(sid);
    if (fresh) it->second = {sid, annotator, s.class_name, run_id, s.strategy, unix_now(), SessionStatus::Running};
    it->second.status = SessionStatus::Running;
  }

  const auto now = Clock::now();
  std::erase_if(r.leases, [&](const auto& kv) {
    return kv.second.expires <= now ||
           std::find(s.pending.begin(), s.pending.end(), kv.first) == s.pending.end();
  });
  std::optional<std::string> chosen;
  for (const auto& [image, lease] : r.leases) {
    if (lease.annotator == annotator) chosen = image;
  }
  if (!chosen) {
    for (const auto& image : s.pending) {
      if (!r.leases.count(image)) {
        chosen = image;
        break;
      }
    }
  }
  if (!chosen) return {{"status", "waiting"}, {"progress", progress_locked(r)}};
  r.leases[*chosen] = {annotator, now + config_.lease};

  const VerificationQuestion q = s.question_for(*chosen);
  return {{"status", "task"},
          {"question_id", question_id(s.run_id, q)},
          {"image_id", q.image_id},
          {"image_uri", "/api/images/" + q.image_id},
          {"box", q.detection.to_array()},
          {"class", q.class_name},
          {"kind", to_string(q.kind)},
          {"iteration", q.iteration},
          {"progress", progress_locked(r)}};
}

json Service::answer(const std::string& run_id, const json& body) {
  if (!body.is_object()) throw ServiceError(400, "answer body must be a JSON object");
  const auto qid = body.find("question_id");
  const auto value = body.find("value");
  const auto elapsed = body.find("elapsed_ms");
  if (qid == body.end() || !qid->is_string()) throw ServiceError(400, "question_id (string) is required");
  if (value == body.end() || !value->is_string()) throw ServiceError(400, "value (string) is required");
  if (elapsed == body.end() || !elapsed->is_number()) throw ServiceError(400, "elapsed_ms (number) is required");
  const double ms = elapsed->get<double>();
  if (!(ms >= 0.0) || !std::isfinite(ms)) throw ServiceError(400, "elapsed_ms must be a non-negative number");
  const std::string annotator = body.value("annotator", std::string());

  Run& r = run(run_id);
  std::lock_guard lock(r.mu);
  RunState& s = r.state;
  if (s.finished) throw ServiceError(409, "run '" + run_id + "' has finished");
  const auto pos = std::find_if(s.pending.begin(), s.pending.end(), [&](const std::string& image) {
    return question_id(s.run_id, s.question_for(image)) == qid->get<std::string>();
  });
  if (pos == s.pending.end()) {
    throw ServiceError(409, "question '" + qid->get<std::string>() + "' is not pending (stale, duplicate or unknown)");
  }
  const std::string image = *pos;
  Answer a;
  try {
    a = parse_answer(value->get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ServiceError(400, e.what());
  }
  if (!is_legal(a, s.question_kind)) {
    throw ServiceError(400, "value '" + value->get<std::string>() + "' is not legal for " +
                                std::string(to_string(s.question_kind)) + " questions");
  }

  const AnswerRecord rec{a, ms / 1000.0, AnswerOrigin::Human, annotator, unix_now()};
  const VerificationEvent ev = make_event(s, image, rec);
  r.log->append(ev);  // durable before the state changes or the client hears back
  const int iteration = s.iteration;
  submit(s, dataset_, ev, r.options);
  r.leases.erase(image);
  close_sessions_locked(r);
  return {{"accepted", true},
          {"seq", ev.seq},
          {"round_completed", s.iteration != iteration},
          {"progress", progress_locked(r)}};
}

json Service::suspend(const std::string& run_id, const std::string& annotator) {
  if (annotator.empty()) throw ServiceError(400, "annotator is required");
  Run& r = run(run_id);
  std::lock_guard lock(r.mu);
  std::erase_if(r.leases, [&](const auto& kv) { return kv.second.annotator == annotator; });
  std::lock_guard sl(sessions_mutex_);
  const auto it = sessions_.find(run_id + ":" + annotator);
  if (it == sessions_.end()) throw ServiceError(404, "no session for annotator '" + annotator + "' on this run");
  if (it->second.status == SessionStatus::Running) it->second.status = SessionStatus::Suspended;
  return {{"session_id", it->second.session_id}, {"status", to_string(it->second.status)}};
}

json Service::progress(const std::string& run_id) const {
  Run& r = run(run_id);
  std::lock_guard lock(r.mu);
  return progress_locked(r);
}

std::filesystem::path Service::image_path(const std::string& image_id) const {
  if (!dataset_.contains(image_id)) throw ServiceError(404, "unknown image '" + image_id + "'");
  const auto& uri = dataset_.image(image_id).image_uri;
  if (!uri) throw ServiceError(404, "image '" + image_id + "' has no image_uri");
  std::filesystem::path p(*uri);
  if (p.is_relative()) p = config_.dataset_dir / p;
  if (!std::filesystem::is_regular_file(p)) throw ServiceError(404, "image file for '" + image_id + "' is missing");
  return p;
}

RunState Service::snapshot(const std::string& run_id) const {
  Run& r = run(run_id);
  std::lock_guard lock(r.mu);
  return r.state;
}

std::vector<std::string> Service::recovery_notes() const { return notes_; }

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_json(res, {{"error", e.what()}}, e.status());
    } catch (const StaleAnswerError& e) {
      send_json(res, {{"error", e.what()}}, 409);
    } catch (const json::exception& e) {
      send_json(res, {{"error", std::string("bad request: ") + e.what()}}, 400);
    } catch (const std::invalid_argument& e) {
      send_json(res, {{"error", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", e.what()}}, 500);
    }
  };
}

std::string content_type(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

void mount_routes(httplib::Server& server, Service& service) {
  server.Get("/api/runs", guarded([&](const httplib::Request&, httplib::Response& res) {
               send_json(res, service.list_runs());
             }));
  server.Post("/api/runs", guarded([&](const httplib::Request& req, httplib::Response& res) {
                const json body = json::parse(req.body);
                RunRequest r;
                r.class_name = body.at("class").get<std::string>();
                r.strategy = parse_strategy(body.value("strategy", std::string("III")));
                if (body.contains("question")) r.question_kind = parse_question_kind(body.at("question").get<std::string>());
                r.max_iterations = body.value("max_iterations", 10);
                r.seed = body.value("seed", std::uint64_t{0});
                r.run_id = body.value("run_id", std::string());
                const std::string id = service.create_run(r);
                send_json(res, {{"run_id", id}, {"progress", service.progress(id)}}, 201);
              }));
  server.Get(R"(/api/runs/([^/]+)/next)", guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, service.next(req.matches[1], req.get_param_value("annotator")));
             }));
  server.Post(R"(/api/runs/([^/]+)/answer)", guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, service.answer(req.matches[1], json::parse(req.body)));
              }));
  server.Post(R"(/api/runs/([^/]+)/suspend)", guarded([&](const httplib::Request& req, httplib::Response& res) {
                send_json(res, service.suspend(req.matches[1], req.get_param_value("annotator")));
              }));
  server.Get(R"(/api/runs/([^/]+)/progress)", guarded([&](const httplib::Request& req, httplib::Response& res) {
               send_json(res, service.progress(req.matches[1]));
             }));
  server.Get("/api/sessions", guarded([&](const httplib::Request&, httplib::Response& res) {
               send_json(res, service.list_sessions());
             }));
  server.Get(R"(/api/images/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
               const auto path = service.image_path(req.matches[1]);
               std::ifstream in(path, std::ios::binary);
               if (!in) throw ServiceError(404, "cannot read image file");
               std::ostringstream buf;
               buf << in.rdbuf();
               res.set_content(buf.str(), content_type(path));
             }));
}

}  // namespace boxverify
