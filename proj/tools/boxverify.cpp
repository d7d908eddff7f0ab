// boxverify command line: simulated runs, the live verification service, synthetic
// data, log recovery and noise calibration.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "boxverify/dataset_io.hpp"
#include "boxverify/metrics.hpp"
#include "boxverify/persistence.hpp"
#include "boxverify/service.hpp"
#include "boxverify/simulation.hpp"
#include "boxverify/synthetic.hpp"

using namespace boxverify;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunArgs {
  std::string dataset;
  std::string test_dataset;
  std::string class_name;
  bool all = false;
  std::string strategy = "IV";
  std::string annotator = "perfect";
  std::string question;
  std::uint64_t seed = 0;
  int max_iterations = 10;
  std::string out;
  std::optional<double> noise_tau;
  std::string cost_mode = "flat";
  std::string host = "127.0.0.1";
  int port = 8080;
};

std::vector<std::string> selected_classes(const Dataset& d, const RunArgs& a) {
  if (a.all) return d.classes();
  const auto& cs = d.classes();
  if (std::find(cs.begin(), cs.end(), a.class_name) == cs.end()) throw UsageError("unknown class '" + a.class_name + "'");
  return {a.class_name};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

int serve_until_stopped(Service& service, const std::string& host, int port) {
  httplib::Server server;
  mount_routes(server, service);
  for (const auto& note : service.recovery_notes()) std::cerr << "recovery: " << note << "\n";
  std::cerr << "listening on http://" << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

int cmd_run(const RunArgs& a) {
  const Strategy strategy = parse_strategy(a.strategy);
  const QuestionKind kind = a.question.empty() ? default_question_kind(strategy) : parse_question_kind(a.question);
  if (!compatible(strategy, kind)) {
    throw UsageError("strategy " + a.strategy + " cannot ask " + std::string(to_string(kind)) + " questions");
  }
  if (a.annotator != "perfect" && a.annotator != "noisy" && a.annotator != "human") {
    throw UsageError("--annotator must be perfect, noisy or human");
  }
  if (a.noise_tau && a.annotator != "noisy") throw UsageError("--noise-tau needs --annotator noisy");
  if (a.noise_tau && *a.noise_tau < 0) throw UsageError("--noise-tau must be >= 0");
  if (a.max_iterations < 1) throw UsageError("--max-iterations must be >= 1");

  const LoadedDataset data = load_dataset(a.dataset);
  const auto classes = selected_classes(data.dataset, a);
  const fs::path out = a.out;
  fs::create_directories(out);

  if (a.annotator == "human") {
    ServiceConfig cfg;
    cfg.data_dir = out;
    cfg.dataset_dir = fs::path(a.dataset).parent_path();
    Service service(data.dataset, data.ground_truth.empty() ? nullptr : &data.ground_truth, cfg);
    const json existing = service.list_runs();
    for (const auto& cls : classes) {
      const bool have = std::any_of(existing.begin(), existing.end(), [&](const json& r) { return r["run_id"] == cls; });
      if (have) continue;
      service.create_run({cls, strategy, kind, a.max_iterations, a.seed, cls});
    }
    return serve_until_stopped(service, a.host, a.port);
  }

  if (data.ground_truth.empty()) throw UsageError("simulated annotators need ground truth in the dataset");
  std::optional<LoadedDataset> test;
  if (!a.test_dataset.empty()) test = load_dataset(a.test_dataset);

  std::map<std::string, ClassSummary> summary;
  std::vector<LabeledCurve> curves;
  json run_info{{"strategy", a.strategy}, {"question", to_string(kind)}, {"annotator", a.annotator},
                {"seed", a.seed}, {"max_iterations", a.max_iterations}, {"cost_mode", a.cost_mode}};
  // Classes are independent; they run one after another.
  for (const auto& cls : classes) {
    SimulationConfig sc;
    sc.strategy = strategy;
    sc.question_kind = kind;
    sc.seed = a.seed;
    sc.max_iterations = a.max_iterations;
    sc.run_id = cls;
    sc.profile.cost_mode = a.cost_mode == "curve" ? CostMode::Curve : CostMode::Flat;
    const MilResult d0 = initialize(data.dataset, cls, sc);
    if (a.annotator == "noisy") {
      if (a.noise_tau) {
        sc.profile.noise_temperature = *a.noise_tau;
      } else {
        const NoiseCalibration cal = calibrate_temperature(detection_ious(d0.detections, data.ground_truth, cls));
        sc.profile.noise_temperature = cal.temperature;
        run_info["calibration"][cls] = {{"temperature", cal.temperature},
                                        {"incorrect_yes", cal.rates.incorrect_yes},
                                        {"incorrect_no", cal.rates.incorrect_no}};
      }
    }

    const fs::path dir = out / cls;
    fs::create_directories(dir);
    fs::remove(dir / "events.jsonl");
    EventLog log(dir / "events.jsonl", false);
    LoopOptions options;
    options.on_event = [&](const VerificationEvent& e) { log.append(e); };
    options.on_round = [&](const RunState& s) { write_checkpoint(dir / "checkpoint.json", s); };
    const RunState state = simulate_class(data.dataset, data.ground_truth, cls, sc, options, &d0);
    log.sync();

    ClassSummary cs;
    cs.corloc = state.curve.back().corloc;
    cs.seconds = state.total_seconds;
    cs.verifications = state.events_applied;
    cs.fixed_fraction = state.curve.back().fixed_fraction;
    if (test && state.model) cs.ap = voc_ap(detect_test(*state.model, test->dataset), test->ground_truth, cls);
    summary[cls] = cs;
    curves.push_back({cls, state.curve});
    for (const auto& w : state.warnings) std::cerr << cls << ": warning: " << w << "\n";
    std::cerr << cls << ": corloc " << (cs.corloc ? std::to_string(*cs.corloc) : "n/a") << " after "
              << state.events_applied << " verifications, " << state.total_seconds << " s ("
              << state.finish_reason << ")\n";
  }
  export_curves(out / "curves.csv", curves);
  write_text(out / "summary.json", summary_json(summary));
  write_text(out / "run.json", run_info.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box verification for weakly supervised object localization"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run the verification loop with a simulated or human annotator");
  run->add_option("--dataset", ra.dataset, "Training dataset JSON")->required()->check(CLI::ExistingFile);
  auto* cls_opt = run->add_option("--class", ra.class_name, "Class to run");
  auto* all_opt = run->add_flag("--all", ra.all, "Run every class");
  cls_opt->excludes(all_opt);
  run->add_option("--strategy", ra.strategy, "I, II, III or IV")->check(CLI::IsMember({"I", "II", "III", "IV"}));
  run->add_option("--annotator", ra.annotator, "perfect, noisy or human")
      ->check(CLI::IsMember({"perfect", "noisy", "human"}));
  run->add_option("--question", ra.question, "yesno or ypcmm (default follows the strategy)")
      ->check(CLI::IsMember({"yesno", "ypcmm"}));
  run->add_option("--seed", ra.seed);
  run->add_option("--max-iterations", ra.max_iterations);
  run->add_option("--out", ra.out, "Output directory")->required();
  run->add_option("--noise-tau", ra.noise_tau, "Noisy annotator temperature (default: calibrated on the MIL pool)");
  run->add_option("--cost-mode", ra.cost_mode)->check(CLI::IsMember({"flat", "curve"}));
  run->add_option("--test-dataset", ra.test_dataset, "Held-out dataset for AP")->check(CLI::ExistingFile);
  run->add_option("--host", ra.host, "Human mode: bind address");
  run->add_option("--port", ra.port, "Human mode: port");

  std::string serve_dataset, serve_dir, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a data directory (runs are recovered)");
  serve->add_option("--dataset", serve_dataset)->required()->check(CLI::ExistingFile);
  serve->add_option("--data-dir", serve_dir)->required();
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);

  std::string synth_kind = "separable", synth_out;
  std::uint64_t synth_seed = 0;
  int synth_images = 0;
  double synth_coverage = -1.0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic benchmark dataset");
  synth->add_option("--benchmark", synth_kind)->check(CLI::IsMember({"separable", "tradeoff"}));
  synth->add_option("--seed", synth_seed);
  synth->add_option("--images", synth_images);
  synth->add_option("--coverage", synth_coverage);
  synth->add_option("--out", synth_out)->required();

  std::string rec_dataset, rec_checkpoint, rec_log, rec_out;
  auto* recover_cmd = app.add_subcommand("recover", "Rebuild a run state from its checkpoint and event log");
  recover_cmd->add_option("--dataset", rec_dataset)->required()->check(CLI::ExistingFile);
  recover_cmd->add_option("--checkpoint", rec_checkpoint)->required()->check(CLI::ExistingFile);
  recover_cmd->add_option("--log", rec_log)->required();
  recover_cmd->add_option("--out", rec_out, "Write the recovered checkpoint here");

  std::string cal_dataset, cal_class;
  std::uint64_t cal_seed = 0;
  double cal_yes = 0.148, cal_no = 0.085;
  auto* calibrate = app.add_subcommand("calibrate", "Fit the noise temperature on the MIL detections of a class");
  calibrate->add_option("--dataset", cal_dataset)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--class", cal_class)->required();
  calibrate->add_option("--seed", cal_seed);
  calibrate->add_option("--incorrect-yes", cal_yes);
  calibrate->add_option("--incorrect-no", cal_no);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (ra.class_name.empty() && !ra.all) throw UsageError("one of --class or --all is required");
      return cmd_run(ra);
    }
    if (*serve) {
      const LoadedDataset data = load_dataset(serve_dataset);
      ServiceConfig cfg;
      cfg.data_dir = serve_dir;
      cfg.dataset_dir = fs::path(serve_dataset).parent_path();
      Service service(data.dataset, data.ground_truth.empty() ? nullptr : &data.ground_truth, cfg);
      return serve_until_stopped(service, serve_host, serve_port);
    }
    if (*synth) {
      SyntheticConfig c =
          synth_kind == "separable" ? SyntheticConfig::separable_benchmark() : SyntheticConfig::tradeoff_benchmark();
      if (synth_images > 0) c.num_images = synth_images;
      if (synth_coverage >= 0) c.coverage = synth_coverage;
      const LoadedDataset d = generate_synthetic(c, synth_seed);
      save_dataset(synth_out, d.dataset, d.ground_truth);
      std::cerr << "wrote " << d.dataset.images().size() << " images to " << synth_out << "\n";
      return 0;
    }
    if (*recover_cmd) {
      const LoadedDataset data = load_dataset(rec_dataset);
      const Recovery r = recover(rec_checkpoint, rec_log, data.dataset, LoopOptions{});
      json report{{"run_id", r.state.run_id},     {"iteration", r.state.iteration},
                  {"events", r.state.events_applied}, {"replayed", r.replayed},
                  {"finished", r.state.finished}, {"valid_bytes", r.valid_bytes}};
      if (r.corrupt_offset) {
        report["corrupt_offset"] = *r.corrupt_offset;
        report["corrupt_reason"] = r.corrupt_reason;
      }
      if (!rec_out.empty()) write_checkpoint(rec_out, r.state);
      std::cout << report.dump(2) << "\n";
      return 0;
    }
    if (*calibrate) {
      const LoadedDataset data = load_dataset(cal_dataset);
      if (data.ground_truth.empty()) throw UsageError("calibration needs ground truth in the dataset");
      SimulationConfig sc;
      sc.seed = cal_seed;
      const MilResult d0 = initialize(data.dataset, cal_class, sc);
      const auto pool = detection_ious(d0.detections, data.ground_truth, cal_class);
      const NoiseCalibration cal = calibrate_temperature(pool, cal_yes, cal_no);
      std::cout << json{{"class", cal_class},
                        {"pool", pool.size()},
                        {"temperature", cal.temperature},
                        {"incorrect_yes", cal.rates.incorrect_yes},
                        {"incorrect_no", cal.rates.incorrect_no}}
                       .dump(2)
                << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
