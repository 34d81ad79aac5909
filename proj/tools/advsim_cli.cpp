// advsim: closed-loop adversarial evaluation of driving planners.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advsim/advsim.hpp"

namespace fs = std::filesystem;
using namespace advsim;

namespace {

// Output stream that is either a file or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw InvalidArgument("cannot open output file: " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<Scenario> load_scenarios(const std::vector<std::string>& files, const std::string& dir) {
  std::vector<std::string> paths = files;
  if (!dir.empty()) {
    if (!fs::is_directory(dir)) throw InvalidArgument("not a directory: " + dir);
    std::vector<std::string> found;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".json") found.push_back(entry.path().string());
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  if (paths.empty()) throw InvalidArgument("no scenarios given (use --scenario or --scenario-dir)");
  std::vector<Scenario> out;
  for (const auto& p : paths) out.push_back(load_scenario(p));
  return out;
}

SynthParams parse_params(const std::vector<std::string>& kvs) {
  SynthParams out;
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--param expects key=value, got " + kv);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(kv.substr(eq + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != kv.size() - eq - 1) throw InvalidArgument("--param value is not a number: " + kv);
    out[kv.substr(0, eq)] = v;
  }
  return out;
}

std::vector<double> parse_vector(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw InvalidArgument("empty vector: " + s);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop adversarial evaluation harness for driving planners"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run two-episode epochs and write a JSONL report");
  std::vector<std::string> scenario_files;
  std::string scenario_dir, planner_name = "idm", planner_cmd, config_path, out_path;
  std::vector<std::uint64_t> seeds;
  bool adv = true;
  run->add_option("--scenario", scenario_files, "Scenario JSON file (repeatable)");
  run->add_option("--scenario-dir", scenario_dir, "Directory of scenario JSON files");
  run->add_option("--planner", planner_name, "log_replay | constant_velocity | idm | external")->capture_default_str();
  run->add_option("--planner-cmd", planner_cmd, "Command starting an external planner on stdio");
  run->add_flag("--adv,!--no-adv", adv, "Run the adversarial second episode (default on)");
  run->add_option("--seed", seeds, "Epoch seed (repeatable, default 0)");
  run->add_option("--config", config_path, "Harness configuration (JSON)");
  run->add_option("--out", out_path, "Report path (default stdout)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario");
  std::string kind = "cut_in", synth_out, synth_dir;
  std::uint64_t synth_seed = 0;
  std::size_t synth_count = 1;
  std::vector<std::string> synth_params;
  synth->add_option("--kind", kind, "straight | cut_in | intersection | merge")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed (first seed when --count > 1)")->capture_default_str();
  synth->add_option("--param", synth_params, "Parameter override key=value (repeatable)");
  synth->add_option("--out", synth_out, "Output file (default stdout)");
  synth->add_option("--count", synth_count, "Number of consecutive seeds to generate (needs --out-dir)");
  synth->add_option("--out-dir", synth_dir, "Write <id>.json files into this directory");

  // score
  auto* score = app.add_subcommand("score", "Re-score a recorded report with the configured metric weights");
  std::string score_in, score_config, score_out;
  score->add_option("--in", score_in, "Input JSONL report")->required();
  score->add_option("--config", score_config, "Configuration whose metric weights are applied")->required();
  score->add_option("--out", score_out, "Output JSONL (default stdout)");

  // flow-bench
  auto* bench = app.add_subcommand("flow-bench", "Euler step sweep against the Gaussian oracle (CSV)");
  std::string bench_mu = "3,-1", bench_out;
  double bench_s = 0.5;
  std::vector<std::size_t> bench_steps{5, 10, 20, 50, 100};
  std::size_t bench_samples = 10000;
  std::uint64_t bench_seed = 0;
  bench->add_option("--mu", bench_mu, "Target mean, comma separated")->capture_default_str();
  bench->add_option("--std", bench_s, "Target standard deviation")->capture_default_str();
  bench->add_option("--steps", bench_steps, "Step counts")->delimiter(',')->capture_default_str();
  bench->add_option("--samples", bench_samples, "Samples per step count")->capture_default_str();
  bench->add_option("--seed", bench_seed, "Noise seed")->capture_default_str();
  bench->add_option("--out", bench_out, "CSV path (default stdout)");

  // report
  auto* report = app.add_subcommand("report", "Batch summary of a JSONL report");
  std::string report_in, report_csv;
  report->add_option("--in", report_in, "Input JSONL report")->required();
  report->add_option("--csv", report_csv, "Also write the summary as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      HarnessConfig cfg = config_path.empty() ? HarnessConfig{} : load_config(config_path);
      const PlannerKind pk = parse_planner_kind(planner_name);
      if (!planner_cmd.empty()) {
        cfg.protocol.transport = Transport::stdio;
        cfg.protocol.command = planner_cmd;
      }
      cfg.validate();
      if (seeds.empty()) seeds.push_back(0);
      const auto scenarios = load_scenarios(scenario_files, scenario_dir);
      Output out(out_path);
      EpochOptions opts;
      opts.adversarial = adv;
      const auto result = run_batch(scenarios, planner_factory(pk, cfg), planner_name, cfg, seeds, opts,
                                    [&](const EpochResult& e) { write_jsonl(out.stream(), epoch_to_json(e, cfg)); });
      for (const auto& f : result.failures) {
        write_jsonl(out.stream(), failure_to_json(f));
        std::cerr << "epoch failed: " << f.scenario_id << " seed " << f.seed << ": " << f.error << '\n';
      }
      return result.failures.empty() ? 0 : 1;
    }

    if (*synth) {
      const ScenarioKind k = parse_scenario_kind(kind);
      const SynthParams params = parse_params(synth_params);
      if (synth_count > 1 && synth_dir.empty()) throw InvalidArgument("--count > 1 needs --out-dir");
      if (!synth_dir.empty()) {
        fs::create_directories(synth_dir);
        for (std::size_t i = 0; i < synth_count; ++i) {
          const Scenario s = synth_scenario(k, synth_seed + i, params);
          save_scenario(s, (fs::path(synth_dir) / (s.id + ".json")).string());
        }
        return 0;
      }
      const Scenario s = synth_scenario(k, synth_seed, params);
      Output out(synth_out);
      out.stream() << scenario_to_json(s).dump(1) << '\n';
      return 0;
    }

    if (*score) {
      const HarnessConfig cfg = load_config(score_config);
      const ReportFile file = read_jsonl_file(score_in);
      Output out(score_out);
      for (std::size_t i = 0; i < file.epochs.size(); ++i) {
        EpochResult e = file.epochs[i];
        rescore_epoch(e, cfg.weights);
        HarnessConfig snapshot = config_from_json(file.raw[i].at("config"));
        snapshot.weights = cfg.weights;
        write_jsonl(out.stream(), epoch_to_json(e, snapshot));
      }
      for (const auto& f : file.failures) write_jsonl(out.stream(), failure_to_json(f));
      return 0;
    }

    if (*bench) {
      const auto mu = parse_vector(bench_mu);
      const auto rows = flow::gaussian_step_sweep(mu, bench_s, bench_steps, bench_samples, bench_seed);
      Output out(bench_out);
      out.stream() << "n_steps,mean_error,std_error\n";
      out.stream().precision(10);
      for (const auto& r : rows) out.stream() << r.n_steps << ',' << r.mean_error << ',' << r.std_error << '\n';
      return 0;
    }

    if (*report) {
      const ReportFile file = read_jsonl_file(report_in);
      if (file.epochs.empty()) throw InvalidArgument("report contains no epochs");
      const BatchSummary s = summarize(file.epochs, file.failures.size());
      write_summary_table(std::cout, s);
      if (!report_csv.empty()) {
        Output csv(report_csv);
        write_summary_csv(csv.stream(), s);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
