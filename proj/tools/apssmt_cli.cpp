// Experiment runner for the APS-SMT vs NSP comparison. `run` executes a plan
// file and writes the results CSV; `summarize` formats a CSV into the per
// adversary-count report.

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "apssmt/experiment.hpp"

namespace {

int run_command(const std::string& plan_path, const std::string& out_override,
                int parallel, bool log_events) {
  std::ifstream in(plan_path);
  if (!in) {
    std::cerr << "error: cannot open plan file '" << plan_path << "'\n";
    return 2;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();

  apssmt::ExperimentPlan plan = apssmt::parse_plan(buffer.str());
  if (!out_override.empty()) {
    plan.output_path = out_override;
    plan.echoed["out"] = out_override;
  }

  apssmt::ExecuteOptions options;
  options.parallel = parallel;
  options.record_events = log_events;
  apssmt::AggregateResult result = apssmt::execute_plan(plan, options);

  std::ofstream out(plan.output_path, std::ios::trunc);
  if (!out) {
    std::cerr << "error: cannot write '" << plan.output_path
              << "' (results were computed but not saved)\n";
    return 3;
  }
  apssmt::write_csv(result, plan, out);
  out.flush();
  if (!out) {
    std::cerr << "error: short write to '" << plan.output_path
              << "' (partial results on disk)\n";
    return 3;
  }

  if (log_events) {
    for (const auto& cell : result.cells) {
      std::ostringstream name;
      name << plan.output_path << '.' << apssmt::protocol_name(cell.protocol) << '.'
           << cell.adversaries << '.' << cell.seed;
      std::ofstream events(name.str() + ".events.log", std::ios::trunc);
      for (const auto& line : cell.stats.event_log) {
        events << line << '\n';
      }
      std::ofstream metrics(name.str() + ".metrics.csv", std::ios::trunc);
      metrics << "time,route,delta_tt,delta_pf,lp,af,trust\n";
      char buf[64];
      for (const auto& snap : cell.stats.metrics_log) {
        std::string route;
        for (std::size_t i = 0; i < snap.route.size(); ++i) {
          if (i) route += '-';
          route += std::to_string(snap.route[i]);
        }
        std::snprintf(buf, sizeof(buf), "%.6f", snap.time);
        metrics << buf << ',' << route << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", snap.trip_variation_mean);
        metrics << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", snap.frequency_change);
        metrics << buf << ',' << snap.lost_packets << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", snap.anomaly);
        metrics << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6f", snap.trust);
        metrics << buf << '\n';
      }
    }
  }

  std::cout << apssmt::summarize(result);
  std::cout << "wrote " << plan.output_path << " (" << result.cells.size()
            << " runs)\n";
  return 0;
}

int summarize_command(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) {
    std::cerr << "error: cannot open '" << csv_path << "'\n";
    return 2;
  }
  apssmt::AggregateResult result = apssmt::load_csv(in);
  std::cout << apssmt::summarize(result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multipath secure message transmission experiment harness"};
  app.require_subcommand(1);

  std::string plan_path;
  std::string out_override;
  int parallel = 1;
  bool log_events = false;
  auto* run = app.add_subcommand("run", "execute an experiment plan");
  run->add_option("plan", plan_path, "plan file (key=value lines)")->required();
  run->add_option("--out", out_override, "override the output CSV path");
  run->add_option("--parallel", parallel, "worker threads")->check(CLI::Range(1, 256));
  run->add_flag("--log-events", log_events,
                "write per-run event logs and metrics snapshots next to the CSV");

  std::string csv_path;
  auto* summarize = app.add_subcommand("summarize", "report on a results CSV");
  summarize->add_option("csv", csv_path, "results CSV from `run`")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return run_command(plan_path, out_override, parallel, log_events);
    }
    return summarize_command(csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
