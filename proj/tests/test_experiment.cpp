#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "apssmt/experiment.hpp"

using namespace apssmt;

namespace {

const char* kMinimalPlan =
    "nodes = 50\n"
    "protocols = both\n"
    "sweep = 5,10,15,20,25\n"
    "seeds = 1..20\n";

std::string tiny_plan() {
  return "nodes = 6\n"
         "area_width = 300\narea_height = 300\nrange = 200\n"
         "speed_min = 0\nspeed_max = 0\n"
         "queue_loss = 0\n"
         "send_rate = 4\nduration = 3\n"
         "protocols = both\n"
         "sweep = 0\n"
         "seeds = 1,2\n";
}

}  // namespace

TEST_CASE("a minimal plan parses with every default echoed") {
  const ExperimentPlan plan = parse_plan(kMinimalPlan);
  REQUIRE(plan.base.node_count == 50);
  REQUIRE(plan.adversary_sweep == std::vector<int>{5, 10, 15, 20, 25});
  REQUIRE(plan.protocols.size() == 2);
  REQUIRE(plan.seeds.size() == 20);
  REQUIRE(plan.seeds.front() == 1);
  REQUIRE(plan.seeds.back() == 20);
  // Defaults filled and echoed for provenance.
  REQUIRE(plan.echoed.at("range") == "150");
  REQUIRE(plan.echoed.at("per_hop_latency") == "0.005");
  REQUIRE(plan.echoed.at("queue_loss") == "0.01");
  REQUIRE(plan.echoed.at("adversary_model") == "black-hole");
  REQUIRE(plan.echoed.at("trust_window") == "20");
  REQUIRE(plan.echoed.count("aps_size") == 1);
}

TEST_CASE("plan validation names the offending key and line") {
  SECTION("sweep out of range") {
    try {
      parse_plan("nodes = 50\nprotocols = both\nsweep = 60\nseeds = 1\n");
      FAIL("expected PlanError");
    } catch (const PlanError& e) {
      REQUIRE(std::string(e.what()).find("sweep") != std::string::npos);
    }
  }
  SECTION("duplicate key") {
    try {
      parse_plan("nodes = 50\nnodes = 40\nprotocols = both\nsweep = 1\nseeds = 1\n");
      FAIL("expected PlanError");
    } catch (const PlanError& e) {
      const std::string what = e.what();
      REQUIRE(what.find("duplicate") != std::string::npos);
      REQUIRE(what.find("nodes") != std::string::npos);
      REQUIRE(what.find("line 2") != std::string::npos);
    }
  }
  SECTION("unknown key") {
    try {
      parse_plan("bogus = 1\nprotocols = both\nsweep = 1\nseeds = 1\nnodes = 50\n");
      FAIL("expected PlanError");
    } catch (const PlanError& e) {
      REQUIRE(std::string(e.what()).find("bogus") != std::string::npos);
    }
  }
  SECTION("missing required key") {
    try {
      parse_plan("nodes = 50\nprotocols = both\nsweep = 1\n");
      FAIL("expected PlanError");
    } catch (const PlanError& e) {
      REQUIRE(std::string(e.what()).find("seeds") != std::string::npos);
    }
  }
  SECTION("comments and blank lines are fine") {
    REQUIRE_NOTHROW(parse_plan("# comment\n\nnodes = 10 # trailing\n"
                               "protocols = NSP\nsweep = 2\nseeds = 3\n"));
  }
}

TEST_CASE("execution fills the full cell grid and aggregates") {
  const ExperimentPlan plan = parse_plan(tiny_plan());
  const AggregateResult result = execute_plan(plan);
  REQUIRE(result.cells.size() == 2 * 1 * 2);  // protocols x sweep x seeds
  REQUIRE(result.rows.size() == 2);
  for (const auto& cell : result.cells) {
    REQUIRE(cell.stats.delivery_ratio >= 0.0);
    REQUIRE(cell.stats.delivery_ratio <= 1.0);
  }
  // Lossless static tiny scenario: everything delivers, improvement is flat.
  for (const auto& row : result.rows) {
    REQUIRE(row.mean_delivery == 1.0);
    REQUIRE(row.stddev_delivery == 0.0);
  }
  REQUIRE(result.improvement_pct.at(0) == 0.0);
}

TEST_CASE("csv output is deterministic and shaped as documented") {
  const ExperimentPlan plan = parse_plan(tiny_plan());
  const AggregateResult r1 = execute_plan(plan);
  const AggregateResult r2 = execute_plan(plan);
  std::ostringstream a, b;
  write_csv(r1, plan, a);
  write_csv(r2, plan, b);
  REQUIRE(a.str() == b.str());

  // Row accounting: comments, one header, raw rows, aggregate rows.
  std::istringstream in(a.str());
  std::string line;
  int comments = 0, headers = 0, raw = 0, aggregate = 0;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) ++comments;
    else if (line == kCsvHeader) ++headers;
    else if (line.find(",ALL,") != std::string::npos) ++aggregate;
    else ++raw;
  }
  REQUIRE(headers == 1);
  REQUIRE(raw == 4);
  REQUIRE(aggregate == 2);
  REQUIRE(comments > 30);  // full provenance of every knob

  // And it round-trips through the loader.
  std::istringstream csv(a.str());
  const AggregateResult loaded = load_csv(csv);
  REQUIRE(loaded.cells.size() == 4);
  REQUIRE(loaded.rows.size() == 2);
  REQUIRE(loaded.rows[0].mean_delivery == 1.0);
}

TEST_CASE("parallel execution produces the same bytes as serial") {
  const ExperimentPlan plan = parse_plan(tiny_plan());
  const AggregateResult serial = execute_plan(plan, {1, false});
  const AggregateResult parallel = execute_plan(plan, {4, false});
  std::ostringstream a, b;
  write_csv(serial, plan, a);
  write_csv(parallel, plan, b);
  REQUIRE(a.str() == b.str());
}

TEST_CASE("both protocols of a cell share topology and adversary placement") {
  ScenarioConfig base;
  base.node_count = 20;
  base.adversary_count = 5;
  base.adversary_model = AdversaryModel::BlackHole;
  base.seed = 33;
  base.traffic.duration = 2;

  ScenarioConfig aps = base;
  aps.protocol = Protocol::ApsSmt;
  ScenarioConfig nsp = base;
  nsp.protocol = Protocol::Nsp;

  Simulator sa(aps);
  Simulator sn(nsp);
  REQUIRE(sa.adversaries() == sn.adversaries());
  auto pa = sa.positions();
  auto pn = sn.positions();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].x == pn[i].x);
    REQUIRE(pa[i].y == pn[i].y);
  }
  // The mobility trace stays identical through the run: traffic never
  // touches the mobility stream.
  sa.run();
  sn.run();
  auto qa = sa.positions();
  auto qn = sn.positions();
  for (std::size_t i = 0; i < qa.size(); ++i) {
    REQUIRE(qa[i].x == qn[i].x);
    REQUIRE(qa[i].y == qn[i].y);
  }
}

TEST_CASE("summarize reports the table and handles a missing protocol") {
  const ExperimentPlan plan = parse_plan(
      "nodes = 6\narea_width = 300\narea_height = 300\nrange = 200\n"
      "speed_min = 0\nspeed_max = 0\nqueue_loss = 0\nduration = 2\n"
      "protocols = APS-SMT\nsweep = 0\nseeds = 1\n");
  const AggregateResult result = execute_plan(plan);
  const std::string report = summarize(result);
  REQUIRE(report.find("adversaries") != std::string::npos);
  REQUIRE(report.find("n/a") != std::string::npos);  // no NSP counterpart
}
