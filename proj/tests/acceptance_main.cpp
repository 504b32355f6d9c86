// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its thresholds in code; the end-to-end sweep
// additionally prints the measured numbers next to the fixed reference
// targets for context.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "apssmt/aps_selection.hpp"
#include "apssmt/dispersal.hpp"
#include "apssmt/experiment.hpp"
#include "apssmt/fault_localizer.hpp"
#include "apssmt/path_metrics.hpp"
#include "apssmt/simulator.hpp"

using namespace apssmt;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool ok,
            const std::string& detail = "") {
  std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", number,
              name.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void run_criterion(int number, const std::string& name,
                   const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [ok, detail] = body();
    report(number, name, ok, detail);
  } catch (const std::exception& e) {
    report(number, name, false, std::string("exception: ") + e.what());
  }
}

template <typename F>
void for_each_subset(int n, int k, F f) {
  if (k == 0) return;
  std::vector<int> pick(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
  for (;;) {
    f(pick);
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) {
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

int ceil_log2(int n) {
  int bound = 0;
  while ((1 << bound) < n) ++bound;
  return bound;
}

// --- criterion 1: dispersal threshold property ---------------------------

std::pair<bool, std::string> dispersal_property() {
  std::mt19937 rng(20240811);
  std::uniform_int_distribution<std::size_t> length(1, 1024);
  std::uint64_t checked = 0;
  for (int n = 1; n <= 6; ++n) {
    for (int m = 1; m <= n; ++m) {
      for (int trial = 0; trial < 200; ++trial) {
        Bytes msg(length(rng));
        for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
        const auto shares =
            disperse(msg, DispersalConfig{n, m},
                     static_cast<std::uint64_t>(n * 1000000 + m * 1000 + trial));
        bool ok = true;
        for_each_subset(n, m, [&](const std::vector<int>& pick) {
          std::vector<MessageShare> subset;
          for (int i : pick) subset.push_back(shares[static_cast<std::size_t>(i)]);
          if (reconstruct(subset) != msg) ok = false;
          ++checked;
        });
        for_each_subset(n, m - 1, [&](const std::vector<int>& pick) {
          std::vector<MessageShare> subset;
          for (int i : pick) subset.push_back(shares[static_cast<std::size_t>(i)]);
          try {
            reconstruct(subset);
            ok = false;  // a short subset must never decode
          } catch (const InsufficientSharesError&) {
          }
          ++checked;
        });
        if (!ok) {
          return {false, "failed at n=" + std::to_string(n) +
                             " m=" + std::to_string(m)};
        }
      }
    }
  }
  return {true, std::to_string(checked) + " subset reconstructions"};
}

// --- criterion 2: equation identities ------------------------------------

std::pair<bool, std::string> equation_identities() {
  if (reference_time({0, 4, 4, 10}) != 5.0) {
    return {false, "worked example RQ=(0,4) RP=(4,10) != 5.0"};
  }
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 10000.0);
  for (int i = 0; i < 1000; ++i) {
    const double ts = u(rng), tr = u(rng);
    if (trip_time(ts, tr) != tr - ts) return {false, "trip_time mismatch"};
    DiscoveryTimestamps d{u(rng), u(rng), u(rng), u(rng)};
    const double expect =
        ((d.request_received - d.request_sent) + (d.reply_received - d.reply_sent)) /
        2.0;
    if (reference_time(d) != expect) return {false, "reference_time mismatch"};
    const double te = u(rng), tt = u(rng);
    if (trip_variation(te, tt) != te - tt) return {false, "trip_variation mismatch"};
  }
  return {true, "1000 random tuples exact"};
}

// --- criterion 3: localization bound --------------------------------------

std::pair<bool, std::string> localization_bound() {
  const LossWindowParams params{10, 0.2, 5};
  int cases = 0;
  for (int links : {1, 2, 3, 4, 8, 16}) {
    for (int drop = 0; drop < links; ++drop) {
      std::vector<NodeId> route;
      for (int i = 0; i <= links; ++i) route.push_back(static_cast<NodeId>(i));
      RouteLocalizer loc(route, params);
      std::optional<FaultVerdict> verdict;
      for (int packet = 0; packet < 100000 && !verdict; ++packet) {
        std::set<int> acked;
        for (int p : loc.probe_positions()) {
          if (p <= drop) acked.insert(p);
        }
        verdict = loc.observe(acked);
      }
      ++cases;
      if (!verdict) {
        return {false, "no verdict for n=" + std::to_string(links)};
      }
      if (verdict->faulty_link !=
          Link::of(static_cast<NodeId>(drop), static_cast<NodeId>(drop + 1))) {
        return {false, "wrong link for n=" + std::to_string(links) +
                           " drop=" + std::to_string(drop)};
      }
      const int bound = std::max(1, ceil_log2(links));
      if (verdict->evidence > bound) {
        return {false, "evidence " + std::to_string(verdict->evidence) +
                           " exceeds ceil(log2 " + std::to_string(links) + ")"};
      }
      if (links == 1 && loc.registrations() > 1) {
        return {false, "single-link route took more than one registration"};
      }
    }
  }
  return {true, std::to_string(cases) + " (length, position) cases exact"};
}

// --- criterion 4: penalty avoidance ---------------------------------------

std::pair<bool, std::string> penalty_avoidance() {
  LinkWeightTable table(0.5);
  const Link bad = Link::of(2, 3);
  const Route dirty{{0, 2, 3, 1}, 0.5};
  const Route clean{{0, 2, 4, 1}, 0.5};  // identical but for the (2,3) hop
  table.penalize(bad, 2.0, 0.5);
  if (!(rate_route(clean, table) > rate_route(dirty, table))) {
    return {false, "clean route does not outrank the penalized one"};
  }
  auto one = select_aps({dirty, clean}, table, SelectionParams{1, 0.2});
  if (one.routes.size() != 1 || one.routes[0].nodes != clean.nodes) {
    return {false, "selection kept the penalized route"};
  }
  // With a disjoint alternative present, the penalized route is not needed.
  const Route disjoint{{0, 5, 6, 1}, 0.5};
  auto pair = select_aps({dirty, disjoint}, table, SelectionParams{2, 0.2});
  bool has_disjoint = false;
  for (const auto& r : pair.routes) {
    if (r.nodes == disjoint.nodes) has_disjoint = true;
  }
  if (!has_disjoint) return {false, "disjoint alternative not selected"};
  if (!(rate_route(disjoint, table) > rate_route(dirty, table))) {
    return {false, "disjoint alternative not ranked above the faulty route"};
  }
  return {true, ""};
}

// --- criterion 5: end-to-end trend ----------------------------------------

std::pair<bool, std::string> end_to_end_trend() {
  const ExperimentPlan plan = parse_plan(
      "nodes = 50\n"
      "protocols = both\n"
      "sweep = 5,10,15,20,25\n"
      "seeds = 1..20\n");
  const AggregateResult result = execute_plan(plan);

  std::map<std::pair<int, std::uint64_t>, double> aps_cells, nsp_cells;
  for (const auto& cell : result.cells) {
    auto& sink = cell.protocol == Protocol::ApsSmt ? aps_cells : nsp_cells;
    sink[{cell.adversaries, cell.seed}] = cell.stats.delivery_ratio;
  }
  std::map<int, double> aps_mean, nsp_mean;
  for (const auto& row : result.rows) {
    (row.protocol == Protocol::ApsSmt ? aps_mean : nsp_mean)[row.adversaries] =
        row.mean_delivery;
  }

  std::string detail;
  char buf[160];
  for (int count : {5, 10, 15, 20, 25}) {
    std::snprintf(buf, sizeof(buf), "%d:%.3f/%.3f ", count, aps_mean[count],
                  nsp_mean[count]);
    detail += buf;
  }
  for (int count : {5, 10, 15, 20, 25}) {
    if (!(aps_mean[count] > nsp_mean[count])) {
      return {false, detail + "| APS-SMT mean not above NSP at " +
                         std::to_string(count)};
    }
  }
  int cells = 0, wins = 0;
  for (const auto& [key, aps_value] : aps_cells) {
    if (key.first < 10) continue;
    ++cells;
    if (aps_value > nsp_cells[key]) ++wins;
  }
  if (wins < static_cast<int>(std::ceil(0.9 * cells))) {
    return {false, detail + "| paired wins " + std::to_string(wins) + "/" +
                       std::to_string(cells) + " below 90%"};
  }
  if (aps_mean[25] < 0.80) {
    return {false, detail + "| delivery at 25 adversaries below the 0.80 floor"};
  }
  double imp_lo = 1e9, imp_hi = -1e9;
  for (const auto& [count, pct] : result.improvement_pct) {
    imp_lo = std::min(imp_lo, pct);
    imp_hi = std::max(imp_hi, pct);
  }
  std::snprintf(buf, sizeof(buf),
                "| at 25 advs: %.3f (reference 0.95) | improvement %+.0f%%..%+.0f%% "
                "(reference +32%%..+150%%) | paired wins %d/%d",
                aps_mean[25], imp_lo, imp_hi, wins, cells);
  return {true, detail + buf};
}

// --- criterion 6: wormhole attraction --------------------------------------

ScenarioConfig wormhole_fixture() {
  ScenarioConfig cfg;
  cfg.node_count = 10;
  cfg.area_width = 800;
  cfg.area_height = 400;
  cfg.reception_range = 150;
  cfg.mobility.speed_min = 0;
  cfg.mobility.speed_max = 0;
  cfg.queue_loss_prob = 0;
  cfg.fixed_positions = {{50, 150},  {650, 150}, {170, 150}, {290, 150},
                         {410, 150}, {530, 150}, {60, 40},   {640, 40},
                         {50, 270},  {650, 270}};
  cfg.adversary_model = AdversaryModel::Wormhole;
  cfg.wormhole_pairs = {{8, 9}};
  cfg.traffic.send_rate = 4;
  cfg.traffic.duration = 20;
  cfg.seed = 5;
  return cfg;
}

std::pair<bool, std::string> wormhole_attraction() {
  auto nsp_cfg = wormhole_fixture();
  nsp_cfg.protocol = Protocol::Nsp;
  const RunStats nsp = run_scenario(nsp_cfg);
  if (nsp.first_route != std::vector<NodeId>{0, 8, 9, 1}) {
    return {false, "NSP did not select the tunneled route"};
  }
  if (nsp.messages_delivered != 0) {
    return {false, "NSP delivered through the wormhole"};
  }

  auto aps_cfg = wormhole_fixture();
  aps_cfg.protocol = Protocol::ApsSmt;
  const RunStats aps = run_scenario(aps_cfg);
  if (aps.localizations < 1 || aps.localization_log.empty()) {
    return {false, "no fault localized"};
  }
  const auto& verdict = aps.localization_log.front();
  if (!verdict.link.incident_to(8) && !verdict.link.incident_to(9)) {
    return {false, "verdict not incident to a wormhole endpoint"};
  }
  const int bound = 2 * ceil_log2(3);  // tunneled route has three links
  if (verdict.registrations > bound) {
    return {false, "verdict took " + std::to_string(verdict.registrations) +
                       " registrations, bound " + std::to_string(bound)};
  }
  std::uint64_t late_sent = 0, late_ok = 0;
  for (const auto& m : aps.message_log) {
    if (m.send_time > verdict.time) {
      ++late_sent;
      late_ok += m.delivered ? 1 : 0;
    }
  }
  const double late_ratio =
      late_sent == 0 ? 0.0 : static_cast<double>(late_ok) / late_sent;
  if (late_ratio < 0.9) {
    return {false, "post-verdict delivery " + std::to_string(late_ratio)};
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "verdict (%u,%u) after %d registrations; post-verdict delivery %.3f",
                verdict.link.a, verdict.link.b, verdict.registrations, late_ratio);
  return {true, buf};
}

// --- criterion 7: conservation and determinism -----------------------------

std::pair<bool, std::string> conservation_determinism() {
  std::mt19937_64 rng(0xc0de);
  for (int trial = 0; trial < 50; ++trial) {
    ScenarioConfig cfg;
    cfg.node_count = 5 + static_cast<int>(rng() % 12);
    cfg.area_width = 250 + static_cast<double>(rng() % 400);
    cfg.area_height = 250 + static_cast<double>(rng() % 400);
    cfg.reception_range = 100 + static_cast<double>(rng() % 120);
    cfg.mobility.speed_min = 0;
    cfg.mobility.speed_max = static_cast<double>(rng() % 10);
    cfg.adversary_count = static_cast<int>(rng() % (cfg.node_count - 1));
    switch (rng() % 4) {
      case 0: cfg.adversary_model = AdversaryModel::None; break;
      case 1: cfg.adversary_model = AdversaryModel::BlackHole; break;
      case 2: cfg.adversary_model = AdversaryModel::Wormhole; break;
      default: cfg.adversary_model = AdversaryModel::Delay; break;
    }
    cfg.protocol = (rng() % 2) ? Protocol::ApsSmt : Protocol::Nsp;
    cfg.traffic.send_rate = 2 + static_cast<double>(rng() % 5);
    cfg.traffic.duration = 2 + static_cast<double>(rng() % 4);
    cfg.queue_loss_prob = (rng() % 3) * 0.015;
    cfg.seed = rng();
    cfg.record_events = true;

    const RunStats a = run_scenario(cfg);
    const std::uint64_t accounted = a.delivered_transmissions + a.dropped_by_loss +
                                    a.dropped_by_disconnect +
                                    a.dropped_by_adversary + a.in_flight_at_end;
    if (a.transmissions != accounted) {
      return {false, "trial " + std::to_string(trial) + ": sent " +
                         std::to_string(a.transmissions) + " != accounted " +
                         std::to_string(accounted)};
    }
    const RunStats b = run_scenario(cfg);
    if (a.canonical_string() != b.canonical_string()) {
      return {false, "trial " + std::to_string(trial) + ": repeat run differed"};
    }
  }
  return {true, "50 random configs balanced and repeatable"};
}

}  // namespace

int main() {
  const auto started = std::chrono::steady_clock::now();
  run_criterion(1, "dispersal threshold property (n<=6, 200 msgs/config)",
                dispersal_property);
  run_criterion(2, "trip/reference/variation equation identities",
                equation_identities);
  run_criterion(3, "binary-search localization bound over all fault positions",
                localization_bound);
  run_criterion(4, "penalized links are avoided by rating and selection",
                penalty_avoidance);
  run_criterion(5, "delivery trend APS-SMT vs NSP, 50 nodes, 20 paired seeds",
                end_to_end_trend);
  run_criterion(6, "wormhole attraction, localization, and recovery",
                wormhole_attraction);
  run_criterion(7, "transmission conservation and bit-identical repeats",
                conservation_determinism);
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  std::printf("%d/7 criteria passed in %.1f s\n", 7 - failures,
              static_cast<double>(elapsed) / 1000.0);
  return failures == 0 ? 0 : 1;
}
