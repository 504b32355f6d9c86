#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "apssmt/simulator.hpp"

namespace apssmt {

// Experiment runner: a flat key=value plan describes a base scenario, an
// adversary-count sweep, the protocols to compare, and the seeds. Every
// (protocol, count, seed) cell runs one simulation; both protocols of a cell
// share a seed and therefore a topology, mobility trace, and adversary
// placement. Output is a CSV with one row per cell plus per-count aggregates.

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentPlan {
  ScenarioConfig base;
  std::vector<int> adversary_sweep;
  std::vector<Protocol> protocols;
  std::vector<std::uint64_t> seeds;
  std::string output_path = "results.csv";
  // Full provenance: every documented knob with its final value.
  std::map<std::string, std::string> echoed;
};

namespace plan_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    out.push_back(trim(item));
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace plan_detail

// Documented plan keys. Required: protocols, sweep, seeds. Everything else
// defaults as listed here and is echoed into the CSV header.
inline ExperimentPlan parse_plan(const std::string& text) {
  using plan_detail::split;
  using plan_detail::trim;

  std::map<std::string, std::pair<std::string, int>> entries;  // key -> (value, line)
  {
    std::stringstream ss(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(ss, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string line = trim(raw);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw PlanError("line " + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw PlanError("line " + std::to_string(line_no) + ": empty key");
      }
      if (entries.count(key)) {
        throw PlanError("line " + std::to_string(line_no) + ": duplicate key '" +
                        key + "'");
      }
      entries[key] = {value, line_no};
    }
  }

  ExperimentPlan plan;
  ScenarioConfig& c = plan.base;
  std::map<std::string, std::string> echoed;
  std::map<std::string, int> key_lines;
  for (const auto& [key, value_line] : entries) {
    key_lines[key] = value_line.second;
  }

  auto bad = [&](const std::string& key, const std::string& why) -> PlanError {
    int line = 0;
    if (auto it = key_lines.find(key); it != key_lines.end()) line = it->second;
    return PlanError("line " + std::to_string(line) + ": key '" + key + "': " + why);
  };

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    std::string v = it->second.first;
    entries.erase(it);
    return v;
  };

  auto num = [&](const std::string& key, double dflt, double lo,
                 double hi) -> double {
    double v = dflt;
    if (auto s = take(key)) {
      try {
        std::size_t used = 0;
        v = std::stod(*s, &used);
        if (used != s->size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw bad(key, "not a number: '" + *s + "'");
      }
    }
    if (v < lo || v > hi) {
      throw bad(key, "value " + plan_detail::fmt(v) + " outside [" +
                         plan_detail::fmt(lo) + ", " + plan_detail::fmt(hi) + "]");
    }
    echoed[key] = plan_detail::fmt(v);
    return v;
  };
  auto integer = [&](const std::string& key, int dflt, int lo, int hi) -> int {
    return static_cast<int>(num(key, dflt, lo, hi));
  };

  // Scenario shape.
  c.node_count = integer("nodes", 50, 2, 100000);
  c.area_width = num("area_width", 500, 1, 1e9);
  c.area_height = num("area_height", 500, 1, 1e9);
  c.reception_range = num("range", 150, 1, 1e9);
  c.mobility.speed_min = num("speed_min", 1.0, 0, 1e6);
  c.mobility.speed_max = num("speed_max", 10.0, 0, 1e6);
  c.mobility.pause_time = num("pause", 10.0, 0, 1e9);
  c.mobility_step = num("mobility_step", 0.5, 1e-3, 1e6);

  if (auto s = take("adversary_model")) {
    if (*s == "none") c.adversary_model = AdversaryModel::None;
    else if (*s == "black-hole") c.adversary_model = AdversaryModel::BlackHole;
    else if (*s == "wormhole") c.adversary_model = AdversaryModel::Wormhole;
    else if (*s == "delay") c.adversary_model = AdversaryModel::Delay;
    else throw bad("adversary_model", "unknown model '" + *s + "'");
  } else {
    c.adversary_model = AdversaryModel::BlackHole;
  }
  echoed["adversary_model"] = adversary_model_name(c.adversary_model);
  c.delay_attack_seconds = num("delay_attack", 2.0, 0, 1e6);

  // Traffic.
  c.traffic.source = static_cast<NodeId>(integer("source", 0, 0, c.node_count - 1));
  c.traffic.destination =
      static_cast<NodeId>(integer("destination", 1, 0, c.node_count - 1));
  c.traffic.packet_size = integer("packet_size", 256, 1, 60000);
  c.traffic.send_rate = num("send_rate", 4.0, 1e-6, 1e6);
  c.traffic.duration = num("duration", 100.0, 1e-3, 1e9);

  // Radio model.
  c.per_hop_latency = num("per_hop_latency", 0.005, 1e-9, 1e3);
  c.queue_loss_prob = num("queue_loss", 0.01, 0, 1);

  // Probing and trust.
  c.probing.window = integer("loss_window", 10, 1, 100000);
  c.probing.loss_threshold = num("loss_threshold", 0.2, 0, 1);
  c.probing.min_observations = integer("min_window_obs", 5, 1, 100000);
  c.trust.initial = num("trust_initial", 0.5, 0, 1);
  c.trust.increment = num("trust_increment", 0.05, 0, 1);
  c.trust.decay = num("trust_decay", 0.5, 0, 1);
  c.trust.exclusion_threshold = num("trust_threshold", 0.2, 0, 1);
  c.trust.window_packets = integer("trust_window", 20, 1, 100000);
  c.trust.anomaly_threshold = num("anomaly_threshold", 0.25, 0, 1);
  c.anomaly_weights.delay = num("anomaly_w_delay", 0.3, 0, 1);
  c.anomaly_weights.frequency = num("anomaly_w_frequency", 0.3, 0, 1);
  c.anomaly_weights.loss = num("anomaly_w_loss", 0.4, 0, 1);
  c.penalty_factor = num("penalty_factor", 2.0, 1, 1e6);
  c.rating_penalty = num("rating_penalty", 0.5, 0, 1);
  c.rating_reward = num("rating_reward", 0.05, 0, 1);
  c.aps_target_size = integer("aps_size", 4, 1, 255);
  c.ack_timeout_factor = num("ack_timeout_factor", 4.0, 0, 1e6);
  c.ack_timeout_floor = num("ack_timeout_floor", 1.0, 1e-6, 1e6);
  c.retransmit_limit = integer("retransmit_limit", 3, 0, 1000);
  c.discovery_settle = num("discovery_settle", 0.25, 1e-6, 1e6);
  c.rediscovery_cooldown = num("rediscovery_cooldown", 1.0, 0, 1e6);
  c.weight_decay_period = num("weight_decay_period", 0.0, 0, 1e9);
  c.max_queued_messages = integer("max_queue", 128, 0, 1000000);
  c.drain_grace = num("drain_grace", 5.0, 0, 1e6);

  // Required sweep / protocols / seeds.
  {
    auto s = take("sweep");
    if (!s) throw PlanError("missing required key 'sweep'");
    for (const auto& part : split(*s, ',')) {
      if (part.empty()) continue;
      int v = 0;
      try {
        v = std::stoi(part);
      } catch (const std::exception&) {
        throw bad("sweep", "not an integer: '" + part + "'");
      }
      if (v < 0 || v > c.node_count - 2) {
        throw bad("sweep", "adversary count " + std::to_string(v) +
                               " out of range for " + std::to_string(c.node_count) +
                               " nodes");
      }
      plan.adversary_sweep.push_back(v);
    }
    if (plan.adversary_sweep.empty()) throw bad("sweep", "empty sweep");
    echoed["sweep"] = *s;
  }
  {
    auto s = take("protocols");
    if (!s) throw PlanError("missing required key 'protocols'");
    if (*s == "both") {
      plan.protocols = {Protocol::ApsSmt, Protocol::Nsp};
    } else {
      for (const auto& part : split(*s, ',')) {
        if (part == "APS-SMT") plan.protocols.push_back(Protocol::ApsSmt);
        else if (part == "NSP") plan.protocols.push_back(Protocol::Nsp);
        else throw bad("protocols", "unknown protocol '" + part + "'");
      }
    }
    if (plan.protocols.empty()) throw bad("protocols", "no protocols listed");
    echoed["protocols"] = *s;
  }
  {
    auto s = take("seeds");
    if (!s) throw PlanError("missing required key 'seeds'");
    const auto dots = s->find("..");
    if (dots != std::string::npos) {
      std::uint64_t lo = 0, hi = 0;
      try {
        lo = std::stoull(trim(s->substr(0, dots)));
        hi = std::stoull(trim(s->substr(dots + 2)));
      } catch (const std::exception&) {
        throw bad("seeds", "bad range '" + *s + "'");
      }
      if (hi < lo) throw bad("seeds", "range upper bound below lower bound");
      for (std::uint64_t v = lo; v <= hi; ++v) plan.seeds.push_back(v);
    } else {
      for (const auto& part : split(*s, ',')) {
        if (part.empty()) continue;
        try {
          plan.seeds.push_back(std::stoull(part));
        } catch (const std::exception&) {
          throw bad("seeds", "not an integer: '" + part + "'");
        }
      }
    }
    if (plan.seeds.empty()) throw bad("seeds", "no seeds listed");
    echoed["seeds"] = *s;
  }
  if (auto s = take("out")) {
    plan.output_path = *s;
  }
  echoed["out"] = plan.output_path;

  if (!entries.empty()) {
    const auto& [key, value_line] = *entries.begin();
    throw PlanError("line " + std::to_string(value_line.second) +
                    ": unknown key '" + key + "'");
  }

  plan.echoed = std::move(echoed);
  plan.base.validate();
  return plan;
}

struct CellResult {
  Protocol protocol = Protocol::ApsSmt;
  int adversaries = 0;
  std::uint64_t seed = 0;
  RunStats stats;
};

struct AggregateRow {
  Protocol protocol = Protocol::ApsSmt;
  int adversaries = 0;
  double mean_delivery = 0;
  double stddev_delivery = 0;
  double mean_delay = 0;
  double mean_localizations = 0;
  double mean_discoveries = 0;
  double mean_overhead = 0;
  int runs = 0;
};

struct AggregateResult {
  std::vector<CellResult> cells;
  std::vector<AggregateRow> rows;
  // Percent improvement of APS-SMT mean delivery over NSP, per adversary count;
  // absent when either protocol is missing or NSP delivered nothing.
  std::map<int, double> improvement_pct;
};

namespace plan_detail {

inline void build_aggregates(AggregateResult& result) {
  std::map<std::pair<int, int>, std::vector<double>> delivery;  // (proto,count)
  std::map<std::pair<int, int>, std::vector<const RunStats*>> group;
  for (const auto& cell : result.cells) {
    const auto key = std::make_pair(static_cast<int>(cell.protocol), cell.adversaries);
    delivery[key].push_back(cell.stats.delivery_ratio);
    group[key].push_back(&cell.stats);
  }
  result.rows.clear();
  for (const auto& [key, values] : delivery) {
    AggregateRow row;
    row.protocol = static_cast<Protocol>(key.first);
    row.adversaries = key.second;
    row.runs = static_cast<int>(values.size());
    double sum = 0;
    for (double v : values) sum += v;
    row.mean_delivery = sum / row.runs;
    double var = 0;
    for (double v : values) var += (v - row.mean_delivery) * (v - row.mean_delivery);
    row.stddev_delivery = std::sqrt(var / row.runs);
    double delay = 0, loc = 0, disc = 0, over = 0;
    for (const auto* s : group[key]) {
      delay += s->mean_delay_s;
      loc += static_cast<double>(s->localizations);
      disc += static_cast<double>(s->discoveries);
      over += static_cast<double>(s->overhead_packets);
    }
    row.mean_delay = delay / row.runs;
    row.mean_localizations = loc / row.runs;
    row.mean_discoveries = disc / row.runs;
    row.mean_overhead = over / row.runs;
    result.rows.push_back(row);
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
    if (a.protocol != b.protocol) {
      return std::string(protocol_name(a.protocol)) < protocol_name(b.protocol);
    }
    return a.adversaries < b.adversaries;
  });

  result.improvement_pct.clear();
  std::map<int, double> aps, nsp;
  for (const auto& row : result.rows) {
    (row.protocol == Protocol::ApsSmt ? aps : nsp)[row.adversaries] =
        row.mean_delivery;
  }
  for (const auto& [count, a] : aps) {
    auto it = nsp.find(count);
    if (it != nsp.end() && it->second > 0) {
      result.improvement_pct[count] = (a - it->second) / it->second * 100.0;
    }
  }
}

}  // namespace plan_detail

struct ExecuteOptions {
  int parallel = 1;
  bool record_events = false;
};

inline AggregateResult execute_plan(const ExperimentPlan& plan,
                                    const ExecuteOptions& options = {}) {
  AggregateResult result;
  for (Protocol proto : plan.protocols) {
    for (int count : plan.adversary_sweep) {
      for (std::uint64_t seed : plan.seeds) {
        CellResult cell;
        cell.protocol = proto;
        cell.adversaries = count;
        cell.seed = seed;
        result.cells.push_back(cell);
      }
    }
  }

  auto run_cell = [&](CellResult& cell) {
    ScenarioConfig cfg = plan.base;
    cfg.protocol = cell.protocol;
    cfg.adversary_count = cell.adversaries;
    cfg.seed = cell.seed;
    cfg.record_events = options.record_events;
    cell.stats = run_scenario(cfg);
  };

  const int workers = std::max(1, options.parallel);
  if (workers == 1) {
    for (auto& cell : result.cells) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= result.cells.size()) return;
          run_cell(result.cells[i]);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::sort(result.cells.begin(), result.cells.end(),
            [](const CellResult& a, const CellResult& b) {
              const std::string pa = protocol_name(a.protocol);
              const std::string pb = protocol_name(b.protocol);
              if (pa != pb) return pa < pb;
              if (a.adversaries != b.adversaries) return a.adversaries < b.adversaries;
              return a.seed < b.seed;
            });
  plan_detail::build_aggregates(result);
  return result;
}

inline constexpr const char* kCsvHeader =
    "protocol,adversaries,seed,delivery_ratio,mean_delay_s,localizations,"
    "discoveries,overhead_packets";

inline void write_csv(const AggregateResult& result, const ExperimentPlan& plan,
                      std::ostream& out) {
  for (const auto& [key, value] : plan.echoed) {
    out << "# " << key << "=" << value << "\n";
  }
  out << kCsvHeader << "\n";
  char buf[64];
  auto f6 = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& cell : result.cells) {
    out << protocol_name(cell.protocol) << ',' << cell.adversaries << ','
        << cell.seed << ',' << f6(cell.stats.delivery_ratio) << ','
        << f6(cell.stats.mean_delay_s) << ',' << cell.stats.localizations << ','
        << cell.stats.discoveries << ',' << cell.stats.overhead_packets << "\n";
  }
  for (const auto& row : result.rows) {
    out << protocol_name(row.protocol) << ',' << row.adversaries << ",ALL,"
        << f6(row.mean_delivery) << ',' << f6(row.mean_delay) << ','
        << f6(row.mean_localizations) << ',' << f6(row.mean_discoveries) << ','
        << f6(row.mean_overhead) << "\n";
  }
}

// Rebuild an AggregateResult (raw delivery data only) from a results CSV.
inline AggregateResult load_csv(std::istream& in) {
  AggregateResult result;
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader) {
        throw PlanError("line " + std::to_string(line_no) + ": unexpected CSV header");
      }
      header_seen = true;
      continue;
    }
    const auto parts = plan_detail::split(line, ',');
    if (parts.size() != 8) {
      throw PlanError("line " + std::to_string(line_no) + ": expected 8 columns");
    }
    if (parts[2] == "ALL") continue;  // aggregates are rebuilt below
    CellResult cell;
    if (parts[0] == "APS-SMT") cell.protocol = Protocol::ApsSmt;
    else if (parts[0] == "NSP") cell.protocol = Protocol::Nsp;
    else throw PlanError("line " + std::to_string(line_no) + ": unknown protocol");
    cell.adversaries = std::stoi(parts[1]);
    cell.seed = std::stoull(parts[2]);
    cell.stats.delivery_ratio = std::stod(parts[3]);
    cell.stats.mean_delay_s = std::stod(parts[4]);
    cell.stats.localizations = std::stoull(parts[5]);
    cell.stats.discoveries = std::stoull(parts[6]);
    cell.stats.overhead_packets = std::stoull(parts[7]);
    result.cells.push_back(std::move(cell));
  }
  if (!header_seen) {
    throw PlanError("CSV header not found");
  }
  plan_detail::build_aggregates(result);
  return result;
}

// Human-readable report: one table row per adversary count and the measured
// improvement range, with the fixed reference targets printed informationally.
inline std::string summarize(const AggregateResult& result) {
  std::ostringstream os;
  char buf[256];
  std::map<int, const AggregateRow*> aps, nsp;
  for (const auto& row : result.rows) {
    (row.protocol == Protocol::ApsSmt ? aps : nsp)[row.adversaries] = &row;
  }
  std::set<int> counts;
  for (const auto& row : result.rows) counts.insert(row.adversaries);

  os << "adversaries  APS-SMT delivery (sd)   NSP delivery (sd)     improvement\n";
  for (int count : counts) {
    const AggregateRow* a = aps.count(count) ? aps.at(count) : nullptr;
    const AggregateRow* n = nsp.count(count) ? nsp.at(count) : nullptr;
    std::string imp = "n/a";
    if (auto it = result.improvement_pct.find(count);
        it != result.improvement_pct.end()) {
      std::snprintf(buf, sizeof(buf), "%+.1f%%", it->second);
      imp = buf;
    }
    auto col = [&](const AggregateRow* r) -> std::string {
      if (!r) return "n/a";
      std::snprintf(buf, sizeof(buf), "%.4f (%.4f)", r->mean_delivery,
                    r->stddev_delivery);
      return buf;
    };
    std::snprintf(buf, sizeof(buf), "%11d  %-22s  %-20s  %s\n", count,
                  col(a).c_str(), col(n).c_str(), imp.c_str());
    os << buf;
  }

  if (!result.improvement_pct.empty()) {
    double lo = result.improvement_pct.begin()->second;
    double hi = lo;
    for (const auto& [count, v] : result.improvement_pct) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::snprintf(buf, sizeof(buf),
                  "improvement range: %+.1f%% .. %+.1f%% "
                  "(reference band: +32%% .. +150%%, informational)\n",
                  lo, hi);
    os << buf;
  } else {
    os << "improvement range: n/a (need both protocols)\n";
  }
  if (!aps.empty()) {
    const auto& last = *aps.rbegin();
    std::snprintf(buf, sizeof(buf),
                  "APS-SMT delivery at %d adversaries: %.4f "
                  "(reference target: 0.95, informational)\n",
                  last.first, last.second->mean_delivery);
    os << buf;
  }
  return os.str();
}

}  // namespace apssmt
