#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "apssmt/bytes.hpp"
#include "apssmt/route_discovery.hpp"
#include "apssmt/types.hpp"

namespace apssmt {

// Source-side fault localization for one route. Data packets name probe
// positions that must return authenticated acknowledgements; missing acks feed
// per-interval loss windows, and a window that violates the loss threshold
// registers a fault. Registered faults bisect their interval with a new probe
// until a single link is implicated.

struct ProbeList {
  std::vector<NodeId> route;
  std::vector<int> positions;  // sorted route indices, last one the destination

  static ProbeList fresh(std::vector<NodeId> route_nodes) {
    ProbeList p;
    p.positions = {static_cast<int>(route_nodes.size()) - 1};
    p.route = std::move(route_nodes);
    return p;
  }

  int link_count() const { return static_cast<int>(route.size()) - 1; }

  // Consecutive probe pairs, with the source (index 0) as implicit left edge.
  // Non-overlapping and covering [0, link_count] by construction.
  std::vector<std::pair<int, int>> intervals() const {
    std::vector<std::pair<int, int>> out;
    int prev = 0;
    for (int p : positions) {
      out.emplace_back(prev, p);
      prev = p;
    }
    return out;
  }

  void insert(int position) {
    auto it = std::lower_bound(positions.begin(), positions.end(), position);
    if (it == positions.end() || *it != position) {
      positions.insert(it, position);
    }
  }
};

// Probe list header carried by data packets: count, then ascending indices.
inline Bytes probe_header_bytes(const ProbeList& probes) {
  Bytes out;
  put_u8(out, static_cast<std::uint8_t>(probes.positions.size()));
  for (int p : probes.positions) {
    put_u8(out, static_cast<std::uint8_t>(p));
  }
  return out;
}

// Every probed node must hold a shared key before probing starts; a missing
// entry is a discovery/key-establishment bug, not a runtime condition.
inline void validate_probe_keys(const ProbeList& probes, const ProbeKeySet& keys) {
  for (int p : probes.positions) {
    if (!keys.count(probes.route[static_cast<std::size_t>(p)])) {
      throw std::logic_error("probe node has no shared key");
    }
  }
}

// Ack payload: packet-id (8) | probe-node-id (4) | keyed-hash tag (8).
struct ProbeAck {
  std::uint64_t packet_id = 0;
  NodeId probe = 0;
  std::uint64_t tag = 0;
};

inline Bytes encode_ack(const ProbeAck& a) {
  Bytes out;
  put_u64be(out, a.packet_id);
  put_u32be(out, a.probe);
  put_u64be(out, a.tag);
  return out;
}

inline ProbeAck decode_ack(ByteView wire) {
  if (wire.size() != 20) {
    throw std::invalid_argument("decode_ack: bad ack size");
  }
  return {get_u64be(wire, 0), get_u32be(wire, 8), get_u64be(wire, 12)};
}

struct LossWindowParams {
  int window = 10;             // W, outcomes remembered per interval
  double loss_threshold = 0.2; // fault when losses/W exceeds this
  int min_observations = 5;    // W_min before any fault can register
};

// Ring of the most recent W outcomes for one interval.
class LossWindow {
 public:
  void add(bool lost, int window) {
    outcomes_.push_back(lost);
    while (static_cast<int>(outcomes_.size()) > window) {
      outcomes_.pop_front();
    }
  }

  int size() const { return static_cast<int>(outcomes_.size()); }

  int losses() const {
    return static_cast<int>(std::count(outcomes_.begin(), outcomes_.end(), true));
  }

  bool violates(const LossWindowParams& p) const {
    if (size() < p.min_observations) {
      return false;
    }
    return static_cast<double>(losses()) / p.window > p.loss_threshold;
  }

  void reset() { outcomes_.clear(); }

 private:
  std::deque<bool> outcomes_;
};

enum class IntervalState { Delivered, Lost, Unknown };

struct IntervalOutcome {
  std::pair<int, int> interval;
  IntervalState state = IntervalState::Unknown;
};

struct FaultVerdict {
  Link faulty_link;
  NodeId near_node = 0;
  NodeId far_node = 0;
  // Fault registrations consumed narrowing the search, i.e. the subdivisions
  // performed before the single-link registration that produced the verdict.
  int evidence = 0;
};

class RouteLocalizer {
 public:
  RouteLocalizer(std::vector<NodeId> route, LossWindowParams params)
      : probes_(ProbeList::fresh(std::move(route))), params_(params) {}

  const ProbeList& probes() const { return probes_; }
  const std::vector<int>& probe_positions() const { return probes_.positions; }
  int registrations() const { return registrations_; }
  int subdivisions() const { return subdivisions_; }

  // Attribute one packet's ack record to intervals. An interval is delivered
  // when its far probe acked and lost when its near probe (or the source)
  // acked but its far probe stayed silent; with neither ack the interval sits
  // behind an upstream fault and stays unknown.
  std::vector<IntervalOutcome> classify(const std::set<int>& acked_positions) const {
    std::vector<IntervalOutcome> out;
    for (auto [near, far] : probes_.intervals()) {
      const bool near_ok = near == 0 || acked_positions.count(near) > 0;
      const bool far_ok = acked_positions.count(far) > 0;
      IntervalState state = IntervalState::Unknown;
      if (far_ok) {
        state = IntervalState::Delivered;
      } else if (near_ok) {
        state = IntervalState::Lost;
      }
      out.push_back({{near, far}, state});
    }
    return out;
  }

  // Feed one packet's acks through the windows; at most one fault registers
  // per packet (the earliest violating interval). Returns a verdict once a
  // single-link interval registers.
  std::optional<FaultVerdict> observe(const std::set<int>& acked_positions) {
    for (const auto& o : classify(acked_positions)) {
      if (o.state == IntervalState::Unknown) {
        continue;
      }
      windows_[o.interval].add(o.state == IntervalState::Lost, params_.window);
    }
    for (auto interval : probes_.intervals()) {
      auto& w = windows_[interval];
      if (!w.violates(params_)) {
        continue;
      }
      ++registrations_;
      w.reset();
      return register_fault(interval);
    }
    return std::nullopt;
  }

  // Subdivide a faulted interval, or name the link when it already spans one.
  std::optional<FaultVerdict> register_fault(std::pair<int, int> interval) {
    const auto [near, far] = interval;
    if (far - near == 1) {
      const NodeId u = probes_.route[static_cast<std::size_t>(near)];
      const NodeId v = probes_.route[static_cast<std::size_t>(far)];
      return FaultVerdict{Link::of(u, v), u, v, subdivisions_};
    }
    const int mid = (near + far) / 2;
    probes_.insert(mid);
    windows_.erase(interval);
    windows_[{near, mid}];
    windows_[{mid, far}];
    ++subdivisions_;
    return std::nullopt;
  }

 private:
  ProbeList probes_;
  LossWindowParams params_;
  std::map<std::pair<int, int>, LossWindow> windows_;
  int registrations_ = 0;
  int subdivisions_ = 0;
};

}  // namespace apssmt
