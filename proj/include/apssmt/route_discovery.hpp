#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "apssmt/bytes.hpp"
#include "apssmt/crypto.hpp"
#include "apssmt/path_metrics.hpp"
#include "apssmt/types.hpp"

namespace apssmt {

// Signed flooding route discovery. The source signs a request; every relay
// validates, appends itself with its own hop signature, and rebroadcasts once
// per (source, sequence). The destination answers each distinct arriving copy
// so the source collects multiple candidate routes, and replies travel back
// along the accumulated path.

struct WeightEntry {
  Link link;
  double weight = 1.0;
};

struct RouteRequest {
  NodeId source = 0;
  NodeId destination = 0;
  std::uint64_t sequence = 0;
  std::vector<WeightEntry> weight_list;
  std::vector<NodeId> path;  // accumulated intermediate hops, in order
  Signature source_signature = 0;
  std::vector<Signature> hop_signatures;  // one per path entry
};

struct RouteResponse {
  NodeId source = 0;
  NodeId destination = 0;
  std::uint64_t sequence = 0;
  std::vector<NodeId> path;  // full source..destination route
  Signature destination_signature = 0;
};

inline Bytes request_base_bytes(const RouteRequest& req) {
  Bytes out;
  put_u32be(out, req.source);
  put_u32be(out, req.destination);
  put_u64be(out, req.sequence);
  put_u32be(out, static_cast<std::uint32_t>(req.weight_list.size()));
  for (const auto& e : req.weight_list) {
    put_u32be(out, e.link.a);
    put_u32be(out, e.link.b);
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(e.weight));
    __builtin_memcpy(&bits, &e.weight, sizeof(bits));
    put_u64be(out, bits);
  }
  return out;
}

// Bytes hop h signs: the request core, the previous signature in the chain,
// and the path up to and including hop h.
inline Bytes request_hop_bytes(const RouteRequest& req, std::size_t hop) {
  Bytes out = request_base_bytes(req);
  put_u64be(out, hop == 0 ? req.source_signature : req.hop_signatures[hop - 1]);
  for (std::size_t i = 0; i <= hop; ++i) {
    put_u32be(out, req.path[i]);
  }
  return out;
}

inline Bytes response_bytes(const RouteResponse& resp) {
  Bytes out;
  put_u32be(out, resp.source);
  put_u32be(out, resp.destination);
  put_u64be(out, resp.sequence);
  for (NodeId n : resp.path) {
    put_u32be(out, n);
  }
  return out;
}

using ProbeKeySet = std::map<NodeId, SharedKey>;

struct DiscoveryCounters {
  std::uint64_t duplicate_requests = 0;
  std::uint64_t forged_requests = 0;
  std::uint64_t looped_requests = 0;
  std::uint64_t forged_responses = 0;
  std::uint64_t stale_responses = 0;
};

// Per-node discovery state machine. The transport (simulator) delivers
// packets and broadcasts/forwards whatever these handlers return.
class DiscoveryState {
 public:
  DiscoveryState(NodeId self, const CryptoProvider* crypto)
      : self_(self), crypto_(crypto) {}

  NodeId self() const { return self_; }

  // Source side: begin a discovery round. Bumps the sequence number and
  // clears candidates from prior rounds (they describe a stale topology).
  RouteRequest initiate_request(NodeId destination,
                                std::vector<std::pair<Link, double>> weights) {
    RouteRequest req;
    req.source = self_;
    req.destination = destination;
    req.sequence = ++next_sequence_;
    req.weight_list.reserve(weights.size());
    for (const auto& [link, w] : weights) {
      req.weight_list.push_back({link, w});
    }
    req.source_signature = crypto_->sign(self_, request_base_bytes(req));
    pending_ = req.sequence;
    pending_destination_ = destination;
    has_pending_ = true;
    candidates_.clear();
    return req;
  }

  bool verify_request(const RouteRequest& req) const {
    if (!crypto_->verify(req.source, request_base_bytes(req), req.source_signature)) {
      return false;
    }
    if (req.hop_signatures.size() != req.path.size()) {
      return false;
    }
    for (std::size_t h = 0; h < req.path.size(); ++h) {
      if (!crypto_->verify(req.path[h], request_hop_bytes(req, h),
                           req.hop_signatures[h])) {
        return false;
      }
    }
    return true;
  }

  // Relay side: returns the extended request to rebroadcast, or nullopt when
  // the request must be dropped (duplicate, forged, or looping).
  std::optional<RouteRequest> propagate_request(const RouteRequest& req) {
    if (req.source == self_) {
      return std::nullopt;
    }
    const auto key = std::make_pair(req.source, req.sequence);
    if (seen_.count(key)) {
      ++counters.duplicate_requests;
      return std::nullopt;
    }
    if (!verify_request(req)) {
      ++counters.forged_requests;
      return std::nullopt;
    }
    for (NodeId n : req.path) {
      if (n == self_) {
        ++counters.looped_requests;
        return std::nullopt;
      }
    }
    seen_.insert(key);
    RouteRequest out = req;
    out.path.push_back(self_);
    out.hop_signatures.push_back(
        crypto_->sign(self_, request_hop_bytes(out, out.path.size() - 1)));
    return out;
  }

  // Destination side: answer one arriving copy. Every distinct copy gets its
  // own response; that is what yields multiple candidate routes.
  std::optional<RouteResponse> initiate_response(const RouteRequest& req) {
    if (req.destination != self_) {
      return std::nullopt;
    }
    if (!verify_request(req)) {
      ++counters.forged_requests;
      return std::nullopt;
    }
    RouteResponse resp;
    resp.source = req.source;
    resp.destination = self_;
    resp.sequence = req.sequence;
    resp.path.reserve(req.path.size() + 2);
    resp.path.push_back(req.source);
    resp.path.insert(resp.path.end(), req.path.begin(), req.path.end());
    resp.path.push_back(self_);
    resp.destination_signature = crypto_->sign(self_, response_bytes(resp));
    return resp;
  }

  // Source side: store a verified response as a candidate route.
  bool accept_response(const RouteResponse& resp) {
    if (resp.source != self_ || !has_pending_ || resp.sequence != pending_ ||
        resp.destination != pending_destination_) {
      ++counters.stale_responses;
      return false;
    }
    if (!crypto_->verify(resp.destination, response_bytes(resp),
                         resp.destination_signature)) {
      ++counters.forged_responses;
      return false;
    }
    if (resp.path.size() < 2 || resp.path.front() != self_ ||
        resp.path.back() != resp.destination) {
      ++counters.forged_responses;
      return false;
    }
    Route route{resp.path};
    if (!route.loop_free()) {
      ++counters.forged_responses;
      return false;
    }
    for (const auto& existing : candidates_) {
      if (existing.nodes == resp.path) {
        return false;
      }
    }
    candidates_.push_back(std::move(route));
    return true;
  }

  // Shared keys with every probed node of a route: the intermediates plus the
  // destination. Deterministic per (source, node, scenario seed).
  ProbeKeySet establish_probe_keys(const Route& route) const {
    ProbeKeySet keys;
    for (std::size_t i = 1; i < route.nodes.size(); ++i) {
      keys[route.nodes[i]] = crypto_->shared_key(self_, route.nodes[i]);
    }
    return keys;
  }

  const std::vector<Route>& candidate_routes() const { return candidates_; }
  void clear_candidates() { candidates_.clear(); }

  void remove_candidate(const std::vector<NodeId>& nodes) {
    for (auto it = candidates_.begin(); it != candidates_.end(); ++it) {
      if (it->nodes == nodes) {
        candidates_.erase(it);
        return;
      }
    }
  }
  std::uint64_t pending_sequence() const { return pending_; }
  bool has_pending() const { return has_pending_; }

  DiscoveryCounters counters;

 private:
  NodeId self_;
  const CryptoProvider* crypto_;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t pending_ = 0;
  NodeId pending_destination_ = 0;
  bool has_pending_ = false;
  std::set<std::pair<NodeId, std::uint64_t>> seen_;
  std::vector<Route> candidates_;
};

}  // namespace apssmt
