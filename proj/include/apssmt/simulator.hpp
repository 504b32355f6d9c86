#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "apssmt/aps_selection.hpp"
#include "apssmt/crypto.hpp"
#include "apssmt/dispersal.hpp"
#include "apssmt/fault_localizer.hpp"
#include "apssmt/mobility.hpp"
#include "apssmt/path_metrics.hpp"
#include "apssmt/route_discovery.hpp"
#include "apssmt/types.hpp"

namespace apssmt {

// Deterministic discrete-event simulator: unit-disk radios over a random
// waypoint field, fixed per-hop latency, independent Bernoulli queue loss,
// honest nodes running the discovery/probing protocol, and Byzantine
// adversaries. Identical (config, seed) pairs produce bit-identical runs.

enum class Protocol { ApsSmt, Nsp };

inline const char* protocol_name(Protocol p) {
  return p == Protocol::ApsSmt ? "APS-SMT" : "NSP";
}

enum class AdversaryModel { None, BlackHole, Wormhole, Delay };

inline const char* adversary_model_name(AdversaryModel m) {
  switch (m) {
    case AdversaryModel::None: return "none";
    case AdversaryModel::BlackHole: return "black-hole";
    case AdversaryModel::Wormhole: return "wormhole";
    case AdversaryModel::Delay: return "delay";
  }
  return "none";
}

struct TrafficConfig {
  NodeId source = 0;
  NodeId destination = 1;
  int packet_size = 256;   // bytes per application message
  double send_rate = 4.0;  // messages/s
  double duration = 100.0; // s of application traffic
};

struct ScenarioConfig {
  double area_width = 500.0;
  double area_height = 500.0;
  int node_count = 50;
  double reception_range = 150.0;
  MobilityParams mobility;
  double mobility_step = 0.5;

  int adversary_count = 0;
  AdversaryModel adversary_model = AdversaryModel::None;
  std::vector<std::pair<NodeId, NodeId>> wormhole_pairs;  // explicit fixture pairs
  double delay_attack_seconds = 2.0;

  std::vector<Vec2> fixed_positions;  // fixture override; empty = uniform random

  TrafficConfig traffic;
  Protocol protocol = Protocol::ApsSmt;
  std::uint64_t seed = 1;

  double per_hop_latency = 0.005;
  double queue_loss_prob = 0.01;

  LossWindowParams probing;
  TrustParams trust;
  AnomalyWeights anomaly_weights;
  double penalty_factor = 2.0;
  double rating_penalty = 0.5;
  double rating_reward = 0.05;
  int aps_target_size = 4;
  double ack_timeout_factor = 4.0;
  double ack_timeout_floor = 1.0;
  int retransmit_limit = 3;
  double discovery_settle = 0.25;
  double rediscovery_cooldown = 1.0;
  double weight_decay_period = 0.0;  // 0 disables decay
  int max_queued_messages = 128;
  double drain_grace = 5.0;  // s after traffic stops before the run is cut

  bool record_events = false;

  void validate() const {
    auto fail = [](const std::string& what) {
      throw std::invalid_argument("scenario config: " + what);
    };
    if (node_count < 2) fail("node_count must be at least 2");
    if (area_width <= 0 || area_height <= 0) fail("area must be positive");
    if (reception_range <= 0) fail("reception_range must be positive");
    if (traffic.source >= static_cast<NodeId>(node_count) ||
        traffic.destination >= static_cast<NodeId>(node_count)) {
      fail("traffic endpoints must name existing nodes");
    }
    if (traffic.source == traffic.destination) fail("source equals destination");
    if (traffic.packet_size < 1) fail("packet_size must be at least 1");
    if (traffic.send_rate <= 0) fail("send_rate must be positive");
    if (traffic.duration <= 0) fail("duration must be positive");
    if (adversary_count < 0 || adversary_count > node_count - 2) {
      fail("adversary_count must leave the traffic endpoints honest");
    }
    if (queue_loss_prob < 0 || queue_loss_prob > 1) fail("queue_loss_prob outside [0,1]");
    if (per_hop_latency <= 0) fail("per_hop_latency must be positive");
    if (mobility_step <= 0) fail("mobility_step must be positive");
    if (mobility.speed_min < 0 || mobility.speed_max < mobility.speed_min) {
      fail("speed range invalid");
    }
    if (aps_target_size < 1) fail("aps_target_size must be at least 1");
    if (retransmit_limit < 0) fail("retransmit_limit must be non-negative");
    const double wsum =
        anomaly_weights.delay + anomaly_weights.frequency + anomaly_weights.loss;
    if (wsum < 0.999 || wsum > 1.001) fail("anomaly weights must sum to 1");
    if (!fixed_positions.empty() &&
        static_cast<int>(fixed_positions.size()) != node_count) {
      fail("fixed_positions must cover every node");
    }
    for (auto [a, b] : wormhole_pairs) {
      if (a >= static_cast<NodeId>(node_count) || b >= static_cast<NodeId>(node_count) ||
          a == b) {
        fail("wormhole pair invalid");
      }
      if (a == traffic.source || a == traffic.destination || b == traffic.source ||
          b == traffic.destination) {
        fail("wormhole pair may not include the traffic endpoints");
      }
    }
  }
};

struct MessageOutcome {
  std::uint64_t id = 0;
  double send_time = 0;
  double delivery_time = -1;  // < 0 when undelivered
  bool delivered = false;
};

struct LocalizationEvent {
  double time = 0;
  Link link;
  int evidence = 0;       // registrations consumed narrowing the search
  int registrations = 0;  // total registrations of the localizer at verdict
};

struct RunStats {
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_delivered = 0;
  double delivery_ratio = 0;
  double mean_delay_s = 0;
  std::uint64_t localizations = 0;
  std::uint64_t discoveries = 0;
  std::uint64_t overhead_packets = 0;

  // Transmission legs. delivered excludes packets eaten by an adversary on
  // arrival, so sent == delivered + adversary + loss + disconnect + in-flight.
  std::uint64_t transmissions = 0;
  std::uint64_t delivered_transmissions = 0;
  std::uint64_t dropped_by_loss = 0;
  std::uint64_t dropped_by_disconnect = 0;
  std::uint64_t dropped_by_adversary = 0;
  std::uint64_t in_flight_at_end = 0;
  std::uint64_t tunneled_forwards = 0;

  std::uint64_t forged_acks = 0;
  std::uint64_t stray_acks = 0;
  std::uint64_t forged_request_drops = 0;
  std::uint64_t duplicate_request_drops = 0;
  std::uint64_t aps_reselections = 0;

  std::vector<MessageOutcome> message_log;
  std::vector<LocalizationEvent> localization_log;
  std::vector<MetricsSnapshot> metrics_log;
  std::vector<std::vector<NodeId>> first_aps;  // APS-SMT initial selection
  std::vector<NodeId> first_route;             // NSP initial route
  std::vector<std::string> event_log;

  // Canonical text form; equal strings mean equal runs.
  std::string canonical_string() const {
    std::ostringstream os;
    char buf[64];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << buf << '\n';
    };
    os << messages_sent << ' ' << messages_delivered << ' ' << localizations << ' '
       << discoveries << ' ' << overhead_packets << '\n';
    os << transmissions << ' ' << delivered_transmissions << ' ' << dropped_by_loss
       << ' ' << dropped_by_disconnect << ' ' << dropped_by_adversary << ' '
       << in_flight_at_end << ' ' << tunneled_forwards << '\n';
    os << forged_acks << ' ' << stray_acks << ' ' << forged_request_drops << ' '
       << duplicate_request_drops << ' ' << aps_reselections << '\n';
    put(delivery_ratio);
    put(mean_delay_s);
    for (const auto& m : message_log) {
      os << m.id << ' ' << m.delivered << ' ';
      put(m.delivery_time);
    }
    for (const auto& l : localization_log) {
      os << l.link.a << '-' << l.link.b << ' ' << l.evidence << ' '
         << l.registrations << ' ';
      put(l.time);
    }
    for (const auto& line : event_log) {
      os << line << '\n';
    }
    return os.str();
  }
};

namespace sim_detail {

struct RequestEnvelope {
  RouteRequest request;
  double request_sent = 0;
};

struct ResponseEnvelope {
  RouteResponse response;
  double request_sent = 0;
  double request_received = 0;
  double reply_sent = 0;
  int hop = 0;  // index in path of the node this copy is addressed to
};

struct DataPacket {
  std::uint64_t packet_id = 0;
  std::uint64_t message_id = 0;
  std::vector<NodeId> route;
  std::vector<int> probe_positions;  // empty under NSP
  MessageShare share;
  int hop = 1;  // index in route of the node this copy is addressed to
  bool retransmission = false;
};

struct AckPacket {
  ProbeAck ack;
  std::vector<NodeId> reverse_path;  // probe .. source
  int hop = 1;
};

using Packet =
    std::variant<RequestEnvelope, ResponseEnvelope, DataPacket, AckPacket>;

inline const char* packet_kind(const Packet& p) {
  switch (p.index()) {
    case 0: return "request";
    case 1: return "response";
    case 2: return "data";
    case 3: return "ack";
  }
  return "?";
}

inline std::uint64_t packet_trace_id(const Packet& p) {
  if (const auto* r = std::get_if<RequestEnvelope>(&p)) return r->request.sequence;
  if (const auto* r = std::get_if<ResponseEnvelope>(&p)) return r->response.sequence;
  if (const auto* d = std::get_if<DataPacket>(&p)) return d->packet_id;
  return std::get<AckPacket>(p).ack.packet_id;
}

struct Event {
  enum class Kind { Delivery, Tunnel, Mobility, AppSend, AckTimeout, Settle, Decay };
  double time = 0;
  std::uint64_t order = 0;
  Kind kind = Kind::Mobility;
  NodeId from = 0;
  NodeId to = 0;
  std::uint64_t id = 0;  // message id, packet id, or settle sequence
  Packet packet;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.order > b.order;
  }
};

}  // namespace sim_detail

class Simulator {
 public:
  explicit Simulator(ScenarioConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        crypto_(cfg_.seed),
        mobility_rng_(hash_combine(cfg_.seed, 0xb0b1u)),
        loss_rng_(hash_combine(cfg_.seed, 0xcafeu)),
        mobility_(cfg_.node_count, cfg_.area_width, cfg_.area_height, cfg_.mobility,
                  mobility_rng_),
        weights_(cfg_.trust.initial) {
    if (!cfg_.fixed_positions.empty()) {
      for (std::size_t i = 0; i < mobility_.nodes().size(); ++i) {
        mobility_.nodes()[i].position = cfg_.fixed_positions[i];
        mobility_.nodes()[i].waypoint = cfg_.fixed_positions[i];
      }
    }
    place_adversaries();
    discovery_.reserve(static_cast<std::size_t>(cfg_.node_count));
    for (int i = 0; i < cfg_.node_count; ++i) {
      discovery_.emplace_back(static_cast<NodeId>(i), &crypto_);
    }
  }

  const ScenarioConfig& config() const { return cfg_; }
  const std::vector<NodeId>& adversaries() const { return adversaries_; }
  const std::map<NodeId, NodeId>& wormhole_peers() const { return wormhole_peer_; }
  const DiscoveryState& discovery_state(NodeId node) const {
    return discovery_[node];
  }
  const LinkWeightTable& link_weights() const { return weights_; }

  std::vector<Vec2> positions() const {
    std::vector<Vec2> out;
    out.reserve(mobility_.nodes().size());
    for (const auto& n : mobility_.nodes()) {
      out.push_back(n.position);
    }
    return out;
  }

  bool connected(NodeId u, NodeId v) const {
    return u != v &&
           distance(mobility_.position(u), mobility_.position(v)) <=
               cfg_.reception_range;
  }

  std::vector<NodeId> neighbors(NodeId u) const {
    std::vector<NodeId> out;
    for (int v = 0; v < cfg_.node_count; ++v) {
      if (connected(u, static_cast<NodeId>(v))) {
        out.push_back(static_cast<NodeId>(v));
      }
    }
    return out;
  }

  RunStats run() {
    using sim_detail::Event;
    if (ran_) {
      throw std::logic_error("Simulator::run is single-shot; build a new instance");
    }
    ran_ = true;
    const double end_time = cfg_.traffic.duration + cfg_.drain_grace;

    schedule(cfg_.mobility_step, Event::Kind::Mobility);
    const std::uint64_t message_count = static_cast<std::uint64_t>(
        cfg_.traffic.duration * cfg_.traffic.send_rate);
    for (std::uint64_t k = 0; k < message_count; ++k) {
      Event e;
      e.kind = Event::Kind::AppSend;
      e.id = k + 1;
      push_at(static_cast<double>(k) / cfg_.traffic.send_rate, e);
    }
    if (cfg_.weight_decay_period > 0) {
      schedule(cfg_.weight_decay_period, Event::Kind::Decay);
    }

    while (!queue_.empty() && queue_.top().time <= end_time) {
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      dispatch(ev);
    }
    now_ = end_time;

    while (!queue_.empty()) {
      if (queue_.top().kind == Event::Kind::Delivery) {
        ++stats_.in_flight_at_end;
      }
      queue_.pop();
    }
    finalize_stats();
    return stats_;
  }

 private:
  using Event = sim_detail::Event;
  using Packet = sim_detail::Packet;
  using RequestEnvelope = sim_detail::RequestEnvelope;
  using ResponseEnvelope = sim_detail::ResponseEnvelope;
  using DataPacket = sim_detail::DataPacket;
  using AckPacket = sim_detail::AckPacket;

  // ---- source-side per-route state -------------------------------------

  struct WindowRecord {
    double sent_time = 0;
    bool delivered = false;
    std::optional<double> trip;
  };

  struct ActiveRoute {
    std::vector<NodeId> nodes;
    RouteLocalizer localizer;
    ProbeKeySet keys;
    double reference = 0;  // discovery-derived reference time
    TrafficTable table;
    std::vector<WindowRecord> window;
    int consecutive_failures = 0;
  };

  struct PendingPacket {
    std::vector<NodeId> route;
    std::vector<int> probe_positions;
    std::uint64_t message_id = 0;
    MessageShare share;
    double sent_time = 0;
    std::set<int> acked;
  };

  struct MessageState {
    double send_time = 0;
    Bytes payload;
    bool delivered = false;
    std::size_t log_index = 0;
    std::map<int, int> share_retransmits;
    std::set<std::vector<NodeId>> failed_routes;  // routes that lost a share
  };

  // ---- setup ------------------------------------------------------------

  void place_adversaries() {
    std::set<NodeId> picked;
    for (auto [a, b] : cfg_.wormhole_pairs) {
      picked.insert(a);
      picked.insert(b);
      wormhole_peer_[a] = b;
      wormhole_peer_[b] = a;
    }
    if (cfg_.adversary_count > 0 && cfg_.adversary_model != AdversaryModel::None) {
      std::mt19937_64 placement_rng(hash_combine(cfg_.seed, 0xa11ce5u));
      std::vector<NodeId> pool;
      for (int i = 0; i < cfg_.node_count; ++i) {
        const auto id = static_cast<NodeId>(i);
        if (id != cfg_.traffic.source && id != cfg_.traffic.destination &&
            !picked.count(id)) {
          pool.push_back(id);
        }
      }
      std::shuffle(pool.begin(), pool.end(), placement_rng);
      for (int i = 0; i < cfg_.adversary_count && i < static_cast<int>(pool.size());
           ++i) {
        picked.insert(pool[static_cast<std::size_t>(i)]);
      }
      if (cfg_.adversary_model == AdversaryModel::Wormhole) {
        // Pair placed adversaries in draw order; an odd one out black-holes.
        std::vector<NodeId> placed(pool.begin(),
                                   pool.begin() + std::min<std::size_t>(
                                                      pool.size(),
                                                      static_cast<std::size_t>(
                                                          cfg_.adversary_count)));
        for (std::size_t i = 0; i + 1 < placed.size(); i += 2) {
          wormhole_peer_[placed[i]] = placed[i + 1];
          wormhole_peer_[placed[i + 1]] = placed[i];
        }
      }
    }
    adversaries_.assign(picked.begin(), picked.end());
    adversary_set_ = std::move(picked);
  }

  bool is_adversary(NodeId n) const { return adversary_set_.count(n) > 0; }

  bool eats_data(NodeId n) const {
    if (!is_adversary(n)) return false;
    if (wormhole_peer_.count(n)) return true;  // wormhole endpoints drop data
    return cfg_.adversary_model == AdversaryModel::BlackHole ||
           cfg_.adversary_model == AdversaryModel::Wormhole;
  }

  bool delays_data(NodeId n) const {
    return is_adversary(n) && cfg_.adversary_model == AdversaryModel::Delay &&
           !wormhole_peer_.count(n);
  }

  // ---- event plumbing ---------------------------------------------------

  void push_at(double t, Event e) {
    e.time = t;
    e.order = next_order_++;
    queue_.push(std::move(e));
  }

  void schedule(double delay, Event::Kind kind) {
    Event e;
    e.kind = kind;
    push_at(now_ + delay, e);
  }

  void log_event(const char* kind, NodeId from, NodeId to, std::uint64_t id,
                 const char* disposition) {
    if (!cfg_.record_events) return;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.6f %s %u %u %llu %s", now_, kind, from, to,
                  static_cast<unsigned long long>(id), disposition);
    stats_.event_log.emplace_back(buf);
  }

  // One radio leg. Loss is drawn at send; connectivity is re-checked at
  // delivery so links breaking mid-flight drop the packet.
  void transmit(NodeId from, NodeId to, Packet packet, bool overhead_leg) {
    ++stats_.transmissions;
    if (overhead_leg) ++stats_.overhead_packets;
    const char* kind = sim_detail::packet_kind(packet);
    const std::uint64_t trace = sim_detail::packet_trace_id(packet);
    if (!connected(from, to)) {
      ++stats_.dropped_by_disconnect;
      log_event(kind, from, to, trace, "dropped-disconnect");
      return;
    }
    if (cfg_.queue_loss_prob > 0 &&
        std::uniform_real_distribution<double>(0.0, 1.0)(loss_rng_) <
            cfg_.queue_loss_prob) {
      ++stats_.dropped_by_loss;
      log_event(kind, from, to, trace, "dropped-loss");
      return;
    }
    double latency = cfg_.per_hop_latency;
    if (delays_data(from) &&
        (std::holds_alternative<DataPacket>(packet) ||
         std::holds_alternative<AckPacket>(packet))) {
      latency += cfg_.delay_attack_seconds;
    }
    Event e;
    e.kind = Event::Kind::Delivery;
    e.from = from;
    e.to = to;
    e.packet = std::move(packet);
    push_at(now_ + latency, e);
  }

  void broadcast(NodeId from, const Packet& packet, bool overhead_leg) {
    for (NodeId to : neighbors(from)) {
      transmit(from, to, packet, overhead_leg);
    }
  }

  void tunnel(NodeId from, NodeId to, Packet packet) {
    ++stats_.tunneled_forwards;
    log_event(sim_detail::packet_kind(packet), from, to,
              sim_detail::packet_trace_id(packet), "tunneled");
    Event e;
    e.kind = Event::Kind::Tunnel;
    e.from = from;
    e.to = to;
    e.packet = std::move(packet);
    push_at(now_, e);
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case Event::Kind::Mobility: {
        mobility_.advance(now_, cfg_.mobility_step, mobility_rng_);
        if (now_ + cfg_.mobility_step <=
            cfg_.traffic.duration + cfg_.drain_grace) {
          schedule(cfg_.mobility_step, Event::Kind::Mobility);
        }
        return;
      }
      case Event::Kind::Decay: {
        weights_.decay_excess();
        if (cfg_.weight_decay_period > 0) {
          schedule(cfg_.weight_decay_period, Event::Kind::Decay);
        }
        return;
      }
      case Event::Kind::AppSend:
        handle_app_send(ev.id);
        return;
      case Event::Kind::AckTimeout:
        resolve_packet(ev.id);
        return;
      case Event::Kind::Settle:
        handle_settle(ev.id);
        return;
      case Event::Kind::Tunnel:
        handle_packet(ev.to, ev.packet, /*via_tunnel=*/true);
        return;
      case Event::Kind::Delivery: {
        const char* kind = sim_detail::packet_kind(ev.packet);
        const std::uint64_t trace = sim_detail::packet_trace_id(ev.packet);
        if (!connected(ev.from, ev.to)) {
          ++stats_.dropped_by_disconnect;
          log_event(kind, ev.from, ev.to, trace, "dropped-disconnect");
          return;
        }
        const bool data_like = std::holds_alternative<DataPacket>(ev.packet) ||
                               std::holds_alternative<AckPacket>(ev.packet);
        if (data_like && eats_data(ev.to)) {
          ++stats_.dropped_by_adversary;
          log_event(kind, ev.from, ev.to, trace, "dropped-adversary");
          return;
        }
        ++stats_.delivered_transmissions;
        log_event(kind, ev.from, ev.to, trace, "delivered");
        handle_packet(ev.to, ev.packet, /*via_tunnel=*/false);
        return;
      }
    }
  }

  void handle_packet(NodeId node, const Packet& packet, bool via_tunnel) {
    if (const auto* req = std::get_if<RequestEnvelope>(&packet)) {
      handle_request(node, *req, via_tunnel);
    } else if (const auto* resp = std::get_if<ResponseEnvelope>(&packet)) {
      handle_response(node, *resp);
    } else if (const auto* data = std::get_if<DataPacket>(&packet)) {
      handle_data(node, *data);
    } else {
      handle_ack(node, std::get<AckPacket>(packet));
    }
  }

  // ---- discovery --------------------------------------------------------

  void handle_request(NodeId node, const RequestEnvelope& env, bool via_tunnel) {
    const RouteRequest& req = env.request;
    if (node == req.source) return;
    if (node == req.destination) {
      auto resp = discovery_[node].initiate_response(req);
      if (!resp) return;
      ResponseEnvelope renv;
      renv.response = std::move(*resp);
      renv.request_sent = env.request_sent;
      renv.request_received = now_;
      renv.reply_sent = now_;
      renv.hop = static_cast<int>(renv.response.path.size()) - 2;
      forward_response(node, std::move(renv));
      return;
    }
    auto out = discovery_[node].propagate_request(req);
    if (!out) return;
    RequestEnvelope oenv{std::move(*out), env.request_sent};
    auto peer = wormhole_peer_.find(node);
    if (peer != wormhole_peer_.end() && !via_tunnel) {
      // Discovery traffic crosses the out-of-band channel and re-emerges at
      // the peer, which makes the pair look adjacent.
      tunnel(node, peer->second, Packet{std::move(oenv)});
    } else {
      broadcast(node, Packet{std::move(oenv)}, /*overhead=*/true);
    }
  }

  void forward_response(NodeId from, ResponseEnvelope renv) {
    const NodeId to = renv.response.path[static_cast<std::size_t>(renv.hop)];
    auto peer = wormhole_peer_.find(from);
    if (peer != wormhole_peer_.end() && peer->second == to) {
      tunnel(from, to, Packet{std::move(renv)});
    } else {
      transmit(from, to, Packet{std::move(renv)}, /*overhead=*/true);
    }
  }

  void handle_response(NodeId node, const ResponseEnvelope& renv) {
    if (renv.hop == 0) {
      if (node != cfg_.traffic.source) return;
      if (discovery_[node].accept_response(renv.response)) {
        stamps_[renv.response.path] =
            DiscoveryTimestamps{renv.request_sent, renv.request_received,
                                renv.reply_sent, now_};
        if (cfg_.protocol == Protocol::ApsSmt && aps_.empty()) {
          reselect_aps();
        }
      }
      return;
    }
    ResponseEnvelope next = renv;
    next.hop -= 1;
    forward_response(node, std::move(next));
  }

  void maybe_start_discovery() {
    if (now_ - last_discovery_ < cfg_.rediscovery_cooldown && discoveries_done_ > 0) {
      return;
    }
    last_discovery_ = now_;
    ++discoveries_done_;
    ++stats_.discoveries;
    auto req = discovery_[cfg_.traffic.source].initiate_request(
        cfg_.traffic.destination, weights_.entries());
    const std::uint64_t seq = req.sequence;
    RequestEnvelope env{std::move(req), now_};
    broadcast(cfg_.traffic.source, Packet{std::move(env)}, /*overhead=*/true);
    Event e;
    e.kind = Event::Kind::Settle;
    e.id = seq;
    push_at(now_ + cfg_.discovery_settle, e);
  }

  void handle_settle(std::uint64_t sequence) {
    if (discovery_[cfg_.traffic.source].pending_sequence() != sequence) return;
    if (cfg_.protocol == Protocol::ApsSmt) {
      reselect_aps();
    } else {
      nsp_select_route();
    }
  }

  // ---- application traffic ----------------------------------------------

  Bytes message_payload(std::uint64_t message_id) const {
    Bytes out(static_cast<std::size_t>(cfg_.traffic.packet_size));
    const std::uint64_t base = hash_combine(cfg_.seed, message_id);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<std::uint8_t>(mix64(base + i));
    }
    return out;
  }

  void handle_app_send(std::uint64_t message_id) {
    ++stats_.messages_sent;
    MessageState ms;
    ms.send_time = now_;
    ms.payload = message_payload(message_id);
    ms.log_index = stats_.message_log.size();
    stats_.message_log.push_back({message_id, now_, -1.0, false});
    messages_.emplace(message_id, std::move(ms));
    log_event("app-send", cfg_.traffic.source, cfg_.traffic.destination, message_id,
              "queued");
    if (cfg_.protocol == Protocol::ApsSmt) {
      aps_send(message_id);
    } else {
      nsp_send(message_id);
    }
  }

  void enqueue_message(std::uint64_t message_id) {
    if (static_cast<int>(pending_messages_.size()) < cfg_.max_queued_messages) {
      pending_messages_.push_back(message_id);
    }
  }

  // ---- APS-SMT sender ----------------------------------------------------

  double trust_of(const std::vector<NodeId>& route) const {
    auto it = trust_.find(route);
    return it == trust_.end() ? cfg_.trust.initial : it->second;
  }

  ActiveRoute* find_route(const std::vector<NodeId>& nodes) {
    for (auto& ar : aps_) {
      if (ar.nodes == nodes) return &ar;
    }
    return nullptr;
  }

  void aps_send(std::uint64_t message_id) {
    if (aps_.empty()) {
      enqueue_message(message_id);
      maybe_start_discovery();
      return;
    }
    send_message_shares(message_id);
    if (static_cast<int>(aps_.size()) < (cfg_.aps_target_size + 1) / 2) {
      maybe_start_discovery();
    }
  }

  void send_message_shares(std::uint64_t message_id) {
    auto& ms = messages_.at(message_id);
    ActivePathSet view;
    view.target_size = cfg_.aps_target_size;
    for (const auto& ar : aps_) {
      view.routes.push_back(Route{ar.nodes, trust_of(ar.nodes)});
    }
    const DispersalConfig dc = choose_dispersion(view);
    auto shares = disperse(ms.payload, dc, message_id);
    for (std::size_t i = 0; i < shares.size(); ++i) {
      send_share(aps_[i], std::move(shares[i]), message_id, /*retransmit=*/false);
    }
  }

  void send_share(ActiveRoute& ar, MessageShare share, std::uint64_t message_id,
                  bool retransmit) {
    validate_probe_keys(ar.localizer.probes(), ar.keys);
    const std::uint64_t pid = ++next_packet_id_;
    DataPacket p;
    p.packet_id = pid;
    p.message_id = message_id;
    p.route = ar.nodes;
    p.probe_positions = ar.localizer.probe_positions();
    p.share = std::move(share);
    p.hop = 1;
    p.retransmission = retransmit;

    ar.table.record_sent(pid, now_);
    PendingPacket pp;
    pp.route = ar.nodes;
    pp.probe_positions = p.probe_positions;
    pp.message_id = message_id;
    pp.share = p.share;
    pp.sent_time = now_;
    pending_packets_.emplace(pid, std::move(pp));

    Event e;
    e.kind = Event::Kind::AckTimeout;
    e.id = pid;
    push_at(now_ + ack_timeout(ar), e);

    transmit(cfg_.traffic.source, ar.nodes[1], Packet{std::move(p)}, retransmit);
  }

  double ack_timeout(const ActiveRoute& ar) const {
    return std::max(cfg_.ack_timeout_floor, cfg_.ack_timeout_factor * ar.reference);
  }

  void handle_data(NodeId node, const DataPacket& p) {
    const int i = p.hop;
    const bool at_destination = i == static_cast<int>(p.route.size()) - 1;
    if (!p.probe_positions.empty()) {
      const bool probed = std::binary_search(p.probe_positions.begin(),
                                             p.probe_positions.end(), i);
      if (probed) {
        send_probe_ack(node, p);
      }
    }
    if (at_destination) {
      destination_receive(p);
      return;
    }
    DataPacket next = p;
    next.hop = i + 1;
    transmit(node, p.route[static_cast<std::size_t>(i) + 1], Packet{std::move(next)},
             p.retransmission);
  }

  void send_probe_ack(NodeId node, const DataPacket& p) {
    const SharedKey key = crypto_.shared_key(p.route.front(), node);
    AckPacket a;
    a.ack = ProbeAck{p.packet_id, node, crypto_.ack_tag(key, p.packet_id, node)};
    a.reverse_path.assign(p.route.begin(), p.route.begin() + p.hop + 1);
    std::reverse(a.reverse_path.begin(), a.reverse_path.end());
    a.hop = 1;
    const NodeId next = a.reverse_path[1];
    transmit(node, next, Packet{std::move(a)}, /*overhead=*/true);
  }

  void handle_ack(NodeId node, const AckPacket& a) {
    const bool at_source = a.hop == static_cast<int>(a.reverse_path.size()) - 1;
    if (!at_source) {
      AckPacket next = a;
      next.hop += 1;
      transmit(node, a.reverse_path[static_cast<std::size_t>(a.hop) + 1],
               Packet{std::move(next)}, /*overhead=*/true);
      return;
    }
    if (node != cfg_.traffic.source) return;
    auto it = pending_packets_.find(a.ack.packet_id);
    if (it == pending_packets_.end()) return;  // resolved already; late ack
    PendingPacket& pp = it->second;
    int position = -1;
    for (std::size_t i = 0; i < pp.route.size(); ++i) {
      if (pp.route[i] == a.ack.probe) {
        position = static_cast<int>(i);
        break;
      }
    }
    if (position < 0 || !std::binary_search(pp.probe_positions.begin(),
                                            pp.probe_positions.end(), position)) {
      ++stats_.stray_acks;
      return;
    }
    const SharedKey key = crypto_.shared_key(cfg_.traffic.source, a.ack.probe);
    if (crypto_.ack_tag(key, a.ack.packet_id, a.ack.probe) != a.ack.tag) {
      ++stats_.forged_acks;
      return;
    }
    pp.acked.insert(position);
  }

  void destination_receive(const DataPacket& p) {
    if (auto* ar = find_route(p.route)) {
      ar->table.record_received(p.packet_id, now_);
    }
    if (dest_done_.count(p.message_id)) return;
    if (dest_shares_.size() > 4096 && !dest_shares_.count(p.message_id)) {
      dest_shares_.erase(dest_shares_.begin());  // shed the oldest partial set
    }
    auto& collected = dest_shares_[p.message_id];
    collected.emplace(static_cast<int>(p.share.index), p.share);
    if (static_cast<int>(collected.size()) < static_cast<int>(p.share.threshold)) {
      return;
    }
    std::vector<MessageShare> shares;
    shares.reserve(collected.size());
    for (const auto& [idx, s] : collected) {
      shares.push_back(s);
    }
    Bytes decoded;
    try {
      decoded = reconstruct(shares);
    } catch (const DispersalError&) {
      return;
    }
    auto mit = messages_.find(p.message_id);
    if (mit == messages_.end() || decoded != mit->second.payload) return;
    mit->second.delivered = true;
    dest_done_.insert(p.message_id);
    dest_shares_.erase(p.message_id);
    ++stats_.messages_delivered;
    delay_sum_ += now_ - mit->second.send_time;
    auto& out = stats_.message_log[mit->second.log_index];
    out.delivered = true;
    out.delivery_time = now_;
  }

  // ---- ack timeout, localization, trust ----------------------------------

  void resolve_packet(std::uint64_t packet_id) {
    auto it = pending_packets_.find(packet_id);
    if (it == pending_packets_.end()) return;
    PendingPacket pp = std::move(it->second);
    pending_packets_.erase(it);

    const int dest_position = static_cast<int>(pp.route.size()) - 1;
    const bool dest_ok = pp.acked.count(dest_position) > 0;

    if (ActiveRoute* ar = find_route(pp.route)) {
      auto verdict = ar->localizer.observe(pp.acked);

      WindowRecord rec;
      rec.sent_time = pp.sent_time;
      rec.delivered = dest_ok;
      if (dest_ok) {
        if (const auto* tr = ar->table.find(packet_id); tr && tr->received_time) {
          rec.trip = trip_time(tr->sent_time, *tr->received_time);
        }
      }
      ar->window.push_back(rec);
      ar->consecutive_failures = dest_ok ? 0 : ar->consecutive_failures + 1;

      const std::vector<NodeId> route_key = pp.route;
      if (verdict) {
        const int regs = ar->localizer.registrations();
        handle_verdict(route_key, *verdict, regs);
      } else if (static_cast<int>(ar->window.size()) >=
                 cfg_.trust.window_packets) {
        evaluate_window(route_key);
      }
    }

    auto mit = messages_.find(pp.message_id);
    if (mit != messages_.end() && !dest_ok) {
      mit->second.failed_routes.insert(pp.route);
      if (!mit->second.delivered && !aps_.empty()) {
        int& used = mit->second.share_retransmits[static_cast<int>(pp.share.index)];
        if (used < cfg_.retransmit_limit) {
          ++used;
          ActiveRoute& target = pick_retransmit_route(mit->second.failed_routes);
          send_share(target, pp.share, pp.message_id, /*retransmit=*/true);
        }
      }
    }
  }

  // Best-rated route that has not yet lost a share of this message; the
  // rating carries the long-term node knowledge, consecutive failures the
  // short-term link state. Falls back to ignoring the avoid set.
  ActiveRoute& pick_retransmit_route(
      const std::set<std::vector<NodeId>>& avoid) {
    auto better = [&](std::size_t a, std::size_t b) {
      const bool dead_a = aps_[a].consecutive_failures >= 2;
      const bool dead_b = aps_[b].consecutive_failures >= 2;
      if (dead_a != dead_b) return !dead_a;
      const double ra = rate_route(Route{aps_[a].nodes, 0.5}, weights_);
      const double rb = rate_route(Route{aps_[b].nodes, 0.5}, weights_);
      if (ra != rb) return ra > rb;
      if (aps_[a].consecutive_failures != aps_[b].consecutive_failures) {
        return aps_[a].consecutive_failures < aps_[b].consecutive_failures;
      }
      return a < b;
    };
    std::size_t best = 0;
    bool have_best = false;
    for (std::size_t i = 0; i < aps_.size(); ++i) {
      if (avoid.count(aps_[i].nodes)) continue;
      if (!have_best || better(i, best)) {
        best = i;
        have_best = true;
      }
    }
    if (have_best) return aps_[best];
    best = 0;
    for (std::size_t i = 1; i < aps_.size(); ++i) {
      if (better(i, best)) best = i;
    }
    return aps_[best];
  }

  void handle_verdict(const std::vector<NodeId>& route_key, const FaultVerdict& v,
                      int registrations) {
    ++stats_.localizations;
    weights_.penalize(v.faulty_link, cfg_.penalty_factor, cfg_.rating_penalty);
    stats_.localization_log.push_back(
        {now_, v.faulty_link, v.evidence, registrations});
    log_event("verdict", v.faulty_link.a, v.faulty_link.b,
              static_cast<std::uint64_t>(v.evidence), "localized");
    // A localized fault is the strongest misbehavior evidence a path can
    // produce; its trust takes a full misbehaving-window hit.
    auto tit = trust_.try_emplace(route_key, cfg_.trust.initial).first;
    tit->second = update_trust(tit->second, 1.0, cfg_.trust);
    remove_route(route_key);
    // The route is known broken at that link: retire it from the candidate
    // pool and go look for fresh paths.
    discovery_[cfg_.traffic.source].remove_candidate(route_key);
    reselect_aps();
    maybe_start_discovery();
  }

  void remove_route(const std::vector<NodeId>& route_key) {
    for (auto it = aps_.begin(); it != aps_.end(); ++it) {
      if (it->nodes == route_key) {
        aps_.erase(it);
        return;
      }
    }
  }

  void evaluate_window(const std::vector<NodeId>& route_key) {
    ActiveRoute* ar = find_route(route_key);
    if (!ar) return;
    const int w = cfg_.trust.window_packets;
    const auto first = ar->window.begin();
    const auto last = first + w;

    int received = 0;
    double trip_var_sum = 0;
    int trip_count = 0;
    for (auto it = first; it != last; ++it) {
      if (it->delivered) {
        ++received;
        if (it->trip) {
          trip_var_sum += trip_variation(ar->reference, *it->trip);
          ++trip_count;
        }
      }
    }
    double span = (last - 1)->sent_time - first->sent_time;
    if (span <= 0) {
      span = w / cfg_.traffic.send_rate;
    }
    AnomalyInputs in;
    in.trip_variation_mean = trip_count > 0 ? trip_var_sum / trip_count : 0.0;
    in.frequency_change = frequency_change(static_cast<std::size_t>(w),
                                           static_cast<std::size_t>(received), span);
    in.lost_packets = w - received;
    in.reference_time = ar->reference;
    in.send_rate = w / span;
    in.sent_count = w;
    const double af = anomaly(in, cfg_.anomaly_weights);

    auto tit = trust_.try_emplace(route_key, cfg_.trust.initial).first;
    tit->second = update_trust(tit->second, af, cfg_.trust);

    MetricsSnapshot snap;
    snap.time = now_;
    snap.route = route_key;
    snap.trip_variation_mean = in.trip_variation_mean;
    snap.frequency_change = in.frequency_change;
    snap.lost_packets = in.lost_packets;
    snap.anomaly = af;
    snap.trust = tit->second;
    stats_.metrics_log.push_back(std::move(snap));

    if (af < cfg_.trust.anomaly_threshold) {
      for (std::size_t i = 1; i + 1 < route_key.size(); ++i) {
        weights_.reward(route_key[i], cfg_.rating_reward);
      }
    }
    ar->window.erase(first, last);

    if (tit->second < cfg_.trust.exclusion_threshold) {
      remove_route(route_key);
      discovery_[cfg_.traffic.source].remove_candidate(route_key);
      reselect_aps();
      maybe_start_discovery();
    }
  }

  void reselect_aps() {
    std::map<std::vector<NodeId>, Route> pool;
    for (const auto& r : discovery_[cfg_.traffic.source].candidate_routes()) {
      pool.emplace(r.nodes, Route{r.nodes, trust_of(r.nodes)});
    }
    for (const auto& ar : aps_) {
      pool.emplace(ar.nodes, Route{ar.nodes, trust_of(ar.nodes)});
    }
    std::vector<Route> candidates;
    candidates.reserve(pool.size());
    for (auto& [key, r] : pool) {
      candidates.push_back(std::move(r));
    }

    ++stats_.aps_reselections;
    std::vector<ActiveRoute> next;
    try {
      SelectionParams params{cfg_.aps_target_size, cfg_.trust.exclusion_threshold};
      ActivePathSet selected = select_aps(std::move(candidates), weights_, params);
      for (const auto& r : selected.routes) {
        bool kept = false;
        for (auto& ar : aps_) {
          if (ar.nodes == r.nodes) {
            next.push_back(std::move(ar));
            kept = true;
            break;
          }
        }
        if (!kept) {
          next.push_back(make_active_route(r.nodes));
        }
      }
    } catch (const NoEligibleRouteError&) {
      next.clear();
    }
    aps_ = std::move(next);

    if (cfg_.record_events) {
      std::string line;
      char head[48];
      std::snprintf(head, sizeof(head), "%.6f aps %zu", now_, aps_.size());
      line = head;
      for (const auto& ar : aps_) {
        line += ' ';
        for (std::size_t i = 0; i < ar.nodes.size(); ++i) {
          if (i) line += '-';
          line += std::to_string(ar.nodes[i]);
        }
      }
      stats_.event_log.push_back(std::move(line));
    }
    if (!aps_.empty()) {
      if (cfg_.protocol == Protocol::ApsSmt && stats_.first_aps.empty()) {
        for (const auto& ar : aps_) {
          stats_.first_aps.push_back(ar.nodes);
        }
      }
      flush_queue();
    } else {
      maybe_start_discovery();
    }
  }

  ActiveRoute make_active_route(const std::vector<NodeId>& nodes) {
    Route r{nodes, trust_of(nodes)};
    double reference = cfg_.per_hop_latency * r.link_count();
    if (auto it = stamps_.find(nodes); it != stamps_.end()) {
      reference = reference_time(it->second);
    }
    return ActiveRoute{nodes,
                       RouteLocalizer(nodes, cfg_.probing),
                       discovery_[cfg_.traffic.source].establish_probe_keys(r),
                       reference,
                       TrafficTable{},
                       {},
                       0};
  }

  void flush_queue() {
    while (!pending_messages_.empty()) {
      const std::uint64_t id = pending_messages_.front();
      pending_messages_.pop_front();
      auto it = messages_.find(id);
      if (it == messages_.end() || it->second.delivered) continue;
      if (cfg_.protocol == Protocol::ApsSmt) {
        if (aps_.empty()) {
          pending_messages_.push_front(id);
          return;
        }
        send_message_shares(id);
      } else {
        if (!nsp_route_) {
          pending_messages_.push_front(id);
          return;
        }
        nsp_transmit(id);
      }
    }
  }

  // ---- NSP sender ---------------------------------------------------------

  void nsp_select_route() {
    const auto& candidates =
        discovery_[cfg_.traffic.source].candidate_routes();
    if (candidates.empty()) {
      maybe_start_discovery();
      return;
    }
    const Route* best = &candidates.front();
    for (const auto& r : candidates) {
      if (r.link_count() < best->link_count() ||
          (r.link_count() == best->link_count() && r.nodes < best->nodes)) {
        best = &r;
      }
    }
    nsp_route_ = best->nodes;
    if (stats_.first_route.empty()) {
      stats_.first_route = best->nodes;
    }
    flush_queue();
  }

  void nsp_send(std::uint64_t message_id) {
    if (!nsp_route_) {
      enqueue_message(message_id);
      maybe_start_discovery();
      return;
    }
    // The only maintenance an unsecured sender has is local: notice that the
    // first hop left radio range and rediscover. Downstream losses are silent.
    if (!connected(cfg_.traffic.source, (*nsp_route_)[1])) {
      nsp_route_.reset();
      enqueue_message(message_id);
      maybe_start_discovery();
      return;
    }
    nsp_transmit(message_id);
  }

  void nsp_transmit(std::uint64_t message_id) {
    auto& ms = messages_.at(message_id);
    auto shares = disperse(ms.payload, DispersalConfig{1, 1}, message_id);
    DataPacket p;
    p.packet_id = ++next_packet_id_;
    p.message_id = message_id;
    p.route = *nsp_route_;
    p.share = std::move(shares.front());
    p.hop = 1;
    const NodeId first_hop = p.route[1];
    transmit(cfg_.traffic.source, first_hop, Packet{std::move(p)},
             /*overhead=*/false);
  }

  // ---- finalization -------------------------------------------------------

  void finalize_stats() {
    stats_.delivery_ratio =
        stats_.messages_sent == 0
            ? 0.0
            : static_cast<double>(stats_.messages_delivered) / stats_.messages_sent;
    stats_.mean_delay_s = stats_.messages_delivered == 0
                              ? 0.0
                              : delay_sum_ / stats_.messages_delivered;
    const auto& c = discovery_[cfg_.traffic.source].counters;
    stats_.forged_request_drops = c.forged_requests;
    stats_.duplicate_request_drops = c.duplicate_requests;
    for (const auto& d : discovery_) {
      if (d.self() != cfg_.traffic.source) {
        stats_.forged_request_drops += d.counters.forged_requests;
        stats_.duplicate_request_drops += d.counters.duplicate_requests;
      }
    }
  }

  // ---- members ------------------------------------------------------------

  ScenarioConfig cfg_;
  SimulatedCryptoProvider crypto_;
  std::mt19937_64 mobility_rng_;
  std::mt19937_64 loss_rng_;
  RandomWaypoint mobility_;

  std::vector<NodeId> adversaries_;
  std::set<NodeId> adversary_set_;
  std::map<NodeId, NodeId> wormhole_peer_;

  std::vector<DiscoveryState> discovery_;

  std::priority_queue<Event, std::vector<Event>, sim_detail::EventAfter> queue_;
  std::uint64_t next_order_ = 0;
  double now_ = 0;

  // Sender state.
  LinkWeightTable weights_;
  std::vector<ActiveRoute> aps_;
  std::map<std::vector<NodeId>, double> trust_;
  std::map<std::vector<NodeId>, DiscoveryTimestamps> stamps_;
  std::deque<std::uint64_t> pending_messages_;
  std::map<std::uint64_t, PendingPacket> pending_packets_;
  std::map<std::uint64_t, MessageState> messages_;
  std::optional<std::vector<NodeId>> nsp_route_;
  double last_discovery_ = 0;
  std::uint64_t discoveries_done_ = 0;
  std::uint64_t next_packet_id_ = 0;

  // Receiver state.
  std::map<std::uint64_t, std::map<int, MessageShare>> dest_shares_;
  std::set<std::uint64_t> dest_done_;

  double delay_sum_ = 0;
  bool ran_ = false;
  RunStats stats_;
};

inline RunStats run_scenario(const ScenarioConfig& cfg) {
  return Simulator(cfg).run();
}

}  // namespace apssmt
