#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "apssmt/types.hpp"

namespace apssmt {

// Traffic bookkeeping and the anomaly arithmetic a sender runs per path:
// trip times against a discovery-derived reference, send/receive frequency
// deltas, lost packet counts, and the combined anomaly score that drives
// trust updates.

struct TrafficRecord {
  std::uint64_t packet_id = 0;
  double sent_time = 0;
  std::optional<double> received_time;
};

class TrafficTable {
 public:
  void record_sent(std::uint64_t packet_id, double t) {
    index_[packet_id] = records_.size();
    records_.push_back({packet_id, t, std::nullopt});
  }

  void record_received(std::uint64_t packet_id, double t) {
    auto it = index_.find(packet_id);
    if (it != index_.end()) {
      records_[it->second].received_time = t;
    }
  }

  const TrafficRecord* find(std::uint64_t packet_id) const {
    auto it = index_.find(packet_id);
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  const std::vector<TrafficRecord>& records() const { return records_; }

  // Sent in [window_begin, window_end), never received, and old enough that
  // the acknowledgement timeout has expired; younger records are not yet
  // classifiable as lost.
  int lost_packets(double window_begin, double window_end, double now,
                   double ack_timeout) const {
    int lost = 0;
    for (const auto& r : records_) {
      if (r.sent_time < window_begin || r.sent_time >= window_end) {
        continue;
      }
      if (!r.received_time && now - r.sent_time >= ack_timeout) {
        ++lost;
      }
    }
    return lost;
  }

 private:
  std::vector<TrafficRecord> records_;
  std::map<std::uint64_t, std::size_t> index_;
};

struct DiscoveryTimestamps {
  double request_sent = 0;
  double request_received = 0;
  double reply_sent = 0;
  double reply_received = 0;
};

inline double trip_time(double sent, double received) { return received - sent; }

inline double reference_time(const DiscoveryTimestamps& d) {
  return ((d.request_received - d.request_sent) +
          (d.reply_received - d.reply_sent)) /
         2.0;
}

inline double trip_variation(double reference, double trip) {
  return reference - trip;
}

// Packets/second delta between what was sent and what arrived inside one
// measurement window. Positive means traffic is going missing.
inline double frequency_change(std::size_t sent_count, std::size_t received_count,
                               double window_seconds) {
  return (static_cast<double>(sent_count) - static_cast<double>(received_count)) /
         window_seconds;
}

struct AnomalyInputs {
  double trip_variation_mean = 0;  // mean of (reference - trip) over deliveries
  double frequency_change = 0;     // packets/s
  int lost_packets = 0;
  double reference_time = 0;  // normalizer for the delay term
  double send_rate = 0;       // packets/s, normalizer for the frequency term
  int sent_count = 0;         // normalizer for the loss term
};

struct AnomalyWeights {
  double delay = 0.3;
  double frequency = 0.3;
  double loss = 0.4;
};

// Convex combination of the three normalized anomaly signals, in [0,1].
// A degenerate normalizer silences its term instead of dividing by zero.
inline double anomaly(const AnomalyInputs& in, const AnomalyWeights& w = {}) {
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  const double delay_term =
      in.reference_time > 0 ? clamp01(-in.trip_variation_mean / in.reference_time) : 0.0;
  const double freq_term =
      in.send_rate > 0 ? clamp01(in.frequency_change / in.send_rate) : 0.0;
  const double loss_term =
      in.sent_count > 0
          ? clamp01(static_cast<double>(in.lost_packets) / in.sent_count)
          : 0.0;
  return w.delay * delay_term + w.frequency * freq_term + w.loss * loss_term;
}

// Per-link weights (>= 1, grown multiplicatively on each localized fault) and
// per-node ratings in [0,1]. Both feed route rating.
class LinkWeightTable {
 public:
  explicit LinkWeightTable(double initial_rating = 0.5)
      : initial_rating_(initial_rating) {}

  double weight(Link link) const {
    auto it = weights_.find(link);
    return it == weights_.end() ? 1.0 : it->second;
  }

  double rating(NodeId node) const {
    auto it = ratings_.find(node);
    return it == ratings_.end() ? initial_rating_ : it->second;
  }

  double initial_rating() const { return initial_rating_; }

  void penalize(Link link, double weight_factor, double rating_factor) {
    weights_[link] = weight(link) * weight_factor;
    set_rating(link.a, rating(link.a) * rating_factor);
    set_rating(link.b, rating(link.b) * rating_factor);
  }

  void reward(NodeId node, double delta) {
    set_rating(node, rating(node) + delta);
  }

  // Optional forgiveness: halve every weight's excess over 1.0.
  void decay_excess() {
    for (auto& [link, w] : weights_) {
      w = 1.0 + (w - 1.0) * 0.5;
    }
  }

  // Non-default entries, sorted by link; this is what route requests carry.
  std::vector<std::pair<Link, double>> entries() const {
    return {weights_.begin(), weights_.end()};
  }

 private:
  void set_rating(NodeId node, double value) {
    ratings_[node] = std::clamp(value, 0.0, 1.0);
  }

  std::map<Link, double> weights_;
  std::map<NodeId, double> ratings_;
  double initial_rating_;
};

struct TrustParams {
  double initial = 0.5;
  double increment = 0.05;       // additive on a well behaved window
  double decay = 0.5;            // multiplicative on a misbehaving window
  double exclusion_threshold = 0.2;
  int window_packets = 20;
  double anomaly_threshold = 0.25;  // window counts as well behaved below this
};

inline double update_trust(double trust, double anomaly_value,
                           const TrustParams& p) {
  if (anomaly_value < p.anomaly_threshold) {
    return std::min(1.0, trust + p.increment);
  }
  return trust * p.decay;
}

// One exported record per (route, window); the harness serializes these.
struct MetricsSnapshot {
  double time = 0;
  std::vector<NodeId> route;
  double trip_variation_mean = 0;
  double frequency_change = 0;
  int lost_packets = 0;
  double anomaly = 0;
  double trust = 0;
};

}  // namespace apssmt
