#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "apssmt/dispersal.hpp"
#include "apssmt/path_metrics.hpp"
#include "apssmt/types.hpp"

namespace apssmt {

// Rating, selection, and dispersion sizing for the active path set: the
// node-disjoint routes a sender uses concurrently for one flow.

struct ActivePathSet {
  std::vector<Route> routes;
  int target_size = 4;  // k

  // Shared nodes between any two member routes must be endpoints only.
  bool node_disjoint() const {
    for (std::size_t i = 0; i < routes.size(); ++i) {
      for (std::size_t j = i + 1; j < routes.size(); ++j) {
        const auto& a = routes[i].nodes;
        const auto& b = routes[j].nodes;
        std::set<NodeId> mid(a.begin() + 1, a.end() - 1);
        for (std::size_t h = 1; h + 1 < b.size(); ++h) {
          if (mid.count(b[h])) {
            return false;
          }
        }
      }
    }
    return true;
  }
};

class NoEligibleRouteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mean intermediate-node rating divided by mean link weight; higher is
// better. A direct route has no intermediates and scores the table's default
// rating over its single link weight.
inline double rate_route(const Route& route, const LinkWeightTable& table) {
  double rating_sum = 0;
  int intermediates = 0;
  for (std::size_t i = 1; i + 1 < route.nodes.size(); ++i) {
    rating_sum += table.rating(route.nodes[i]);
    ++intermediates;
  }
  const double mean_rating =
      intermediates > 0 ? rating_sum / intermediates : table.initial_rating();

  double weight_sum = 0;
  for (int i = 0; i < route.link_count(); ++i) {
    weight_sum += table.weight(route.link_at(i));
  }
  const double mean_weight = weight_sum / route.link_count();
  return mean_rating / mean_weight;
}

struct SelectionParams {
  int target_size = 4;
  double trust_threshold = 0.2;
};

namespace detail {

inline bool shares_intermediate(const Route& a, const Route& b) {
  for (std::size_t i = 1; i + 1 < a.nodes.size(); ++i) {
    for (std::size_t j = 1; j + 1 < b.nodes.size(); ++j) {
      if (a.nodes[i] == b.nodes[j]) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace detail

// Greedy selection: best-rated first, skipping routes that overlap an already
// chosen route on an intermediate node or fall below the trust threshold.
// Ties break on length, then on the node sequence for determinism.
inline ActivePathSet select_aps(std::vector<Route> candidates,
                                const LinkWeightTable& table,
                                const SelectionParams& params = {}) {
  std::vector<std::pair<double, const Route*>> rated;
  rated.reserve(candidates.size());
  for (const auto& r : candidates) {
    rated.emplace_back(rate_route(r, table), &r);
  }
  std::sort(rated.begin(), rated.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) {
      return x.first > y.first;
    }
    if (x.second->link_count() != y.second->link_count()) {
      return x.second->link_count() < y.second->link_count();
    }
    return x.second->nodes < y.second->nodes;
  });

  ActivePathSet aps;
  aps.target_size = params.target_size;
  for (const auto& [rating, route] : rated) {
    if (static_cast<int>(aps.routes.size()) >= params.target_size) {
      break;
    }
    if (route->trust < params.trust_threshold) {
      continue;
    }
    bool overlaps = false;
    for (const auto& taken : aps.routes) {
      if (detail::shares_intermediate(*route, taken)) {
        overlaps = true;
        break;
      }
    }
    if (!overlaps) {
      aps.routes.push_back(*route);
    }
  }
  if (aps.routes.empty()) {
    throw NoEligibleRouteError("select_aps: no eligible candidate route");
  }
  return aps;
}

// One share per active route; the reconstruction threshold backs off by the
// number of paths currently expected to fail (trust below 0.5), but never
// below half the set, keeping redundancy minimal.
inline DispersalConfig choose_dispersion(const ActivePathSet& aps) {
  const int n = static_cast<int>(aps.routes.size());
  if (n < 1) {
    throw std::invalid_argument("choose_dispersion: empty active path set");
  }
  int expected_failures = 0;
  for (const auto& r : aps.routes) {
    if (r.trust < 0.5) {
      ++expected_failures;
    }
  }
  int m = std::max(1, n - expected_failures);
  m = std::max(m, (n + 1) / 2);
  return DispersalConfig{n, m};
}

}  // namespace apssmt
