#pragma once

#include <compare>
#include <cstdint>
#include <vector>

namespace apssmt {

using NodeId = std::uint32_t;

// Undirected link; stored normalized so (u,v) and (v,u) compare equal.
struct Link {
  NodeId a = 0;
  NodeId b = 0;

  static Link of(NodeId u, NodeId v) {
    return u <= v ? Link{u, v} : Link{v, u};
  }

  bool incident_to(NodeId n) const { return a == n || b == n; }

  auto operator<=>(const Link&) const = default;
};

// A source routed path. `trust` is the path trust variable, maintained by the
// sender and defaulted to the configured initial value on first sight.
struct Route {
  std::vector<NodeId> nodes;
  double trust = 0.5;

  int link_count() const { return static_cast<int>(nodes.size()) - 1; }
  NodeId source() const { return nodes.front(); }
  NodeId destination() const { return nodes.back(); }

  Link link_at(int i) const {
    return Link::of(nodes[static_cast<std::size_t>(i)],
                    nodes[static_cast<std::size_t>(i) + 1]);
  }

  bool loop_free() const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        if (nodes[i] == nodes[j]) {
          return false;
        }
      }
    }
    return true;
  }
};

}  // namespace apssmt
