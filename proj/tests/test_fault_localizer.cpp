#include <cmath>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "apssmt/fault_localizer.hpp"

using namespace apssmt;

namespace {

std::vector<NodeId> line_route(int links) {
  std::vector<NodeId> nodes;
  for (int i = 0; i <= links; ++i) {
    nodes.push_back(static_cast<NodeId>(i));
  }
  return nodes;
}

// Acks a packet would produce when the link (drop_at, drop_at+1) eats
// everything: every probe at or before drop_at answers, nothing after.
std::set<int> acks_with_drop(const RouteLocalizer& loc, int drop_at) {
  std::set<int> acked;
  for (int p : loc.probe_positions()) {
    if (p <= drop_at) {
      acked.insert(p);
    }
  }
  return acked;
}

int ceil_log2(int n) {
  int bound = 0;
  while ((1 << bound) < n) ++bound;
  return bound;
}

}  // namespace

TEST_CASE("a fresh probe list is just the destination") {
  RouteLocalizer loc(line_route(8), {});
  REQUIRE(loc.probe_positions() == std::vector<int>{8});
  REQUIRE(loc.probes().intervals() ==
          std::vector<std::pair<int, int>>{{0, 8}});
}

TEST_CASE("probe header layout is count then ascending indices") {
  ProbeList p = ProbeList::fresh(line_route(8));
  p.insert(4);
  REQUIRE(probe_header_bytes(p) == Bytes{2, 4, 8});
}

TEST_CASE("a probe without a shared key is an internal error") {
  ProbeList p = ProbeList::fresh(line_route(3));
  ProbeKeySet keys;  // empty: destination key missing
  REQUIRE_THROWS_AS(validate_probe_keys(p, keys), std::logic_error);
  keys[3] = 123;
  REQUIRE_NOTHROW(validate_probe_keys(p, keys));
}

TEST_CASE("ack wire format round trips") {
  const ProbeAck a{0x1122334455667788ull, 42, 0xaabbccddeeff0011ull};
  const Bytes wire = encode_ack(a);
  REQUIRE(wire.size() == 20);
  const ProbeAck back = decode_ack(wire);
  REQUIRE(back.packet_id == a.packet_id);
  REQUIRE(back.probe == a.probe);
  REQUIRE(back.tag == a.tag);
}

TEST_CASE("interval classification follows the nearest-fault rule") {
  RouteLocalizer loc(line_route(8), {});
  loc.register_fault({0, 8});  // inserts probe 4

  SECTION("all probes answer") {
    auto outcomes = loc.classify({4, 8});
    REQUIRE(outcomes[0].state == IntervalState::Delivered);
    REQUIRE(outcomes[1].state == IntervalState::Delivered);
  }
  SECTION("the far half is silent") {
    auto outcomes = loc.classify({4});
    REQUIRE(outcomes[0].state == IntervalState::Delivered);
    REQUIRE(outcomes[1].state == IntervalState::Lost);
  }
  SECTION("nothing answers: blame the first interval only") {
    auto outcomes = loc.classify({});
    REQUIRE(outcomes[0].state == IntervalState::Lost);
    REQUIRE(outcomes[1].state == IntervalState::Unknown);
  }
  SECTION("a lost middle ack incriminates its own interval") {
    auto outcomes = loc.classify({8});
    REQUIRE(outcomes[0].state == IntervalState::Lost);
    REQUIRE(outcomes[1].state == IntervalState::Delivered);
  }
}

TEST_CASE("loss windows honor the threshold and the minimum observations") {
  const LossWindowParams p{10, 0.2, 5};
  LossWindow w;
  for (int i = 0; i < 9; ++i) w.add(false, p.window);
  w.add(true, p.window);
  REQUIRE(w.losses() == 1);
  REQUIRE_FALSE(w.violates(p));  // 1/10 below threshold

  LossWindow w3;
  for (int i = 0; i < 7; ++i) w3.add(false, p.window);
  for (int i = 0; i < 3; ++i) w3.add(true, p.window);
  REQUIRE(w3.violates(p));  // 3/10 above threshold

  LossWindow total;
  for (int i = 0; i < 4; ++i) total.add(true, p.window);
  REQUIRE_FALSE(total.violates(p));  // below W_min
  total.add(true, p.window);
  REQUIRE(total.violates(p));  // 100% drop registers right at W_min
}

TEST_CASE("the window is a ring of the last W outcomes") {
  LossWindow w;
  for (int i = 0; i < 10; ++i) w.add(true, 10);
  for (int i = 0; i < 10; ++i) w.add(false, 10);
  REQUIRE(w.size() == 10);
  REQUIRE(w.losses() == 0);
}

TEST_CASE("subdivision bisects at the floor midpoint") {
  RouteLocalizer loc(line_route(8), {});
  auto verdict = loc.register_fault({0, 8});
  REQUIRE_FALSE(verdict);
  REQUIRE(loc.probe_positions() == std::vector<int>{4, 8});
  REQUIRE(loc.probes().intervals() ==
          std::vector<std::pair<int, int>>{{0, 4}, {4, 8}});
}

TEST_CASE("a single-link interval produces the verdict") {
  RouteLocalizer loc(line_route(8), {});
  loc.register_fault({0, 8});
  loc.register_fault({4, 8});
  auto verdict = loc.register_fault({4, 5});
  REQUIRE(verdict);
  REQUIRE(verdict->faulty_link == Link::of(4, 5));
  REQUIRE(verdict->near_node == 4);
  REQUIRE(verdict->far_node == 5);
}

TEST_CASE("the eight-link episode replays the bisection trace") {
  // Always-drop link (5,6). Expected interval walk:
  // [0,8] -> [4,8] -> [4,6] -> verdict on (5,6).
  const LossWindowParams p{10, 0.2, 5};
  RouteLocalizer loc(line_route(8), p);
  std::vector<std::vector<int>> probe_history;
  std::optional<FaultVerdict> verdict;
  int packets = 0;
  while (!verdict && packets < 1000) {
    probe_history.push_back(loc.probe_positions());
    verdict = loc.observe(acks_with_drop(loc, 5));
    ++packets;
  }
  REQUIRE(verdict);
  REQUIRE(verdict->faulty_link == Link::of(5, 6));
  REQUIRE(verdict->evidence == 3);
  REQUIRE(loc.registrations() == 4);
  REQUIRE(loc.probe_positions() == std::vector<int>{4, 5, 6, 8});
  // The probe list walked {8} -> {4,8} -> {4,6,8} -> {4,5,6,8}.
  REQUIRE(probe_history.front() == std::vector<int>{8});
  std::set<std::vector<int>> stages(probe_history.begin(), probe_history.end());
  REQUIRE(stages.count({4, 8}) == 1);
  REQUIRE(stages.count({4, 6, 8}) == 1);
}

TEST_CASE("localization meets the logarithmic bound at every position") {
  const LossWindowParams p{10, 0.2, 5};
  for (int links : {1, 2, 3, 4, 8, 16}) {
    for (int drop = 0; drop < links; ++drop) {
      RouteLocalizer loc(line_route(links), p);
      std::optional<FaultVerdict> verdict;
      int packets = 0;
      while (!verdict && packets < 10000) {
        verdict = loc.observe(acks_with_drop(loc, drop));
        ++packets;
      }
      REQUIRE(verdict);
      REQUIRE(verdict->faulty_link == Link::of(static_cast<NodeId>(drop),
                                               static_cast<NodeId>(drop + 1)));
      REQUIRE(verdict->evidence <= std::max(1, ceil_log2(links)));
      if (links == 1) {
        REQUIRE(loc.registrations() == 1);
      }
    }
  }
}

TEST_CASE("intervals always partition the path") {
  const LossWindowParams p{10, 0.2, 5};
  RouteLocalizer loc(line_route(16), p);
  std::optional<FaultVerdict> verdict;
  int packets = 0;
  std::size_t last_probe_count = loc.probe_positions().size();
  while (!verdict && packets < 10000) {
    verdict = loc.observe(acks_with_drop(loc, 11));
    ++packets;
    auto intervals = loc.probes().intervals();
    int cursor = 0;
    for (auto [a, b] : intervals) {
      REQUIRE(a == cursor);
      REQUIRE(b > a);
      cursor = b;
    }
    REQUIRE(cursor == 16);
    // Probe positions only grow within an episode.
    REQUIRE(loc.probe_positions().size() >= last_probe_count);
    last_probe_count = loc.probe_positions().size();
  }
  REQUIRE(verdict);
}

TEST_CASE("no loss means no fault, ever") {
  const LossWindowParams p{10, 0.2, 5};
  RouteLocalizer loc(line_route(8), p);
  for (int i = 0; i < 500; ++i) {
    auto verdict = loc.observe({8});
    REQUIRE_FALSE(verdict);
  }
  REQUIRE(loc.registrations() == 0);
  REQUIRE(loc.probe_positions() == std::vector<int>{8});
}
