#pragma once

#include <cmath>
#include <random>
#include <vector>

namespace apssmt {

struct Vec2 {
  double x = 0;
  double y = 0;
};

inline double distance(Vec2 a, Vec2 b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct MobilityParams {
  double speed_min = 1.0;   // m/s
  double speed_max = 10.0;  // m/s
  double pause_time = 10.0; // s at each waypoint
};

struct NodeMotion {
  Vec2 position;
  Vec2 waypoint;
  double speed = 0;
  double pause_until = 0;
};

// Random waypoint: travel to a uniform waypoint at a uniform speed, pause,
// repeat. Positions start uniform over the area. All draws come from the
// caller's engine in node-index order, so two runs sharing a seed share the
// whole mobility trace.
class RandomWaypoint {
 public:
  RandomWaypoint(int count, double area_width, double area_height,
                 MobilityParams params, std::mt19937_64& rng)
      : area_w_(area_width), area_h_(area_height), params_(params) {
    nodes_.resize(static_cast<std::size_t>(count));
    std::uniform_real_distribution<double> ux(0, area_w_);
    std::uniform_real_distribution<double> uy(0, area_h_);
    for (auto& n : nodes_) {
      n.position = {ux(rng), uy(rng)};
    }
    for (auto& n : nodes_) {
      draw_leg(n, rng);
    }
  }

  void advance(double now, double dt, std::mt19937_64& rng) {
    for (auto& n : nodes_) {
      if (now < n.pause_until || n.speed <= 0) {
        continue;
      }
      const double remaining = distance(n.position, n.waypoint);
      const double step = n.speed * dt;
      if (step >= remaining) {
        n.position = n.waypoint;
        n.pause_until = now + params_.pause_time;
        draw_leg(n, rng);
      } else {
        n.position.x += (n.waypoint.x - n.position.x) / remaining * step;
        n.position.y += (n.waypoint.y - n.position.y) / remaining * step;
      }
    }
  }

  std::vector<NodeMotion>& nodes() { return nodes_; }
  const std::vector<NodeMotion>& nodes() const { return nodes_; }

  Vec2 position(std::size_t i) const { return nodes_[i].position; }

 private:
  void draw_leg(NodeMotion& n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(0, area_w_);
    std::uniform_real_distribution<double> uy(0, area_h_);
    std::uniform_real_distribution<double> us(params_.speed_min, params_.speed_max);
    n.waypoint = {ux(rng), uy(rng)};
    n.speed = us(rng);
  }

  double area_w_;
  double area_h_;
  MobilityParams params_;
  std::vector<NodeMotion> nodes_;
};

}  // namespace apssmt
