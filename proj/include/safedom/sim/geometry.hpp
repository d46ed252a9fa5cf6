#pragma once

#include <cmath>
#include <limits>

namespace safedom::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 unit_from_angle(double a) { return {std::cos(a), std::sin(a)}; }

// Wrap to (-pi, pi].
double wrap_angle(double a);

struct Segment {
  Vec2 a;
  Vec2 b;
};

struct Aabb {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  bool contains(const Vec2& p, double margin = 0.0) const {
    return p.x >= xmin - margin && p.x <= xmax + margin &&
           p.y >= ymin - margin && p.y <= ymax + margin;
  }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

struct Disc {
  Vec2 center;
  double radius = 0.0;
};

inline constexpr double kNoHit = std::numeric_limits<double>::infinity();

// Each returns the smallest positive ray parameter (dir must be unit length
// for the result to be a metric distance), or kNoHit.
double ray_segment(const Vec2& origin, const Vec2& dir, const Segment& seg);
double ray_aabb(const Vec2& origin, const Vec2& dir, const Aabb& box);
double ray_disc(const Vec2& origin, const Vec2& dir, const Disc& disc);

double point_segment_distance(const Vec2& p, const Segment& seg);
double point_aabb_distance(const Vec2& p, const Aabb& box);

// True if the open segment between a and b crosses the box.
bool segment_hits_aabb(const Vec2& a, const Vec2& b, const Aabb& box);
bool segments_intersect(const Segment& s1, const Segment& s2);

}  // namespace safedom::sim
