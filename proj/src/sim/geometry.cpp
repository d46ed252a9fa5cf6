#include "safedom/sim/geometry.hpp"

#include <algorithm>

namespace safedom::sim {

double wrap_angle(double a) {
  const double two_pi = 6.283185307179586476925286766559;
  a = std::fmod(a, two_pi);
  if (a <= -3.14159265358979323846) a += two_pi;
  if (a > 3.14159265358979323846) a -= two_pi;
  return a;
}

double ray_segment(const Vec2& origin, const Vec2& dir, const Segment& seg) {
  // origin + t*dir == a + u*(b-a), t > 0, u in [0,1]
  const Vec2 e = seg.b - seg.a;
  const double denom = dir.cross(e);
  if (std::fabs(denom) < 1e-12) return kNoHit;  // parallel
  const Vec2 diff = seg.a - origin;
  const double t = diff.cross(e) / denom;
  const double u = diff.cross(dir) / denom;
  if (t <= 1e-9 || u < 0.0 || u > 1.0) return kNoHit;
  return t;
}

double ray_aabb(const Vec2& origin, const Vec2& dir, const Aabb& box) {
  // slab method; returns entry distance for rays starting outside,
  // exit distance for rays starting inside
  double tmin = -kNoHit, tmax = kNoHit;
  for (int axis = 0; axis < 2; ++axis) {
    const double o = axis == 0 ? origin.x : origin.y;
    const double d = axis == 0 ? dir.x : dir.y;
    const double lo = axis == 0 ? box.xmin : box.ymin;
    const double hi = axis == 0 ? box.xmax : box.ymax;
    if (std::fabs(d) < 1e-12) {
      if (o < lo || o > hi) return kNoHit;
      continue;
    }
    double t1 = (lo - o) / d;
    double t2 = (hi - o) / d;
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return kNoHit;
  }
  if (tmax <= 1e-9) return kNoHit;
  return tmin > 1e-9 ? tmin : tmax;
}

double ray_disc(const Vec2& origin, const Vec2& dir, const Disc& disc) {
  const Vec2 oc = origin - disc.center;
  const double b = oc.dot(dir);
  const double c = oc.dot(oc) - disc.radius * disc.radius;
  const double discriminant = b * b - c;
  if (discriminant < 0.0) return kNoHit;
  const double sq = std::sqrt(discriminant);
  const double t1 = -b - sq;
  if (t1 > 1e-9) return t1;
  const double t2 = -b + sq;
  if (t2 > 1e-9) return t2;
  return kNoHit;
}

double point_segment_distance(const Vec2& p, const Segment& seg) {
  const Vec2 e = seg.b - seg.a;
  const double len2 = e.dot(e);
  if (len2 < 1e-18) return (p - seg.a).norm();
  double u = (p - seg.a).dot(e) / len2;
  u = std::clamp(u, 0.0, 1.0);
  return (p - (seg.a + e * u)).norm();
}

double point_aabb_distance(const Vec2& p, const Aabb& box) {
  const double dx = std::max({box.xmin - p.x, p.x - box.xmax, 0.0});
  const double dy = std::max({box.ymin - p.y, p.y - box.ymax, 0.0});
  return std::sqrt(dx * dx + dy * dy);
}

bool segments_intersect(const Segment& s1, const Segment& s2) {
  const Vec2 d1 = s1.b - s1.a;
  const Vec2 d2 = s2.b - s2.a;
  const double denom = d1.cross(d2);
  if (std::fabs(denom) < 1e-12) return false;
  const Vec2 diff = s2.a - s1.a;
  const double t = diff.cross(d2) / denom;
  const double u = diff.cross(d1) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

bool segment_hits_aabb(const Vec2& a, const Vec2& b, const Aabb& box) {
  if (box.contains(a) || box.contains(b)) return true;
  const Segment s{a, b};
  const Segment edges[4] = {
      {{box.xmin, box.ymin}, {box.xmax, box.ymin}},
      {{box.xmax, box.ymin}, {box.xmax, box.ymax}},
      {{box.xmax, box.ymax}, {box.xmin, box.ymax}},
      {{box.xmin, box.ymax}, {box.xmin, box.ymin}},
  };
  for (const Segment& e : edges) {
    if (segments_intersect(s, e)) return true;
  }
  return false;
}

}  // namespace safedom::sim
