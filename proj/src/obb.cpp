#include "sgg/obb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sgg/errors.hpp"

namespace sgg::geom {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_corner(Vec2 p) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(%g, %g)", p.x, p.y);
  return buf;
}

}  // namespace

double wrap_angle_halfpi(double theta) {
  double r = std::fmod(theta, kPi);
  if (r <= -kPi / 2) r += kPi;
  if (r > kPi / 2) r -= kPi;
  return r;
}

double signed_area(const std::array<Vec2, 4>& pts) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Vec2& p = pts[static_cast<size_t>(i)];
    const Vec2& q = pts[static_cast<size_t>((i + 1) % 4)];
    s += p.x * q.y - q.x * p.y;
  }
  return 0.5 * s;
}

OrientedBox OrientedBox::from_corners(const std::array<Vec2, 4>& pts) {
  for (const Vec2& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw GeometryError("oriented box: non-finite corner " + fmt_corner(p));
  // clockwise-on-screen traversal turns consistently: every consecutive edge
  // cross product must be strictly positive (convex, non-degenerate)
  for (int i = 0; i < 4; ++i) {
    Vec2 e0 = pts[static_cast<size_t>((i + 1) % 4)] - pts[static_cast<size_t>(i)];
    Vec2 e1 = pts[static_cast<size_t>((i + 2) % 4)] - pts[static_cast<size_t>((i + 1) % 4)];
    double c = cross(e0, e1);
    if (c < 0.0)
      throw GeometryError("oriented box: corners not in clockwise order near corner " +
                          fmt_corner(pts[static_cast<size_t>((i + 1) % 4)]));
    if (c == 0.0)
      throw GeometryError("oriented box: degenerate (collinear) corners near " +
                          fmt_corner(pts[static_cast<size_t>((i + 1) % 4)]));
  }
  if (signed_area(pts) <= 0.0) throw GeometryError("oriented box: non-positive area");
  OrientedBox b;
  b.corners = pts;
  return b;
}

OrientedBox OrientedBox::from_center(double cx, double cy, double w, double h, double theta) {
  if (!(w > 0.0) || !(h > 0.0)) throw GeometryError("oriented box: width and height must be positive");
  double ct = std::cos(theta), st = std::sin(theta);
  auto rot = [&](double x, double y) { return Vec2{cx + ct * x - st * y, cy + st * x + ct * y}; };
  return from_corners({rot(-w / 2, -h / 2), rot(w / 2, -h / 2), rot(w / 2, h / 2), rot(-w / 2, h / 2)});
}

Vec2 OrientedBox::center() const {
  Vec2 c{0.0, 0.0};
  for (const Vec2& p : corners) c = c + p;
  return c * 0.25;
}

double OrientedBox::width() const {
  Vec2 e = corners[1] - corners[0];
  return std::sqrt(dot(e, e));
}

double OrientedBox::height() const {
  Vec2 e = corners[2] - corners[1];
  return std::sqrt(dot(e, e));
}

double OrientedBox::angle() const {
  Vec2 e = corners[1] - corners[0];
  return wrap_angle_halfpi(std::atan2(e.y, e.x));
}

double obb_area(const OrientedBox& b) { return signed_area(b.corners); }

AxisAlignedBox obb_to_hbb(const OrientedBox& b) {
  AxisAlignedBox h{b.corners[0].x, b.corners[0].y, b.corners[0].x, b.corners[0].y};
  for (const Vec2& p : b.corners) {
    h.x_min = std::min(h.x_min, p.x);
    h.y_min = std::min(h.y_min, p.y);
    h.x_max = std::max(h.x_max, p.x);
    h.y_max = std::max(h.y_max, p.y);
  }
  return h;
}

double hbb_area(const AxisAlignedBox& b) { return (b.x_max - b.x_min) * (b.y_max - b.y_min); }

double hbb_iou(const AxisAlignedBox& a, const AxisAlignedBox& b) {
  double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  double inter = ix * iy;
  double uni = hbb_area(a) + hbb_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

bool contains_point(const OrientedBox& b, Vec2 p) {
  // clockwise-on-screen quads have positive raw orientation, so interior
  // points sit on the non-negative side of every edge
  for (int i = 0; i < 4; ++i) {
    Vec2 v = b.corners[static_cast<size_t>(i)];
    Vec2 e = b.corners[static_cast<size_t>((i + 1) % 4)] - v;
    if (cross(e, p - v) < 0.0) return false;
  }
  return true;
}

namespace {

// Intersection polygon of two convex quads, collected as: vertices of one
// inside the other plus all edge-edge crossings, then ordered angularly about
// their centroid. Distinct from the Sutherland-Hodgman clipper the tests use
// as an oracle.
int collect_intersection_points(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b,
                                Vec2* out) {
  int n = 0;
  for (const Vec2& p : a) {
    bool in = true;
    for (int i = 0; i < 4 && in; ++i) {
      Vec2 v = b[static_cast<size_t>(i)];
      Vec2 e = b[static_cast<size_t>((i + 1) % 4)] - v;
      if (cross(e, p - v) < 0.0) in = false;
    }
    if (in) out[n++] = p;
  }
  for (const Vec2& p : b) {
    bool in = true;
    for (int i = 0; i < 4 && in; ++i) {
      Vec2 v = a[static_cast<size_t>(i)];
      Vec2 e = a[static_cast<size_t>((i + 1) % 4)] - v;
      if (cross(e, p - v) < 0.0) in = false;
    }
    if (in) out[n++] = p;
  }
  for (int i = 0; i < 4; ++i) {
    Vec2 a0 = a[static_cast<size_t>(i)];
    Vec2 da = a[static_cast<size_t>((i + 1) % 4)] - a0;
    for (int j = 0; j < 4; ++j) {
      Vec2 b0 = b[static_cast<size_t>(j)];
      Vec2 db = b[static_cast<size_t>((j + 1) % 4)] - b0;
      double denom = cross(da, db);
      if (denom == 0.0) continue;
      Vec2 d = b0 - a0;
      double t = cross(d, db) / denom;
      double u = cross(d, da) / denom;
      if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) out[n++] = a0 + da * t;
    }
  }
  return n;
}

double convex_points_area(Vec2* pts, int n) {
  if (n < 3) return 0.0;
  Vec2 c{0.0, 0.0};
  for (int i = 0; i < n; ++i) c = c + pts[i];
  c = c * (1.0 / n);
  std::sort(pts, pts + n, [&](Vec2 p, Vec2 q) {
    double ap = std::atan2(p.y - c.y, p.x - c.x);
    double aq = std::atan2(q.y - c.y, q.x - c.x);
    if (ap != aq) return ap < aq;
    return dot(p - c, p - c) < dot(q - c, q - c);
  });
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec2 p = pts[i];
    Vec2 q = pts[(i + 1) % n];
    s += p.x * q.y - q.x * p.y;
  }
  return std::fabs(s) * 0.5;
}

bool corners_equal(const OrientedBox& a, const OrientedBox& b) {
  for (int i = 0; i < 4; ++i)
    if (a.corners[static_cast<size_t>(i)].x != b.corners[static_cast<size_t>(i)].x ||
        a.corners[static_cast<size_t>(i)].y != b.corners[static_cast<size_t>(i)].y)
      return false;
  return true;
}

bool corners_less(const OrientedBox& a, const OrientedBox& b) {
  for (int i = 0; i < 4; ++i) {
    const Vec2& p = a.corners[static_cast<size_t>(i)];
    const Vec2& q = b.corners[static_cast<size_t>(i)];
    if (p.x != q.x) return p.x < q.x;
    if (p.y != q.y) return p.y < q.y;
  }
  return false;
}

}  // namespace

double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  double area_a = obb_area(a);
  double area_b = obb_area(b);
  if (area_a <= 0.0 || area_b <= 0.0) throw GeometryError("rotated_iou: degenerate zero-area box");
  if (corners_equal(a, b)) return 1.0;

  // canonical argument order makes the float result exactly symmetric
  const OrientedBox& lo = corners_less(b, a) ? b : a;
  const OrientedBox& hi = corners_less(b, a) ? a : b;

  // shift to the joint centroid for translation-stable arithmetic
  Vec2 shift = (lo.center() + hi.center()) * 0.5;
  std::array<Vec2, 4> pa, pb;
  for (int i = 0; i < 4; ++i) {
    pa[static_cast<size_t>(i)] = lo.corners[static_cast<size_t>(i)] - shift;
    pb[static_cast<size_t>(i)] = hi.corners[static_cast<size_t>(i)] - shift;
  }

  Vec2 buf[24];
  int n = collect_intersection_points(pa, pb, buf);
  double inter = convex_points_area(buf, n);
  double uni = area_a + area_b - inter;
  double iou = inter / uni;
  if (iou < 0.0) iou = 0.0;
  if (iou > 1.0) iou = 1.0;
  return iou;
}

PairSpatialFeature pair_spatial_feature(const OrientedBox& subject, const OrientedBox& object,
                                        double image_width, double image_height) {
  if (!(image_width > 0.0) || !(image_height > 0.0))
    throw GeometryError("pair_spatial_feature: image dimensions must be positive");
  double as = obb_area(subject);
  double ao = obb_area(object);
  if (as <= 0.0 || ao <= 0.0) throw GeometryError("pair_spatial_feature: degenerate box");

  Vec2 cs = subject.center();
  Vec2 co = object.center();
  double diag = std::sqrt(image_width * image_width + image_height * image_height);
  double dist = std::sqrt(dot(co - cs, co - cs)) / diag;

  PairSpatialFeature f;
  f.v[0] = (co.x - cs.x) / image_width;
  f.v[1] = (co.y - cs.y) / image_height;
  f.v[2] = std::log(object.width() / subject.width());
  f.v[3] = std::log(object.height() / subject.height());
  f.v[4] = as / (image_width * image_height);
  f.v[5] = ao / (image_width * image_height);
  f.v[6] = rotated_iou(subject, object);
  f.v[7] = std::min(dist, 1.0);
  f.v[8] = wrap_angle_halfpi(object.angle() - subject.angle());
  for (double x : f.v)
    if (!std::isfinite(x)) throw GeometryError("pair_spatial_feature: non-finite component");
  return f;
}

Mat iou_matrix(const std::vector<OrientedBox>& a, const std::vector<OrientedBox>& b, Exec mode) {
  Mat out(static_cast<int>(a.size()), static_cast<int>(b.size()));
  int total = out.rows * out.cols;
  parallel_for(total, mode, [&](int k) {
    int i = k / out.cols;
    int j = k % out.cols;
    out.v[static_cast<size_t>(k)] = rotated_iou(a[static_cast<size_t>(i)], b[static_cast<size_t>(j)]);
  });
  return out;
}

Mat hbb_iou_matrix(const std::vector<AxisAlignedBox>& a, const std::vector<AxisAlignedBox>& b,
                   Exec mode) {
  Mat out(static_cast<int>(a.size()), static_cast<int>(b.size()));
  int total = out.rows * out.cols;
  parallel_for(total, mode, [&](int k) {
    int i = k / out.cols;
    int j = k % out.cols;
    out.v[static_cast<size_t>(k)] = hbb_iou(a[static_cast<size_t>(i)], b[static_cast<size_t>(j)]);
  });
  return out;
}

}  // namespace sgg::geom
