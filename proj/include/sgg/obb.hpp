#pragma once

#include <array>
#include <vector>

#include "sgg/matrix.hpp"
#include "sgg/parallel.hpp"

namespace sgg::geom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// Angle wrapped to (-pi/2, pi/2]; rectangles are symmetric under a 180-degree
// edge flip so orientation carries only that much information.
double wrap_angle_halfpi(double theta);

// Convex quadrilateral in pixel coordinates, y-down (origin top-left).
// Corners are stored clockwise as seen on screen, which makes the raw
// shoelace sum positive (it would be negative if y were flipped to point up).
struct OrientedBox {
  std::array<Vec2, 4> corners;

  // validates: simple convex quadrilateral, clockwise order, positive area
  static OrientedBox from_corners(const std::array<Vec2, 4>& pts);
  // rectangle centered at (cx, cy), width along direction theta
  static OrientedBox from_center(double cx, double cy, double w, double h, double theta);

  Vec2 center() const;
  double width() const;   // length of the first edge
  double height() const;  // length of the second edge
  double angle() const;   // first-edge direction wrapped to (-pi/2, pi/2]
};

struct AxisAlignedBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

double obb_area(const OrientedBox& b);
double signed_area(const std::array<Vec2, 4>& pts);

// Exact convex-polygon intersection over union. Symmetric bit-for-bit in its
// arguments and returns exactly 1.0 when the corner arrays coincide.
double rotated_iou(const OrientedBox& a, const OrientedBox& b);

AxisAlignedBox obb_to_hbb(const OrientedBox& b);
double hbb_iou(const AxisAlignedBox& a, const AxisAlignedBox& b);
double hbb_area(const AxisAlignedBox& b);

bool contains_point(const OrientedBox& b, Vec2 p);

// Spatial half of the pair feature fed to pair scoring.
struct PairSpatialFeature {
  static constexpr int kDim = 9;
  // [dx/W, dy/H, log w ratio, log h ratio, subject area frac, object area
  //  frac, rotated IoU, center distance / diagonal, wrapped angle difference]
  std::array<double, kDim> v{};
};

PairSpatialFeature pair_spatial_feature(const OrientedBox& subject, const OrientedBox& object,
                                        double image_width, double image_height);

// Pairwise IoU kernel. Writes each (i, j) slot independently, so the serial
// and parallel paths produce identical bytes.
Mat iou_matrix(const std::vector<OrientedBox>& a, const std::vector<OrientedBox>& b,
               Exec mode = Exec::serial);
Mat hbb_iou_matrix(const std::vector<AxisAlignedBox>& a, const std::vector<AxisAlignedBox>& b,
                   Exec mode = Exec::serial);

}  // namespace sgg::geom
