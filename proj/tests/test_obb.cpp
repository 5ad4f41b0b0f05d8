#include "sgg/obb.hpp"

#include <cmath>

#include "doctest.h"
#include "sgg/errors.hpp"
#include "sgg/rng.hpp"
#include "test_util.hpp"

using namespace sgg;
using geom::OrientedBox;
using geom::Vec2;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("area: unit square, rotated square, hand rectangle") {
  OrientedBox unit = OrientedBox::from_center(0.5, 0.5, 1, 1, 0);
  CHECK(geom::obb_area(unit) == doctest::Approx(1.0));
  for (double th : {0.3, 1.1, -0.7}) {
    OrientedBox rot = OrientedBox::from_center(3, 4, 1, 1, th);
    CHECK(geom::obb_area(rot) == doctest::Approx(1.0));
  }
  // shoelace by hand: (0,0)(10,0)(10,4)(0,4) -> 40
  OrientedBox rect = OrientedBox::from_corners({Vec2{0, 0}, {10, 0}, {10, 4}, {0, 4}});
  CHECK(geom::obb_area(rect) == doctest::Approx(40.0));
}

TEST_CASE("corner validation rejects bad quads") {
  CHECK_THROWS_AS(OrientedBox::from_corners({Vec2{0, 0}, {0, 4}, {10, 4}, {10, 0}}),
                  GeometryError);  // counter-clockwise
  CHECK_THROWS_AS(OrientedBox::from_corners({Vec2{0, 0}, {10, 0}, {5, 0}, {0, 4}}),
                  GeometryError);  // collinear / self-intersecting
  CHECK_THROWS_AS(OrientedBox::from_center(0, 0, 0, 1, 0), GeometryError);
}

TEST_CASE("center size angle round trip for rectangles") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    double cx = rng.uniform(-50, 50), cy = rng.uniform(-50, 50);
    double w = rng.uniform(1, 30), h = rng.uniform(1, 30);
    double th = rng.uniform(-3.1, 3.1);
    OrientedBox b = OrientedBox::from_center(cx, cy, w, h, th);
    OrientedBox r = OrientedBox::from_center(b.center().x, b.center().y, b.width(), b.height(),
                                             b.angle());
    // the normalized angle may flip the traversal start by two corners
    bool direct = true, shifted = true;
    for (int k = 0; k < 4; ++k) {
      auto close = [](Vec2 a, Vec2 bb) {
        return std::fabs(a.x - bb.x) < 1e-6 && std::fabs(a.y - bb.y) < 1e-6;
      };
      if (!close(b.corners[static_cast<size_t>(k)], r.corners[static_cast<size_t>(k)]))
        direct = false;
      if (!close(b.corners[static_cast<size_t>(k)], r.corners[static_cast<size_t>((k + 2) % 4)]))
        shifted = false;
    }
    CHECK((direct || shifted));
  }
}

TEST_CASE("angle wraps to the half-open interval") {
  CHECK(geom::wrap_angle_halfpi(kPi / 2) == doctest::Approx(kPi / 2));
  CHECK(geom::wrap_angle_halfpi(-kPi / 2) == doctest::Approx(kPi / 2));
  CHECK(geom::wrap_angle_halfpi(kPi) == doctest::Approx(0.0));
  CHECK(geom::wrap_angle_halfpi(2.0) == doctest::Approx(2.0 - kPi));
}

TEST_CASE("rotated iou basics") {
  OrientedBox a = OrientedBox::from_corners({Vec2{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  CHECK(geom::rotated_iou(a, a) == 1.0);  // identity, exactly

  OrientedBox far = OrientedBox::from_center(10, 10, 1, 1, 0.3);
  CHECK(geom::rotated_iou(a, far) == 0.0);

  // unit square vs itself shifted +0.5 in x: intersection 0.5, union 1.5
  OrientedBox shifted = OrientedBox::from_corners({Vec2{0.5, 0}, {1.5, 0}, {1.5, 1}, {0.5, 1}});
  CHECK(geom::rotated_iou(a, shifted) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(std::fabs(geom::rotated_iou(a, shifted) - 1.0 / 3.0) < 1e-9);
}

TEST_CASE("rotated iou is exactly symmetric and bounded on fuzzed pairs") {
  Rng rng(42);
  for (int i = 0; i < 300; ++i) {
    OrientedBox a = testutil::random_box(rng);
    OrientedBox b = testutil::random_box(rng);
    double ab = geom::rotated_iou(a, b);
    double ba = geom::rotated_iou(b, a);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("rotated iou matches the Sutherland-Hodgman oracle") {
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    OrientedBox a = testutil::random_box(rng);
    OrientedBox b = testutil::random_box(rng);
    double impl = geom::rotated_iou(a, b);
    double oracle = testutil::sh_iou(a, b);
    CHECK(std::fabs(impl - oracle) < 1e-9);
  }
}

TEST_CASE("rotated iou invariant to joint translation and rotation") {
  Rng rng(99);
  for (int i = 0; i < 50; ++i) {
    OrientedBox a = testutil::random_box(rng);
    OrientedBox b = testutil::random_box(rng);
    double base = geom::rotated_iou(a, b);

    Vec2 shift{rng.uniform(-500, 500), rng.uniform(-500, 500)};
    auto translate = [&](const OrientedBox& x) {
      std::array<Vec2, 4> c = x.corners;
      for (Vec2& p : c) p = p + shift;
      return OrientedBox::from_corners(c);
    };
    CHECK(std::fabs(geom::rotated_iou(translate(a), translate(b)) - base) < 1e-9);

    double phi = rng.uniform(0, 2 * kPi);
    double cp = std::cos(phi), sp = std::sin(phi);
    auto rotate = [&](const OrientedBox& x) {
      std::array<Vec2, 4> c = x.corners;
      for (Vec2& p : c) p = Vec2{cp * p.x - sp * p.y, sp * p.x + cp * p.y};
      return OrientedBox::from_corners(c);
    };
    CHECK(std::fabs(geom::rotated_iou(rotate(a), rotate(b)) - base) < 1e-6);
  }
}

TEST_CASE("axis aligned inputs reduce to classical iou") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    OrientedBox a = testutil::random_box(rng);
    OrientedBox b = testutil::random_box(rng);
    OrientedBox aa = OrientedBox::from_center(a.center().x, a.center().y, a.width(), a.height(), 0);
    OrientedBox bb = OrientedBox::from_center(b.center().x, b.center().y, b.width(), b.height(), 0);
    double rot = geom::rotated_iou(aa, bb);
    double cls = geom::hbb_iou(geom::obb_to_hbb(aa), geom::obb_to_hbb(bb));
    CHECK(std::fabs(rot - cls) < 1e-9);
  }
}

TEST_CASE("degenerate boxes are rejected by rotated_iou") {
  OrientedBox a = OrientedBox::from_center(0, 0, 1, 1, 0);
  OrientedBox zero = a;
  zero.corners = {Vec2{0, 0}, {1, 0}, {1, 0}, {0, 0}};  // built by hand, zero area
  CHECK_THROWS_AS(geom::rotated_iou(a, zero), GeometryError);
}

TEST_CASE("obb_to_hbb") {
  OrientedBox rect = OrientedBox::from_corners({Vec2{2, 3}, {8, 3}, {8, 7}, {2, 7}});
  geom::AxisAlignedBox h = geom::obb_to_hbb(rect);
  CHECK(h.x_min == 2);
  CHECK(h.y_min == 3);
  CHECK(h.x_max == 8);
  CHECK(h.y_max == 7);

  OrientedBox rot = OrientedBox::from_center(0, 0, 1, 1, kPi / 4);
  geom::AxisAlignedBox hr = geom::obb_to_hbb(rot);
  CHECK(hr.x_max - hr.x_min == doctest::Approx(std::sqrt(2.0)));
  CHECK(hr.y_max - hr.y_min == doctest::Approx(std::sqrt(2.0)));
  CHECK((hr.x_max + hr.x_min) / 2 == doctest::Approx(0.0));

  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    OrientedBox b = testutil::random_box(rng);
    geom::AxisAlignedBox hb = geom::obb_to_hbb(b);
    double eps = 1e-12;
    bool touch_l = false, touch_r = false, touch_t = false, touch_b = false;
    for (const Vec2& p : b.corners) {
      CHECK(p.x >= hb.x_min - eps);
      CHECK(p.x <= hb.x_max + eps);
      CHECK(p.y >= hb.y_min - eps);
      CHECK(p.y <= hb.y_max + eps);
      touch_l |= std::fabs(p.x - hb.x_min) < 1e-9;
      touch_r |= std::fabs(p.x - hb.x_max) < 1e-9;
      touch_t |= std::fabs(p.y - hb.y_min) < 1e-9;
      touch_b |= std::fabs(p.y - hb.y_max) < 1e-9;
    }
    CHECK(touch_l);
    CHECK(touch_r);
    CHECK(touch_t);
    CHECK(touch_b);
  }
}

TEST_CASE("pair spatial feature") {
  OrientedBox s = OrientedBox::from_center(100, 100, 20, 10, 0.2);

  SUBCASE("identical boxes") {
    geom::PairSpatialFeature f = geom::pair_spatial_feature(s, s, 1000, 800);
    CHECK(f.v[0] == 0.0);
    CHECK(f.v[1] == 0.0);
    CHECK(f.v[2] == 0.0);
    CHECK(f.v[3] == 0.0);
    CHECK(f.v[6] == 1.0);
    CHECK(f.v[7] == 0.0);
    CHECK(f.v[8] == 0.0);
  }

  SUBCASE("double width gives log 2") {
    OrientedBox o = OrientedBox::from_center(100, 100, 40, 10, 0.2);
    geom::PairSpatialFeature f = geom::pair_spatial_feature(s, o, 1000, 800);
    CHECK(f.v[2] == doctest::Approx(std::log(2.0)));
    CHECK(f.v[3] == doctest::Approx(0.0));
  }

  SUBCASE("disjoint distant boxes") {
    OrientedBox o = OrientedBox::from_center(900, 700, 20, 10, 0.2);
    geom::PairSpatialFeature f = geom::pair_spatial_feature(s, o, 1000, 800);
    CHECK(f.v[6] == 0.0);
    CHECK(f.v[7] > 0.0);
    CHECK(f.v[7] <= 1.0);
  }

  SUBCASE("degenerate image dims rejected") {
    CHECK_THROWS_AS(geom::pair_spatial_feature(s, s, 0, 10), GeometryError);
  }
}

TEST_CASE("iou matrix parallel path equals the serial reference") {
  Rng rng(13);
  std::vector<OrientedBox> a, b;
  for (int i = 0; i < 24; ++i) a.push_back(testutil::random_box(rng));
  for (int i = 0; i < 17; ++i) b.push_back(testutil::random_box(rng));
  Mat serial = geom::iou_matrix(a, b, Exec::serial);
  Mat parallel = geom::iou_matrix(a, b, Exec::parallel);
  REQUIRE(serial.v.size() == parallel.v.size());
  for (size_t i = 0; i < serial.v.size(); ++i) CHECK(serial.v[i] == parallel.v[i]);
}

TEST_CASE("monte carlo oracle agrees on a known case") {
  OrientedBox a = OrientedBox::from_corners({Vec2{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  OrientedBox b = OrientedBox::from_corners({Vec2{0.5, 0}, {1.5, 0}, {1.5, 1}, {0.5, 1}});
  CHECK(std::fabs(testutil::mc_iou(a, b, 1 << 20, 77) - 1.0 / 3.0) < 1e-2);
}
