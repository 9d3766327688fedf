#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cobev/geometry.hpp"
#include "cobev/rng.hpp"

using namespace cobev;

namespace {

constexpr double kPi = std::numbers::pi;

Intrinsics test_intrinsics() { return Intrinsics{1400.0, 1400.0, 768.0, 432.0}; }

/// DAIR-like roadside rig: camera 7 m up, pitched 20 degrees toward the road.
CameraRig dair_like_rig() {
  return make_rig(test_intrinsics(), roadside_extrinsics(7.0, 20.0 * kPi / 180.0));
}

/// Rig whose camera axes coincide with the ego axes (optical axis along ego
/// z). Bypasses make_rig: such a rig has no positive mounting height, but the
/// pure lifting formulas are still well defined on it.
CameraRig axis_aligned_rig() {
  CameraRig rig;
  rig.intrinsics = test_intrinsics();
  rig.extrinsics = Extrinsics{};
  rig.rot_cam_to_ego = Mat3::Identity();
  rig.camera_center = Vec3::Zero();
  rig.cam_height = 0.0;
  rig.intrinsics_inv = rig.intrinsics.matrix().inverse();
  rig.cam_to_vertical = Mat3::Identity();
  rig.vertical_to_ego_rot = Mat3::Identity();
  return rig;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  const double a = uniform_range(rng, -kPi, kPi);
  const double b = uniform_range(rng, -0.5, 0.5);
  const double c = uniform_range(rng, -kPi, kPi);
  return (Eigen::AngleAxisd(a, Vec3::UnitZ()) * Eigen::AngleAxisd(b, Vec3::UnitX()) *
          Eigen::AngleAxisd(c, Vec3::UnitY()))
      .toRotationMatrix();
}

}  // namespace

TEST_CASE("make_rig derives the camera center and height") {
  SUBCASE("identity rotation, translation (0,0,-7) puts the camera 7 m up") {
    CameraRig rig = make_rig(test_intrinsics(), Extrinsics{Mat3::Identity(), Vec3(0, 0, -7)});
    CHECK(rig.cam_height == doctest::Approx(7.0).epsilon(1e-12));
    CHECK((rig.camera_center - Vec3(0, 0, 7)).norm() < 1e-12);
  }

  SUBCASE("orthonormality violation of 1e-3 is rejected") {
    Mat3 r = Mat3::Identity();
    r(0, 1) = 1e-3;
    try {
      make_rig(test_intrinsics(), Extrinsics{r, Vec3(0, 0, -7)});
      FAIL("expected NonOrthonormalRotation");
    } catch (const Error& e) {
      CHECK(e.code() == errc::non_orthonormal_rotation);
    }
  }

  SUBCASE("camera at or below ground is rejected") {
    try {
      make_rig(test_intrinsics(), Extrinsics{Mat3::Identity(), Vec3(0, 0, 7)});
      FAIL("expected CameraBelowGround");
    } catch (const Error& e) {
      CHECK(e.code() == errc::camera_below_ground);
    }
  }

  SUBCASE("ego up maps exactly onto vertical -Y") {
    CameraRig rig = dair_like_rig();
    const Vec3 up_cam = rig.extrinsics.rotation * Vec3(0, 0, 1);
    const Vec3 up_ver = rig.cam_to_vertical * up_cam;
    CHECK((up_ver - Vec3(0, -1, 0)).norm() < 1e-12);
  }

  SUBCASE("vertical frame round-trips agree with the depth path") {
    CameraRig rig = dair_like_rig();
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
      const double u = uniform_range(rng, 0.0, 1536.0);
      const double v = uniform_range(rng, 0.0, 864.0);
      const double d = uniform_range(rng, 0.5, 120.0);
      const Vec3 p = lift_depth(rig, u, v, d);
      const Vec3 round = rig.vertical_to_ego(rig.ego_to_vertical(p));
      CHECK((round - p).norm() < 1e-9);
    }
  }
}

TEST_CASE("lift_depth") {
  SUBCASE("principal-point ray is the optical axis") {
    CameraRig rig = axis_aligned_rig();
    const Vec3 p = lift_depth(rig, rig.intrinsics.cx, rig.intrinsics.cy, 10.0);
    CHECK((p - Vec3(0, 0, 10)).norm() < 1e-9);
  }

  SUBCASE("zero depth degenerates to the camera center") {
    CameraRig rig = dair_like_rig();
    const Vec3 p = lift_depth(rig, 100.0, 200.0, 0.0);
    CHECK((p - rig.camera_center).norm() < 1e-12);
  }

  SUBCASE("pitched rig marches along the unit optical-axis ray") {
    CameraRig rig = dair_like_rig();
    const double th = 20.0 * kPi / 180.0;
    const Vec3 expect = rig.camera_center + 12.0 * Vec3(0.0, std::cos(th), -std::sin(th));
    const Vec3 p = lift_depth(rig, rig.intrinsics.cx, rig.intrinsics.cy, 12.0);
    CHECK((p - expect).norm() < 1e-9);
  }

  SUBCASE("negative depth throws") {
    CameraRig rig = dair_like_rig();
    try {
      lift_depth(rig, 0.0, 0.0, -1.0);
      FAIL("expected NegativeDepth");
    } catch (const Error& e) {
      CHECK(e.code() == errc::negative_depth);
    }
  }
}

TEST_CASE("lift_height") {
  CameraRig rig = dair_like_rig();

  SUBCASE("agrees with lift_depth at the same ray point") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
      const double u = uniform_range(rng, 0.0, 1536.0);
      const double v = uniform_range(rng, 500.0, 864.0);  // below-horizon rows
      const double d = uniform_range(rng, 1.0, 100.0);
      const Vec3 p_d = lift_depth(rig, u, v, d);
      if (p_d.z() >= rig.cam_height) continue;
      const Vec3 p_h = lift_height(rig, u, v, p_d.z());
      CHECK((p_h - p_d).norm() < 1e-9);
    }
  }

  SUBCASE("returned point sits at the requested height and reprojects") {
    const Vec3 p = lift_height(rig, 900.0, 700.0, 0.8);
    CHECK(std::abs(p.z() - 0.8) < 1e-9);
    const Projection pr = project(rig, p);
    CHECK(std::abs(pr.u - 900.0) < 1e-6);
    CHECK(std::abs(pr.v - 700.0) < 1e-6);
  }

  SUBCASE("principal ray of the pitched rig hits the ground at H/tan(pitch)") {
    const Vec3 p = lift_height(rig, rig.intrinsics.cx, rig.intrinsics.cy, 0.0);
    CHECK(std::abs(p.z()) < 1e-9);
    CHECK(p.y() == doctest::Approx(7.0 / std::tan(20.0 * kPi / 180.0)).epsilon(1e-9));
    CHECK(std::abs(p.x()) < 1e-9);
  }

  SUBCASE("horizontal ray against a lower plane fails") {
    CameraRig flat = make_rig(test_intrinsics(), roadside_extrinsics(7.0, 0.0));
    const HeightLift r =
        lift_height_checked(flat, flat.intrinsics.cx, flat.intrinsics.cy, 0.0);
    CHECK_FALSE(r.ok());
    CHECK((r.status == LiftStatus::ray_parallel_to_plane ||
           r.status == LiftStatus::behind_camera));
  }

  SUBCASE("upward ray against a lower plane is behind the camera") {
    // Top image row of a mildly pitched rig looks above the horizon.
    CameraRig mild = make_rig(test_intrinsics(), roadside_extrinsics(7.0, 10.0 * kPi / 180.0));
    const HeightLift r = lift_height_checked(mild, mild.intrinsics.cx, 0.0, 0.0);
    CHECK(r.status == LiftStatus::behind_camera);
  }

  SUBCASE("plane at/above the camera with a downward ray is degenerate") {
    const HeightLift r =
        lift_height_checked(rig, rig.intrinsics.cx, 800.0, rig.cam_height + 1.0);
    CHECK(r.status == LiftStatus::above_plane_degenerate);
  }
}

TEST_CASE("project") {
  CameraRig rig = dair_like_rig();

  SUBCASE("round-trips lift_depth on 1000 random triples") {
    std::mt19937_64 rng(11);
    double max_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double u = uniform_range(rng, 0.0, 1536.0);
      const double v = uniform_range(rng, 0.0, 864.0);
      const double d = uniform_range(rng, 0.1, 150.0);
      const Projection pr = project(rig, lift_depth(rig, u, v, d));
      max_err = std::max({max_err, std::abs(pr.u - u), std::abs(pr.v - v), std::abs(pr.d - d)});
    }
    CHECK(max_err < 1e-6);
  }

  SUBCASE("axis-aligned rig maps (0,0,10) to the principal point") {
    CameraRig rig0 = axis_aligned_rig();
    const Projection pr = project(rig0, Vec3(0, 0, 10));
    CHECK(pr.u == doctest::Approx(rig0.intrinsics.cx));
    CHECK(pr.v == doctest::Approx(rig0.intrinsics.cy));
    CHECK(pr.d == doctest::Approx(10.0));
  }

  SUBCASE("point behind the image plane throws") {
    try {
      project(rig, rig.camera_center - 5.0 * (rig.rot_cam_to_ego * Vec3(0, 0, 1)));
      FAIL("expected BehindCamera");
    } catch (const Error& e) {
      CHECK(e.code() == errc::behind_camera);
    }
  }
}

TEST_CASE("depth sensitivity delta_d") {
  SUBCASE("matches the closed form at D=100, H=7, h=1.5") {
    const double want = 100.0 - std::sqrt(100.0 * 100.0 - 2.0 * 7.0 * 1.5 + 1.5 * 1.5);
    CHECK(delta_d(100.0, 7.0, 1.5) == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(delta_d(100.0, 7.0, 1.5) - 0.09375) < 1e-4);
  }

  SUBCASE("object of zero height has zero gap") { CHECK(delta_d(50.0, 7.0, 0.0) == 0.0); }

  SUBCASE("gap shrinks monotonically as range grows") {
    double prev = delta_d(10.0, 7.0, 1.5);
    for (double d : {100.0, 1000.0, 10000.0}) {
      const double cur = delta_d(d, 7.0, 1.5);
      CHECK(cur < prev);
      CHECK(cur > 0.0);
      prev = cur;
    }
  }

  SUBCASE("negative radicand throws DomainError") {
    try {
      delta_d(1.0, 100.0, 50.0);
      FAIL("expected DomainError");
    } catch (const Error& e) {
      CHECK(e.code() == errc::domain_error);
    }
  }
}

TEST_CASE("height sensitivity dh_sensitivity") {
  SUBCASE("matches the closed form at D=100, H=7, h=1.5") {
    CHECK(std::abs(dh_sensitivity(100.0, 7.0, 1.5) - (-0.010009)) < 1e-5);
  }

  SUBCASE("always negative over a 10x10x10 grid") {
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        for (int k = 0; k < 10; ++k) {
          const double d = 10.0 + 190.0 * i / 9.0;
          const double cam_h = 4.0 + 6.0 * j / 9.0;
          const double h = 0.5 + 2.5 * k / 9.0;
          CHECK(dh_sensitivity(d, cam_h, h) < 0.0);
        }
  }

  SUBCASE("uncertainty ratio d/h grows as the mounting height drops") {
    // The negative derivative means d/h is decreasing in H, so the
    // height-to-range amplification is worst on low mounts.
    auto ratio = [](double cam_h) {
      return std::sqrt(50.0 * 50.0 - 2.0 * cam_h * 1.5 + 1.5 * 1.5) / 1.5;
    };
    CHECK(ratio(4.0) > ratio(7.0));
    CHECK(ratio(7.0) > ratio(10.0));
    CHECK(dh_sensitivity(50.0, 4.0, 1.5) < 0.0);
    CHECK(dh_sensitivity(50.0, 10.0, 1.5) < 0.0);
  }

  SUBCASE("matches a central finite difference of d/h over H") {
    const double eps = 1e-4;
    for (double d : {20.0, 60.0, 150.0})
      for (double cam_h : {4.5, 7.0, 9.5})
        for (double h : {0.8, 1.5, 2.5}) {
          auto ratio = [&](double hh) {
            return std::sqrt(d * d - 2.0 * hh * h + h * h) / h;
          };
          const double fd = (ratio(cam_h + eps) - ratio(cam_h - eps)) / (2.0 * eps);
          const double an = dh_sensitivity(d, cam_h, h);
          CHECK(std::abs(fd - an) / std::abs(an) < 1e-6);
        }
  }
}

TEST_CASE("cross-path consistency on random rigs") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    Extrinsics extr;
    extr.rotation = random_rotation(rng);
    const Vec3 center(uniform_range(rng, -5, 5), uniform_range(rng, -5, 5),
                      uniform_range(rng, 3, 10));
    extr.translation = -(extr.rotation * center);
    const CameraRig rig = make_rig(test_intrinsics(), extr);
    for (int i = 0; i < 50; ++i) {
      const double u = uniform_range(rng, 0.0, 1536.0);
      const double v = uniform_range(rng, 0.0, 864.0);
      const double d = uniform_range(rng, 0.5, 80.0);
      const Vec3 p_d = lift_depth(rig, u, v, d);
      const HeightLift r = lift_height_checked(rig, u, v, p_d.z());
      if (!r.ok()) continue;
      CHECK((r.point - p_d).norm() < 1e-9);
    }
  }
}
