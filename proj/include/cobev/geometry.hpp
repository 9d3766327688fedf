#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "cobev/error.hpp"

namespace cobev {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Point in the ego frame: x lateral-right, y forward, z up, origin on the
/// ground plane.
using EgoPoint = Vec3;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) raise(errc::domain_error, "intrinsics: focal must be > 0");
    if (!std::isfinite(cx) || !std::isfinite(cy))
      raise(errc::domain_error, "intrinsics: principal point must be finite");
  }
};

/// Calibration extrinsics in the usual world-to-camera form:
/// p_cam = rotation * p_ego + translation. The camera center in ego
/// coordinates is therefore -rotationᵀ * translation.
struct Extrinsics {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

namespace detail {

inline double orthonormality_deviation(const Mat3& r) {
  const Mat3 gram = r.transpose() * r - Mat3::Identity();
  double dev = gram.cwiseAbs().maxCoeff();
  dev = std::max(dev, std::abs(r.determinant() - 1.0));
  return dev;
}

}  // namespace detail

/// Camera rig with the derived frames used by the two lifting paths.
/// Camera frame: x right, y down, z forward (pinhole). Vertical frame:
/// origin at the optical center, +Y pointing straight down toward the
/// ground, +Z the horizontal projection of the optical axis.
struct CameraRig {
  Intrinsics intrinsics;
  Extrinsics extrinsics;

  double cam_height = 0.0;    // camera center height above the ground plane
  Vec3 camera_center;         // -Rᵀ t, in ego coordinates
  Mat3 rot_cam_to_ego;        // Rᵀ
  Mat3 cam_to_vertical;       // rotation camera -> vertical
  Mat3 vertical_to_ego_rot;   // rotation part of T_vertical_to_ego
  Mat3 intrinsics_inv;

  Vec3 vertical_to_ego(const Vec3& p_ver) const {
    return vertical_to_ego_rot * p_ver + camera_center;
  }
  Vec3 ego_to_vertical(const Vec3& p_ego) const {
    return vertical_to_ego_rot.transpose() * (p_ego - camera_center);
  }
};

inline CameraRig make_rig(const Intrinsics& intr, const Extrinsics& extr) {
  intr.validate();
  const double dev = detail::orthonormality_deviation(extr.rotation);
  if (dev > 1e-6)
    raise(errc::non_orthonormal_rotation,
          "make_rig: rotation deviates from orthonormal by " + std::to_string(dev));

  CameraRig rig;
  rig.intrinsics = intr;
  rig.extrinsics = extr;
  rig.rot_cam_to_ego = extr.rotation.transpose();
  rig.camera_center = -(rig.rot_cam_to_ego * extr.translation);
  rig.cam_height = rig.camera_center.z();
  if (!(rig.cam_height > 0.0))
    raise(errc::camera_below_ground,
          "make_rig: camera center at z=" + std::to_string(rig.cam_height));
  rig.intrinsics_inv = intr.matrix().inverse();

  // Vertical frame: +Y is ego "down" expressed in camera coordinates, so the
  // ego up-direction maps exactly onto -Y. +Z completes the frame along the
  // horizontal projection of the optical axis (camera x-axis fallback when
  // the camera looks straight up/down).
  const Vec3 up_cam = extr.rotation * Vec3(0, 0, 1);
  const Vec3 y_v = (-up_cam).normalized();
  Vec3 z_candidate = Vec3(0, 0, 1) - Vec3(0, 0, 1).dot(y_v) * y_v;
  if (z_candidate.norm() < 1e-9) z_candidate = Vec3(1, 0, 0) - Vec3(1, 0, 0).dot(y_v) * y_v;
  const Vec3 z_v = z_candidate.normalized();
  const Vec3 x_v = y_v.cross(z_v);
  Mat3 c2v;
  c2v.row(0) = x_v;
  c2v.row(1) = y_v;
  c2v.row(2) = z_v;
  rig.cam_to_vertical = c2v;
  rig.vertical_to_ego_rot = rig.rot_cam_to_ego * c2v.transpose();
  return rig;
}

/// Unit-z camera ray through pixel (u, v): I⁻¹ [u, v, 1]ᵀ.
inline Vec3 pixel_ray_cam(const CameraRig& rig, double u, double v) {
  return rig.intrinsics_inv * Vec3(u, v, 1.0);
}

/// Depth-based lifting: the ego point at camera depth d along pixel (u, v).
inline EgoPoint lift_depth(const CameraRig& rig, double u, double v, double d) {
  if (d < 0.0) raise(errc::negative_depth, "lift_depth: d < 0");
  return rig.rot_cam_to_ego * (rig.intrinsics_inv * Vec3(u * d, v * d, d)) + rig.camera_center;
}

enum class LiftStatus { ok, ray_parallel_to_plane, behind_camera, above_plane_degenerate };

struct HeightLift {
  EgoPoint point = EgoPoint::Zero();
  LiftStatus status = LiftStatus::ok;
  bool ok() const { return status == LiftStatus::ok; }
};

/// Height-based lifting via the vertical frame: intersects the pixel ray
/// with the horizontal plane at ego height h. Non-throwing; hot-path variant
/// used by frustum construction where failures become mask bits.
inline HeightLift lift_height_checked(const CameraRig& rig, double u, double v,
                                      double h) noexcept {
  HeightLift out;
  const Vec3 ray_cam = rig.intrinsics_inv * Vec3(u, v, 1.0);
  const Vec3 ray_ver = rig.cam_to_vertical * ray_cam;
  const double y_ver = ray_ver.y();
  if (std::abs(y_ver) < 1e-12 * ray_ver.norm()) {
    out.status = LiftStatus::ray_parallel_to_plane;
    return out;
  }
  // Plane at height h sits (cam_height - h) below the optical center along +Y.
  const double scale = (rig.cam_height - h) / y_ver;
  if (scale < 0.0) {
    out.status = (h >= rig.cam_height) ? LiftStatus::above_plane_degenerate
                                       : LiftStatus::behind_camera;
    return out;
  }
  out.point = rig.vertical_to_ego(scale * ray_ver);
  return out;
}

inline EgoPoint lift_height(const CameraRig& rig, double u, double v, double h) {
  const HeightLift r = lift_height_checked(rig, u, v, h);
  switch (r.status) {
    case LiftStatus::ok: return r.point;
    case LiftStatus::ray_parallel_to_plane:
      raise(errc::ray_parallel_to_plane, "lift_height: ray parallel to target plane");
    case LiftStatus::behind_camera:
      raise(errc::behind_camera, "lift_height: intersection behind camera");
    case LiftStatus::above_plane_degenerate:
      raise(errc::above_plane_degenerate, "lift_height: no forward intersection above camera");
  }
  return r.point;  // unreachable
}

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
};

/// Exact inverse of lift_depth. Throws BehindCamera for points with
/// non-positive camera depth.
inline Projection project(const CameraRig& rig, const EgoPoint& p) {
  const Vec3 p_cam = rig.extrinsics.rotation * p + rig.extrinsics.translation;
  if (!(p_cam.z() > 0.0)) raise(errc::behind_camera, "project: point behind image plane");
  Projection out;
  out.d = p_cam.z();
  out.u = rig.intrinsics.fx * p_cam.x() / p_cam.z() + rig.intrinsics.cx;
  out.v = rig.intrinsics.fy * p_cam.y() / p_cam.z() + rig.intrinsics.cy;
  return out;
}

/// Depth gap between an object's bottom (range D) and top (height h) as seen
/// from a camera at height H: D - sqrt(D² - 2Hh + h²).
inline double delta_d(double depth, double cam_height, double obj_height) {
  const double radicand =
      depth * depth - 2.0 * cam_height * obj_height + obj_height * obj_height;
  if (radicand < 0.0) raise(errc::domain_error, "delta_d: negative radicand");
  return depth - std::sqrt(radicand);
}

/// Sensitivity of the height-derived range ratio d/h to the camera mounting
/// height: -(1/h) [(D/h)² - 2H/h + 1]^(-1/2). Always negative on its domain.
inline double dh_sensitivity(double depth, double cam_height, double obj_height) {
  if (!(obj_height > 0.0)) raise(errc::domain_error, "dh_sensitivity: h must be > 0");
  const double q = depth / obj_height;
  const double radicand = q * q - 2.0 * cam_height / obj_height + 1.0;
  if (!(radicand > 0.0)) raise(errc::domain_error, "dh_sensitivity: radicand not positive");
  return -1.0 / (obj_height * std::sqrt(radicand));
}

// --- synthetic rig helpers -------------------------------------------------

/// Rotation about the camera x-axis by `pitch_down_rad` composed onto the
/// canonical roadside orientation (camera x along ego x, looking along +y,
/// pitched down toward the ground).
inline Extrinsics roadside_extrinsics(double cam_height, double pitch_down_rad,
                                      const Vec3& center_xy = Vec3::Zero()) {
  // Ego -> camera axes at zero pitch: x_cam = x_ego, y_cam = -z_ego, z_cam = y_ego.
  Mat3 base;
  base << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  const Mat3 pitch =
      Eigen::AngleAxisd(pitch_down_rad, Vec3::UnitX()).toRotationMatrix();
  Extrinsics e;
  e.rotation = pitch * base;
  const Vec3 center(center_xy.x(), center_xy.y(), cam_height);
  e.translation = -(e.rotation * center);
  return e;
}

}  // namespace cobev
