#pragma once

#include <stdexcept>
#include <string>

namespace cobev {

enum class errc {
  // geometry
  non_orthonormal_rotation,
  camera_below_ground,
  negative_depth,
  ray_parallel_to_plane,
  behind_camera,
  above_plane_degenerate,
  domain_error,
  // binning
  out_of_range,
  index_out_of_range,
  // tensor
  shape_mismatch,
  axis_out_of_range,
  // distillation
  length_mismatch,
  probability_out_of_range,
  negative_component,
  // oracle
  placement_failure,
  // configuration / files
  config_error,
  file_error,
};

/// Single exception type for the whole library; `code()` identifies the
/// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw Error(code, what); }

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::non_orthonormal_rotation: return "NonOrthonormalRotation";
    case errc::camera_below_ground: return "CameraBelowGround";
    case errc::negative_depth: return "NegativeDepth";
    case errc::ray_parallel_to_plane: return "RayParallelToPlane";
    case errc::behind_camera: return "BehindCamera";
    case errc::above_plane_degenerate: return "AbovePlaneDegenerate";
    case errc::domain_error: return "DomainError";
    case errc::out_of_range: return "OutOfRange";
    case errc::index_out_of_range: return "IndexOutOfRange";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::axis_out_of_range: return "AxisOutOfRange";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::probability_out_of_range: return "ProbabilityOutOfRange";
    case errc::negative_component: return "NegativeComponent";
    case errc::placement_failure: return "PlacementFailure";
    case errc::config_error: return "ConfigError";
    case errc::file_error: return "FileError";
  }
  return "UnknownError";
}

}  // namespace cobev
