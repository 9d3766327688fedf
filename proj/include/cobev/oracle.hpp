#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cobev/bevfusion.hpp"
#include "cobev/binning.hpp"
#include "cobev/box.hpp"
#include "cobev/error.hpp"
#include "cobev/geometry.hpp"
#include "cobev/parallel.hpp"
#include "cobev/rng.hpp"
#include "cobev/tensor.hpp"

namespace cobev {

/// Synthetic roadside scene: non-overlapping car-like cuboids on the ground
/// plane, observed by one rig.
struct Scene {
  std::vector<Box3D> boxes;
  CameraRig rig;
  double ground_z = 0.0;
};

struct PlacementRegion {
  double x_min, x_max, y_min, y_max;
};

/// Rejection-sampled box layout with car-like dimensions; deterministic per
/// seed. Throws PlacementFailure after 1e4 rejected draws.
inline Scene synth_scene(std::uint64_t seed, std::size_t n_boxes, const CameraRig& rig,
                         const GridSpec& grid,
                         std::optional<PlacementRegion> region = std::nullopt) {
  Scene scene;
  scene.rig = rig;
  const PlacementRegion r =
      region.value_or(PlacementRegion{grid.x_min, grid.x_max, grid.y_min, grid.y_max});
  std::mt19937_64 rng(seed);
  std::size_t rejections = 0;
  while (scene.boxes.size() < n_boxes) {
    Box3D box;
    box.l = uniform_range(rng, 3.5, 5.5);
    box.w = uniform_range(rng, 1.6, 2.1);
    box.h = uniform_range(rng, 1.4, 1.8);
    box.theta = uniform_range(rng, -std::numbers::pi, std::numbers::pi);
    box.z = 0.0;
    // Keep the whole rotated footprint inside the placement region.
    const double margin = 0.5 * std::hypot(box.l, box.w);
    if (r.x_max - r.x_min < 2 * margin || r.y_max - r.y_min < 2 * margin)
      raise(errc::placement_failure, "synth_scene: region smaller than a single box");
    box.x = uniform_range(rng, r.x_min + margin, r.x_max - margin);
    box.y = uniform_range(rng, r.y_min + margin, r.y_max - margin);
    bool clear = true;
    for (const Box3D& other : scene.boxes)
      if (footprints_overlap(box, other)) {
        clear = false;
        break;
      }
    if (clear) {
      scene.boxes.push_back(box);
    } else if (++rejections >= 10000) {
      raise(errc::placement_failure, "synth_scene: gave up after 10000 rejections");
    }
  }
  return scene;
}

/// Analytic first-hit maps over the feature grid: camera-z depth, ego-z
/// height, and a hit mask (sky rays miss).
struct GtMaps {
  Tensor depth;     // [Hf, Wf]
  Tensor height;    // [Hf, Wf]
  Tensor hit_mask;  // [Hf, Wf], 1 = hit
};

namespace detail {

/// Oriented slab test in the box frame. Returns the smallest positive ray
/// parameter, if any; the parameter equals camera depth when dir has unit
/// camera z.
inline std::optional<double> ray_box_hit(const Vec3& origin, const Vec3& dir, const Box3D& box) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const Vec3 rel(origin.x() - box.x, origin.y() - box.y, origin.z() - (box.z + 0.5 * box.h));
  const Vec3 o(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
  const Vec3 d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
  const double half[3] = {0.5 * box.l, 0.5 * box.w, 0.5 * box.h};
  double t_near = -1e300, t_far = 1e300;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (std::abs(o[k]) > half[k]) return std::nullopt;
      continue;
    }
    double t0 = (-half[k] - o[k]) / d[k];
    double t1 = (half[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_far <= 0.0) return std::nullopt;
  return t_near > 0.0 ? t_near : t_far;
}

}  // namespace detail

inline GtMaps render_gt(const Scene& scene, std::size_t image_w, std::size_t image_h,
                        std::size_t downsample) {
  if (downsample == 0 || image_w % downsample != 0 || image_h % downsample != 0)
    raise(errc::domain_error, "render_gt: downsample must divide the image extents");
  const std::size_t wf = image_w / downsample, hf = image_h / downsample;
  GtMaps maps;
  maps.depth = Tensor({hf, wf});
  maps.height = Tensor({hf, wf});
  maps.hit_mask = Tensor({hf, wf});
  const CameraRig& rig = scene.rig;
  parallel_chunks(0, hf, [&](std::size_t y_begin, std::size_t y_end) {
    for (std::size_t y = y_begin; y < y_end; ++y) {
      const double v = double(downsample) * (double(y) + 0.5);
      for (std::size_t x = 0; x < wf; ++x) {
        const double u = double(downsample) * (double(x) + 0.5);
        // dir has unit camera z, so the ray parameter is the camera depth.
        const Vec3 dir = rig.rot_cam_to_ego * pixel_ray_cam(rig, u, v);
        double best = 1e300;
        if (dir.z() < -1e-12) {
          const double s_ground = (scene.ground_z - rig.camera_center.z()) / dir.z();
          if (s_ground > 0.0) best = s_ground;
        }
        for (const Box3D& box : scene.boxes) {
          const auto hit = detail::ray_box_hit(rig.camera_center, dir, box);
          if (hit && *hit < best) best = *hit;
        }
        if (best < 1e300) {
          maps.depth(y, x) = static_cast<float>(best);
          maps.height(y, x) = static_cast<float>(rig.camera_center.z() + best * dir.z());
          maps.hit_mask(y, x) = 1.0f;
        }
      }
    }
  });
  return maps;
}

/// One-hot bin distributions from the ground-truth maps (clamp-mode lookup);
/// missed rays give all-zero columns.
inline std::pair<Tensor, Tensor> gt_distributions(const GtMaps& maps,
                                                  std::span<const double> depth_edges,
                                                  std::span<const double> height_edges) {
  const std::size_t hf = maps.depth.extent(0), wf = maps.depth.extent(1);
  Tensor d_onehot({depth_edges.size() - 1, hf, wf});
  Tensor h_onehot({height_edges.size() - 1, hf, wf});
  for (std::size_t y = 0; y < hf; ++y)
    for (std::size_t x = 0; x < wf; ++x) {
      if (maps.hit_mask(y, x) == 0.0f) continue;
      const std::size_t db = value_to_bin(maps.depth(y, x), depth_edges, BinMode::clamp).index;
      const std::size_t hb = value_to_bin(maps.height(y, x), height_edges, BinMode::clamp).index;
      d_onehot(db, y, x) = 1.0f;
      h_onehot(hb, y, x) = 1.0f;
    }
  return {std::move(d_onehot), std::move(h_onehot)};
}

/// Per-ray surface-area weights [1, Hf, Wf]: the BEV-plane (footprint) area
/// one feature cell covers on the surface it actually hits, estimated by
/// central differences of the neighboring hit points. Horizontal surfaces get
/// their true ground area, vertical faces get ~zero footprint area. Using
/// these as the lifting context makes pooled cell mass approximate covered
/// footprint area, so a single activity threshold works across the range.
inline Tensor area_weight_context(const GtMaps& maps, const CameraRig& rig,
                                  std::size_t downsample) {
  const std::size_t hf = maps.depth.extent(0), wf = maps.depth.extent(1);
  // Reconstruct the hit points once.
  std::vector<double> px(hf * wf), py(hf * wf);
  parallel_chunks(0, hf, [&](std::size_t y_begin, std::size_t y_end) {
    for (std::size_t y = y_begin; y < y_end; ++y) {
      const double v = double(downsample) * (double(y) + 0.5);
      for (std::size_t x = 0; x < wf; ++x) {
        if (maps.hit_mask(y, x) == 0.0f) continue;
        const double u = double(downsample) * (double(x) + 0.5);
        const Vec3 p = lift_depth(rig, u, v, maps.depth(y, x));
        px[y * wf + x] = p.x();
        py[y * wf + x] = p.y();
      }
    }
  });
  Tensor ctx({1, hf, wf});
  // Differences must stay on one surface: at silhouettes (depth jumps) fall
  // back to the continuous side, or give up on the pixel.
  constexpr double kJump = 1.5;  // meters of depth discontinuity
  for (std::size_t y = 1; y + 1 < hf; ++y)
    for (std::size_t x = 1; x + 1 < wf; ++x) {
      const std::size_t i = y * wf + x;
      if (maps.hit_mask(y, x) == 0.0f) continue;
      const double d0 = maps.depth(y, x);
      auto diff = [&](std::size_t i_minus, std::size_t i_plus, float m_minus, float m_plus,
                      double d_minus, double d_plus, double& dx, double& dy) {
        const bool ok_minus = m_minus != 0.0f && std::abs(d_minus - d0) < kJump;
        const bool ok_plus = m_plus != 0.0f && std::abs(d_plus - d0) < kJump;
        if (ok_minus && ok_plus) {
          dx = 0.5 * (px[i_plus] - px[i_minus]);
          dy = 0.5 * (py[i_plus] - py[i_minus]);
        } else if (ok_plus) {
          dx = px[i_plus] - px[i];
          dy = py[i_plus] - py[i];
        } else if (ok_minus) {
          dx = px[i] - px[i_minus];
          dy = py[i] - py[i_minus];
        } else {
          return false;
        }
        return true;
      };
      double ax, ay, bx, by;
      if (!diff(i - 1, i + 1, maps.hit_mask(y, x - 1), maps.hit_mask(y, x + 1),
                maps.depth(y, x - 1), maps.depth(y, x + 1), ax, ay))
        continue;
      if (!diff(i - wf, i + wf, maps.hit_mask(y - 1, x), maps.hit_mask(y + 1, x),
                maps.depth(y - 1, x), maps.depth(y + 1, x), bx, by))
        continue;
      ctx(0, y, x) = static_cast<float>(std::abs(ax * by - ay * bx));
    }
  return ctx;
}

/// Slabs of the partial-pillar feature that lie fully above the ground
/// plane; the metric below uses this slice so that road returns do not
/// drown out object mass.
inline Tensor above_ground_slice(const VoxelFeature& v, double ground_z = 0.0) {
  const GridSpec& g = v.grid;
  const std::size_t zc = g.zc();
  const double coarse_dz = g.fine_dz() * double(g.reduction_r);
  std::size_t z0 = zc;
  for (std::size_t z = 0; z < zc; ++z)
    if (g.z_min + double(z) * coarse_dz > ground_z + 1e-9) {
      z0 = z;
      break;
    }
  const std::size_t c_ch = v.data.extent(1), ny = v.data.extent(2), nx = v.data.extent(3);
  if (z0 >= zc) return Tensor({1, c_ch, ny, nx});
  Tensor out({zc - z0, c_ch, ny, nx});
  std::copy_n(v.data.raw() + z0 * c_ch * ny * nx, out.size(), out.raw());
  return out;
}

/// Rasterized union of box footprints on the BEV grid: a cell belongs to the
/// footprint when at least half its area is covered.
inline Tensor footprint_union_mask(std::span<const Box3D> boxes, const GridSpec& grid) {
  const std::size_t ny = grid.ny(), nx = grid.nx();
  Tensor mask({ny, nx});
  const double half_cell = 0.5 * grid.cell * grid.cell;
  for (const Box3D& box : boxes) {
    // Bounding window of the rotated footprint.
    const auto corners = box.footprint_corners();
    double bx0 = 1e300, bx1 = -1e300, by0 = 1e300, by1 = -1e300;
    for (const auto& c : corners) {
      bx0 = std::min(bx0, c[0]);
      bx1 = std::max(bx1, c[0]);
      by0 = std::min(by0, c[1]);
      by1 = std::max(by1, c[1]);
    }
    const auto clampi = [](double v, std::size_t n) {
      return std::size_t(std::clamp(v, 0.0, double(n) - 1.0));
    };
    const std::size_t ix0 = clampi(std::floor((bx0 - grid.x_min) / grid.cell), nx);
    const std::size_t ix1 = clampi(std::floor((bx1 - grid.x_min) / grid.cell), nx);
    const std::size_t iy0 = clampi(std::floor((by0 - grid.y_min) / grid.cell), ny);
    const std::size_t iy1 = clampi(std::floor((by1 - grid.y_min) / grid.cell), ny);
    for (std::size_t iy = iy0; iy <= iy1; ++iy)
      for (std::size_t ix = ix0; ix <= ix1; ++ix) {
        const double x0 = grid.x_min + double(ix) * grid.cell;
        const double y0 = grid.y_min + double(iy) * grid.cell;
        if (footprint_cell_area(box, x0, x0 + grid.cell, y0, y0 + grid.cell) >= half_cell)
          mask(iy, ix) = 1.0f;
      }
  }
  return mask;
}

/// Occupancy IoU between thresholded BEV activity and the rasterized box
/// footprints. Activity is the per-cell L2 norm over every non-spatial axis;
/// the threshold sits at 0.4x the `threshold_quantile` quantile of the
/// nonzero activities (the quantile locates the occupied-cell plateau, the
/// factor accepts cells down to roughly half coverage, matching the
/// rasterization rule). Returns nullopt for scenes without boxes.
inline std::optional<double> bev_occupancy_iou(const Tensor& bev, const Scene& scene,
                                               const GridSpec& grid,
                                               double threshold_quantile = 0.9) {
  if (bev.rank() < 2) raise(errc::shape_mismatch, "bev_occupancy_iou: rank must be >= 2");
  const std::size_t ny = bev.extent(bev.rank() - 2), nx = bev.extent(bev.rank() - 1);
  if (ny != grid.ny() || nx != grid.nx())
    raise(errc::shape_mismatch, "bev_occupancy_iou: spatial extents do not match the grid");
  if (scene.boxes.empty()) return std::nullopt;

  const std::size_t plane = ny * nx;
  const std::size_t layers = bev.size() / plane;
  std::vector<double> activity(plane, 0.0);
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = bev.raw()[l * plane + i];
      activity[i] += v * v;
    }
  for (double& a : activity) a = std::sqrt(a);

  std::vector<double> nonzero;
  nonzero.reserve(plane);
  for (double a : activity)
    if (a > 0.0) nonzero.push_back(a);

  double threshold = std::numeric_limits<double>::infinity();
  if (!nonzero.empty()) {
    std::sort(nonzero.begin(), nonzero.end());
    const double pos = threshold_quantile * double(nonzero.size() - 1);
    const std::size_t lo = std::size_t(pos);
    const double frac = pos - double(lo);
    const double q = lo + 1 < nonzero.size()
                         ? nonzero[lo] * (1.0 - frac) + nonzero[lo + 1] * frac
                         : nonzero[lo];
    threshold = 0.4 * q;
  }

  const Tensor fp = footprint_union_mask(scene.boxes, grid);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const bool in_fp = fp.raw()[i] != 0.0f;
    const bool active = activity[i] >= threshold;
    inter += (active && in_fp);
    uni += (active || in_fp);
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

inline std::optional<double> bev_occupancy_iou(const VoxelFeature& v, const Scene& scene,
                                               double threshold_quantile = 0.9) {
  return bev_occupancy_iou(v.data, scene, v.grid, threshold_quantile);
}

// --- complementarity sweeps --------------------------------------------------

/// BEV placement error of a reference point at the given forward distance
/// when its exact depth (resp. height) is quantized to the bin grid before
/// lifting.
inline double placement_error(const CameraRig& rig, double distance, LiftMode mode,
                              std::span<const double> edges, double ref_height) {
  const EgoPoint target(0.0, distance, ref_height);
  const Projection proj = project(rig, target);
  EgoPoint lifted;
  if (mode == LiftMode::depth) {
    const double q = bin_center(value_to_bin(proj.d, edges, BinMode::clamp).index, edges);
    lifted = lift_depth(rig, proj.u, proj.v, q);
  } else {
    const double q = bin_center(value_to_bin(ref_height, edges, BinMode::clamp).index, edges);
    lifted = lift_height(rig, proj.u, proj.v, q);
  }
  return std::hypot(lifted.x() - target.x(), lifted.y() - target.y());
}

struct RangeSweepRow {
  double distance;
  double error;
};

/// Placement error of a car-roof reference point (default 1.56 m) across the
/// given distances under bin quantization.
inline std::vector<RangeSweepRow> range_sweep(const CameraRig& rig,
                                              std::span<const double> distances, LiftMode mode,
                                              std::span<const double> edges,
                                              double ref_height = 1.56) {
  std::vector<RangeSweepRow> rows;
  rows.reserve(distances.size());
  for (double d : distances) rows.push_back({d, placement_error(rig, d, mode, edges, ref_height)});
  return rows;
}

// --- camera noise -------------------------------------------------------------

/// Roadside camera disturbance model: multiplicative focal noise N(1, sigma)
/// and additive roll/pitch noise N(0, sigma_deg) degrees. Each factor draws
/// from its own seed-derived stream, so enabling one factor never changes
/// another factor's draw (common random numbers across factor subsets).
struct NoiseSpec {
  double focal_sigma = 0.2;
  double angle_sigma_deg = 1.67;
  bool enable_focal = true;
  bool enable_roll = true;
  bool enable_pitch = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (focal_sigma < 0.0 || angle_sigma_deg < 0.0)
      raise(errc::domain_error, "noise: sigmas must be >= 0");
  }

  bool is_identity() const {
    return !(enable_focal && focal_sigma > 0.0) && !(enable_roll && angle_sigma_deg > 0.0) &&
           !(enable_pitch && angle_sigma_deg > 0.0);
  }
};

inline CameraRig perturb_rig(const CameraRig& rig, const NoiseSpec& spec) {
  spec.validate();
  if (spec.is_identity()) return rig;

  std::mt19937_64 rng_focal(mix_seed(spec.seed, 1));
  std::mt19937_64 rng_roll(mix_seed(spec.seed, 2));
  std::mt19937_64 rng_pitch(mix_seed(spec.seed, 3));
  std::normal_distribution<double> focal_dist(1.0, spec.focal_sigma > 0 ? spec.focal_sigma : 1.0);
  std::normal_distribution<double> angle_dist(0.0,
                                              spec.angle_sigma_deg > 0 ? spec.angle_sigma_deg : 1.0);
  constexpr double kDegToRad = std::numbers::pi / 180.0;

  for (int attempt = 0; attempt < 100; ++attempt) {
    double scale = 1.0;
    double roll = 0.0, pitch = 0.0;
    if (spec.enable_focal && spec.focal_sigma > 0.0)
      scale = std::max(0.1, focal_dist(rng_focal));
    if (spec.enable_roll && spec.angle_sigma_deg > 0.0) roll = angle_dist(rng_roll) * kDegToRad;
    if (spec.enable_pitch && spec.angle_sigma_deg > 0.0)
      pitch = angle_dist(rng_pitch) * kDegToRad;

    Intrinsics intr = rig.intrinsics;
    intr.fx *= scale;
    intr.fy *= scale;
    // Camera-frame rotation about the optical center: pitch about camera x,
    // roll about the optical axis. The camera center is preserved.
    const Mat3 wobble = (Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
                         Eigen::AngleAxisd(roll, Vec3::UnitZ()))
                            .toRotationMatrix();
    Extrinsics extr;
    extr.rotation = wobble * rig.extrinsics.rotation;
    extr.translation = wobble * rig.extrinsics.translation;
    try {
      return make_rig(intr, extr);
    } catch (const Error&) {
      continue;  // re-draw
    }
  }
  raise(errc::camera_below_ground, "perturb_rig: no valid rig after 100 redraws");
}

}  // namespace cobev
