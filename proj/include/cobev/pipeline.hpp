#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "cobev/oracle.hpp"
#include "cobev/parallel.hpp"

namespace cobev {

enum class PipelineMode { depth_only, height_only, fused };

inline const char* pipeline_mode_name(PipelineMode m) {
  switch (m) {
    case PipelineMode::depth_only: return "depth";
    case PipelineMode::height_only: return "height";
    case PipelineMode::fused: return "fused";
  }
  return "?";
}

/// Everything the ground-truth verification pipeline needs besides the scene:
/// the synthetic sensor resolution, bin specs, BEV grid, fusion mode, and the
/// seeded fusion weights.
struct PipelineParams {
  std::size_t image_w = 17408;
  std::size_t image_h = 4096;
  std::size_t downsample = 16;
  DepthBinSpec depth_bins{};
  HeightBinSpec height_bins{};
  GridSpec grid{};
  PipelineMode mode = PipelineMode::fused;
  std::uint64_t cfs_seed = 1;
  std::size_t cfs_c_out = 1;
  std::size_t cfs_channel_reduction = 2;
  double iou_quantile = 0.9;
};

struct PipelineResult {
  VoxelFeature voxels_depth;
  VoxelFeature voxels_height;
  Tensor fused_voxels;  // f1 + f2 (fused mode only)
  Tensor bev;           // [C, Y, X]
  std::optional<double> iou;
  PoolStats stats_depth;
  PoolStats stats_height;
  std::size_t nonzero_cells = 0;
  std::size_t hit_rays = 0;
};

namespace detail {

/// Contiguous bin-range copy of a [N, Hf, Wf] distribution.
inline Tensor slice_bins(const Tensor& dist, std::size_t b0, std::size_t b1) {
  const std::size_t hw = dist.extent(1) * dist.extent(2);
  Tensor out({b1 - b0, dist.extent(1), dist.extent(2)});
  std::copy_n(dist.raw() + b0 * hw, (b1 - b0) * hw, out.raw());
  return out;
}

/// Lifts one branch chunk-by-chunk straight into the pooling accumulator so
/// the dense frustum never has to exist all at once.
inline VoxelFeature lift_and_pool(const Tensor& ctx, const Tensor& dist, const CameraRig& rig,
                                  std::span<const double> edges, LiftMode mode,
                                  std::size_t downsample, const GridSpec& grid,
                                  PoolStats* stats) {
  const std::size_t n = dist.extent(0);
  const std::size_t hw = dist.extent(1) * dist.extent(2);
  const std::size_t chunk = std::max<std::size_t>(1, (4u << 20) / std::max<std::size_t>(hw, 1));
  VoxelAccumulator acc(grid, ctx.extent(0));
  for (std::size_t b0 = 0; b0 < n; b0 += chunk) {
    const std::size_t b1 = std::min(n, b0 + chunk);
    const Tensor dist_part = slice_bins(dist, b0, b1);
    const std::span<const double> edge_part(edges.data() + b0, b1 - b0 + 1);
    acc.add(lift_frustum(ctx, dist_part, rig, edge_part, mode, downsample));
  }
  if (stats) *stats = acc.stats();
  return acc.finalize();
}

inline std::size_t count_active_cells(const Tensor& t) {
  const std::size_t plane = t.extent(t.rank() - 2) * t.extent(t.rank() - 1);
  const std::size_t layers = t.size() / plane;
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    bool any = false;
    for (std::size_t l = 0; l < layers && !any; ++l) any = t.raw()[l * plane + i] != 0.0f;
    n += any;
  }
  return n;
}

}  // namespace detail

/// Collapses the height slabs of a single branch to a plain BEV map [C, Y, X].
inline Tensor collapse_slabs(const VoxelFeature& v) {
  const std::size_t zc = v.data.extent(0), c = v.data.extent(1);
  const std::size_t plane = v.data.extent(2) * v.data.extent(3);
  Tensor out({c, v.data.extent(2), v.data.extent(3)});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (std::size_t z = 0; z < zc; ++z) acc += double(v.data.raw()[(z * c + ch) * plane + i]);
      out.raw()[ch * plane + i] = static_cast<float>(acc);
    }
  return out;
}

/// Ground-truth verification pipeline: analytic scene rendering, one-hot
/// distributions, dual lifting, partial-pillar pooling, fusion, and the
/// occupancy metric. `lift_rig`, when given, replaces the rig only in the
/// lifting step (mis-calibration study); rendering and distributions always
/// use the scene's true rig.
inline PipelineResult run_pipeline(const Scene& scene, const PipelineParams& params,
                                   const CameraRig* lift_rig = nullptr) {
  params.grid.validate();
  const CameraRig& rig_true = scene.rig;
  const CameraRig& rig_lift = lift_rig ? *lift_rig : scene.rig;

  const GtMaps maps = render_gt(scene, params.image_w, params.image_h, params.downsample);
  const auto d_edges = depth_bin_edges(params.depth_bins);
  const auto h_edges = height_bin_edges(params.height_bins);
  const auto [d_onehot, h_onehot] = gt_distributions(maps, d_edges, h_edges);
  const Tensor ctx = area_weight_context(maps, rig_true, params.downsample);

  PipelineResult out;
  for (std::size_t i = 0; i < maps.hit_mask.size(); ++i)
    out.hit_rays += maps.hit_mask.raw()[i] != 0.0f;

  const bool want_depth = params.mode != PipelineMode::height_only;
  const bool want_height = params.mode != PipelineMode::depth_only;
  if (want_depth)
    out.voxels_depth = detail::lift_and_pool(ctx, d_onehot, rig_lift, d_edges, LiftMode::depth,
                                             params.downsample, params.grid, &out.stats_depth);
  if (want_height)
    out.voxels_height = detail::lift_and_pool(ctx, h_onehot, rig_lift, h_edges, LiftMode::height,
                                              params.downsample, params.grid, &out.stats_height);

  Tensor metric_input;
  if (params.mode == PipelineMode::depth_only) {
    metric_input = above_ground_slice(out.voxels_depth, scene.ground_z);
    out.bev = collapse_slabs(out.voxels_depth);
    out.nonzero_cells = detail::count_active_cells(out.voxels_depth.data);
  } else if (params.mode == PipelineMode::height_only) {
    metric_input = above_ground_slice(out.voxels_height, scene.ground_z);
    out.bev = collapse_slabs(out.voxels_height);
    out.nonzero_cells = detail::count_active_cells(out.voxels_height.data);
  } else {
    const std::size_t c = ctx.extent(0);
    const CfsWeights w = make_cfs_weights(c, params.grid.zc(), params.cfs_c_out,
                                          params.cfs_channel_reduction, params.cfs_seed);
    const CfsStage1 s1 = cfs_stage1(out.voxels_depth, out.voxels_height, w);
    const CfsStage2 s2 = cfs_stage2(s1.f1, out.voxels_depth, out.voxels_height, w);
    out.fused_voxels = add(s1.f1, s2.f2);
    out.bev = cfs_collapse(s1.f1, s2.f2, w);
    VoxelFeature fused;
    fused.data = out.fused_voxels;
    fused.grid = params.grid;
    metric_input = above_ground_slice(fused, scene.ground_z);
    out.nonzero_cells = detail::count_active_cells(out.fused_voxels);
  }
  out.iou = bev_occupancy_iou(metric_input, scene, params.grid, params.iou_quantile);
  return out;
}

// --- robustness protocol ------------------------------------------------------

struct RobustnessRow {
  std::string factors;  // none | focal | roll | pitch | all
  double mean_iou = 0.0;
  double std_iou = 0.0;
  std::size_t trials = 0;
};

/// Table of occupancy-IoU statistics under camera disturbance. Rendering and
/// the one-hot distributions keep the true rig; only the lifting rig is
/// perturbed. Per-trial seeds are shared across factor rows (common random
/// numbers), and the zero-noise row is the exact unperturbed baseline.
inline std::vector<RobustnessRow> robustness_sweep(const Scene& scene, const NoiseSpec& spec,
                                                   std::size_t n_trials,
                                                   const PipelineParams& params) {
  if (n_trials < 1) raise(errc::domain_error, "robustness_sweep: n_trials must be >= 1");
  spec.validate();

  const PipelineResult baseline = run_pipeline(scene, params);
  std::vector<RobustnessRow> rows;
  rows.push_back({"none", baseline.iou.value_or(0.0), 0.0, 1});

  struct Factor {
    const char* name;
    bool focal, roll, pitch;
  };
  const Factor factors[] = {{"focal", true, false, false},
                            {"roll", false, true, false},
                            {"pitch", false, false, true},
                            {"all", true, true, true}};
  for (const Factor& f : factors) {
    std::vector<double> ious;
    ious.reserve(n_trials);
    for (std::size_t t = 0; t < n_trials; ++t) {
      NoiseSpec trial = spec;
      trial.enable_focal = f.focal && spec.enable_focal;
      trial.enable_roll = f.roll && spec.enable_roll;
      trial.enable_pitch = f.pitch && spec.enable_pitch;
      trial.seed = mix_seed(spec.seed, t + 1);
      const CameraRig rig = perturb_rig(scene.rig, trial);
      const PipelineResult r = run_pipeline(scene, params, &rig);
      ious.push_back(r.iou.value_or(0.0));
    }
    double mean = 0.0;
    for (double v : ious) mean += v;
    mean /= double(ious.size());
    double var = 0.0;
    for (double v : ious) var += (v - mean) * (v - mean);
    const double sd = ious.size() > 1 ? std::sqrt(var / double(ious.size() - 1)) : 0.0;
    rows.push_back({f.name, mean, sd, ious.size()});
  }
  return rows;
}

}  // namespace cobev
