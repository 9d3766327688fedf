#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cobev/error.hpp"
#include "cobev/lifting.hpp"
#include "cobev/rng.hpp"
#include "cobev/tensor.hpp"

namespace cobev {

/// BEV grid with partial-pillar height slabs: n_z_fine fine slices reduced by
/// `reduction_r` into Zc = n_z_fine / r coarse slabs.
struct GridSpec {
  double x_min = -51.2, x_max = 51.2;
  double y_min = 0.0, y_max = 102.4;
  double cell = 0.8;
  double z_min = -1.5, z_max = 3.0;
  std::size_t n_z_fine = 8;
  std::size_t reduction_r = 2;

  std::size_t nx() const { return std::size_t(std::llround((x_max - x_min) / cell)); }
  std::size_t ny() const { return std::size_t(std::llround((y_max - y_min) / cell)); }
  std::size_t zc() const { return n_z_fine / reduction_r; }
  double fine_dz() const { return (z_max - z_min) / double(n_z_fine); }

  void validate() const {
    if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min))
      raise(errc::domain_error, "grid: ranges must have positive length");
    if (!(cell > 0.0)) raise(errc::domain_error, "grid: cell must be > 0");
    const double fx = (x_max - x_min) / cell, fy = (y_max - y_min) / cell;
    if (std::abs(fx - std::round(fx)) > 1e-9 || std::abs(fy - std::round(fy)) > 1e-9)
      raise(errc::domain_error, "grid: cell must divide both ranges");
    if (n_z_fine == 0 || reduction_r == 0 || n_z_fine % reduction_r != 0)
      raise(errc::domain_error, "grid: n_z_fine must be a positive multiple of reduction_r");
  }
};

struct VoxelFeature {
  Tensor data;  // [Zc, C, Y, X]
  GridSpec grid;
};

struct PoolStats {
  std::size_t scattered = 0;
  std::size_t dropped_out_of_grid = 0;
  std::size_t masked = 0;
};

/// Scatter-sum accumulator behind voxel_pool. Points land in the fine
/// z-slice containing them; fine slices are reduced in groups of r at
/// finalize. All accumulation is in 64-bit, in point order, which keeps the
/// scatter deterministic; clouds may be fed in several chunks.
class VoxelAccumulator {
 public:
  VoxelAccumulator(const GridSpec& grid, std::size_t channels)
      : grid_(grid), c_(channels), fine_(grid.n_z_fine * channels * grid.ny() * grid.nx(), 0.0) {
    grid.validate();
  }

  void add(const FrustumCloud& cloud) {
    if (cloud.feats.extent(1) != c_)
      raise(errc::shape_mismatch, "voxel_pool: channel count changed between chunks");
    const std::size_t n = cloud.feats.extent(0);
    const std::size_t hf = cloud.feats.extent(2), wf = cloud.feats.extent(3);
    const std::size_t nx = grid_.nx(), ny = grid_.ny();
    const double fine_dz = grid_.fine_dz();
    const std::size_t hw = hf * wf;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t y = 0; y < hf; ++y)
        for (std::size_t x = 0; x < wf; ++x) {
          const std::size_t pix = (b * hf + y) * wf + x;
          if (cloud.mask.raw()[pix] == 0.0f) {
            ++stats_.masked;
            continue;
          }
          const float* p = cloud.coords.raw() + pix * 3;
          const double ix_f = std::floor((double(p[0]) - grid_.x_min) / grid_.cell);
          const double iy_f = std::floor((double(p[1]) - grid_.y_min) / grid_.cell);
          const double iz_f = std::floor((double(p[2]) - grid_.z_min) / fine_dz);
          if (ix_f < 0 || iy_f < 0 || iz_f < 0 || ix_f >= double(nx) || iy_f >= double(ny) ||
              iz_f >= double(grid_.n_z_fine)) {
            ++stats_.dropped_out_of_grid;
            continue;
          }
          const std::size_t ix = std::size_t(ix_f), iy = std::size_t(iy_f),
                            iz = std::size_t(iz_f);
          double* cell_base = fine_.data() + ((iz * c_) * ny + iy) * nx + ix;
          for (std::size_t c = 0; c < c_; ++c)
            cell_base[c * ny * nx] += double(cloud.feats.raw()[(b * c_ + c) * hw + y * wf + x]);
          ++stats_.scattered;
        }
  }

  const PoolStats& stats() const { return stats_; }

  VoxelFeature finalize() const {
    VoxelFeature out;
    out.grid = grid_;
    const std::size_t ny = grid_.ny(), nx = grid_.nx(), zc = grid_.zc();
    out.data = Tensor({zc, c_, ny, nx});
    const std::size_t plane = ny * nx;
    for (std::size_t z = 0; z < zc; ++z)
      for (std::size_t c = 0; c < c_; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
          double acc = 0.0;
          for (std::size_t r = 0; r < grid_.reduction_r; ++r)
            acc += fine_[((z * grid_.reduction_r + r) * c_ + c) * plane + i];
          out.data.raw()[(z * c_ + c) * plane + i] = static_cast<float>(acc);
        }
    return out;
  }

 private:
  GridSpec grid_;
  std::size_t c_;
  std::vector<double> fine_;
  PoolStats stats_;
};

inline VoxelFeature voxel_pool(const FrustumCloud& cloud, const GridSpec& grid,
                               PoolStats* stats = nullptr) {
  VoxelAccumulator acc(grid, cloud.feats.extent(1));
  acc.add(cloud);
  if (stats) *stats = acc.stats();
  return acc.finalize();
}

/// Learned parameters of the two-stage complementary feature selection.
struct CfsWeights {
  MlpLayer w1;         // 2C -> 2C / r_c, relu
  MlpLayer w2;         // 2C / r_c -> C
  Tensor conv7;        // [1, 2, 7, 7, 7]
  Tensor fuse_kernel;  // [C_out, C, Zc, 1, 1]
  std::uint64_t seed = 0;
};

inline CfsWeights make_cfs_weights(std::size_t channels, std::size_t zc, std::size_t c_out,
                                   std::size_t r_c, std::uint64_t seed) {
  if (r_c == 0 || 2 * channels % r_c != 0)
    raise(errc::shape_mismatch, "cfs weights: reduction ratio must divide 2C");
  std::mt19937_64 rng(seed);
  CfsWeights w;
  w.seed = seed;
  const std::size_t mid = std::max<std::size_t>(1, 2 * channels / r_c);
  w.w1 = detail::random_layer(mid, 2 * channels, Activation::relu, rng);
  w.w2 = detail::random_layer(channels, mid, Activation::none, rng);
  w.conv7 = Tensor({1, 2, 7, 7, 7});
  for (auto& v : w.conv7.data()) v = static_cast<float>(uniform_range(rng, -0.1, 0.1));
  w.fuse_kernel = Tensor({c_out, channels, zc, 1, 1});
  for (auto& v : w.fuse_kernel.data()) v = static_cast<float>(uniform_range(rng, -0.1, 0.1));
  return w;
}

namespace detail {

inline void require_aligned(const VoxelFeature& fd, const VoxelFeature& fh, const char* op) {
  if (!fd.data.same_shape(fh.data))
    raise(errc::shape_mismatch, std::string(op) + ": depth/height voxel shapes differ");
}

/// out = a[c] fd + (1 - a[c]) fh in 64-bit. Products of two 24-bit floats
/// are exact in double, so equal operands survive the final float cast
/// bit-exactly, a = 0.5 averages exactly, and swapping operands while
/// complementing the affinity commutes bitwise.
inline Tensor blend_by_channel(const Tensor& affinity, const Tensor& fd, const Tensor& fh) {
  require_same_shape(fd, fh, "blend_by_channel");
  const std::size_t zc = fd.extent(0), c_ch = fd.extent(1);
  const std::size_t plane = fd.extent(2) * fd.extent(3);
  Tensor out(fd.shape());
  for (std::size_t z = 0; z < zc; ++z)
    for (std::size_t c = 0; c < c_ch; ++c) {
      const double a = affinity.raw()[c];
      const double b = 1.0 - a;
      const std::size_t base = (z * c_ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        out.raw()[base + i] = static_cast<float>(a * double(fd.raw()[base + i]) +
                                                 b * double(fh.raw()[base + i]));
    }
  return out;
}

/// out = a[z,y,x] fd + (1 - a[z,y,x]) fh, affinity broadcast over channels.
inline Tensor blend_by_voxel(const Tensor& affinity, const Tensor& fd, const Tensor& fh) {
  require_same_shape(fd, fh, "blend_by_voxel");
  const std::size_t zc = fd.extent(0), c_ch = fd.extent(1);
  const std::size_t plane = fd.extent(2) * fd.extent(3);
  Tensor out(fd.shape());
  for (std::size_t z = 0; z < zc; ++z)
    for (std::size_t c = 0; c < c_ch; ++c) {
      const std::size_t base = (z * c_ch + c) * plane;
      const float* aff = affinity.raw() + z * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double a = aff[i];
        out.raw()[base + i] = static_cast<float>(a * double(fd.raw()[base + i]) +
                                                 (1.0 - a) * double(fh.raw()[base + i]));
      }
    }
  return out;
}

}  // namespace detail

struct CfsStage1 {
  Tensor f1;  // [Zc, C, Y, X]
  Tensor a1;  // [C], entries in (0,1)
};

/// First selection stage: global avg/max pooled context of the concatenated
/// features drives one affinity per channel.
inline CfsStage1 cfs_stage1(const VoxelFeature& fd, const VoxelFeature& fh,
                            const CfsWeights& w) {
  detail::require_aligned(fd, fh, "cfs_stage1");
  const Tensor cat = concat({&fd.data, &fh.data}, 1);     // [Zc, 2C, Y, X]
  const Tensor chan_first = permute(cat, {1, 0, 2, 3});   // [2C, Zc, Y, X]
  const Tensor g_a = mlp_apply(global_pool3d(chan_first, PoolMode::avg), {w.w1, w.w2});
  const Tensor g_m = mlp_apply(global_pool3d(chan_first, PoolMode::max), {w.w1, w.w2});
  CfsStage1 out;
  out.a1 = sigmoid(add(g_a, g_m));
  out.f1 = detail::blend_by_channel(out.a1, fd.data, fh.data);
  return out;
}

struct CfsStage2 {
  Tensor f2;  // [Zc, C, Y, X]
  Tensor a2;  // [Zc, Y, X], entries in (0,1)
};

/// Second selection stage: channel-pooled planes of f1 through the 7x7x7
/// convolution give one affinity per voxel.
inline CfsStage2 cfs_stage2(const Tensor& f1, const VoxelFeature& fd, const VoxelFeature& fh,
                            const CfsWeights& w) {
  detail::require_aligned(fd, fh, "cfs_stage2");
  if (!f1.same_shape(fd.data)) raise(errc::shape_mismatch, "cfs_stage2: f1 shape mismatch");
  const Tensor chan_first = permute(f1, {1, 0, 2, 3});          // [C, Zc, Y, X]
  const Tensor pooled = channel_pool(chan_first);               // [2, Zc, Y, X]
  const Tensor response = conv3d(pooled, w.conv7, {1, 1, 1}, Pad::same);  // [1, Zc, Y, X]
  CfsStage2 out;
  Tensor a2({f1.extent(0), f1.extent(2), f1.extent(3)});
  for (std::size_t i = 0; i < a2.size(); ++i) {
    const double x = response.raw()[i];
    a2.raw()[i] = static_cast<float>(1.0 / (1.0 + std::exp(-x)));
  }
  out.a2 = std::move(a2);
  out.f2 = detail::blend_by_voxel(out.a2, fd.data, fh.data);
  return out;
}

/// Height-collapsing tail of the fusion: skip-connected stage sum through
/// the z-strided valid convolution, squeezed to [C_out, Y, X].
inline Tensor cfs_collapse(const Tensor& f1, const Tensor& f2, const CfsWeights& w) {
  const Tensor sum = add(f1, f2);
  const Tensor chan_first = permute(sum, {1, 0, 2, 3});  // [C, Zc, Y, X]
  const std::size_t zc = chan_first.extent(1);
  if (w.fuse_kernel.extent(2) != zc)
    raise(errc::shape_mismatch, "cfs_collapse: fuse kernel depth must equal Zc");
  const Tensor bev4 = conv3d(chan_first, w.fuse_kernel, {zc, 1, 1}, Pad::valid);
  // z-extent is exactly 1 after the strided valid conv; squeeze it.
  Tensor bev({bev4.extent(0), bev4.extent(2), bev4.extent(3)});
  std::copy_n(bev4.raw(), bev4.size(), bev.raw());
  return bev;
}

/// Full CFS fusion: both selection stages, skip-connected sum, and the
/// height-collapsing strided convolution down to a 2D BEV map [C_out, Y, X].
inline Tensor cfs_fuse(const VoxelFeature& fd, const VoxelFeature& fh, const CfsWeights& w) {
  const CfsStage1 s1 = cfs_stage1(fd, fh, w);
  const CfsStage2 s2 = cfs_stage2(s1.f1, fd, fh, w);
  return cfs_collapse(s1.f1, s2.f2, w);
}

}  // namespace cobev
