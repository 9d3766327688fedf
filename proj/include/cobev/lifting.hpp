#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cobev/binning.hpp"
#include "cobev/error.hpp"
#include "cobev/geometry.hpp"
#include "cobev/parallel.hpp"
#include "cobev/rng.hpp"
#include "cobev/tensor.hpp"
#include "cobev/tensor_io.hpp"

namespace cobev {

struct ToyHeadDims {
  std::size_t c_feat = 8;    // image feature channels C
  std::size_t c_cam = 16;    // camera embedding width
  std::size_t c_ctx = 8;     // context channels
  std::size_t n_depth = 256;
  std::size_t n_height = 64;
};

/// Seeded stand-ins for the trained lifting heads. The pipeline invariants
/// they feed are weight-agnostic; weights come from a seed or a CBT1
/// container directory.
struct ToyHeadWeights {
  ToyHeadDims dims;
  std::vector<MlpLayer> cam_mlp;  // 21 -> c_cam -> c_cam
  MlpLayer se_depth;              // c_cam -> c_feat, sigmoid gate applied at use
  MlpLayer se_height;
  MlpLayer se_context;
  MlpLayer head_depth;   // c_feat -> n_depth, per pixel
  MlpLayer head_height;  // c_feat -> n_height
  MlpLayer head_context; // c_feat -> c_ctx
  std::uint64_t seed = 0;
};

namespace detail {

inline Tensor random_mat(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(uniform_range(rng, -0.1, 0.1));
  return t;
}

inline Tensor random_vec(std::size_t n, std::mt19937_64& rng) {
  Tensor t({n});
  for (auto& v : t.data()) v = static_cast<float>(uniform_range(rng, -0.1, 0.1));
  return t;
}

inline MlpLayer random_layer(std::size_t out, std::size_t in, Activation act,
                             std::mt19937_64& rng) {
  return MlpLayer{random_mat(out, in, rng), random_vec(out, rng), act};
}

}  // namespace detail

inline ToyHeadWeights make_toy_head_weights(const ToyHeadDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyHeadWeights w;
  w.dims = dims;
  w.seed = seed;
  w.cam_mlp.push_back(detail::random_layer(dims.c_cam, 21, Activation::relu, rng));
  w.cam_mlp.push_back(detail::random_layer(dims.c_cam, dims.c_cam, Activation::none, rng));
  w.se_depth = detail::random_layer(dims.c_feat, dims.c_cam, Activation::none, rng);
  w.se_height = detail::random_layer(dims.c_feat, dims.c_cam, Activation::none, rng);
  w.se_context = detail::random_layer(dims.c_feat, dims.c_cam, Activation::none, rng);
  w.head_depth = detail::random_layer(dims.n_depth, dims.c_feat, Activation::none, rng);
  w.head_height = detail::random_layer(dims.n_height, dims.c_feat, Activation::none, rng);
  w.head_context = detail::random_layer(dims.c_ctx, dims.c_feat, Activation::none, rng);
  return w;
}

/// Standardized 21-vector of camera parameters: rotation entries raw,
/// translation / 100, intrinsic matrix entries / 1000.
inline Tensor camera_param_vector(const CameraRig& rig) {
  Tensor x({21});
  std::size_t k = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) x.raw()[k++] = static_cast<float>(rig.extrinsics.rotation(r, c));
  for (int r = 0; r < 3; ++r)
    x.raw()[k++] = static_cast<float>(rig.extrinsics.translation(r) / 100.0);
  const Mat3 intr = rig.intrinsics.matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) x.raw()[k++] = static_cast<float>(intr(r, c) / 1000.0);
  return x;
}

inline Tensor encode_camera(const CameraRig& rig, const ToyHeadWeights& w) {
  return mlp_apply(camera_param_vector(rig), std::span<const MlpLayer>(w.cam_mlp));
}

namespace detail {

/// Per-pixel linear map: [C,H,W] -> [out,H,W] through an MlpLayer.
inline Tensor apply_1x1(const MlpLayer& layer, const Tensor& feat) {
  require_rank(feat, 3, "apply_1x1");
  const std::size_t c_in = feat.extent(0), h = feat.extent(1), wd = feat.extent(2);
  if (layer.weight.extent(1) != c_in)
    raise(errc::shape_mismatch, "apply_1x1: head input channels do not match feature");
  const std::size_t c_out = layer.weight.extent(0);
  const std::size_t hw = h * wd;
  Tensor out({c_out, h, wd});
  for (std::size_t o = 0; o < c_out; ++o) {
    float* dst = out.raw() + o * hw;
    const double b = layer.bias.raw()[o];
    for (std::size_t i = 0; i < hw; ++i) {
      double acc = b;
      for (std::size_t c = 0; c < c_in; ++c)
        acc += double(layer.weight.raw()[o * c_in + c]) * double(feat.raw()[c * hw + i]);
      if (layer.act == Activation::relu && acc < 0.0) acc = 0.0;
      dst[i] = static_cast<float>(acc);
    }
  }
  return out;
}

/// Camera-conditioned squeeze-excitation: per-channel sigmoid gates from the
/// camera embedding scale the feature map.
inline Tensor camera_gated(const Tensor& feat, const Tensor& f_cam, const MlpLayer& se) {
  const Tensor gates = sigmoid(mlp_apply(f_cam, {se}));
  return scale_channels(feat, gates, 0);
}

}  // namespace detail

/// Depth and height bin distributions for every pixel; each column softmaxes
/// to 1 over the bin axis.
inline std::pair<Tensor, Tensor> predict_distributions(const Tensor& feat, const Tensor& f_cam,
                                                       const ToyHeadWeights& w) {
  const Tensor logits_d =
      detail::apply_1x1(w.head_depth, detail::camera_gated(feat, f_cam, w.se_depth));
  const Tensor logits_h =
      detail::apply_1x1(w.head_height, detail::camera_gated(feat, f_cam, w.se_height));
  return {softmax_axis(logits_d, 0), softmax_axis(logits_h, 0)};
}

inline Tensor build_context(const Tensor& feat, const Tensor& f_cam, const ToyHeadWeights& w) {
  return detail::apply_1x1(w.head_context, detail::camera_gated(feat, f_cam, w.se_context));
}

enum class LiftMode { depth, height };

/// Frustum of lifted features: ego coordinates per (bin, pixel), features per
/// (bin, channel, pixel), and a validity mask (height-mode degeneracies are
/// masked, never fatal).
struct FrustumCloud {
  Tensor coords;  // [N, Hf, Wf, 3]
  Tensor feats;   // [N, C, Hf, Wf]
  Tensor mask;    // [N, Hf, Wf], 1 = valid
  LiftMode mode = LiftMode::depth;
  std::size_t n_masked = 0;
};

inline FrustumCloud lift_frustum(const Tensor& context, const Tensor& dist, const CameraRig& rig,
                                 std::span<const double> bin_edges, LiftMode mode,
                                 std::size_t downsample) {
  detail::require_rank(context, 3, "lift_frustum(context)");
  detail::require_rank(dist, 3, "lift_frustum(dist)");
  if (context.extent(1) != dist.extent(1) || context.extent(2) != dist.extent(2))
    raise(errc::shape_mismatch, "lift_frustum: spatial extents differ");
  const std::size_t n = dist.extent(0);
  if (bin_edges.size() != n + 1)
    raise(errc::shape_mismatch, "lift_frustum: bin count does not match distribution");
  if (downsample == 0) raise(errc::shape_mismatch, "lift_frustum: downsample must be >= 1");

  const std::size_t hf = dist.extent(1), wf = dist.extent(2);
  FrustumCloud cloud;
  cloud.mode = mode;
  cloud.feats = outer_lift(context, dist);
  cloud.coords = Tensor({n, hf, wf, 3});
  cloud.mask = Tensor({n, hf, wf});

  // Bins write disjoint ranges, so this parallelizes bit-exactly.
  parallel_chunks(0, n, [&](std::size_t b_begin, std::size_t b_end) {
    for (std::size_t b = b_begin; b < b_end; ++b) {
      const double value = 0.5 * (bin_edges[b] + bin_edges[b + 1]);
      for (std::size_t y = 0; y < hf; ++y) {
        const double v = double(downsample) * (double(y) + 0.5);
        for (std::size_t x = 0; x < wf; ++x) {
          const double u = double(downsample) * (double(x) + 0.5);
          Vec3 p;
          bool ok = true;
          if (mode == LiftMode::depth) {
            p = lift_depth(rig, u, v, value);
          } else {
            const HeightLift r = lift_height_checked(rig, u, v, value);
            ok = r.ok();
            p = r.point;
          }
          if (ok) {
            const std::size_t base = ((b * hf + y) * wf + x) * 3;
            cloud.coords.raw()[base + 0] = static_cast<float>(p.x());
            cloud.coords.raw()[base + 1] = static_cast<float>(p.y());
            cloud.coords.raw()[base + 2] = static_cast<float>(p.z());
            cloud.mask.raw()[(b * hf + y) * wf + x] = 1.0f;
          }
        }
      }
    }
  });
  for (std::size_t i = 0; i < cloud.mask.size(); ++i)
    cloud.n_masked += cloud.mask.raw()[i] == 0.0f;
  return cloud;
}

// --- weight container I/O ---------------------------------------------------

/// Writes the toy-head tensors as CBT1 files plus a JSON manifest listing
/// roles and dimensions.
inline void save_toy_head_weights(const std::filesystem::path& dir, const ToyHeadWeights& w) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["seed"] = w.seed;
  manifest["dims"] = {{"c_feat", w.dims.c_feat}, {"c_cam", w.dims.c_cam},
                      {"c_ctx", w.dims.c_ctx},   {"n_depth", w.dims.n_depth},
                      {"n_height", w.dims.n_height}};
  auto dump_layer = [&](const std::string& role, const MlpLayer& l) {
    save_cbt1(dir / (role + "_w.cbt1"), l.weight);
    save_cbt1(dir / (role + "_b.cbt1"), l.bias);
    manifest["layers"][role] = {{"out", l.weight.extent(0)},
                                {"in", l.weight.extent(1)},
                                {"relu", l.act == Activation::relu}};
  };
  for (std::size_t i = 0; i < w.cam_mlp.size(); ++i)
    dump_layer("cam_mlp" + std::to_string(i), w.cam_mlp[i]);
  manifest["cam_mlp_depth"] = w.cam_mlp.size();
  dump_layer("se_depth", w.se_depth);
  dump_layer("se_height", w.se_height);
  dump_layer("se_context", w.se_context);
  dump_layer("head_depth", w.head_depth);
  dump_layer("head_height", w.head_height);
  dump_layer("head_context", w.head_context);
  std::ofstream os(dir / "manifest.json");
  if (!os) raise(errc::file_error, "cannot write weight manifest in " + dir.string());
  os << manifest.dump(2) << "\n";
}

inline ToyHeadWeights load_toy_head_weights(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(dir / "manifest.json");
  if (!is) raise(errc::file_error, "missing weight manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    raise(errc::file_error, "bad weight manifest: " + std::string(e.what()));
  }
  ToyHeadWeights w;
  w.seed = manifest.value("seed", 0ULL);
  const auto& d = manifest.at("dims");
  w.dims = ToyHeadDims{d.at("c_feat"), d.at("c_cam"), d.at("c_ctx"), d.at("n_depth"),
                       d.at("n_height")};
  auto load_layer = [&](const std::string& role) {
    MlpLayer l;
    l.weight = load_cbt1(dir / (role + "_w.cbt1"));
    l.bias = load_cbt1(dir / (role + "_b.cbt1"));
    l.act = manifest.at("layers").at(role).at("relu").get<bool>() ? Activation::relu
                                                                  : Activation::none;
    return l;
  };
  const std::size_t n_cam = manifest.at("cam_mlp_depth");
  for (std::size_t i = 0; i < n_cam; ++i) w.cam_mlp.push_back(load_layer("cam_mlp" + std::to_string(i)));
  w.se_depth = load_layer("se_depth");
  w.se_height = load_layer("se_height");
  w.se_context = load_layer("se_context");
  w.head_depth = load_layer("head_depth");
  w.head_height = load_layer("head_height");
  w.head_context = load_layer("head_context");
  return w;
}

}  // namespace cobev
