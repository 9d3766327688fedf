#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "cobev/bevfusion.hpp"
#include "cobev/box.hpp"
#include "cobev/error.hpp"
#include "cobev/tensor.hpp"

namespace cobev {

/// Foreground weighting mask over the BEV grid, entries in [0, 1].
struct GaussianMask {
  Tensor data;  // [Y, X]
};

/// One rotated 2D Gaussian per box, sigma = extent / 6 along each footprint
/// axis, combined across boxes by elementwise max. Distances are measured
/// from the center of the cell containing the box center, so that cell reads
/// exactly 1.
inline GaussianMask gaussian_mask(std::span<const Box3D> boxes, const GridSpec& grid) {
  grid.validate();
  const std::size_t nx = grid.nx(), ny = grid.ny();
  GaussianMask mask;
  mask.data = Tensor({ny, nx});
  for (const Box3D& box : boxes) {
    box.validate();
    const double sl = box.l / 6.0, sw = box.w / 6.0;
    const double c = std::cos(box.theta), s = std::sin(box.theta);
    // Snap the peak to the center of the containing cell.
    const auto snap = [](double v, double lo, double cell, std::size_t n) {
      double idx = std::floor((v - lo) / cell);
      idx = std::clamp(idx, 0.0, double(n) - 1.0);
      return lo + (idx + 0.5) * cell;
    };
    const double cx = snap(box.x, grid.x_min, grid.cell, nx);
    const double cy = snap(box.y, grid.y_min, grid.cell, ny);
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double py = grid.y_min + (double(iy) + 0.5) * grid.cell;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double px = grid.x_min + (double(ix) + 0.5) * grid.cell;
        const double dx = px - cx, dy = py - cy;
        const double along = c * dx + s * dy;    // along the length axis
        const double across = -s * dx + c * dy;  // along the width axis
        const double q = (along * along) / (sl * sl) + (across * across) / (sw * sw);
        const float g = static_cast<float>(std::exp(-0.5 * q));
        float& cell_v = mask.data(iy, ix);
        cell_v = std::max(cell_v, g);
      }
    }
  }
  return mask;
}

/// Three channel-preserving 2D convolutions with ReLU between; tunes the
/// teacher supervision signal for the low-level feature loss.
struct AdapterWeights {
  Tensor k1, k2, k3;  // [C, C, 1, kh, kw]
};

inline AdapterWeights make_adapter_weights(std::size_t channels, std::uint64_t seed,
                                           std::size_t ksize = 3) {
  std::mt19937_64 rng(seed);
  AdapterWeights w;
  for (Tensor* k : {&w.k1, &w.k2, &w.k3}) {
    *k = Tensor({channels, channels, 1, ksize, ksize});
    for (auto& v : k->data()) v = static_cast<float>(uniform_range(rng, -0.1, 0.1));
  }
  return w;
}

/// Applies the adapter to a [C, Y, X] feature map (viewed as [C, 1, Y, X]).
inline Tensor apply_adapter(const AdapterWeights& w, const Tensor& f) {
  detail::require_rank(f, 3, "apply_adapter");
  Tensor cur = Tensor::from_data({f.extent(0), 1, f.extent(1), f.extent(2)},
                                 std::vector<float>(f.data().begin(), f.data().end()));
  int stage = 0;
  for (const Tensor* k : {&w.k1, &w.k2, &w.k3}) {
    cur = conv3d(cur, *k, {1, 1, 1}, Pad::same);
    if (++stage < 3)
      for (auto& v : cur.data()) v = std::max(v, 0.0f);
  }
  return Tensor::from_data({f.extent(0), f.extent(1), f.extent(2)},
                           std::vector<float>(cur.data().begin(), cur.data().end()));
}

/// Masked mean-squared feature mimic loss; `adapter` may be null (identity).
inline double loss_low(const Tensor& f_teacher, const Tensor& f_student, const GaussianMask& mask,
                       const AdapterWeights* adapter = nullptr) {
  detail::require_same_shape(f_teacher, f_student, "loss_low");
  detail::require_rank(f_teacher, 3, "loss_low");
  if (mask.data.extent(0) != f_teacher.extent(1) || mask.data.extent(1) != f_teacher.extent(2))
    raise(errc::shape_mismatch, "loss_low: mask does not match feature plane");
  const Tensor adapted = adapter ? apply_adapter(*adapter, f_student) : f_student;
  const std::size_t c_ch = f_teacher.extent(0);
  const std::size_t plane = f_teacher.extent(1) * f_teacher.extent(2);
  double acc = 0.0;
  for (std::size_t c = 0; c < c_ch; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const double m = mask.data.raw()[i];
      const double diff = m * (double(f_teacher.raw()[c * plane + i]) -
                               double(adapted.raw()[c * plane + i]));
      acc += diff * diff;
    }
  return acc / double(c_ch * plane);
}

/// High-level variant: identical contract with the adapter forced to identity.
inline double loss_high(const Tensor& f_teacher, const Tensor& f_student,
                        const GaussianMask& mask) {
  return loss_low(f_teacher, f_student, mask, nullptr);
}

/// Teacher box/class prediction with its IoU confidence score.
struct SoftLabel {
  std::array<double, 7> box{};
  std::vector<double> cls;
  double score = 1.0;
};

/// Smooth L1 with beta = 1.
inline double smooth_l1(double diff) {
  const double a = std::abs(diff);
  return a < 1.0 ? 0.5 * diff * diff : a - 0.5;
}

/// Quality focal loss with exponent 2; sigma clamped away from {0, 1}.
inline double qfl(double y, double sigma) {
  if (y < 0.0 || y > 1.0 || sigma < 0.0 || sigma > 1.0)
    raise(errc::probability_out_of_range, "qfl: probabilities must be in [0,1]");
  const double s = std::clamp(sigma, 1e-7, 1.0 - 1e-7);
  const double gap = std::abs(y - s);
  return -gap * gap * ((1.0 - y) * std::log(1.0 - s) + y * std::log(s));
}

/// Score-weighted response distillation over index-aligned teacher/student
/// pairs: sum_i s_i (SmoothL1(b_t, b_s) + QFL(c_t, c_s)).
inline double response_loss(std::span<const SoftLabel> teacher,
                            std::span<const std::array<double, 7>> student_boxes,
                            std::span<const std::vector<double>> student_cls) {
  if (teacher.size() != student_boxes.size() || teacher.size() != student_cls.size())
    raise(errc::length_mismatch, "response_loss: lists must be index-aligned");
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const SoftLabel& t = teacher[i];
    if (t.score < 0.0 || t.score > 1.0)
      raise(errc::probability_out_of_range, "response_loss: score outside [0,1]");
    if (t.cls.size() != student_cls[i].size())
      raise(errc::length_mismatch, "response_loss: class vector lengths differ");
    double reg = 0.0;
    for (std::size_t k = 0; k < 7; ++k) reg += smooth_l1(t.box[k] - student_boxes[i][k]);
    double cls = 0.0;
    for (std::size_t k = 0; k < t.cls.size(); ++k) cls += qfl(t.cls[k], student_cls[i][k]);
    total += t.score * (reg + cls);
  }
  return total;
}

/// Final objective: sum of the provided components; the detection loss is an
/// external input and may be absent.
inline double total_loss(std::optional<double> l_det, double l_low, double l_high,
                         double l_res) {
  const double det = l_det.value_or(0.0);
  for (double v : {det, l_low, l_high, l_res})
    if (!(v >= 0.0)) raise(errc::negative_component, "total_loss: components must be >= 0");
  return det + l_low + l_high + l_res;
}

}  // namespace cobev
