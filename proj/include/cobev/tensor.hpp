#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cobev/error.hpp"
#include "cobev/parallel.hpp"

namespace cobev {

/// Dense rank-N array of 32-bit reals, row-major. Immutable-by-convention
/// carrier for features and distributions; all reductions accumulate in
/// 64-bit before storing back to 32-bit.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  Tensor(std::initializer_list<std::size_t> shape, float fill = 0.0f)
      : Tensor(std::vector<std::size_t>(shape), fill) {}

  static Tensor from_data(std::vector<std::size_t> shape, std::vector<float> data) {
    if (count(shape) != data.size())
      raise(errc::shape_mismatch, "tensor data length does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const float* raw() const { return data_.data(); }
  float* raw() { return data_.data(); }

  template <typename... Ix>
  float& operator()(Ix... ix) {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }
  template <typename... Ix>
  float operator()(Ix... ix) const {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> ix) const {
    std::size_t off = 0;
    std::size_t a = 0;
    for (std::size_t i : ix) off = off * shape_[a++] + i;
    return off;
  }

  /// Stride (in elements) of one step along `axis`.
  std::size_t stride(std::size_t axis) const {
    std::size_t s = 1;
    for (std::size_t a = axis + 1; a < shape_.size(); ++a) s *= shape_[a];
    return s;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    raise(errc::shape_mismatch,
          std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    raise(errc::shape_mismatch,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + t.shape_str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations (exact shape match, no implicit broadcasting).
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.raw()[i] = a.raw()[i] + b.raw()[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.raw()[i] = a.raw()[i] * b.raw()[i];
  return out;
}

inline Tensor sigmoid(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    double x = t.raw()[i];
    out.raw()[i] = static_cast<float>(1.0 / (1.0 + std::exp(-x)));
  }
  return out;
}

/// Multiplies each slice along `channel_axis` by the matching scalar of `s`.
/// The only broadcasting op in the library.
inline Tensor scale_channels(const Tensor& t, const Tensor& s, std::size_t channel_axis = 0) {
  detail::require_rank(s, 1, "scale_channels(scale)");
  if (channel_axis >= t.rank()) raise(errc::axis_out_of_range, "scale_channels: bad axis");
  if (s.extent(0) != t.extent(channel_axis))
    raise(errc::shape_mismatch, "scale_channels: scale length does not match channel extent");
  Tensor out(t.shape());
  const std::size_t ch_stride = t.stride(channel_axis);
  const std::size_t n_ch = t.extent(channel_axis);
  const std::size_t block = ch_stride * n_ch;
  for (std::size_t base = 0; base < t.size(); base += block)
    for (std::size_t c = 0; c < n_ch; ++c) {
      const float g = s.raw()[c];
      const float* src = t.raw() + base + c * ch_stride;
      float* dst = out.raw() + base + c * ch_stride;
      for (std::size_t i = 0; i < ch_stride; ++i) dst[i] = src[i] * g;
    }
  return out;
}

inline Tensor concat(std::span<const Tensor* const> ts, std::size_t axis) {
  if (ts.empty()) raise(errc::shape_mismatch, "concat: no inputs");
  const Tensor& first = *ts.front();
  if (axis >= first.rank()) raise(errc::axis_out_of_range, "concat: bad axis");
  std::vector<std::size_t> shape = first.shape();
  std::size_t total_axis = 0;
  for (const Tensor* t : ts) {
    if (t->rank() != first.rank()) raise(errc::shape_mismatch, "concat: rank mismatch");
    for (std::size_t a = 0; a < shape.size(); ++a)
      if (a != axis && t->extent(a) != shape[a])
        raise(errc::shape_mismatch, "concat: non-axis extents differ");
    total_axis += t->extent(axis);
  }
  shape[axis] = total_axis;
  Tensor out(shape);

  // Outer iterations cover all axes before `axis`; inner block is contiguous.
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
  const std::size_t inner = first.stride(axis);
  std::size_t dst_axis_off = 0;
  for (const Tensor* t : ts) {
    const std::size_t src_block = t->extent(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t->raw() + o * src_block, src_block,
                  out.raw() + o * total_axis * inner + dst_axis_off * inner);
    dst_axis_off += t->extent(axis);
  }
  return out;
}

inline Tensor concat(std::initializer_list<const Tensor*> ts, std::size_t axis) {
  std::vector<const Tensor*> v(ts);
  return concat(std::span<const Tensor* const>(v), axis);
}

/// Rearranges axes: out.shape[i] = in.shape[perm[i]].
inline Tensor permute(const Tensor& t, std::span<const std::size_t> perm) {
  if (perm.size() != t.rank()) raise(errc::axis_out_of_range, "permute: bad permutation size");
  std::vector<std::size_t> shape(t.rank());
  std::vector<std::size_t> src_stride(t.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= t.rank()) raise(errc::axis_out_of_range, "permute: bad axis");
    shape[i] = t.extent(perm[i]);
    src_stride[i] = t.stride(perm[i]);
  }
  Tensor out(shape);
  std::vector<std::size_t> ix(t.rank(), 0);
  for (std::size_t o = 0; o < out.size(); ++o) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < ix.size(); ++a) src += ix[a] * src_stride[a];
    out.raw()[o] = t.raw()[src];
    for (std::size_t a = ix.size(); a-- > 0;) {
      if (++ix[a] < shape[a]) break;
      ix[a] = 0;
    }
  }
  return out;
}

inline Tensor permute(const Tensor& t, std::initializer_list<std::size_t> perm) {
  std::vector<std::size_t> p(perm);
  return permute(t, std::span<const std::size_t>(p));
}

// ---------------------------------------------------------------------------
// Composite operations.
// ---------------------------------------------------------------------------

/// out[n,c,y,x] = context[c,y,x] * dist[n,y,x].
inline Tensor outer_lift(const Tensor& context, const Tensor& dist) {
  detail::require_rank(context, 3, "outer_lift(context)");
  detail::require_rank(dist, 3, "outer_lift(dist)");
  if (context.extent(1) != dist.extent(1) || context.extent(2) != dist.extent(2))
    raise(errc::shape_mismatch, "outer_lift: spatial extents differ");
  const std::size_t c_ch = context.extent(0), n = dist.extent(0);
  const std::size_t hw = context.extent(1) * context.extent(2);
  Tensor out({n, c_ch, context.extent(1), context.extent(2)});
  for (std::size_t b = 0; b < n; ++b) {
    const float* d = dist.raw() + b * hw;
    for (std::size_t c = 0; c < c_ch; ++c) {
      const float* ctx = context.raw() + c * hw;
      float* o = out.raw() + (b * c_ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = ctx[i] * d[i];
    }
  }
  return out;
}

/// Numerically stabilized softmax along `axis`; every slice sums to 1.
inline Tensor softmax_axis(const Tensor& t, std::size_t axis) {
  if (axis >= t.rank()) raise(errc::axis_out_of_range, "softmax_axis: bad axis");
  Tensor out(t.shape());
  const std::size_t n = t.extent(axis);
  const std::size_t step = t.stride(axis);
  const std::size_t block = step * n;
  for (std::size_t base = 0; base < t.size(); base += block)
    for (std::size_t i = 0; i < step; ++i) {
      const float* src = t.raw() + base + i;
      float* dst = out.raw() + base + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, double(src[k * step]));
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += std::exp(double(src[k * step]) - mx);
      for (std::size_t k = 0; k < n; ++k)
        dst[k * step] = static_cast<float>(std::exp(double(src[k * step]) - mx) / sum);
    }
  return out;
}

enum class PoolMode { avg, max };

/// Reduces a [C,D,H,W] tensor to one scalar per channel.
inline Tensor global_pool3d(const Tensor& t, PoolMode mode) {
  detail::require_rank(t, 4, "global_pool3d");
  const std::size_t c_ch = t.extent(0);
  const std::size_t vol = t.size() / c_ch;
  Tensor out({c_ch});
  for (std::size_t c = 0; c < c_ch; ++c) {
    const float* src = t.raw() + c * vol;
    if (mode == PoolMode::avg) {
      double sum = 0.0;
      for (std::size_t i = 0; i < vol; ++i) sum += src[i];
      out.raw()[c] = static_cast<float>(sum / double(vol));
    } else {
      float m = src[0];
      for (std::size_t i = 1; i < vol; ++i) m = std::max(m, src[i]);
      out.raw()[c] = m;
    }
  }
  return out;
}

/// [C,D,H,W] -> [2,D,H,W]: plane 0 carries the channel mean, plane 1 the
/// channel max (CBAM-style pooling pair).
inline Tensor channel_pool(const Tensor& t) {
  detail::require_rank(t, 4, "channel_pool");
  const std::size_t c_ch = t.extent(0);
  const std::size_t vol = t.size() / c_ch;
  Tensor out({2, t.extent(1), t.extent(2), t.extent(3)});
  for (std::size_t i = 0; i < vol; ++i) {
    double sum = 0.0;
    float m = t.raw()[i];
    for (std::size_t c = 0; c < c_ch; ++c) {
      const float v = t.raw()[c * vol + i];
      sum += v;
      m = std::max(m, v);
    }
    out.raw()[i] = static_cast<float>(sum / double(c_ch));
    out.raw()[vol + i] = m;
  }
  return out;
}

enum class Pad { same, valid };

/// Direct 3D cross-correlation. Input [Cin,D,H,W], kernel [Cout,Cin,kd,kh,kw].
/// Same padding pads with zeros so that out = ceil(in / stride).
inline Tensor conv3d(const Tensor& t, const Tensor& kernel, std::array<std::size_t, 3> stride,
                     Pad pad) {
  detail::require_rank(t, 4, "conv3d(input)");
  detail::require_rank(kernel, 5, "conv3d(kernel)");
  if (kernel.extent(1) != t.extent(0))
    raise(errc::shape_mismatch, "conv3d: kernel input channels do not match input");
  for (std::size_t a = 0; a < 3; ++a)
    if (stride[a] == 0) raise(errc::shape_mismatch, "conv3d: zero stride");

  const std::size_t cin = t.extent(0);
  const std::array<std::size_t, 3> in = {t.extent(1), t.extent(2), t.extent(3)};
  const std::size_t cout = kernel.extent(0);
  const std::array<std::size_t, 3> k = {kernel.extent(2), kernel.extent(3), kernel.extent(4)};

  std::array<std::size_t, 3> out_dim;
  std::array<std::ptrdiff_t, 3> pad_begin;
  for (std::size_t a = 0; a < 3; ++a) {
    if (pad == Pad::same) {
      out_dim[a] = (in[a] + stride[a] - 1) / stride[a];
      const std::ptrdiff_t total = std::max<std::ptrdiff_t>(
          0, std::ptrdiff_t((out_dim[a] - 1) * stride[a] + k[a]) - std::ptrdiff_t(in[a]));
      pad_begin[a] = total / 2;
    } else {
      if (k[a] > in[a]) raise(errc::shape_mismatch, "conv3d: kernel larger than input");
      out_dim[a] = (in[a] - k[a]) / stride[a] + 1;
      pad_begin[a] = 0;
    }
  }

  Tensor out({cout, out_dim[0], out_dim[1], out_dim[2]});
  const std::size_t in_hw = in[1] * in[2];
  // Each (co, od) output plane is written by exactly one worker.
  parallel_chunks(0, cout * out_dim[0], [&](std::size_t s_begin, std::size_t s_end) {
  for (std::size_t slab = s_begin; slab < s_end; ++slab) {
    const std::size_t co = slab / out_dim[0];
    const std::size_t od = slab % out_dim[0];
      for (std::size_t oh = 0; oh < out_dim[1]; ++oh)
        for (std::size_t ow = 0; ow < out_dim[2]; ++ow) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const float* src = t.raw() + ci * in[0] * in_hw;
            const float* ker = kernel.raw() + ((co * cin + ci) * k[0]) * k[1] * k[2];
            for (std::size_t kd = 0; kd < k[0]; ++kd) {
              const std::ptrdiff_t id = std::ptrdiff_t(od * stride[0] + kd) - pad_begin[0];
              if (id < 0 || id >= std::ptrdiff_t(in[0])) continue;
              for (std::size_t kh = 0; kh < k[1]; ++kh) {
                const std::ptrdiff_t ih = std::ptrdiff_t(oh * stride[1] + kh) - pad_begin[1];
                if (ih < 0 || ih >= std::ptrdiff_t(in[1])) continue;
                for (std::size_t kw = 0; kw < k[2]; ++kw) {
                  const std::ptrdiff_t iw = std::ptrdiff_t(ow * stride[2] + kw) - pad_begin[2];
                  if (iw < 0 || iw >= std::ptrdiff_t(in[2])) continue;
                  acc += double(src[std::size_t(id) * in_hw + std::size_t(ih) * in[2] +
                                    std::size_t(iw)]) *
                         double(ker[(kd * k[1] + kh) * k[2] + kw]);
                }
              }
            }
          }
          out(co, od, oh, ow) = static_cast<float>(acc);
        }
  }
  });
  return out;
}

enum class Activation { none, relu };

struct MlpLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  Activation act = Activation::none;
};

/// Standard affine + activation chain on a rank-1 input.
inline Tensor mlp_apply(const Tensor& x, std::span<const MlpLayer> layers) {
  detail::require_rank(x, 1, "mlp_apply(input)");
  Tensor cur = x;
  for (const MlpLayer& layer : layers) {
    detail::require_rank(layer.weight, 2, "mlp_apply(weight)");
    detail::require_rank(layer.bias, 1, "mlp_apply(bias)");
    const std::size_t n_out = layer.weight.extent(0), n_in = layer.weight.extent(1);
    if (n_in != cur.extent(0) || layer.bias.extent(0) != n_out)
      raise(errc::shape_mismatch, "mlp_apply: chained dimensions incompatible");
    Tensor next({n_out});
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = layer.bias.raw()[o];
      const float* w = layer.weight.raw() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) acc += double(w[i]) * double(cur.raw()[i]);
      if (layer.act == Activation::relu && acc < 0.0) acc = 0.0;
      next.raw()[o] = static_cast<float>(acc);
    }
    cur = std::move(next);
  }
  return cur;
}

inline Tensor mlp_apply(const Tensor& x, std::initializer_list<MlpLayer> layers) {
  std::vector<MlpLayer> v(layers);
  return mlp_apply(x, std::span<const MlpLayer>(v));
}

}  // namespace cobev
