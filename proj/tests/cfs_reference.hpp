#pragma once

// Plain nested-loop reference for the CFS fusion path. Written independently
// of the library's tensor ops; everything is double vectors indexed by hand.
// Only the weight values are shared with the implementation under test.

#include <cmath>
#include <cstddef>
#include <vector>

#include "cobev/bevfusion.hpp"

namespace cfs_ref {

struct Dims {
  std::size_t zc, c, y, x, c_out;
};

inline double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Two-layer MLP (relu between) on a plain vector.
inline std::vector<double> mlp2(const std::vector<double>& in, const cobev::MlpLayer& l1,
                                const cobev::MlpLayer& l2) {
  const std::size_t mid = l1.weight.extent(0), n_in = l1.weight.extent(1);
  std::vector<double> h(mid);
  for (std::size_t o = 0; o < mid; ++o) {
    double acc = l1.bias(o);
    for (std::size_t i = 0; i < n_in; ++i) acc += double(l1.weight(o, i)) * in[i];
    h[o] = std::max(acc, 0.0);
  }
  const std::size_t out_n = l2.weight.extent(0);
  std::vector<double> out(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    double acc = l2.bias(o);
    for (std::size_t i = 0; i < mid; ++i) acc += double(l2.weight(o, i)) * h[i];
    out[o] = acc;
  }
  return out;
}

// fd, fh are [Zc, C, Y, X] row-major doubles. Returns the fused BEV
// [C_out, Y, X] plus the stage outputs.
struct Result {
  std::vector<double> a1;   // [C]
  std::vector<double> f1;   // [Zc*C*Y*X]
  std::vector<double> a2;   // [Zc*Y*X]
  std::vector<double> f2;   // [Zc*C*Y*X]
  std::vector<double> bev;  // [C_out*Y*X]
};

inline Result reference_cfs(const std::vector<double>& fd, const std::vector<double>& fh,
                            const cobev::CfsWeights& w, const Dims& d) {
  Result r;
  const std::size_t plane = d.y * d.x;
  const std::size_t vol = d.zc * plane;

  // Stage 1: global avg/max over the concatenated channels.
  std::vector<double> avg(2 * d.c, 0.0), mx(2 * d.c, -1e300);
  for (std::size_t cc = 0; cc < 2 * d.c; ++cc) {
    const std::vector<double>& src = cc < d.c ? fd : fh;
    const std::size_t c = cc % d.c;
    for (std::size_t z = 0; z < d.zc; ++z)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = src[(z * d.c + c) * plane + i];
        avg[cc] += v;
        mx[cc] = std::max(mx[cc], v);
      }
    avg[cc] /= double(vol);
  }
  const std::vector<double> ga = mlp2(avg, w.w1, w.w2);
  const std::vector<double> gm = mlp2(mx, w.w1, w.w2);
  r.a1.resize(d.c);
  for (std::size_t c = 0; c < d.c; ++c) r.a1[c] = sig(ga[c] + gm[c]);

  r.f1.resize(fd.size());
  for (std::size_t z = 0; z < d.zc; ++z)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (z * d.c + c) * plane + i;
        r.f1[k] = r.a1[c] * fd[k] + (1.0 - r.a1[c]) * fh[k];
      }

  // Stage 2: channel mean/max planes through the 7x7x7 kernel, same padding.
  std::vector<double> pooled(2 * vol);
  for (std::size_t z = 0; z < d.zc; ++z)
    for (std::size_t i = 0; i < plane; ++i) {
      double sum = 0.0, m = -1e300;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double v = r.f1[(z * d.c + c) * plane + i];
        sum += v;
        m = std::max(m, v);
      }
      pooled[z * plane + i] = sum / double(d.c);
      pooled[vol + z * plane + i] = m;
    }
  r.a2.resize(vol);
  for (std::size_t z = 0; z < d.zc; ++z)
    for (std::size_t yy = 0; yy < d.y; ++yy)
      for (std::size_t xx = 0; xx < d.x; ++xx) {
        double acc = 0.0;
        for (std::size_t p = 0; p < 2; ++p)
          for (int kz = 0; kz < 7; ++kz)
            for (int ky = 0; ky < 7; ++ky)
              for (int kx = 0; kx < 7; ++kx) {
                const long iz = long(z) + kz - 3;
                const long iy = long(yy) + ky - 3;
                const long ix = long(xx) + kx - 3;
                if (iz < 0 || iy < 0 || ix < 0 || iz >= long(d.zc) || iy >= long(d.y) ||
                    ix >= long(d.x))
                  continue;
                acc += pooled[p * vol + std::size_t(iz) * plane + std::size_t(iy) * d.x +
                              std::size_t(ix)] *
                       double(w.conv7(0, p, std::size_t(kz), std::size_t(ky), std::size_t(kx)));
              }
        r.a2[z * plane + yy * d.x + xx] = sig(acc);
      }

  r.f2.resize(fd.size());
  for (std::size_t z = 0; z < d.zc; ++z)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (z * d.c + c) * plane + i;
        const double a = r.a2[z * plane + i];
        r.f2[k] = a * fd[k] + (1.0 - a) * fh[k];
      }

  // Fuse: strided valid conv over z with a [C_out, C, Zc, 1, 1] kernel.
  r.bev.assign(d.c_out * plane, 0.0);
  for (std::size_t co = 0; co < d.c_out; ++co)
    for (std::size_t i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d.c; ++c)
        for (std::size_t z = 0; z < d.zc; ++z) {
          const std::size_t k = (z * d.c + c) * plane + i;
          acc += (r.f1[k] + r.f2[k]) * double(w.fuse_kernel(co, c, z, 0, 0));
        }
      r.bev[co * plane + i] = acc;
    }
  return r;
}

}  // namespace cfs_ref
