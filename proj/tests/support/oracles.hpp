#pragma once

// Independent reference implementations used as test oracles. They are written for clarity,
// not speed, and share no code with the library beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "canopyfuse/lidar.hpp"
#include "canopyfuse/net/model.hpp"
#include "canopyfuse/net/tensor.hpp"

namespace oracle {

using canopyfuse::net::Tensor;

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Six-loop SAME cross-correlation with zero padding, accumulated in double.
inline Tensor conv2d(const Tensor& in, const Tensor& f, const Tensor& bias) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const std::size_t K = f.dim(0), k = f.dim(2);
  const auto r = static_cast<long>(k / 2);
  Tensor out({K, H, W});
  for (std::size_t o = 0; o < K; ++o) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              const long yy = static_cast<long>(y) + static_cast<long>(i) - r;
              const long xx = static_cast<long>(x) + static_cast<long>(j) - r;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
              acc += static_cast<double>(f[((o * C + c) * k + i) * k + j]) *
                     in[(c * H + static_cast<std::size_t>(yy)) * W + static_cast<std::size_t>(xx)];
            }
          }
        }
        out.at(o, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// Dense bank W[o][c] = pw[o][c] * dw[c], built element by element.
inline Tensor compose(const Tensor& dw, const Tensor& pw) {
  const std::size_t C = dw.dim(0), k = dw.dim(2), K = pw.dim(0);
  Tensor out({K, C, k, k});
  for (std::size_t o = 0; o < K; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < k * k; ++i) out[(o * C + c) * k * k + i] = pw[o * C + c] * dw[c * k * k + i];
  return out;
}

/// k x k max pool with -inf padding.
inline Tensor max_pool(const Tensor& in, std::size_t k) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const auto r = static_cast<long>(k / 2);
  Tensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (long y = 0; y < static_cast<long>(H); ++y)
      for (long x = 0; x < static_cast<long>(W); ++x) {
        float best = -INFINITY;
        for (long i = -r; i <= r; ++i)
          for (long j = -r; j <= r; ++j) {
            const long yy = y + i, xx = x + j;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
            best = std::max(best, in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
          }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = best;
      }
  return out;
}

/// O(n^2) DBSCAN labelling: core = at least min_pts points within eps (self included);
/// signal = core or within eps of a core point.
inline std::vector<canopyfuse::lidar::PhotonLabel> dbscan(const std::vector<canopyfuse::lidar::PhotonEvent>& p,
                                                         double eps, std::size_t min_pts) {
  using canopyfuse::lidar::PhotonLabel;
  const std::size_t n = p.size();
  auto near = [&](std::size_t a, std::size_t b) {
    const double dx = p[a].along_track - p[b].along_track, dy = p[a].elevation - p[b].elevation;
    return dx * dx + dy * dy <= eps * eps;
  };
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) count += near(i, j) ? 1 : 0;
    core[i] = count >= min_pts;
  }
  std::vector<PhotonLabel> out(n, PhotonLabel::noise);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n && out[i] == PhotonLabel::noise; ++j) {
      if (core[j] && near(i, j)) out[i] = PhotonLabel::signal;
    }
  }
  return out;
}

struct AdamScalar {
  double theta, m, v;
};

/// Adam written straight from its defining recurrences.
inline AdamScalar adam(double theta, double g, double m, double v, std::uint64_t t, double lr, double b1, double b2,
                       double eps) {
  const double m1 = b1 * m + (1.0 - b1) * g;
  const double v1 = b2 * v + (1.0 - b2) * g * g;
  const double mhat = m1 / (1.0 - std::pow(b1, static_cast<double>(t)));
  const double vhat = v1 / (1.0 - std::pow(b2, static_cast<double>(t)));
  return {theta - lr * mhat / (std::sqrt(vhat) + eps), m1, v1};
}

/// Central difference of `loss` with respect to `param`, using the step actually
/// representable in float32.
inline double central_difference(float& param, double h, const std::function<double()>& loss) {
  const float saved = param;
  const float up = static_cast<float>(saved + h);
  const float down = static_cast<float>(saved - h);
  param = up;
  const double lu = loss();
  param = down;
  const double ld = loss();
  param = saved;
  return (lu - ld) / (static_cast<double>(up) - static_cast<double>(down));
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Double-precision dot product of two tensors.
inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

/// Double-precision (C,H,W) activation used by the reference forward pass.
struct Cube {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;

  Cube() = default;
  Cube(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), v(c_ * h_ * w_, 0.0) {}
  explicit Cube(const Tensor& t) : Cube(t.dim(0), t.dim(1), t.dim(2)) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = t[i];
  }
  double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
};

/// Records every ReLU on/off decision and max-pool winner taken by the reference pass.
using Decisions = std::vector<std::uint32_t>;

inline Cube ref_depthwise(const Cube& in, const Tensor& f) {
  const std::size_t k = f.dim(2);
  const long r = static_cast<long>(k / 2);
  Cube out(in.c, in.h, in.w);
  for (std::size_t c = 0; c < in.c; ++c)
    for (long y = 0; y < static_cast<long>(in.h); ++y)
      for (long x = 0; x < static_cast<long>(in.w); ++x) {
        double acc = 0.0;
        for (long i = -r; i <= r; ++i)
          for (long j = -r; j <= r; ++j) {
            const long yy = y + i, xx = x + j;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(in.h) || xx >= static_cast<long>(in.w)) continue;
            acc += static_cast<double>(f[(c * k + static_cast<std::size_t>(i + r)) * k + static_cast<std::size_t>(j + r)]) *
                   in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
      }
  return out;
}

/// 1x1 convolution; `bias` may be null.
inline Cube ref_pointwise(const Cube& in, const Tensor& wt, const Tensor* bias) {
  const std::size_t K = wt.dim(0);
  Cube out(K, in.h, in.w);
  for (std::size_t o = 0; o < K; ++o)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t x = 0; x < in.w; ++x) {
        double acc = bias ? (*bias)[o] : 0.0;
        for (std::size_t c = 0; c < in.c; ++c) acc += static_cast<double>(wt[o * in.c + c]) * in.at(c, y, x);
        out.at(o, y, x) = acc;
      }
  return out;
}

inline Cube ref_maxpool(const Cube& in, std::size_t k, Decisions* d) {
  const long r = static_cast<long>(k / 2);
  Cube out(in.c, in.h, in.w);
  for (std::size_t c = 0; c < in.c; ++c)
    for (long y = 0; y < static_cast<long>(in.h); ++y)
      for (long x = 0; x < static_cast<long>(in.w); ++x) {
        double best = -INFINITY;
        std::uint32_t arg = 0;
        for (long i = -r; i <= r; ++i)
          for (long j = -r; j <= r; ++j) {
            const long yy = y + i, xx = x + j;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(in.h) || xx >= static_cast<long>(in.w)) continue;
            const double v = in.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            if (v > best) {
              best = v;
              arg = static_cast<std::uint32_t>(yy * static_cast<long>(in.w) + xx);
            }
          }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = best;
        if (d) d->push_back(arg);
      }
  return out;
}

inline void ref_relu(Cube& x, Decisions* d) {
  for (auto& v : x.v) {
    if (d) d->push_back(v > 0.0 ? 1u : 0u);
    v = std::max(v, 0.0);
  }
}

/// One layer written from its definition: branches, concatenation, fusing 1x1,
/// optional ReLU, then the skip (identity or a bias-free 1x1 alignment).
inline Cube ref_layer(const canopyfuse::net::LayerSpec& s, const std::vector<Tensor>& p, const Cube& x,
                      Decisions* d) {
  using canopyfuse::net::LayerKind;
  Cube out;
  std::size_t next = 0;
  switch (s.kind) {
    case LayerKind::pointwise:
      out = ref_pointwise(x, p[0], &p[1]);
      next = 2;
      break;
    case LayerKind::sepconv:
      out = ref_pointwise(ref_depthwise(x, p[0]), p[1], &p[2]);
      next = 3;
      break;
    case LayerKind::maxpool:
      out = ref_maxpool(x, s.kernel_sizes.front(), d);
      break;
    case LayerKind::prfx_block: {
      std::vector<Cube> branches;
      for (std::size_t b = 0; b < s.kernel_sizes.size(); ++b, next += 3) {
        branches.push_back(ref_pointwise(ref_depthwise(x, p[next]), p[next + 1], &p[next + 2]));
      }
      if (s.pool_branch) {
        branches.push_back(ref_pointwise(ref_maxpool(x, 3, d), p[next], &p[next + 1]));
        next += 2;
      }
      Cube cat(0, x.h, x.w);
      for (const auto& b : branches) {
        cat.c += b.c;
        cat.v.insert(cat.v.end(), b.v.begin(), b.v.end());
      }
      out = ref_pointwise(cat, p[next], &p[next + 1]);
      next += 2;
      break;
    }
  }
  if (s.relu) ref_relu(out, d);
  if (s.has_residual) {
    const Cube skip = s.in_channels != s.out_channels ? ref_pointwise(x, p[next], nullptr) : x;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += skip.v[i];
  }
  return out;
}

/// Whole-model reference: trunk, then the three 1x1 heads on the trunk output.
inline std::vector<Cube> ref_model(const canopyfuse::net::ModelParams& m, const Tensor& input, Decisions* d) {
  Cube x(input);
  auto params_of = [&](std::size_t layer) {
    const auto span = m.layer_params(layer);
    return std::vector<Tensor>(span.begin(), span.end());
  };
  for (std::size_t i = 0; i < m.trunk_size(); ++i) x = ref_layer(m.layers()[i], params_of(i), x, d);
  std::vector<Cube> heads;
  for (std::size_t i = m.trunk_size(); i < m.layers().size(); ++i) heads.push_back(ref_layer(m.layers()[i], params_of(i), x, d));
  return heads;
}

inline double dot(const Tensor& a, const Cube& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b.v[i];
  return s;
}

}  // namespace oracle
