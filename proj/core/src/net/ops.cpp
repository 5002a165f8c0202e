#include "canopyfuse/net/ops.hpp"

#include <algorithm>
#include <limits>

#include "canopyfuse/error.hpp"

namespace canopyfuse::net {

namespace {

void require_chw(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw ValidationError(std::string(what) + " must be (C,H,W), got " + shape_string(t.shape()));
  }
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape, const char* what) {
  if (t.shape() != shape) {
    throw ValidationError(std::string(what) + " has shape " + shape_string(t.shape()) + ", expected " +
                          shape_string(shape));
  }
}

// Valid output range for a kernel offset d: y in [lo, hi) keeps y + d inside [0, n).
struct Span {
  std::ptrdiff_t lo;
  std::ptrdiff_t hi;
};

Span valid_range(std::ptrdiff_t n, std::ptrdiff_t d) { return {std::max<std::ptrdiff_t>(0, -d), std::min(n, n - d)}; }

// out += correlate(in, filt) for one input plane and one output plane.
void correlate_plane(const float* in, const float* filt, std::size_t k, std::size_t h, std::size_t w,
                     float* out) {
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  for (std::size_t ky = 0; ky < k; ++ky) {
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
    const Span ys = valid_range(H, dy);
    for (std::size_t kx = 0; kx < k; ++kx) {
      const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
      const Span xs = valid_range(W, dx);
      const float wv = filt[ky * k + kx];
      if (wv == 0.0f) continue;
      for (std::ptrdiff_t y = ys.lo; y < ys.hi; ++y) {
        float* o = out + y * W;
        const float* s = in + (y + dy) * W + dx;
        for (std::ptrdiff_t x = xs.lo; x < xs.hi; ++x) o[x] += wv * s[x];
      }
    }
  }
}

// Gradients of correlate_plane: grad_in += full-correlation of grad_out with flipped filter,
// grad_filt[ky,kx] += sum grad_out[y,x] * in[y+dy, x+dx].
void correlate_plane_backward(const float* in, const float* filt, const float* gout, std::size_t k,
                              std::size_t h, std::size_t w, float* gin, float* gfilt) {
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  for (std::size_t ky = 0; ky < k; ++ky) {
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
    const Span ys = valid_range(H, dy);
    for (std::size_t kx = 0; kx < k; ++kx) {
      const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
      const Span xs = valid_range(W, dx);
      const float wv = filt[ky * k + kx];
      float acc = 0.0f;
      for (std::ptrdiff_t y = ys.lo; y < ys.hi; ++y) {
        const float* g = gout + y * W;
        const float* s = in + (y + dy) * W + dx;
        for (std::ptrdiff_t x = xs.lo; x < xs.hi; ++x) acc += g[x] * s[x];
        if (gin) {
          float* d = gin + (y + dy) * W + dx;
          for (std::ptrdiff_t x = xs.lo; x < xs.hi; ++x) d[x] += wv * g[x];
        }
      }
      gfilt[ky * k + kx] += acc;
    }
  }
}

std::size_t odd_kernel(const Tensor& filters, const char* what) {
  const std::size_t k = filters.dim(2);
  if (filters.dim(3) != k || k % 2 == 0) {
    throw ValidationError(std::string(what) + " kernel must be square and odd, got " +
                          shape_string(filters.shape()));
  }
  return k;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  require_chw(input, "conv2d input");
  if (filters.rank() != 4 || filters.dim(1) != input.dim(0)) {
    throw ValidationError("conv2d filters " + shape_string(filters.shape()) + " do not match input " +
                          shape_string(input.shape()));
  }
  const std::size_t k = odd_kernel(filters, "conv2d");
  const std::size_t K = filters.dim(0), C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (!bias.empty()) require_shape(bias, {K}, "conv2d bias");
  Tensor out({K, H, W});
  for (std::size_t o = 0; o < K; ++o) {
    float* dst = out.slice(o);
    if (!bias.empty()) std::fill(dst, dst + H * W, bias[o]);
    for (std::size_t c = 0; c < C; ++c) {
      correlate_plane(input.slice(c), filters.data() + (o * C + c) * k * k, k, H, W, dst);
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                     Tensor* grad_input, Tensor& grad_filters, Tensor* grad_bias) {
  const std::size_t k = filters.dim(2);
  const std::size_t K = filters.dim(0), C = input.dim(0), H = input.dim(1), W = input.dim(2);
  require_shape(grad_out, {K, H, W}, "conv2d grad_out");
  for (std::size_t o = 0; o < K; ++o) {
    const float* g = grad_out.slice(o);
    if (grad_bias) {
      float s = 0.0f;
      for (std::size_t i = 0; i < H * W; ++i) s += g[i];
      (*grad_bias)[o] += s;
    }
    for (std::size_t c = 0; c < C; ++c) {
      correlate_plane_backward(input.slice(c), filters.data() + (o * C + c) * k * k, g, k, H, W,
                               grad_input ? grad_input->slice(c) : nullptr,
                               grad_filters.data() + (o * C + c) * k * k);
    }
  }
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& filters) {
  require_chw(input, "depthwise input");
  if (filters.rank() != 4 || filters.dim(0) != input.dim(0) || filters.dim(1) != 1) {
    throw ValidationError("depthwise filters " + shape_string(filters.shape()) + " do not match input " +
                          shape_string(input.shape()));
  }
  const std::size_t k = odd_kernel(filters, "depthwise");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Tensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c) correlate_plane(input.slice(c), filters.data() + c * k * k, k, H, W, out.slice(c));
  return out;
}

void depthwise_conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                               Tensor* grad_input, Tensor& grad_filters) {
  const std::size_t k = filters.dim(2);
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  require_shape(grad_out, input.shape(), "depthwise grad_out");
  for (std::size_t c = 0; c < C; ++c) {
    correlate_plane_backward(input.slice(c), filters.data() + c * k * k, grad_out.slice(c), k, H, W,
                             grad_input ? grad_input->slice(c) : nullptr, grad_filters.data() + c * k * k);
  }
}

Tensor pointwise_conv(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_chw(input, "pointwise input");
  if (weights.rank() != 4 || weights.dim(1) != input.dim(0) || weights.dim(2) != 1 || weights.dim(3) != 1) {
    throw ValidationError("pointwise weights " + shape_string(weights.shape()) + " do not match input " +
                          shape_string(input.shape()));
  }
  const std::size_t K = weights.dim(0), C = input.dim(0), N = input.dim(1) * input.dim(2);
  if (!bias.empty()) require_shape(bias, {K}, "pointwise bias");
  Tensor out({K, input.dim(1), input.dim(2)});
  for (std::size_t o = 0; o < K; ++o) {
    float* dst = out.slice(o);
    if (!bias.empty()) std::fill(dst, dst + N, bias[o]);
    const float* wrow = weights.data() + o * C;
    for (std::size_t c = 0; c < C; ++c) {
      const float wv = wrow[c];
      if (wv == 0.0f) continue;
      const float* src = input.slice(c);
      for (std::size_t i = 0; i < N; ++i) dst[i] += wv * src[i];
    }
  }
  return out;
}

void pointwise_conv_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                             Tensor* grad_input, Tensor& grad_weights, Tensor* grad_bias) {
  const std::size_t K = weights.dim(0), C = input.dim(0), N = input.dim(1) * input.dim(2);
  require_shape(grad_out, {K, input.dim(1), input.dim(2)}, "pointwise grad_out");
  for (std::size_t o = 0; o < K; ++o) {
    const float* g = grad_out.slice(o);
    if (grad_bias) {
      float s = 0.0f;
      for (std::size_t i = 0; i < N; ++i) s += g[i];
      (*grad_bias)[o] += s;
    }
    const float* wrow = weights.data() + o * C;
    float* gw = grad_weights.data() + o * C;
    for (std::size_t c = 0; c < C; ++c) {
      const float* src = input.slice(c);
      float acc = 0.0f;
      for (std::size_t i = 0; i < N; ++i) acc += g[i] * src[i];
      gw[c] += acc;
      if (grad_input) {
        const float wv = wrow[c];
        float* d = grad_input->slice(c);
        for (std::size_t i = 0; i < N; ++i) d[i] += wv * g[i];
      }
    }
  }
}

Tensor sepconv(const Tensor& input, const Tensor& depthwise, const Tensor& pointwise, const Tensor& bias) {
  return pointwise_conv(depthwise_conv2d(input, depthwise), pointwise, bias);
}

Tensor compose_separable(const Tensor& depthwise, const Tensor& pointwise) {
  const std::size_t C = depthwise.dim(0), k = depthwise.dim(2), K = pointwise.dim(0);
  if (pointwise.dim(1) != C) throw ValidationError("separable pair channel mismatch");
  Tensor dense({K, C, k, k});
  for (std::size_t o = 0; o < K; ++o) {
    for (std::size_t c = 0; c < C; ++c) {
      const float p = pointwise[o * C + c];
      for (std::size_t i = 0; i < k * k; ++i) dense[(o * C + c) * k * k + i] = p * depthwise[c * k * k + i];
    }
  }
  return dense;
}

Tensor max_pool2d(const Tensor& input, std::size_t k, std::vector<std::uint32_t>* argmax) {
  require_chw(input, "max_pool input");
  if (k % 2 == 0) throw ValidationError("max_pool kernel must be odd");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out({C, H, W});
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t c = 0; c < C; ++c) {
    const float* src = input.slice(c);
    for (std::size_t y = 0; y < H; ++y) {
      const auto y0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(y) - r);
      const auto y1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H) - 1, static_cast<std::ptrdiff_t>(y) + r);
      for (std::size_t x = 0; x < W; ++x) {
        const auto x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(x) - r);
        const auto x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W) - 1, static_cast<std::ptrdiff_t>(x) + r);
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_i = 0;
        for (auto yy = y0; yy <= y1; ++yy) {
          for (auto xx = x0; xx <= x1; ++xx) {
            const std::size_t i = static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx);
            if (src[i] > best) {
              best = src[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (c * H + y) * W + x;
        out[o] = best;
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(c * H * W + best_i);
      }
    }
  }
  return out;
}

void max_pool2d_backward(const std::vector<std::uint32_t>& argmax, const Tensor& grad_out, Tensor& grad_input) {
  if (argmax.size() != grad_out.size()) throw ValidationError("max_pool argmax/grad size mismatch");
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_out[i];
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : 0.0f;
  return y;
}

void relu_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_in) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 0.0f) grad_in[i] += grad_out[i];
  }
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  const std::size_t H = parts[0].dim(1), W = parts[0].dim(2);
  std::size_t C = 0;
  for (const auto& p : parts) {
    require_chw(p, "concat part");
    if (p.dim(1) != H || p.dim(2) != W) throw ValidationError("concat spatial mismatch");
    C += p.dim(0);
  }
  Tensor out({C, H, W});
  float* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

}  // namespace canopyfuse::net
