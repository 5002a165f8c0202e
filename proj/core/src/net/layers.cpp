#include <string>

#include "canopyfuse/error.hpp"
#include "canopyfuse/net/model.hpp"
#include "canopyfuse/net/ops.hpp"

namespace canopyfuse::net {

namespace {

constexpr std::size_t kPoolKernel = 3;

const Tensor& no_bias() {
  static const Tensor empty;
  return empty;
}

std::size_t core_block_count(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::pointwise: return 2;
    case LayerKind::sepconv: return 3;
    case LayerKind::maxpool: return 0;
    case LayerKind::prfx_block: return 3 * s.kernel_sizes.size() + (s.pool_branch ? 2 : 0) + 2;
  }
  return 0;
}

void require_params(const LayerSpec& s, std::span<const Tensor> params) {
  const std::size_t want = core_block_count(s) + (s.aligned_skip() ? 1 : 0);
  if (params.size() != want) {
    throw ValidationError(std::string(to_string(s.kind)) + " layer expects " + std::to_string(want) +
                          " parameter blocks, got " + std::to_string(params.size()));
  }
}

// Linear part + activation of the layer, without the residual.
Tensor core_forward(const LayerSpec& s, std::span<const Tensor> p, const Tensor& x, LayerCache* cache) {
  Tensor out;
  switch (s.kind) {
    case LayerKind::pointwise:
      out = pointwise_conv(x, p[0], p[1]);
      break;
    case LayerKind::sepconv: {
      Tensor dw = depthwise_conv2d(x, p[0]);
      out = pointwise_conv(dw, p[1], p[2]);
      if (cache) cache->tensors.push_back(std::move(dw));
      break;
    }
    case LayerKind::maxpool: {
      std::vector<std::uint32_t> argmax;
      out = max_pool2d(x, s.kernel_sizes.front(), cache ? &argmax : nullptr);
      if (cache) cache->argmax.push_back(std::move(argmax));
      break;
    }
    case LayerKind::prfx_block: {
      std::vector<Tensor> branches;
      std::size_t i = 0;
      for (std::size_t b = 0; b < s.kernel_sizes.size(); ++b, i += 3) {
        Tensor dw = depthwise_conv2d(x, p[i]);
        branches.push_back(pointwise_conv(dw, p[i + 1], p[i + 2]));
        if (cache) cache->tensors.push_back(std::move(dw));
      }
      if (s.pool_branch) {
        std::vector<std::uint32_t> argmax;
        Tensor pooled = max_pool2d(x, kPoolKernel, cache ? &argmax : nullptr);
        branches.push_back(pointwise_conv(pooled, p[i], p[i + 1]));
        if (cache) {
          cache->tensors.push_back(std::move(pooled));
          cache->argmax.push_back(std::move(argmax));
        }
        i += 2;
      }
      Tensor cat = concat_channels(branches);
      out = pointwise_conv(cat, p[i], p[i + 1]);
      if (cache) cache->tensors.push_back(std::move(cat));
      break;
    }
  }
  if (s.relu) out = relu(out);
  return out;
}

}  // namespace

const char* to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::pointwise: return "pointwise";
    case LayerKind::sepconv: return "sepconv";
    case LayerKind::prfx_block: return "prfx_block";
    case LayerKind::maxpool: return "maxpool";
  }
  return "?";
}

void validate(const LayerSpec& s) {
  const std::string name = to_string(s.kind);
  if (s.in_channels == 0 || s.out_channels == 0) throw ValidationError(name + ": zero channels");
  if (s.kernel_sizes.empty()) throw ValidationError(name + ": empty kernel/branch set");
  for (auto k : s.kernel_sizes) {
    if (k % 2 == 0) throw ValidationError(name + ": kernel size " + std::to_string(k) + " is not odd");
  }
  switch (s.kind) {
    case LayerKind::pointwise:
      if (s.kernel_sizes != std::vector<std::size_t>{1}) throw ValidationError("pointwise layer kernel must be {1}");
      break;
    case LayerKind::sepconv:
      if (s.kernel_sizes.size() != 1) throw ValidationError("sepconv layer takes exactly one kernel size");
      break;
    case LayerKind::maxpool:
      if (s.kernel_sizes.size() != 1 || s.in_channels != s.out_channels) {
        throw ValidationError("maxpool layer takes one kernel and keeps channel count");
      }
      break;
    case LayerKind::prfx_block:
      if (s.branch_width == 0) throw ValidationError("prfx_block: branch width must be > 0");
      break;
  }
  if (s.kind != LayerKind::prfx_block && s.pool_branch) throw ValidationError(name + ": pool branch only valid in prfx_block");
}

std::vector<std::vector<std::size_t>> param_shapes(const LayerSpec& s) {
  validate(s);
  const std::size_t in = s.in_channels, out = s.out_channels;
  std::vector<std::vector<std::size_t>> shapes;
  switch (s.kind) {
    case LayerKind::pointwise:
      shapes = {{out, in, 1, 1}, {out}};
      break;
    case LayerKind::sepconv: {
      const std::size_t k = s.kernel_sizes.front();
      shapes = {{in, 1, k, k}, {out, in, 1, 1}, {out}};
      break;
    }
    case LayerKind::maxpool:
      break;
    case LayerKind::prfx_block: {
      const std::size_t bw = s.branch_width;
      for (std::size_t k : s.kernel_sizes) {
        shapes.push_back({in, 1, k, k});
        shapes.push_back({bw, in, 1, 1});
        shapes.push_back({bw});
      }
      if (s.pool_branch) {
        shapes.push_back({bw, in, 1, 1});
        shapes.push_back({bw});
      }
      shapes.push_back({out, s.branch_count() * bw, 1, 1});
      shapes.push_back({out});
      break;
    }
  }
  if (s.aligned_skip()) shapes.push_back({out, in, 1, 1});
  return shapes;
}

Tensor layer_forward(const LayerSpec& s, std::span<const Tensor> params, const Tensor& x, LayerCache* cache) {
  require_params(s, params);
  if (x.rank() != 3 || x.dim(0) != s.in_channels) {
    throw ValidationError(std::string(to_string(s.kind)) + " layer expects " + std::to_string(s.in_channels) +
                          " input channels, got " + shape_string(x.shape()));
  }
  if (cache) *cache = {};
  Tensor out = core_forward(s, params, x, cache);
  if (cache) cache->tensors.push_back(out);
  if (s.has_residual) {
    if (s.aligned_skip()) out.add(pointwise_conv(x, params.back(), no_bias()));
    else out.add(x);
  }
  return out;
}

Tensor prfx_block(const LayerSpec& spec, std::span<const Tensor> params, const Tensor& input) {
  if (spec.kind != LayerKind::prfx_block) throw ValidationError("prfx_block called with a non-prfx spec");
  return layer_forward(spec, params, input, nullptr);
}

Tensor layer_backward(const LayerSpec& s, std::span<const Tensor> p, const Tensor& x, const LayerCache& cache,
                      const Tensor& grad_out, std::span<Tensor> g) {
  require_params(s, p);
  if (g.size() != p.size()) throw ValidationError("gradient block count mismatch");
  Tensor dx(x.shape());

  if (s.has_residual) {
    if (s.aligned_skip()) pointwise_conv_backward(x, p.back(), grad_out, &dx, g.back(), nullptr);
    else dx.add(grad_out);
  }

  // Gradient at the pre-activation core output.
  const Tensor& core_out = cache.tensors.back();
  Tensor dcore;
  if (s.relu) {
    dcore = Tensor(core_out.shape());
    relu_backward(core_out, grad_out, dcore);
  } else {
    dcore = grad_out;
  }

  switch (s.kind) {
    case LayerKind::pointwise:
      pointwise_conv_backward(x, p[0], dcore, &dx, g[0], &g[1]);
      break;
    case LayerKind::sepconv: {
      const Tensor& dw = cache.tensors[0];
      Tensor ddw(dw.shape());
      pointwise_conv_backward(dw, p[1], dcore, &ddw, g[1], &g[2]);
      depthwise_conv2d_backward(x, p[0], ddw, &dx, g[0]);
      break;
    }
    case LayerKind::maxpool:
      max_pool2d_backward(cache.argmax.at(0), dcore, dx);
      break;
    case LayerKind::prfx_block: {
      const std::size_t nk = s.kernel_sizes.size();
      const std::size_t bw = s.branch_width;
      const std::size_t fuse = 3 * nk + (s.pool_branch ? 2 : 0);
      const Tensor& cat = cache.tensors[nk + (s.pool_branch ? 1 : 0)];
      Tensor dcat(cat.shape());
      pointwise_conv_backward(cat, p[fuse], dcore, &dcat, g[fuse], &g[fuse + 1]);
      const std::size_t H = x.dim(1), W = x.dim(2);
      auto branch_grad = [&](std::size_t b) {
        const float* src = dcat.slice(b * bw);
        return Tensor({bw, H, W}, std::vector<float>(src, src + bw * H * W));
      };
      for (std::size_t b = 0; b < nk; ++b) {
        const Tensor& dw = cache.tensors[b];
        Tensor ddw(dw.shape());
        pointwise_conv_backward(dw, p[3 * b + 1], branch_grad(b), &ddw, g[3 * b + 1], &g[3 * b + 2]);
        depthwise_conv2d_backward(x, p[3 * b], ddw, &dx, g[3 * b]);
      }
      if (s.pool_branch) {
        const Tensor& pooled = cache.tensors[nk];
        Tensor dpool(pooled.shape());
        pointwise_conv_backward(pooled, p[3 * nk], branch_grad(nk), &dpool, g[3 * nk], &g[3 * nk + 1]);
        max_pool2d_backward(cache.argmax.at(0), dpool, dx);
      }
      break;
    }
  }
  return dx;
}

}  // namespace canopyfuse::net
