#include "canopyfuse/net/model.hpp"

#include <cmath>

#include "../binary_io.hpp"
#include "canopyfuse/error.hpp"
#include "canopyfuse/random.hpp"

namespace canopyfuse::net {

std::vector<LayerSpec> build_architecture(const ModelConfig& c) {
  if (c.in_channels == 0) throw ValidationError("model needs at least one input channel");
  if (c.sepconv_filters == 0) throw ValidationError("num_sepconv_filters must be > 0");
  std::vector<LayerSpec> layers;
  std::size_t ch = c.in_channels;
  std::vector<std::size_t> widths = c.entry_widths;
  widths.push_back(c.sepconv_filters);
  for (std::size_t w : widths) {
    layers.push_back({LayerKind::pointwise, ch, w, {1}, false, 0, false, true});
    ch = w;
  }
  const std::size_t bw = c.branch_width == 0 ? c.sepconv_filters : c.branch_width;
  for (std::size_t i = 0; i < c.num_blocks; ++i) {
    layers.push_back({LayerKind::prfx_block, ch, c.sepconv_filters, c.branch_kernels, c.pool_branch, bw, true, true});
    ch = c.sepconv_filters;
  }
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    layers.push_back({LayerKind::pointwise, ch, 1, {1}, false, 0, false, false});
  }
  for (const auto& l : layers) validate(l);
  return layers;
}

// ---------------------------------------------------------------------------

ModelParams::ModelParams(std::vector<LayerSpec> layers, geo::ChannelStats stats)
    : layers_(std::move(layers)), stats_(std::move(stats)) {
  if (layers_.size() < kHeadCount + 1) throw ValidationError("model needs a trunk and three heads");
  for (std::size_t i = 1; i < trunk_size(); ++i) {
    if (layers_[i].in_channels != layers_[i - 1].out_channels) {
      throw ValidationError("layer " + std::to_string(i) + " input channels do not match previous output");
    }
  }
  const std::size_t depth = layers_[trunk_size() - 1].out_channels;
  for (std::size_t h = trunk_size(); h < layers_.size(); ++h) {
    const auto& l = layers_[h];
    if (l.kind != LayerKind::pointwise || l.in_channels != depth || l.out_channels != 1 || l.relu ||
        l.has_residual) {
      throw ValidationError("heads must be plain 1x1 convolutions from the trunk depth to 1 channel");
    }
  }
  for (const auto& l : layers_) {
    offsets_.push_back(blocks_.size());
    for (auto& shape : param_shapes(l)) blocks_.emplace_back(std::move(shape));
  }
  offsets_.push_back(blocks_.size());
  if (!stats_.mean.empty() && stats_.band_count() != in_channels()) {
    throw ValidationError("channel stats band count does not match model input channels");
  }
}

ModelParams ModelParams::create(const ModelConfig& config, std::uint64_t seed) {
  ModelParams m(build_architecture(config));
  Rng rng(seed);
  for (auto& block : m.blocks_) {
    if (block.rank() == 1) continue;  // bias
    // fan_in: (1,k,k) for depthwise, (C,1,1) for pointwise.
    const std::size_t fan_in = block.dim(1) * block.dim(2) * block.dim(3);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : block.values()) v = static_cast<float>(rng.normal() * sd);
  }
  return m;
}

std::span<const Tensor> ModelParams::layer_params(std::size_t layer) const {
  return std::span<const Tensor>(blocks_).subspan(offsets_.at(layer), offsets_.at(layer + 1) - offsets_.at(layer));
}

std::span<Tensor> ModelParams::layer_params(std::size_t layer) {
  return std::span<Tensor>(blocks_).subspan(offsets_.at(layer), offsets_.at(layer + 1) - offsets_.at(layer));
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.size();
  return n;
}

std::vector<Tensor> ModelParams::zeros_like() const {
  std::vector<Tensor> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.emplace_back(b.shape());
  return out;
}

void ModelParams::set_stats(geo::ChannelStats stats) {
  if (stats.band_count() != in_channels()) {
    throw ValidationError("channel stats have " + std::to_string(stats.band_count()) + " bands, model expects " +
                          std::to_string(in_channels()));
  }
  stats_ = std::move(stats);
}

void ModelParams::check_finite() const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].check_finite("parameter block " + std::to_string(i));
}

// ---------------------------------------------------------------------------

ForwardResult forward(const ModelParams& model, const Tensor& cube, ForwardCache* cache) {
  if (cube.rank() != 3 || cube.dim(0) != model.in_channels()) {
    throw ValidationError("model expects " + std::to_string(model.in_channels()) + " input channels, got " +
                          shape_string(cube.shape()));
  }
  cube.check_finite("forward input");
  const std::size_t H = cube.dim(1), W = cube.dim(2);
  if (cache) {
    cache->activations.clear();
    cache->layers.assign(model.trunk_size(), {});
  }
  Tensor x = cube;
  for (std::size_t i = 0; i < model.trunk_size(); ++i) {
    Tensor y = layer_forward(model.layers()[i], model.layer_params(i), x, cache ? &cache->layers[i] : nullptr);
    if (cache) cache->activations.push_back(std::move(x));
    x = std::move(y);
  }
  ForwardResult r;
  Tensor* outs[kHeadCount] = {&r.pred, &r.variance, &r.second_moment};
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    const std::size_t li = model.trunk_size() + h;
    *outs[h] = layer_forward(model.layers()[li], model.layer_params(li), x, nullptr).reshaped({H, W});
  }
  r.pred.check_finite("forward predictions");
  if (cache) cache->activations.push_back(std::move(x));
  return r;
}

void backward_accumulate(const ModelParams& model, const ForwardCache& cache, const Tensor& grad_pred,
                         const Tensor* grad_var, const Tensor* grad_m2, std::vector<Tensor>& grads) {
  if (cache.activations.size() != model.trunk_size() + 1) {
    throw ValidationError("backward needs the cache of a forward pass on this model");
  }
  if (grads.size() != model.blocks().size()) throw ValidationError("gradient block count mismatch");
  const Tensor& trunk_out = cache.activations.back();
  const std::size_t H = trunk_out.dim(1), W = trunk_out.dim(2);
  auto grad_span = [&](std::size_t layer) {
    return std::span<Tensor>(grads).subspan(model.first_block(layer), model.layer_params(layer).size());
  };

  Tensor dx(trunk_out.shape());
  const Tensor* head_grads[kHeadCount] = {&grad_pred, grad_var, grad_m2};
  for (std::size_t h = 0; h < kHeadCount; ++h) {
    if (!head_grads[h]) continue;
    if (head_grads[h]->size() != H * W) throw ValidationError("head gradient must be (H,W)");
    const std::size_t li = model.trunk_size() + h;
    LayerCache head_cache;
    head_cache.tensors.push_back(Tensor({1, H, W}));  // unused: heads carry no activation
    dx.add(layer_backward(model.layers()[li], model.layer_params(li), trunk_out, head_cache,
                          head_grads[h]->reshaped({1, H, W}), grad_span(li)));
  }
  for (std::size_t i = model.trunk_size(); i-- > 0;) {
    dx = layer_backward(model.layers()[i], model.layer_params(i), cache.activations[i], cache.layers[i], dx,
                        grad_span(i));
  }
}

std::vector<Tensor> backward(const ModelParams& model, const ForwardCache& cache, const Tensor& grad_pred,
                             const Tensor* grad_var, const Tensor* grad_m2) {
  auto grads = model.zeros_like();
  backward_accumulate(model, cache, grad_pred, grad_var, grad_m2, grads);
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i].check_finite("gradient block " + std::to_string(i));
  return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr char kCheckpointMagic[5] = "PRFX";

std::uint32_t u32(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw FormatError(FormatErrc::dimension_overflow, "value exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& model) {
  detail::ByteWriter w;
  w.put_magic(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(u32(model.layers().size()));
  for (const auto& l : model.layers()) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
    w.put<std::uint8_t>(static_cast<std::uint8_t>((l.relu ? 1 : 0) | (l.has_residual ? 2 : 0) |
                                                  (l.pool_branch ? 4 : 0)));
    w.put<std::uint32_t>(u32(l.in_channels));
    w.put<std::uint32_t>(u32(l.out_channels));
    w.put<std::uint32_t>(u32(l.branch_width));
    w.put<std::uint32_t>(u32(l.kernel_sizes.size()));
    for (auto k : l.kernel_sizes) w.put<std::uint32_t>(u32(k));
  }
  const auto& s = model.stats();
  w.put<std::uint32_t>(u32(s.band_count()));
  for (double v : s.mean) w.put<double>(v);
  for (double v : s.std) w.put<double>(v);
  w.put<std::uint32_t>(u32(model.blocks().size()));
  for (const auto& b : model.blocks()) w.put_array<float>(b.values());
  return std::move(w).take();
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic_matches(kCheckpointMagic)) throw FormatError(FormatErrc::bad_magic, "not a PRFX checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrc::version_mismatch, "PRFX version " + std::to_string(version));
  }
  const auto n_layers = r.get<std::uint32_t>();
  if (n_layers > 1'000'000) throw FormatError(FormatErrc::dimension_overflow, "layer count");
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(LayerKind::maxpool)) throw FormatError(FormatErrc::malformed, "layer kind");
    l.kind = static_cast<LayerKind>(kind);
    const auto flags = r.get<std::uint8_t>();
    l.relu = flags & 1;
    l.has_residual = flags & 2;
    l.pool_branch = flags & 4;
    l.in_channels = r.get<std::uint32_t>();
    l.out_channels = r.get<std::uint32_t>();
    l.branch_width = r.get<std::uint32_t>();
    const auto nk = r.get<std::uint32_t>();
    if (nk > 64) throw FormatError(FormatErrc::dimension_overflow, "kernel list length");
    l.kernel_sizes.resize(nk);
    for (auto& k : l.kernel_sizes) k = r.get<std::uint32_t>();
    layers.push_back(std::move(l));
  }
  geo::ChannelStats stats;
  const auto nb = r.get<std::uint32_t>();
  if (nb > 1'000'000) throw FormatError(FormatErrc::dimension_overflow, "stats band count");
  stats.mean.resize(nb);
  stats.std.resize(nb);
  for (auto& v : stats.mean) v = r.get<double>();
  for (auto& v : stats.std) v = r.get<double>();
  ModelParams model;
  try {
    model = ModelParams(std::move(layers), std::move(stats));
  } catch (const ValidationError& e) {
    throw FormatError(FormatErrc::malformed, std::string("layer specs: ") + e.what());
  }
  const auto n_blocks = r.get<std::uint32_t>();
  if (n_blocks != model.blocks().size()) {
    throw FormatError(FormatErrc::malformed, "checkpoint has " + std::to_string(n_blocks) +
                                                 " parameter blocks, layer specs imply " +
                                                 std::to_string(model.blocks().size()));
  }
  for (auto& b : model.blocks()) r.get_array<float>(b.values());
  if (r.remaining() != 0) throw FormatError(FormatErrc::malformed, "trailing bytes after parameters");
  return model;
}

void write_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_checkpoint(model));
}

ModelParams read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path.string()));
}

}  // namespace canopyfuse::net
