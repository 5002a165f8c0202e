#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "canopyfuse/geo.hpp"
#include "canopyfuse/net/tensor.hpp"

namespace canopyfuse::net {

enum class LayerKind : std::uint8_t { pointwise = 0, sepconv = 1, prfx_block = 2, maxpool = 3 };

const char* to_string(LayerKind k) noexcept;

/// Structure of one layer. Parameter blocks are derived from it (see param_shapes).
///
///  pointwise   W (out,in,1,1), b (out)
///  sepconv     depthwise (in,1,k,k), pointwise (out,in,1,1), b (out)
///  maxpool     none; kernel_sizes = {k}, out == in
///  prfx_block  per kernel k:   depthwise (in,1,k,k), pointwise (bw,in,1,1), b (bw)
///              pool branch:    pointwise (bw,in,1,1), b (bw)  after a 3x3 max pool
///              fusion:         W (out, branches*bw, 1, 1), b (out)
///
/// When has_residual is set, the layer output is core(x) + skip(x). The skip is the
/// identity when in == out, otherwise a bias-free 1x1 convolution W (out,in,1,1)
/// appended as the final parameter block. The skip never passes through an activation.
struct LayerSpec {
  LayerKind kind = LayerKind::pointwise;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<std::size_t> kernel_sizes{1};
  bool pool_branch = false;
  std::size_t branch_width = 0;
  bool has_residual = false;
  bool relu = false;

  std::size_t branch_count() const noexcept { return kernel_sizes.size() + (pool_branch ? 1 : 0); }
  bool aligned_skip() const noexcept { return has_residual && in_channels != out_channels; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Throws ValidationError for even/empty kernels, zero channels, or inconsistent fields.
void validate(const LayerSpec& spec);
std::vector<std::vector<std::size_t>> param_shapes(const LayerSpec& spec);

/// Intermediate activations kept by a layer's forward pass for its backward pass.
struct LayerCache {
  std::vector<Tensor> tensors;
  std::vector<std::vector<std::uint32_t>> argmax;
};

Tensor layer_forward(const LayerSpec& spec, std::span<const Tensor> params, const Tensor& x,
                     LayerCache* cache = nullptr);
/// Accumulates parameter gradients into `grads` (same layout as params); returns d/dx.
Tensor layer_backward(const LayerSpec& spec, std::span<const Tensor> params, const Tensor& x,
                      const LayerCache& cache, const Tensor& grad_out, std::span<Tensor> grads);

/// Pyramid receptive-field block: parallel separable branches plus a pooled branch,
/// concatenated on channels, fused by a 1x1 convolution with ReLU, optional residual.
Tensor prfx_block(const LayerSpec& spec, std::span<const Tensor> params, const Tensor& input);

struct ModelConfig {
  std::size_t in_channels = 13;
  /// Entry pointwise widths before the final num_sepconv_filters layer.
  std::vector<std::size_t> entry_widths{128, 256};
  std::size_t sepconv_filters = 256;
  std::size_t num_blocks = 8;
  std::vector<std::size_t> branch_kernels{1, 3, 5, 7};
  bool pool_branch = true;
  /// Channels per branch; 0 means sepconv_filters.
  std::size_t branch_width = 0;
};

/// Entry pointwise layers (ReLU), residual prfx blocks, then the three 1x1 heads
/// (predictions, variances, second_moments) in that order.
std::vector<LayerSpec> build_architecture(const ModelConfig& config);

inline constexpr std::size_t kHeadCount = 3;

/// Ordered parameter blocks of a layer stack plus the input normalization statistics.
class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-initialised parameters. Throws when the stack does not end in three 1-channel heads.
  ModelParams(std::vector<LayerSpec> layers, geo::ChannelStats stats = {});

  /// He-normal weights, zero biases, deterministic in `seed`.
  static ModelParams create(const ModelConfig& config, std::uint64_t seed);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t trunk_size() const noexcept { return layers_.size() - kHeadCount; }
  std::size_t in_channels() const noexcept { return layers_.front().in_channels; }

  std::vector<Tensor>& blocks() noexcept { return blocks_; }
  const std::vector<Tensor>& blocks() const noexcept { return blocks_; }
  std::span<const Tensor> layer_params(std::size_t layer) const;
  std::span<Tensor> layer_params(std::size_t layer);
  std::size_t first_block(std::size_t layer) const { return offsets_.at(layer); }

  /// Scalar weight count, biases included.
  std::size_t parameter_count() const noexcept;

  /// Zero tensors shaped like the parameter blocks.
  std::vector<Tensor> zeros_like() const;

  const geo::ChannelStats& stats() const noexcept { return stats_; }
  void set_stats(geo::ChannelStats stats);

  /// Throws NumericError when any weight is non-finite.
  void check_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Tensor> blocks_;
  std::vector<std::size_t> offsets_;
  geo::ChannelStats stats_;
};

struct ForwardResult {
  Tensor pred;            // (H,W) meters
  Tensor variance;        // (H,W) diagnostic
  Tensor second_moment;   // (H,W) diagnostic
};

struct ForwardCache {
  std::vector<Tensor> activations;  // input of each trunk layer, then the trunk output
  std::vector<LayerCache> layers;
};

/// `cube` is (C,H,W), already normalized. Throws on channel mismatch or non-finite output.
ForwardResult forward(const ModelParams& model, const Tensor& cube, ForwardCache* cache = nullptr);

/// Gradient of sum(grad_pred * pred + grad_var * var + grad_m2 * m2) with respect to every
/// parameter block. `grad_var`/`grad_m2` may be null (treated as zero).
std::vector<Tensor> backward(const ModelParams& model, const ForwardCache& cache, const Tensor& grad_pred,
                             const Tensor* grad_var = nullptr, const Tensor* grad_m2 = nullptr);
/// As above, accumulating into existing gradient blocks.
void backward_accumulate(const ModelParams& model, const ForwardCache& cache, const Tensor& grad_pred,
                         const Tensor* grad_var, const Tensor* grad_m2, std::vector<Tensor>& grads);

// PRFX checkpoint (little-endian):
//   "PRFX" | u32 version=1 | u32 layer_count |
//   per layer: u8 kind | u8 flags (1 relu, 2 residual, 4 pool branch) | u32 in | u32 out |
//              u32 branch_width | u32 n_kernels | u32 kernel[n_kernels] |
//   u32 stats_bands | f64 mean[stats_bands] | f64 std[stats_bands] |
//   u32 block_count | f32 values of every block in declaration order
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& model);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const ModelParams& model, const std::filesystem::path& path);
ModelParams read_checkpoint(const std::filesystem::path& path);

}  // namespace canopyfuse::net
