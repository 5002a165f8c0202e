#pragma once

#include <cstdint>
#include <vector>

#include "canopyfuse/net/tensor.hpp"

// Stride-1 SAME-padded kernels on (C,H,W) tensors. Every *_backward accumulates (+=)
// into the gradient tensors it is handed, so callers zero them once and can sum the
// contributions of several consumers of one activation.
namespace canopyfuse::net {

/// Dense cross-correlation. filters (K,C,k,k) with k odd, bias (K) or empty. Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias);
void conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                     Tensor* grad_input, Tensor& grad_filters, Tensor* grad_bias);

/// Per-channel k x k cross-correlation; filters (C,1,k,k). No bias.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& filters);
void depthwise_conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                               Tensor* grad_input, Tensor& grad_filters);

/// 1x1 convolution; weights (K,C,1,1), bias (K) or empty.
Tensor pointwise_conv(const Tensor& input, const Tensor& weights, const Tensor& bias);
void pointwise_conv_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                             Tensor* grad_input, Tensor& grad_weights, Tensor* grad_bias);

/// Depthwise (C,1,k,k) followed by pointwise (K,C,1,1) plus bias (K).
Tensor sepconv(const Tensor& input, const Tensor& depthwise, const Tensor& pointwise, const Tensor& bias);

/// Dense filter bank (K,C,k,k) equivalent to a depthwise/pointwise pair:
/// W[k][c] = pointwise[k][c] * depthwise[c].
Tensor compose_separable(const Tensor& depthwise, const Tensor& pointwise);

/// k x k max pooling with -inf padding. `argmax`, when given, receives for every output
/// element the flat input index that produced it.
Tensor max_pool2d(const Tensor& input, std::size_t k, std::vector<std::uint32_t>* argmax = nullptr);
void max_pool2d_backward(const std::vector<std::uint32_t>& argmax, const Tensor& grad_out, Tensor& grad_input);

Tensor relu(const Tensor& x);
/// grad_in += grad_out where the activation output `y` is positive.
void relu_backward(const Tensor& y, const Tensor& grad_out, Tensor& grad_in);

/// Concatenates (C_i,H,W) tensors along channels.
Tensor concat_channels(const std::vector<Tensor>& parts);

}  // namespace canopyfuse::net
