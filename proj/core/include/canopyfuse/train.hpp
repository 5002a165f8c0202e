#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canopyfuse/fusion.hpp"
#include "canopyfuse/net/model.hpp"

namespace canopyfuse::train {

struct TrainConfig {
  std::size_t batch_size = 5;
  double lr = 1e-4;
  std::vector<std::uint64_t> milestones{400000, 700000};
  double lr_gamma = 0.1;
  std::size_t epochs = 200;
  std::size_t iters_per_epoch = 5000;
  double grad_clip = 1000.0;
  double l2_lambda = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double val_fraction = 0.10;
  std::uint64_t seed = 0;
  /// Start the prediction head bias at the mean training label.
  bool init_pred_bias = true;
};

/// Throws ValidationError when any invariant on the fields fails.
void validate(const TrainConfig& c);

/// Applies one `key=value` setting. Returns false for keys it does not know;
/// throws ValidationError for unparsable values.
bool apply_setting(TrainConfig& c, std::string_view key, std::string_view value);

/// Mean squared error over pixels where mask != 0. Throws on an empty mask.
double masked_mse(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask);

/// Mean of squared weights over every scalar in `weights` (biases included).
double l2_penalty(std::span<const net::Tensor> weights);

/// masked_mse + lambda * l2_penalty.
double loss(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask,
            std::span<const net::Tensor> weights, double lambda);
/// Overload on a flat weight vector.
double loss(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask,
            std::span<const double> weights, double lambda);

/// d(masked_mse)/d(pred) with `normalizer` in the denominator (the pooled masked count of
/// the batch). Unmasked pixels get exactly 0.
void masked_mse_grad(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask,
                     double normalizer, std::span<float> grad_out);

struct OptimizerState {
  std::vector<net::Tensor> m;
  std::vector<net::Tensor> v;
  std::uint64_t t = 0;

  static OptimizerState zeros_like(const std::vector<net::Tensor>& params);
};

/// One Adam update in place. `t` is the 1-based step count already incremented.
template <class T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 double lr_t, double beta1, double beta2, double epsilon);

extern template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                        std::span<float>, std::uint64_t, double, double, double, double);
extern template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                         std::span<double>, std::uint64_t, double, double, double, double);

/// Increments state.t, then updates every block. Throws NumericError on a non-finite gradient.
void adam_step(std::vector<net::Tensor>& params, const std::vector<net::Tensor>& grads, OptimizerState& state,
               double lr_t, const TrainConfig& config);

/// Elementwise clamp to [-max_abs, max_abs].
void clip_gradients(std::vector<net::Tensor>& grads, double max_abs);
void clip_gradients(std::span<float> grads, double max_abs);

/// lr * gamma^(number of milestones <= iter).
double lr_at(std::uint64_t iter, const TrainConfig& config);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle of 0..n-1; |val| = round(val_fraction * n) clamped to [1, n-1].
Split split_train_val(std::size_t n, double val_fraction, std::uint64_t seed);

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean batch loss (data + penalty) over the epoch
  double val_loss = 0.0;    // pooled masked MSE over the validation samples
};

struct TrainResult {
  net::ModelParams model;  // parameters at the epoch of minimum validation loss
  std::vector<EpochLoss> trace;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Pooled masked MSE of `model` over the given samples.
double evaluate_loss(const net::ModelParams& model, std::span<const fusion::Sample> samples,
                     std::span<const std::size_t> ids);

/// Trains `initial` on `samples`, holding out a validation split drawn from config.seed.
TrainResult train_loop(const net::ModelParams& initial, std::span<const fusion::Sample> samples,
                       const TrainConfig& config, const EpochCallback& on_epoch = {});
/// As above with an explicit split.
TrainResult train_loop(const net::ModelParams& initial, std::span<const fusion::Sample> samples,
                       const Split& split, const TrainConfig& config, const EpochCallback& on_epoch = {});

void write_loss_trace(std::ostream& out, std::span<const EpochLoss> trace);

}  // namespace canopyfuse::train
