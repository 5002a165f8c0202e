#include "canopyfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "canopyfuse/error.hpp"
#include "canopyfuse/random.hpp"
#include "csv_util.hpp"

namespace canopyfuse::train {

void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ValidationError("beta1 must be in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ValidationError("beta2 must be in [0, 1)");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) throw ValidationError("val_fraction must be in (0, 1)");
  if (!(c.epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  if (!(c.grad_clip > 0.0)) throw ValidationError("grad_clip must be > 0");
  if (!(c.l2_lambda >= 0.0)) throw ValidationError("l2_lambda must be >= 0");
  if (!(c.lr_gamma > 0.0)) throw ValidationError("lr_gamma must be > 0");
  if (c.batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (c.epochs == 0 || c.iters_per_epoch == 0) throw ValidationError("epochs and iters_per_epoch must be >= 1");
  for (std::size_t i = 1; i < c.milestones.size(); ++i) {
    if (c.milestones[i] <= c.milestones[i - 1]) throw ValidationError("milestones must be strictly increasing");
  }
}

namespace {

double to_double(std::string_view key, std::string_view v) {
  try {
    return detail::parse_double(v, 0);
  } catch (const FormatError&) {
    throw ValidationError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  long long x = 0;
  try {
    x = detail::parse_int(v, 0);
  } catch (const FormatError&) {
    throw ValidationError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  if (x < 0) throw ValidationError(std::string(key) + " must be >= 0");
  return static_cast<std::uint64_t>(x);
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("bad value for " + std::string(key) + ": '" + std::string(v) + "' (true|false)");
}

}  // namespace

bool apply_setting(TrainConfig& c, std::string_view key, std::string_view value) {
  if (key == "batch_size") c.batch_size = to_uint(key, value);
  else if (key == "lr") c.lr = to_double(key, value);
  else if (key == "lr_gamma") c.lr_gamma = to_double(key, value);
  else if (key == "epochs") c.epochs = to_uint(key, value);
  else if (key == "iters_per_epoch") c.iters_per_epoch = to_uint(key, value);
  else if (key == "grad_clip") c.grad_clip = to_double(key, value);
  else if (key == "l2_lambda") c.l2_lambda = to_double(key, value);
  else if (key == "beta1") c.beta1 = to_double(key, value);
  else if (key == "beta2") c.beta2 = to_double(key, value);
  else if (key == "epsilon") c.epsilon = to_double(key, value);
  else if (key == "val_fraction") c.val_fraction = to_double(key, value);
  else if (key == "seed") c.seed = to_uint(key, value);
  else if (key == "init_pred_bias") c.init_pred_bias = to_bool(key, value);
  else if (key == "milestones") {
    c.milestones.clear();
    for (auto part : detail::split(value, ',')) {
      if (!part.empty()) c.milestones.push_back(to_uint(key, part));
    }
  } else {
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Loss

double masked_mse(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask) {
  if (pred.size() != labels.size() || pred.size() != mask.size()) throw ValidationError("loss: shape mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(labels[i]);
    sum += d * d;
    ++n;
  }
  if (n == 0) throw ValidationError("loss: mask selects no pixel");
  return sum / static_cast<double>(n);
}

double l2_penalty(std::span<const net::Tensor> weights) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : weights) {
    for (float w : t.values()) sum += static_cast<double>(w) * w;
    n += t.size();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double loss(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask,
            std::span<const net::Tensor> weights, double lambda) {
  const double data = masked_mse(pred, labels, mask);
  return lambda == 0.0 ? data : data + lambda * l2_penalty(weights);
}

double loss(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask,
            std::span<const double> weights, double lambda) {
  const double data = masked_mse(pred, labels, mask);
  if (lambda == 0.0 || weights.empty()) return data;
  double sum = 0.0;
  for (double w : weights) sum += w * w;
  return data + lambda * sum / static_cast<double>(weights.size());
}

void masked_mse_grad(std::span<const float> pred, std::span<const float> labels, std::span<const std::uint8_t> mask,
                     double normalizer, std::span<float> grad_out) {
  if (pred.size() != labels.size() || pred.size() != mask.size() || grad_out.size() != pred.size()) {
    throw ValidationError("loss gradient: shape mismatch");
  }
  const double scale = 2.0 / normalizer;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    grad_out[i] = mask[i] ? static_cast<float>(scale * (static_cast<double>(pred[i]) - labels[i])) : 0.0f;
  }
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::zeros_like(const std::vector<net::Tensor>& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

template <class T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 double lr_t, double beta1, double beta2, double epsilon) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
    const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr_t * m_hat / (std::sqrt(v_hat) + epsilon));
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::uint64_t, double, double, double, double);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::uint64_t, double, double, double, double);

void adam_step(std::vector<net::Tensor>& params, const std::vector<net::Tensor>& grads, OptimizerState& state,
               double lr_t, const TrainConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ValidationError("adam: parameter/gradient/state block counts differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) throw ValidationError("adam: gradient shape mismatch");
    grads[i].check_finite("gradient block " + std::to_string(i));
  }
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update<float>(params[i].values(), grads[i].values(), state.m[i].values(), state.v[i].values(), state.t,
                       lr_t, config.beta1, config.beta2, config.epsilon);
  }
}

void clip_gradients(std::span<float> grads, double max_abs) {
  const auto hi = static_cast<float>(max_abs);
  for (float& g : grads) g = std::clamp(g, -hi, hi);
}

void clip_gradients(std::vector<net::Tensor>& grads, double max_abs) {
  for (auto& g : grads) clip_gradients(g.values(), max_abs);
}

double lr_at(std::uint64_t iter, const TrainConfig& config) {
  double lr = config.lr;
  for (auto m : config.milestones) {
    if (m <= iter) lr *= config.lr_gamma;
  }
  return lr;
}

Split split_train_val(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (n < 2) throw ValidationError("train/val split needs at least 2 samples");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must be in (0, 1)");
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(ids.begin(), ids.end());
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  Split s;
  s.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  return s;
}

// ---------------------------------------------------------------------------
// Training loop

double evaluate_loss(const net::ModelParams& model, std::span<const fusion::Sample> samples,
                     std::span<const std::size_t> ids) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t id : ids) {
    const auto& s = samples[id];
    const auto out = net::forward(model, s.patch);
    for (std::size_t i = 0; i < s.label_mask.size(); ++i) {
      if (!s.label_mask[i]) continue;
      const double d = static_cast<double>(out.pred[i]) - s.label_values[i];
      sum += d * d;
      ++n;
    }
  }
  if (n == 0) throw ValidationError("evaluation samples carry no labels");
  return sum / static_cast<double>(n);
}

namespace {

std::string locate_block(const net::ModelParams& model, std::size_t block) {
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const std::size_t first = model.first_block(l);
    if (block >= first && block < first + model.layer_params(l).size()) {
      return "layer " + std::to_string(l) + " (" + net::to_string(model.layers()[l].kind) + ")";
    }
  }
  return "unknown layer";
}

}  // namespace

TrainResult train_loop(const net::ModelParams& initial, std::span<const fusion::Sample> samples,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  return train_loop(initial, samples, split_train_val(samples.size(), config.val_fraction, config.seed), config,
                    on_epoch);
}

TrainResult train_loop(const net::ModelParams& initial, std::span<const fusion::Sample> samples, const Split& split,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  if (split.train.empty() || split.val.empty()) {
    throw ValidationError("training needs at least one training and one validation sample");
  }
  for (const auto& s : samples) {
    if (s.masked_count() == 0) throw ValidationError("training sample without labels");
  }

  net::ModelParams model = initial;
  if (config.init_pred_bias) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t id : split.train) {
      const auto& s = samples[id];
      for (std::size_t i = 0; i < s.label_mask.size(); ++i) {
        if (s.label_mask[i]) {
          sum += s.label_values[i];
          ++n;
        }
      }
    }
    auto head = model.layer_params(model.trunk_size());
    head[1][0] = static_cast<float>(sum / static_cast<double>(n));
  }

  auto state = OptimizerState::zeros_like(model.blocks());
  Rng rng(derive_seed(config.seed, 0x7261696eULL));
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::uint64_t iter = 0;
  const std::size_t W = model.parameter_count();
  net::ForwardCache cache;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t it = 0; it < config.iters_per_epoch; ++it, ++iter) {
      std::vector<std::size_t> batch(config.batch_size);
      std::size_t n_masked = 0;
      for (auto& b : batch) {
        b = split.train[rng.index(split.train.size())];
        n_masked += samples[b].masked_count();
      }
      auto grads = model.zeros_like();
      double sq = 0.0;
      for (std::size_t b : batch) {
        const auto& s = samples[b];
        const auto out = net::forward(model, s.patch, &cache);
        for (std::size_t i = 0; i < s.label_mask.size(); ++i) {
          if (!s.label_mask[i]) continue;
          const double d = static_cast<double>(out.pred[i]) - s.label_values[i];
          sq += d * d;
        }
        net::Tensor gpred(out.pred.shape());
        masked_mse_grad(out.pred.values(), s.label_values, s.label_mask, static_cast<double>(n_masked),
                        gpred.values());
        net::backward_accumulate(model, cache, gpred, nullptr, nullptr, grads);
      }
      double batch_loss = sq / static_cast<double>(n_masked);
      if (config.l2_lambda > 0.0) {
        batch_loss += config.l2_lambda * l2_penalty(model.blocks());
        const double k = 2.0 * config.l2_lambda / static_cast<double>(W);
        for (std::size_t i = 0; i < grads.size(); ++i) {
          const auto w = model.blocks()[i].values();
          auto g = grads[i].values();
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += static_cast<float>(k * w[j]);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss at iteration " + std::to_string(iter));
      }
      for (std::size_t i = 0; i < grads.size(); ++i) {
        try {
          grads[i].check_finite("gradient");
        } catch (const NumericError&) {
          throw NumericError("non-finite gradient at iteration " + std::to_string(iter) + " in " +
                             locate_block(model, i));
        }
      }
      clip_gradients(grads, config.grad_clip);
      adam_step(model.blocks(), grads, state, lr_at(iter, config), config);
      epoch_loss += batch_loss;
    }
    EpochLoss e{epoch, epoch_loss / static_cast<double>(config.iters_per_epoch),
                evaluate_loss(model, samples, split.val)};
    if (!std::isfinite(e.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.trace.push_back(e);
    if (e.val_loss < result.best_val_loss) {
      result.best_val_loss = e.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
    if (on_epoch) on_epoch(e);
  }
  return result;
}

void write_loss_trace(std::ostream& out, std::span<const EpochLoss> trace) {
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : trace) {
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ',' << detail::format_double(e.val_loss) << '\n';
  }
}

}  // namespace canopyfuse::train
