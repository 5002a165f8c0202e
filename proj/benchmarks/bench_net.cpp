#include <benchmark/benchmark.h>

#include <random>

#include "canopyfuse/net/model.hpp"
#include "canopyfuse/net/ops.hpp"

namespace cf = canopyfuse;
using cf::net::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Args: channels, spatial size, kernel.
void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto x = random_tensor({c, n, n}, 1);
  const auto w = random_tensor({c, c, k, k}, 2);
  const Tensor b({c});
  for (auto _ : state) benchmark::DoNotOptimize(cf::net::conv2d(x, w, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * c * c * k * k * n * n));
}
BENCHMARK(BM_Conv2d)->Args({16, 32, 3})->Args({32, 32, 3})->Args({16, 32, 7});

void BM_Sepconv(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto x = random_tensor({c, n, n}, 1);
  const auto dw = random_tensor({c, 1, k, k}, 2);
  const auto pw = random_tensor({c, c, 1, 1}, 3);
  const Tensor b({c});
  for (auto _ : state) benchmark::DoNotOptimize(cf::net::sepconv(x, dw, pw, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * (c * k * k + c * c) * n * n));
}
BENCHMARK(BM_Sepconv)->Args({16, 32, 3})->Args({32, 32, 3})->Args({16, 32, 7});

cf::net::LayerSpec prfx_spec(std::size_t c) {
  cf::net::LayerSpec s;
  s.kind = cf::net::LayerKind::prfx_block;
  s.in_channels = c;
  s.out_channels = c;
  s.kernel_sizes = {1, 3, 5, 7};
  s.pool_branch = true;
  s.branch_width = c / 2;
  s.has_residual = true;
  s.relu = true;
  return s;
}

std::vector<Tensor> params_for(const cf::net::LayerSpec& spec) {
  std::vector<Tensor> out;
  std::uint64_t seed = 10;
  for (const auto& shape : cf::net::param_shapes(spec)) out.push_back(random_tensor(shape, seed++));
  return out;
}

void BM_PrfxForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto spec = prfx_spec(c);
  const auto params = params_for(spec);
  const auto x = random_tensor({c, 15, 15}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cf::net::layer_forward(spec, params, x));
}
BENCHMARK(BM_PrfxForward)->Arg(8)->Arg(16)->Arg(32);

void BM_PrfxBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto spec = prfx_spec(c);
  const auto params = params_for(spec);
  const auto x = random_tensor({c, 15, 15}, 1);
  cf::net::LayerCache cache;
  const auto y = cf::net::layer_forward(spec, params, x, &cache);
  const auto g = random_tensor(y.shape(), 4);
  std::vector<Tensor> grads;
  for (const auto& p : params) grads.emplace_back(p.shape());
  for (auto _ : state) benchmark::DoNotOptimize(cf::net::layer_backward(spec, params, x, cache, g, grads));
}
BENCHMARK(BM_PrfxBackward)->Arg(8)->Arg(16)->Arg(32);

cf::net::ModelParams bench_model(std::size_t blocks) {
  cf::net::ModelConfig c;
  c.in_channels = 13;
  c.entry_widths = {16};
  c.sepconv_filters = 16;
  c.num_blocks = blocks;
  c.branch_width = 8;
  return cf::net::ModelParams::create(c, 5);
}

void BM_ModelForward(benchmark::State& state) {
  const auto model = bench_model(static_cast<std::size_t>(state.range(0)));
  const auto x = random_tensor({13, 15, 15}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cf::net::forward(model, x));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(4);

void BM_ModelForwardBackward(benchmark::State& state) {
  const auto model = bench_model(static_cast<std::size_t>(state.range(0)));
  const auto x = random_tensor({13, 15, 15}, 1);
  const auto g = random_tensor({15, 15}, 2);
  for (auto _ : state) {
    cf::net::ForwardCache cache;
    cf::net::forward(model, x, &cache);
    benchmark::DoNotOptimize(cf::net::backward(model, cache, g));
  }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(1)->Arg(4);

}  // namespace
