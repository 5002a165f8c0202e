#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "canopyfuse/error.hpp"
#include "canopyfuse/net/model.hpp"
#include "canopyfuse/net/ops.hpp"
#include "oracles.hpp"

namespace cf = canopyfuse;
using cf::net::LayerKind;
using cf::net::LayerSpec;
using cf::net::ModelConfig;
using cf::net::ModelParams;
using cf::net::Tensor;

namespace {

ModelConfig tiny_config(std::size_t in = 3) {
  ModelConfig c;
  c.in_channels = in;
  c.entry_widths = {4};
  c.sepconv_filters = 4;
  c.num_blocks = 2;
  c.branch_width = 2;
  return c;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

LayerSpec prfx(std::size_t in, std::size_t out) {
  return {LayerKind::prfx_block, in, out, {1, 3, 5, 7}, true, 2, true, true};
}

}  // namespace

TEST(Conv2d, UnitFilterIsIdentity) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({1, 5, 6}, rng);
  const Tensor f({1, 1, 1, 1}, 1.0f);
  EXPECT_EQ(cf::net::conv2d(x, f, Tensor({1})), x);
}

TEST(Conv2d, OnesFilterOnOneHot) {
  for (std::size_t hot : {12u, 0u, 4u}) {
    Tensor x({1, 5, 5});
    x[hot] = 1.0f;
    const auto y = cf::net::conv2d(x, Tensor({1, 1, 3, 3}, 1.0f), Tensor());
    const long hy = static_cast<long>(hot / 5), hx = static_cast<long>(hot % 5);
    for (long r = 0; r < 5; ++r) {
      for (long c = 0; c < 5; ++c) {
        const bool inside = std::abs(r - hy) <= 1 && std::abs(c - hx) <= 1;
        EXPECT_EQ(y.at(0, r, c), inside ? 1.0f : 0.0f) << hot << " " << r << "," << c;
      }
    }
  }
}

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({2, 4, 4}, rng);
  const Tensor f = oracle::random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({3}, rng);
  EXPECT_LE(max_abs_diff(cf::net::conv2d(x, f, b), oracle::conv2d(x, f, b)), 1e-5f);
}

TEST(Conv2d, ShapeMismatchThrows) {
  EXPECT_THROW(cf::net::conv2d(Tensor({2, 4, 4}), Tensor({3, 3, 3, 3}), Tensor()), cf::ValidationError);
  EXPECT_THROW(cf::net::conv2d(Tensor({2, 4, 4}), Tensor({3, 2, 2, 2}), Tensor()), cf::ValidationError);
}

TEST(Sepconv, IdentityFactors) {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({3, 6, 6}, rng);
  Tensor dw({3, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) dw[c * 9 + 4] = 1.0f;
  Tensor pw({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) pw[c * 3 + c] = 1.0f;
  EXPECT_EQ(cf::net::sepconv(x, dw, pw, Tensor({3})), x);
}

TEST(Sepconv, ParameterCount) {
  LayerSpec sep{LayerKind::sepconv, 64, 128, {3}, false, 0, false, false};
  std::size_t n = 0;
  for (const auto& s : cf::net::param_shapes(sep)) {
    std::size_t p = 1;
    for (auto d : s) p *= d;
    n += p;
  }
  EXPECT_EQ(n, 64u * 9 + 128 * 64 + 128);  // 8,768 weights plus the bias
  EXPECT_EQ(cf::net::compose_separable(Tensor({64, 1, 3, 3}), Tensor({128, 64, 1, 1})).size(), 73728u);
}

TEST(Sepconv, EqualsComposedDense) {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({4, 9, 7}, rng);
  const Tensor dw = oracle::random_tensor({4, 1, 5, 5}, rng);
  const Tensor pw = oracle::random_tensor({6, 4, 1, 1}, rng);
  const Tensor b = oracle::random_tensor({6}, rng);
  EXPECT_LE(max_abs_diff(cf::net::sepconv(x, dw, pw, b), oracle::conv2d(x, oracle::compose(dw, pw), b)), 1e-5f);
  EXPECT_EQ(cf::net::compose_separable(dw, pw), oracle::compose(dw, pw));
}

TEST(MaxPool, MatchesReference) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor({3, 7, 8}, rng);
  for (std::size_t k : {1u, 3u, 5u}) EXPECT_EQ(cf::net::max_pool2d(x, k), oracle::max_pool(x, k));
}

TEST(Layers, ValidationRules) {
  LayerSpec ok{LayerKind::pointwise, 3, 4, {1}, false, 0, false, true};
  EXPECT_NO_THROW(cf::net::validate(ok));
  auto bad = ok;
  bad.kernel_sizes = {3};
  EXPECT_THROW(cf::net::validate(bad), cf::ValidationError);
  bad = prfx(3, 4);
  bad.kernel_sizes = {1, 4};
  EXPECT_THROW(cf::net::validate(bad), cf::ValidationError);
  bad.kernel_sizes = {};
  EXPECT_THROW(cf::net::validate(bad), cf::ValidationError);
  bad = prfx(3, 4);
  bad.branch_width = 0;
  EXPECT_THROW(cf::net::validate(bad), cf::ValidationError);
  LayerSpec pool{LayerKind::maxpool, 3, 4, {3}, false, 0, false, false};
  EXPECT_THROW(cf::net::validate(pool), cf::ValidationError);
  LayerSpec sep{LayerKind::sepconv, 3, 4, {3}, true, 0, false, false};
  EXPECT_THROW(cf::net::validate(sep), cf::ValidationError);
}

TEST(PrfxBlock, ZeroBranchesWithResidualIsIdentity) {
  std::mt19937_64 rng(6);
  const auto spec = prfx(4, 4);
  std::vector<Tensor> params;
  for (const auto& s : cf::net::param_shapes(spec)) params.emplace_back(s);
  // Negative inputs survive, so no ReLU sits on the skip path.
  const Tensor x = oracle::random_tensor({4, 6, 6}, rng, -2.0f, 1.0f);
  EXPECT_EQ(cf::net::prfx_block(spec, params, x), x);
}

TEST(PrfxBlock, ResidualGradientPassesThrough) {
  std::mt19937_64 rng(7);
  const auto spec = prfx(4, 4);
  std::vector<Tensor> params, grads;
  for (const auto& s : cf::net::param_shapes(spec)) {
    params.emplace_back(s);
    grads.emplace_back(s);
  }
  const Tensor x = oracle::random_tensor({4, 5, 5}, rng);
  cf::net::LayerCache cache;
  cf::net::layer_forward(spec, params, x, &cache);
  const Tensor g = oracle::random_tensor({4, 5, 5}, rng);
  EXPECT_EQ(cf::net::layer_backward(spec, params, x, cache, g, grads), g);
}

TEST(PrfxBlock, SamePaddingPreservesShape) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> d(1, 9);
  const std::vector<std::vector<std::size_t>> sets{{1}, {3}, {1, 3}, {1, 3, 5, 7}, {7, 5}};
  for (int n = 0; n < 30; ++n) {
    LayerSpec s = prfx(d(rng), d(rng));
    s.kernel_sizes = sets[n % sets.size()];
    s.pool_branch = n % 2 == 0;
    std::vector<Tensor> params;
    for (const auto& shape : cf::net::param_shapes(s)) params.push_back(oracle::random_tensor(shape, rng));
    const std::size_t H = d(rng), W = d(rng);
    const auto y = cf::net::prfx_block(s, params, oracle::random_tensor({s.in_channels, H, W}, rng));
    EXPECT_EQ(y.shape(), (std::vector<std::size_t>{s.out_channels, H, W}));
  }
}

TEST(PrfxBlock, ChannelMismatchThrows) {
  const auto spec = prfx(4, 4);
  std::vector<Tensor> params;
  for (const auto& s : cf::net::param_shapes(spec)) params.emplace_back(s);
  EXPECT_THROW(cf::net::prfx_block(spec, params, Tensor({3, 5, 5})), cf::ValidationError);
  params.pop_back();
  EXPECT_THROW(cf::net::prfx_block(spec, params, Tensor({4, 5, 5})), cf::ValidationError);
}

TEST(Model, SingleBranchAblationIsPointwiseOnly) {
  auto c = tiny_config();
  c.branch_kernels = {1};
  c.pool_branch = false;
  const auto model = ModelParams::create(c, 9);
  for (const auto& b : model.blocks()) {
    if (b.rank() == 4) {
      EXPECT_EQ(b.dim(2), 1u);
      EXPECT_EQ(b.dim(3), 1u);
    }
  }
  // No spatial mixing: perturbing one pixel changes only that pixel's prediction.
  std::mt19937_64 rng(10);
  Tensor x = oracle::random_tensor({3, 6, 6}, rng);
  const auto before = cf::net::forward(model, x).pred;
  x.at(1, 2, 3) += 5.0f;
  const auto after = cf::net::forward(model, x).pred;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (i != 2 * 6 + 3) {
      EXPECT_EQ(before[i], after[i]) << i;
    }
  }
}

TEST(Model, ArchitectureLayout) {
  const auto layers = cf::net::build_architecture(tiny_config());
  ASSERT_EQ(layers.size(), 2u + 2u + cf::net::kHeadCount);
  EXPECT_EQ(layers[0].kind, LayerKind::pointwise);
  EXPECT_TRUE(layers[0].relu);
  EXPECT_EQ(layers[2].kind, LayerKind::prfx_block);
  EXPECT_TRUE(layers[2].has_residual);
  for (std::size_t h = 4; h < layers.size(); ++h) {
    EXPECT_EQ(layers[h].out_channels, 1u);
    EXPECT_FALSE(layers[h].relu);
  }
}

TEST(Model, ZeroWeightsPredictZero) {
  ModelParams model(cf::net::build_architecture(tiny_config()));
  std::mt19937_64 rng(11);
  const auto out = cf::net::forward(model, oracle::random_tensor({3, 5, 4}, rng));
  EXPECT_EQ(out.pred, Tensor({5, 4}));
}

TEST(Model, OutputShapeAndChannelCheck) {
  const auto model = ModelParams::create(tiny_config(5), 1);
  const auto out = cf::net::forward(model, Tensor({5, 7, 3}));
  EXPECT_EQ(out.pred.shape(), (std::vector<std::size_t>{7, 3}));
  EXPECT_EQ(out.variance.shape(), out.pred.shape());
  EXPECT_THROW(cf::net::forward(model, Tensor({4, 7, 3})), cf::ValidationError);
}

TEST(Model, TranslationEquivariantAwayFromBorders) {
  const auto model = ModelParams::create(tiny_config(), 12);
  std::mt19937_64 rng(13);
  const std::size_t N = 24, dy = 2, dx = 3;
  const Tensor x = oracle::random_tensor({3, N, N}, rng);
  Tensor shifted({3, N, N});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < N; ++y)
      for (std::size_t xx = 0; xx < N; ++xx) shifted.at(c, (y + dy) % N, (xx + dx) % N) = x.at(c, y, xx);
  const auto a = cf::net::forward(model, x).pred;
  const auto b = cf::net::forward(model, shifted).pred;
  const std::size_t frame = 3 * 2;  // max kernel radius times the number of blocks
  for (std::size_t y = frame; y + frame + dy < N; ++y)
    for (std::size_t xx = frame; xx + frame + dx < N; ++xx)
      EXPECT_NEAR(b[(y + dy) * N + xx + dx], a[y * N + xx], 1e-5);
}

TEST(Model, ZeroUpstreamGradientGivesZeroGradients) {
  const auto model = ModelParams::create(tiny_config(), 14);
  std::mt19937_64 rng(15);
  cf::net::ForwardCache cache;
  cf::net::forward(model, oracle::random_tensor({3, 6, 6}, rng), &cache);
  for (const auto& g : cf::net::backward(model, cache, Tensor({6, 6}))) {
    for (float v : g.values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Model, NonFiniteInputIsNumericError) {
  const auto model = ModelParams::create(tiny_config(), 16);
  Tensor x({3, 4, 4});
  x[5] = NAN;
  EXPECT_THROW(cf::net::forward(model, x), cf::NumericError);
}

TEST(Model, HeInitIsSeededAndBiasesZero) {
  const auto a = ModelParams::create(tiny_config(), 17);
  const auto b = ModelParams::create(tiny_config(), 17);
  const auto c = ModelParams::create(tiny_config(), 18);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  for (const auto& blk : a.blocks()) {
    if (blk.rank() == 1) {
      for (float v : blk.values()) EXPECT_EQ(v, 0.0f);
    }
  }
}

TEST(Checkpoint, RoundTripAndErrors) {
  auto model = ModelParams::create(tiny_config(), 19);
  model.set_stats({{1.0, 2.0, 3.0}, {0.5, 1.5, 2.5}});
  const auto bytes = cf::net::encode_checkpoint(model);
  EXPECT_EQ(cf::net::decode_checkpoint(bytes), model);

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(cf::net::decode_checkpoint(magic), cf::FormatError);
  auto version = bytes;
  version[4] = 7;
  EXPECT_THROW(cf::net::decode_checkpoint(version), cf::FormatError);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
  try {
    cf::net::decode_checkpoint(cut);
    FAIL();
  } catch (const cf::FormatError& e) {
    EXPECT_EQ(e.code(), cf::FormatErrc::truncated_payload);
  }
}

TEST(Checkpoint, StatsMustMatchChannels) {
  auto model = ModelParams::create(tiny_config(), 20);
  EXPECT_THROW(model.set_stats({{1.0}, {1.0}}), cf::ValidationError);
}
