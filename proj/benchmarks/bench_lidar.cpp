#include <benchmark/benchmark.h>

#include <random>

#include "canopyfuse/lidar.hpp"

namespace cf = canopyfuse;

namespace {

// Canopy band plus uniform background noise along a track of `n` photons.
std::vector<cf::lidar::PhotonEvent> photon_track(std::size_t n) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<cf::lidar::PhotonEvent> out(n);
  const double length = static_cast<double>(n) / 4.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i].along_track = u(rng) * length;
    out[i].elevation = i % 5 == 0 ? u(rng) * 120.0 - 30.0 : 20.0 + u(rng) * 2.0;
  }
  return out;
}

void BM_Dbscan(benchmark::State& state) {
  const auto photons = photon_track(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cf::lidar::dbscan_label(photons));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Dbscan)->Arg(1000)->Arg(10000)->Arg(50000);

}  // namespace
