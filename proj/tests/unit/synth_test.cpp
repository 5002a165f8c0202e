#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "canopyfuse/error.hpp"
#include "canopyfuse/lidar.hpp"
#include "canopyfuse/synth.hpp"

namespace cf = canopyfuse;
using cf::synth::SceneConfig;

namespace {

SceneConfig small_scene(std::uint64_t seed, std::size_t size = 64) {
  SceneConfig c;
  c.seed = seed;
  c.width = size;
  c.height = size;
  return c;
}

}  // namespace

TEST(Scene, SameSeedIsBitIdentical) {
  const auto a = cf::synth::gen_scene(small_scene(3));
  const auto b = cf::synth::gen_scene(small_scene(3));
  const auto c = cf::synth::gen_scene(small_scene(4));
  EXPECT_EQ(a.true_chm, b.true_chm);
  EXPECT_EQ(a.bands, b.bands);
  EXPECT_EQ(a.region_map, b.region_map);
  EXPECT_FALSE(a.true_chm == c.true_chm);
}

TEST(Scene, InvertibleBandsPreserveHeightOrder) {
  const auto s = cf::synth::gen_scene(small_scene(5));
  const auto chm = s.true_chm.band(0);
  std::vector<std::size_t> order(chm.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return chm[i] < chm[j]; });
  for (std::size_t b = 0; b < s.bands.bands(); ++b) {
    const auto band = s.bands.band(b);
    const double dir = cf::synth::band_response(b, 60.0) > cf::synth::band_response(b, 0.0) ? 1.0 : -1.0;
    std::size_t collisions = 0;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const auto i = order[k - 1], j = order[k];
      if (chm[i] == chm[j]) {
        ASSERT_EQ(band[i], band[j]) << "band " << b;
      } else {
        // float32 storage can merge neighbouring heights but never reverse them
        ASSERT_GE(dir * (band[j] - band[i]), 0.0) << "band " << b;
        collisions += band[i] == band[j];
      }
    }
    EXPECT_LT(collisions, order.size() / 100) << "band " << b;
  }
}

TEST(Scene, BandResponseStrictlyMonotone) {
  for (std::size_t b = 0; b < 8; ++b) {
    const double dir = cf::synth::band_response(b, 150.0) > cf::synth::band_response(b, 0.0) ? 1.0 : -1.0;
    for (double h = 0.0; h < 150.0; h += 0.5) {
      EXPECT_GT(dir * (cf::synth::band_response(b, h + 0.5) - cf::synth::band_response(b, h)), 0.0);
    }
  }
}

TEST(Scene, HeightRanges) {
  for (auto f : {cf::synth::HeightField::smooth, cf::synth::HeightField::ridged}) {
    auto c = small_scene(6);
    c.height_field = f;
    const auto s = cf::synth::gen_scene(c);
    const auto [lo, hi] = std::minmax_element(s.true_chm.data().begin(), s.true_chm.data().end());
    EXPECT_EQ(*lo, 0.0f);
    EXPECT_EQ(*hi, 60.0f);
  }
}

TEST(Scene, PatchyGiantTreesAreRare) {
  auto c = small_scene(7, 256);
  c.height_field = cf::synth::HeightField::patchy;
  const auto s = cf::synth::gen_scene(c);
  const auto v = s.true_chm.data();
  const auto tall = std::count_if(v.begin(), v.end(), [](float h) { return h >= 80.0f; });
  const double frac = static_cast<double>(tall) / static_cast<double>(v.size());
  EXPECT_GT(frac, 0.0);
  EXPECT_LE(frac, 0.01);
}

TEST(Scene, RegionsTileTheGrid) {
  auto c = small_scene(8);
  c.regions_x = 2;
  c.regions_y = 2;
  const auto s = cf::synth::gen_scene(c);
  EXPECT_EQ(s.region_names, (std::vector<std::string>{"R0", "R1", "R2", "R3"}));
  EXPECT_EQ(s.region_at(0, 0), "R0");
  EXPECT_EQ(s.region_at(0, 63), "R1");
  EXPECT_EQ(s.region_at(63, 0), "R2");
  EXPECT_EQ(s.region_at(63, 63), "R3");
}

TEST(Scene, DegenerateDimsThrow) {
  EXPECT_THROW(cf::synth::gen_scene(small_scene(1, 8)), cf::ValidationError);
  auto c = small_scene(1);
  c.bands = 0;
  EXPECT_THROW(cf::synth::gen_scene(c), cf::ValidationError);
}

TEST(Footprints, NoiselessMatchTruth) {
  const auto s = cf::synth::gen_scene(small_scene(9));
  cf::synth::FootprintSampling fs;
  fs.along_spacing = 20.0;
  fs.across_spacing = 40.0;
  const auto r = cf::synth::sample_footprints(s, fs);
  ASSERT_FALSE(r.empty());
  for (const auto& x : r) {
    const auto p = cf::geo::world_to_pixel(s.true_chm.transform(), x.x, x.y);
    const auto h = s.true_chm.at(0, static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col));
    EXPECT_EQ(x.canopy_height, static_cast<double>(h));
    EXPECT_EQ(x.quality, 1);
  }
}

TEST(Footprints, FullDropoutThrows) {
  const auto s = cf::synth::gen_scene(small_scene(10));
  cf::synth::FootprintSampling fs;
  fs.dropout = 1.0;
  EXPECT_THROW(cf::synth::sample_footprints(s, fs), cf::ValidationError);
}

TEST(Footprints, GaussianNoiseHalfNormalMean) {
  const auto s = cf::synth::gen_scene(small_scene(11, 256));
  cf::synth::FootprintSampling fs;
  fs.along_spacing = 20.0;
  fs.across_spacing = 40.0;
  fs.height_noise = 3.0;
  fs.seed = 12;
  const auto r = cf::synth::sample_footprints(s, fs);
  ASSERT_GE(r.size(), 1000u);
  double sum = 0.0;
  for (const auto& x : r) {
    const auto p = cf::geo::world_to_pixel(s.true_chm.transform(), x.x, x.y);
    sum += std::abs(x.canopy_height - s.true_chm.at(0, static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col)));
  }
  EXPECT_NEAR(sum / static_cast<double>(r.size()), 3.0 * std::sqrt(2.0 / M_PI), 0.2);
}

TEST(Footprints, IcesatPatternAndQualityFlags) {
  const auto s = cf::synth::gen_scene(small_scene(13, 128));
  cf::synth::FootprintSampling fs;
  fs.pattern = cf::synth::TrackPattern::icesat_like;
  fs.along_spacing = 20.0;
  fs.bad_quality_fraction = 0.5;
  fs.seed = 14;
  const auto r = cf::synth::sample_footprints(s, fs);
  std::vector<double> xs;
  std::size_t bad = 0;
  for (const auto& x : r) {
    EXPECT_EQ(x.source, cf::lidar::FootprintSource::icesat2);
    xs.push_back(x.x);
    bad += x.quality == 0;
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  EXPECT_EQ(xs.size(), 6u);
  EXPECT_GT(bad, 0u);
  EXPECT_LT(bad, r.size());
}

TEST(Photons, CleanTrackIsMostlySignal) {
  const auto s = cf::synth::gen_scene(small_scene(15, 128));
  for (double density : {2.0, 5.0}) {
    cf::synth::PhotonConfig pc;
    pc.photons_per_meter = density;
    pc.seed = 16;
    const auto t = cf::synth::gen_photons(s, cf::synth::center_track(s), pc);
    const auto labels = cf::lidar::dbscan_label(t.photons);
    const auto signal = std::count(labels.begin(), labels.end(), cf::lidar::PhotonLabel::signal);
    EXPECT_GE(static_cast<double>(signal), 0.95 * static_cast<double>(labels.size())) << density;
  }
}

TEST(Photons, NoSignalWhenDensityZero) {
  const auto s = cf::synth::gen_scene(small_scene(17));
  cf::synth::PhotonConfig pc;
  pc.photons_per_meter = 0.0;
  pc.noise_rate = 0.5;
  const auto t = cf::synth::gen_photons(s, cf::synth::center_track(s), pc);
  EXPECT_FALSE(t.photons.empty());
  EXPECT_TRUE(std::none_of(t.is_signal.begin(), t.is_signal.end(), [](bool b) { return b; }));
}

TEST(Photons, StepsRecoverCanopyHeight) {
  const auto s = cf::synth::gen_scene(small_scene(18, 128));
  cf::synth::PhotonConfig pc;
  pc.photons_per_meter = 5.0;
  pc.seed = 19;
  const auto track = cf::synth::center_track(s);
  const auto t = cf::synth::gen_photons(s, track, pc);
  std::vector<cf::lidar::PhotonEvent> signal;
  for (std::size_t i = 0; i < t.photons.size(); ++i) {
    if (t.is_signal[i]) signal.push_back(t.photons[i]);
  }
  const auto steps = cf::lidar::classify_canopy_steps(signal, 10.0);
  ASSERT_GT(steps.size(), 100u);
  const double len = track.length();
  for (const auto& st : steps) {
    // Tallest canopy under this 10 m bucket, sampled every 0.1 m along the track.
    double top = 0.0;
    for (double a = st.step_center - 5.0; a < st.step_center + 5.0; a += 0.1) {
      const double f = a / len;
      top = std::max(top, cf::synth::chm_at_world(s, track.x0 + f * (track.x1 - track.x0),
                                                  track.y0 + f * (track.y1 - track.y0)));
    }
    EXPECT_LE(std::abs(st.canopy_height - top), 2.0) << st.step_center;
  }
}

TEST(Photons, TrackMissingSceneThrows) {
  const auto s = cf::synth::gen_scene(small_scene(20));
  const cf::synth::TrackLine away{0.0, 0.0, 10.0, 10.0};
  EXPECT_THROW(cf::synth::gen_photons(s, away, {}), cf::ValidationError);
}

TEST(PointCloud, DeterministicAndAboveGround) {
  const auto s = cf::synth::gen_scene(small_scene(21));
  const double cx = 500000.0 + 320.0, cy = 3200000.0 - 320.0;
  const auto a = cf::synth::gen_point_cloud(s, cx, cy, 12.5, 8.0, 22);
  const auto b = cf::synth::gen_point_cloud(s, cx, cy, 12.5, 8.0, 22);
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].z, b[i].z);
    EXPECT_GE(a[i].z, 0.0);
    EXPECT_LE(std::hypot(a[i].x - cx, a[i].y - cy), 12.5);
  }
  EXPECT_NO_THROW(cf::lidar::simulate_waveform(a, cx, cy));
}
