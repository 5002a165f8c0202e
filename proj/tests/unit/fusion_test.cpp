#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "canopyfuse/error.hpp"
#include "canopyfuse/fusion.hpp"

namespace cf = canopyfuse;
using cf::geo::AffineTransform;
using cf::geo::RasterGrid;
using cf::lidar::FootprintRecord;
using cf::lidar::FootprintSource;

namespace {

// 10 m north-up grid anchored at (0, 1000).
RasterGrid templ(std::size_t w, std::size_t h, std::size_t bands = 1) {
  return RasterGrid(w, h, bands, AffineTransform::north_up(0.0, 1000.0, 10.0));
}

FootprintRecord at_pixel(std::size_t col, std::size_t row, double height,
                         FootprintSource src = FootprintSource::gedi) {
  return {col * 10.0 + 5.0, 1000.0 - row * 10.0 - 5.0, height, src, 1};
}

}  // namespace

TEST(Harmonize, IdentityWhenMomentsMatch) {
  const std::vector<double> src{10, 20, 30};
  const auto m = cf::fusion::moments(src);
  const auto out = cf::fusion::harmonize(src, 20.0, m.std);
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_NEAR(out[i], src[i], 1e-12);
}

TEST(Harmonize, TwoPointZScore) {
  const std::vector<double> src{0, 10};
  const auto out = cf::fusion::harmonize(src, 20.0, 10.0);
  EXPECT_DOUBLE_EQ(out[0], 10.0);
  EXPECT_DOUBLE_EQ(out[1], 30.0);
}

TEST(Harmonize, FixedPointOnRandomInput) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  std::vector<double> src(57);
  for (auto& v : src) v = u(rng);
  const auto m = cf::fusion::moments(src);
  const auto out = cf::fusion::harmonize(src, m.mean, m.std);
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_NEAR(out[i], src[i], 1e-12);
}

TEST(Harmonize, ZeroSourceVarianceThrows) {
  const std::vector<double> src{5, 5, 5};
  EXPECT_THROW(cf::fusion::harmonize(src, 20.0, 3.0), cf::ValidationError);
  const std::vector<double> one{5};
  EXPECT_THROW(cf::fusion::harmonize(one, 20.0, 3.0), cf::ValidationError);
}

TEST(Harmonize, SourcesMapTargetOntoReference) {
  std::vector<FootprintRecord> r{at_pixel(0, 0, 10), at_pixel(1, 0, 30),
                                 at_pixel(2, 0, 0, FootprintSource::icesat2),
                                 at_pixel(3, 0, 10, FootprintSource::icesat2),
                                 at_pixel(4, 0, 50, FootprintSource::uavls)};
  const auto out = cf::fusion::harmonize_sources(r);
  ASSERT_EQ(out.size(), r.size());
  EXPECT_EQ(out[0], r[0]);
  EXPECT_EQ(out[4], r[4]);
  EXPECT_DOUBLE_EQ(out[2].canopy_height, 10.0);
  EXPECT_DOUBLE_EQ(out[3].canopy_height, 30.0);
  EXPECT_EQ(out[2].source, FootprintSource::icesat2);
}

TEST(Rasterize, SingleRecordAtPixelCentre) {
  const std::vector<FootprintRecord> r{at_pixel(2, 1, 17.5)};
  const auto g = cf::fusion::rasterize_footprints(r, templ(4, 3));
  EXPECT_EQ(g.labeled_pixels(), 1u);
  EXPECT_TRUE(g.is_labeled(1, 2));
  EXPECT_EQ(g.counts[1 * 4 + 2], 1u);
  EXPECT_EQ(g.labels.at(0, 1, 2), 17.5f);
  EXPECT_TRUE(g.labels.is_nodata(0, 0, 0));
}

TEST(Rasterize, SamePixelTakesMean) {
  const std::vector<FootprintRecord> r{at_pixel(0, 0, 20), at_pixel(0, 0, 40)};
  const auto g = cf::fusion::rasterize_footprints(r, templ(2, 2));
  EXPECT_EQ(g.counts[0], 2u);
  EXPECT_EQ(g.labels.at(0, 0, 0), 30.0f);
}

TEST(Rasterize, MatchesGroupByOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> xy(-100.0, 1100.0), h(0.0, 100.0);
  std::vector<FootprintRecord> r(1000);
  for (auto& x : r) x = {xy(rng), xy(rng), h(rng), FootprintSource::gedi, 1};
  cf::fusion::RasterizeSummary summary;
  const auto g = cf::fusion::rasterize_footprints(r, templ(100, 100), &summary);

  std::map<std::size_t, std::pair<double, int>> groups;
  std::size_t outside = 0;
  for (const auto& x : r) {
    const double col = x.x / 10.0, row = (1000.0 - x.y) / 10.0;
    if (col < 0 || row < 0 || col >= 100 || row >= 100) {
      ++outside;
      continue;
    }
    auto& s = groups[static_cast<std::size_t>(row) * 100 + static_cast<std::size_t>(col)];
    s.first += x.canopy_height;
    ++s.second;
  }
  EXPECT_EQ(summary.out_of_bounds, outside);
  EXPECT_EQ(summary.in_bounds + summary.out_of_bounds, 1000u);
  EXPECT_EQ(g.labeled_pixels(), groups.size());
  for (const auto& [pix, s] : groups) {
    EXPECT_EQ(g.counts[pix], static_cast<std::uint32_t>(s.second));
    EXPECT_NEAR(g.labels.data()[pix], s.first / s.second, 1e-4);
  }
}

TEST(BuildSamples, FullyLabeledSingleWindow) {
  std::vector<FootprintRecord> r;
  for (std::size_t row = 0; row < 15; ++row) {
    for (std::size_t col = 0; col < 15; ++col) r.push_back(at_pixel(col, row, 1.0 + row));
  }
  const auto bands = templ(15, 15, 2);
  const auto labels = cf::fusion::rasterize_footprints(r, bands);
  const auto s = cf::fusion::build_samples(bands, labels, 15, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].masked_count(), 225u);
  EXPECT_EQ(s[0].patch.shape(), (std::vector<std::size_t>{2, 15, 15}));
  EXPECT_EQ(s[0].label_values[15 * 3], 4.0f);
}

TEST(BuildSamples, NoLabelsNoSamples) {
  const auto bands = templ(20, 20);
  const auto labels = cf::fusion::rasterize_footprints({}, bands);
  EXPECT_TRUE(cf::fusion::build_samples(bands, labels, 15, 1).empty());
}

TEST(BuildSamples, EveryWindowContainingTheLabel) {
  const std::vector<FootprintRecord> r{at_pixel(8, 8, 33.0)};
  const auto bands = templ(17, 17);
  const auto labels = cf::fusion::rasterize_footprints(r, bands);
  const auto s = cf::fusion::build_samples(bands, labels, 15, 1);
  ASSERT_EQ(s.size(), 9u);
  for (const auto& x : s) {
    EXPECT_EQ(x.masked_count(), 1u);
    const std::size_t local = (8 - x.origin.row0) * 15 + (8 - x.origin.col0);
    EXPECT_EQ(x.label_mask[local], 1u);
    EXPECT_EQ(x.label_values[local], 33.0f);
  }
}

TEST(BuildSamples, GeometryMismatchThrows) {
  const auto labels = cf::fusion::rasterize_footprints({}, templ(20, 20));
  EXPECT_THROW(cf::fusion::build_samples(templ(21, 20), labels, 15, 1), cf::ValidationError);
}

TEST(BuildSamples, NodataBandValuesBecomeZero) {
  auto bands = templ(15, 15);
  for (std::size_t i = 0; i < 15; ++i) bands.set(0, i, i, 2.0f);
  bands.set(0, 3, 4, bands.nodata());
  const std::vector<FootprintRecord> r{at_pixel(0, 0, 1.0)};
  const auto s = cf::fusion::build_samples(bands, cf::fusion::rasterize_footprints(r, bands), 15, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].patch.at(0, 3, 4), 0.0f);
  EXPECT_EQ(s[0].patch.at(0, 3, 3), 2.0f);
}
