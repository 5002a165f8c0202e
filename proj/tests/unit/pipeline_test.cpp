#include <gtest/gtest.h>

#include "canopyfuse/error.hpp"
#include "canopyfuse/pipeline.hpp"
#include "canopyfuse/synth.hpp"

namespace cf = canopyfuse;
using cf::lidar::FootprintRecord;
using cf::lidar::FootprintSource;

namespace {

FootprintRecord at_pixel(std::size_t row, std::size_t col, double h, FootprintSource src, int quality = 1) {
  return {static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5, h, src, quality};
}

}  // namespace

TEST(PipelineFuse, HarmonizesIcesatOntoGedi) {
  const cf::geo::RasterGrid templ(4, 4, 1);
  const std::vector<FootprintRecord> recs{
      at_pixel(0, 0, 10.0, FootprintSource::gedi), at_pixel(0, 1, 20.0, FootprintSource::gedi),
      at_pixel(1, 0, 1.0, FootprintSource::icesat2), at_pixel(1, 1, 3.0, FootprintSource::icesat2),
      at_pixel(2, 2, 50.0, FootprintSource::gedi, 0)};
  const auto r = cf::pipeline::fuse(recs, templ);
  EXPECT_TRUE(r.harmonized);
  EXPECT_EQ(r.dropped_quality, 1u);
  EXPECT_EQ(r.labels.labeled_pixels(), 4u);
  EXPECT_NEAR(r.labels.labels.at(0, 1, 0), 10.0f, 1e-5);
  EXPECT_NEAR(r.labels.labels.at(0, 1, 1), 20.0f, 1e-5);
  EXPECT_FALSE(r.labels.is_labeled(2, 2));
}

TEST(PipelineFuse, ReverseDirectionMapsGediOntoIcesat) {
  const cf::geo::RasterGrid templ(4, 4, 1);
  const std::vector<FootprintRecord> recs{
      at_pixel(0, 0, 10.0, FootprintSource::gedi), at_pixel(0, 1, 20.0, FootprintSource::gedi),
      at_pixel(1, 0, 1.0, FootprintSource::icesat2), at_pixel(1, 1, 3.0, FootprintSource::icesat2)};
  const auto r = cf::pipeline::fuse(recs, templ, FootprintSource::icesat2);
  EXPECT_NEAR(r.labels.labels.at(0, 0, 0), 1.0f, 1e-5);
  EXPECT_NEAR(r.labels.labels.at(0, 0, 1), 3.0f, 1e-5);
  EXPECT_EQ(r.labels.labels.at(0, 1, 1), 3.0f);
}

TEST(PipelineFuse, SingleSourcePassesThrough) {
  const cf::geo::RasterGrid templ(4, 4, 1);
  const std::vector<FootprintRecord> recs{at_pixel(0, 0, 10.0, FootprintSource::gedi),
                                          at_pixel(3, 3, 7.0, FootprintSource::icesat2)};
  const auto r = cf::pipeline::fuse(recs, templ);
  EXPECT_FALSE(r.harmonized);
  EXPECT_EQ(r.labels.labels.at(0, 3, 3), 7.0f);
}

TEST(PipelineLabels, SubsetKeepsListedPixels) {
  const cf::geo::RasterGrid templ(3, 3, 1);
  const std::vector<FootprintRecord> recs{at_pixel(0, 0, 1.0, FootprintSource::gedi),
                                          at_pixel(1, 1, 2.0, FootprintSource::gedi),
                                          at_pixel(2, 2, 3.0, FootprintSource::gedi)};
  const auto full = cf::pipeline::fuse(recs, templ).labels;
  EXPECT_EQ(cf::pipeline::labeled_indices(full), (std::vector<std::size_t>{0, 4, 8}));
  const std::vector<std::size_t> keep{4};
  const auto sub = cf::pipeline::subset_labels(full, keep);
  EXPECT_EQ(cf::pipeline::labeled_indices(sub), keep);
  EXPECT_EQ(sub.labels.at(0, 1, 1), 2.0f);
  EXPECT_TRUE(sub.labels.is_nodata(0, 0, 0));
  const std::vector<std::size_t> unlabeled{1};
  EXPECT_THROW(cf::pipeline::subset_labels(full, unlabeled), cf::ValidationError);
}

TEST(PipelineLabels, SamplePairsSkipsNodata) {
  const float nd = cf::geo::kDefaultNodata;
  const cf::geo::RasterGrid pred(2, 2, 1, {}, nd, {1.0f, nd, 3.0f, 4.0f});
  const cf::geo::RasterGrid ref(2, 2, 1, {}, nd, {10.0f, 20.0f, 30.0f, nd});
  const std::vector<std::size_t> ids{0, 1, 2, 3};
  const auto pr = cf::pipeline::sample_pairs(pred, ref, ids);
  EXPECT_EQ(pr.pred, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(pr.ref, (std::vector<double>{10.0, 30.0}));
  const cf::geo::RasterGrid other(3, 2, 1);
  EXPECT_THROW(cf::pipeline::sample_pairs(pred, other, ids), cf::ValidationError);
}

TEST(PipelineFit, SmallSceneTrainsWithStats) {
  cf::synth::SceneConfig sc;
  sc.width = 32;
  sc.height = 32;
  sc.bands = 3;
  sc.seed = 4;
  const auto scene = cf::synth::gen_scene(sc);
  cf::synth::FootprintSampling fs;
  fs.along_spacing = 20.0;
  fs.across_spacing = 40.0;
  const auto recs = cf::synth::sample_footprints(scene, fs);
  const auto labels = cf::pipeline::fuse(recs, scene.bands).labels;
  cf::pipeline::FitOptions opt;
  opt.model.entry_widths = {4};
  opt.model.sepconv_filters = 4;
  opt.model.num_blocks = 1;
  opt.model.branch_width = 2;
  opt.train.epochs = 2;
  opt.train.iters_per_epoch = 5;
  opt.patch = 9;
  opt.sample_step = 4;
  const auto r = cf::pipeline::fit(scene.bands, labels, opt);
  EXPECT_GT(r.sample_count, 2u);
  EXPECT_EQ(r.train.trace.size(), 2u);
  EXPECT_EQ(r.train.model.in_channels(), 3u);
  EXPECT_EQ(r.train.model.stats().mean.size(), 3u);
}

TEST(PipelineFit, TooFewLabelsThrows) {
  std::vector<float> v(128);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 7);
  const cf::geo::RasterGrid bands(8, 8, 2, {}, cf::geo::kDefaultNodata, v);
  const std::vector<FootprintRecord> recs{at_pixel(4, 4, 5.0, FootprintSource::gedi)};
  const auto labels = cf::pipeline::fuse(recs, bands).labels;
  cf::pipeline::FitOptions opt;
  opt.patch = 8;
  EXPECT_THROW(cf::pipeline::fit(bands, labels, opt), cf::ValidationError);
}
