#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "canopyfuse/eval.hpp"
#include "canopyfuse/fusion.hpp"
#include "canopyfuse/geo.hpp"
#include "canopyfuse/lidar.hpp"
#include "canopyfuse/net/model.hpp"
#include "canopyfuse/train.hpp"

// End-to-end glue shared by the command-line tool and the cross-validation harnesses.
namespace canopyfuse::pipeline {

struct FuseResult {
  fusion::SparseLabelGrid labels;
  fusion::RasterizeSummary summary;
  std::size_t dropped_quality = 0;
  bool harmonized = false;
};

/// Quality filter, harmonization of the other source onto `reference` (when both sources
/// carry >= 2 records), then rasterization onto `templ`.
FuseResult fuse(std::span<const lidar::FootprintRecord> records, const geo::RasterGrid& templ,
                lidar::FootprintSource reference = lidar::FootprintSource::gedi);

struct FitOptions {
  net::ModelConfig model;
  train::TrainConfig train;
  std::size_t patch = 15;
  std::size_t sample_step = 1;
};

struct FitResult {
  train::TrainResult train;
  std::size_t sample_count = 0;
};

/// Channel stats over every valid pixel of `bands`, normalization, sample assembly,
/// He init from train.seed, then train_loop. The returned model carries the stats.
FitResult fit(const geo::RasterGrid& bands, const fusion::SparseLabelGrid& labels, const FitOptions& options,
              const train::EpochCallback& on_epoch = {});

/// Row-major indices of labeled pixels.
std::vector<std::size_t> labeled_indices(const fusion::SparseLabelGrid& labels);

/// Copy of `labels` keeping only the pixels listed in `pixel_ids`.
fusion::SparseLabelGrid subset_labels(const fusion::SparseLabelGrid& labels, std::span<const std::size_t> pixel_ids);

/// Predicted vs reference values at `pixel_ids`, skipping nodata predictions.
eval::PredRef sample_pairs(const geo::RasterGrid& pred_map, const geo::RasterGrid& reference,
                           std::span<const std::size_t> pixel_ids);

}  // namespace canopyfuse::pipeline
