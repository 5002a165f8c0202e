#include "canopyfuse/pipeline.hpp"

#include "canopyfuse/error.hpp"

namespace canopyfuse::pipeline {

FuseResult fuse(std::span<const lidar::FootprintRecord> records, const geo::RasterGrid& templ,
                lidar::FootprintSource reference) {
  auto kept = lidar::filter_quality(records);
  const std::size_t dropped = records.size() - kept.size();
  std::size_t n_ref = 0, n_target = 0;
  for (const auto& r : kept) {
    n_ref += r.source == lidar::FootprintSource::gedi ? 1 : 0;
    n_target += r.source == lidar::FootprintSource::icesat2 ? 1 : 0;
  }
  const bool harmonize = n_ref >= 2 && n_target >= 2;
  if (harmonize) {
    const auto target =
        reference == lidar::FootprintSource::gedi ? lidar::FootprintSource::icesat2 : lidar::FootprintSource::gedi;
    kept = fusion::harmonize_sources(kept, reference, target);
  }
  fusion::RasterizeSummary summary;
  auto labels = fusion::rasterize_footprints(kept, templ, &summary);
  return {std::move(labels), std::move(summary), dropped, harmonize};
}

FitResult fit(const geo::RasterGrid& bands, const fusion::SparseLabelGrid& labels, const FitOptions& options,
              const train::EpochCallback& on_epoch) {
  const auto stats = geo::compute_channel_stats(bands);
  const auto normalized = geo::normalize(bands, stats);
  const auto samples = fusion::build_samples(normalized, labels, options.patch, options.sample_step);
  if (samples.size() < 2) {
    throw ValidationError("training needs at least 2 labeled patches, got " + std::to_string(samples.size()));
  }
  auto config = options.model;
  config.in_channels = bands.bands();
  auto model = net::ModelParams::create(config, options.train.seed);
  model.set_stats(stats);
  FitResult out;
  out.sample_count = samples.size();
  out.train = train::train_loop(model, samples, options.train, on_epoch);
  return out;
}

std::vector<std::size_t> labeled_indices(const fusion::SparseLabelGrid& labels) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.counts.size(); ++i) {
    if (labels.counts[i] > 0) out.push_back(i);
  }
  return out;
}

fusion::SparseLabelGrid subset_labels(const fusion::SparseLabelGrid& labels, std::span<const std::size_t> pixel_ids) {
  const std::size_t w = labels.labels.width();
  fusion::SparseLabelGrid out{labels.labels.like(1, labels.labels.nodata()),
                              std::vector<std::uint32_t>(labels.counts.size(), 0)};
  for (std::size_t id : pixel_ids) {
    if (id >= labels.counts.size() || labels.counts[id] == 0) {
      throw ValidationError("pixel " + std::to_string(id) + " is not a labeled pixel");
    }
    out.counts[id] = labels.counts[id];
    out.labels.set(0, id / w, id % w, labels.labels.at(0, id / w, id % w));
  }
  return out;
}

eval::PredRef sample_pairs(const geo::RasterGrid& pred_map, const geo::RasterGrid& reference,
                           std::span<const std::size_t> pixel_ids) {
  if (pred_map.width() != reference.width() || pred_map.height() != reference.height()) {
    throw ValidationError("prediction and reference rasters differ in size");
  }
  const std::size_t w = pred_map.width();
  eval::PredRef out;
  for (std::size_t id : pixel_ids) {
    const std::size_t r = id / w, c = id % w;
    if (r >= pred_map.height()) throw ValidationError("pixel id outside the raster");
    if (pred_map.is_nodata(0, r, c) || reference.is_nodata(0, r, c)) continue;
    out.pred.push_back(pred_map.at(0, r, c));
    out.ref.push_back(reference.at(0, r, c));
  }
  return out;
}

}  // namespace canopyfuse::pipeline
