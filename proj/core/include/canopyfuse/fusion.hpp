#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "canopyfuse/geo.hpp"
#include "canopyfuse/lidar.hpp"
#include "canopyfuse/net/tensor.hpp"

namespace canopyfuse::fusion {

/// Affine moment matching: (h - mean_src) / std_src * ref_std + ref_mean.
/// Population moments. Throws on < 2 values, zero source variance, or ref_std <= 0.
std::vector<double> harmonize(std::span<const double> heights_src, double ref_mean, double ref_std);

struct HeightMoments {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

HeightMoments moments(std::span<const double> values);

/// Harmonizes every record of `target` source to the height distribution of the `reference`
/// source records in the same list. Records of other sources pass through unchanged.
/// Throws when either source has fewer than 2 records.
std::vector<lidar::FootprintRecord> harmonize_sources(
    std::span<const lidar::FootprintRecord> records,
    lidar::FootprintSource reference = lidar::FootprintSource::gedi,
    lidar::FootprintSource target = lidar::FootprintSource::icesat2);

/// One-band label raster plus per-pixel footprint multiplicity.
struct SparseLabelGrid {
  geo::RasterGrid labels;  // nodata where count == 0
  std::vector<std::uint32_t> counts;  // row-major, one per pixel

  std::size_t labeled_pixels() const noexcept;
  bool is_labeled(std::size_t row, std::size_t col) const { return counts.at(row * labels.width() + col) > 0; }
};

struct RasterizeSummary {
  std::size_t in_bounds = 0;
  std::size_t out_of_bounds = 0;
  std::map<lidar::FootprintSource, std::size_t> per_source;
};

/// Assigns each record to the pixel containing it (floor of the fractional pixel coordinate);
/// multi-record pixels take the mean. Out-of-grid records are counted in `summary` and dropped.
SparseLabelGrid rasterize_footprints(std::span<const lidar::FootprintRecord> records,
                                     const geo::RasterGrid& templ,
                                     RasterizeSummary* summary = nullptr);

std::string format_summary(const RasterizeSummary& s);

/// One training window. `patch` is (bands, P, P); mask/values are P*P row-major.
struct Sample {
  net::Tensor patch;
  std::vector<std::uint8_t> label_mask;
  std::vector<float> label_values;  // 0 where unmasked
  geo::PatchOrigin origin;

  std::size_t masked_count() const noexcept;
};

/// One sample per tile origin whose window holds at least one label. `bands` must already be
/// normalized; nodata band values are replaced by 0 (the normalized mean).
std::vector<Sample> build_samples(const geo::RasterGrid& bands, const SparseLabelGrid& labels,
                                  std::size_t patch, std::size_t step);

/// Extracts the (bands, P, P) window at `origin`, nodata -> 0.
net::Tensor extract_patch(const geo::RasterGrid& bands, geo::PatchOrigin origin, std::size_t patch);

}  // namespace canopyfuse::fusion
