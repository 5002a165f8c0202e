#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "canopyfuse/lidar.hpp"
#include "canopyfuse/pipeline.hpp"
#include "canopyfuse/synth.hpp"

namespace canopyfuse::cli {

/// Every tunable of the command-line pipeline. Library defaults are full-size; the
/// defaults here are desk-scale so each subcommand finishes in seconds.
struct PipelineConfig {
  std::uint64_t seed = 0;

  synth::SceneConfig scene;
  std::string footprint_pattern = "gedi_like";  // gedi_like | icesat_like | both
  synth::FootprintSampling footprints;
  synth::PhotonConfig photons;
  double cloud_radius = 12.5;
  double cloud_density = 8.0;

  double dbscan_eps = lidar::kDefaultDbscanEps;
  std::size_t dbscan_min_pts = lidar::kDefaultDbscanMinPts;
  double step_length = 10.0;
  lidar::WaveformOptions waveform;

  lidar::FootprintSource harmonize_to = lidar::FootprintSource::gedi;

  pipeline::FitOptions fit;
  std::size_t predict_step = 5;
  std::vector<std::size_t> band_subset;  // empty = every band

  std::size_t folds = 10;
  double tolerance = 10.0;
  double threshold = 80.0;

  PipelineConfig();

  /// Applies one key=value setting; throws ValidationError for unknown keys or bad values.
  void apply(std::string_view key, std::string_view value);
  /// Flat `key=value` file, `#` comments and blank lines ignored.
  void load_file(const std::filesystem::path& path);
  /// Every setting as its canonical text, sorted by key.
  std::map<std::string, std::string> snapshot() const;
};

}  // namespace canopyfuse::cli
