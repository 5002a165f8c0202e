#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "canopyfuse/geo.hpp"
#include "canopyfuse/lidar.hpp"

namespace canopyfuse::synth {

enum class HeightField { smooth, ridged, patchy };

HeightField parse_height_field(std::string_view s);
std::string_view to_string(HeightField f) noexcept;

struct SceneConfig {
  std::uint64_t seed = 0;
  std::size_t width = 256;
  std::size_t height = 256;
  std::size_t bands = 4;
  HeightField height_field = HeightField::smooth;
  /// Gaussian noise added to every band value; 0 gives the exactly invertible band model.
  double band_noise = 0.0;
  double pixel_size = 10.0;
  double origin_x = 500000.0;
  double origin_y = 3200000.0;
  /// Regions tile the scene as a regions_x by regions_y grid named R0, R1, ... row-major.
  std::size_t regions_x = 2;
  std::size_t regions_y = 1;
};

struct Scene {
  geo::RasterGrid true_chm;    // 1 band, meters in [0, 110]
  geo::RasterGrid bands;       // config.bands channels
  geo::RasterGrid region_map;  // 1 band, region index as float
  std::vector<std::string> region_names;
  std::uint64_t seed = 0;

  const std::string& region_at(std::size_t row, std::size_t col) const;
};

/// Lattice value noise in [0, 1) at integer lattice point (ix, iy) of `octave`.
double lattice_value(std::uint64_t seed, std::uint32_t octave, std::int64_t ix, std::int64_t iy) noexcept;

/// Base CHM range before giant-tree clusters.
inline constexpr double kBaseCanopyMax = 60.0;

/// Value `band` of the synthetic band model for canopy height `h` (no noise). Each band is a
/// strictly monotone smooth function of h.
double band_response(std::size_t band, double h) noexcept;

/// Deterministic scene. Throws ValidationError when width or height < 16 or bands == 0.
Scene gen_scene(const SceneConfig& config);

enum class TrackPattern { gedi_like, icesat_like };

TrackPattern parse_track_pattern(std::string_view s);

struct FootprintSampling {
  TrackPattern pattern = TrackPattern::gedi_like;
  /// Along-track footprint spacing in meters (GEDI: 60).
  double along_spacing = 60.0;
  /// Across-track spacing between parallel tracks in meters (GEDI: 600). Unused for icesat_like.
  double across_spacing = 600.0;
  double height_noise = 0.0;
  double dropout = 0.0;
  /// Fraction of kept records flagged quality 0.
  double bad_quality_fraction = 0.0;
  std::uint64_t seed = 0;
};

/// Footprints along parallel north-south tracks. gedi_like: tracks every across_spacing;
/// icesat_like: three track pairs (90 m apart within a pair) at 1/6, 3/6 and 5/6 of the
/// scene width. Height = true CHM at the footprint pixel + N(0, height_noise), clamped to
/// [0, 150]. Throws ValidationError when no footprint survives.
std::vector<lidar::FootprintRecord> sample_footprints(const Scene& scene, const FootprintSampling& s);

/// Straight ground track in world coordinates; along-track distance is measured from (x0, y0).
struct TrackLine {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double length() const noexcept;
};

struct PhotonConfig {
  double photons_per_meter = 5.0;
  /// Noise photons per meter of track.
  double noise_rate = 0.0;
  /// Fraction of signal photons returned by the ground (elevation 0).
  double ground_fraction = 0.4;
  /// Canopy photons lie in [chm - crown_depth, chm].
  double crown_depth = 1.0;
  std::uint64_t seed = 0;
};

struct PhotonTrack {
  std::vector<lidar::PhotonEvent> photons;  // labels withheld (unlabeled)
  std::vector<bool> is_signal;               // ground truth, parallel to photons
};

/// Canopy height of the scene at world (x, y); 0 outside the raster.
double chm_at_world(const Scene& scene, double x, double y);

/// Throws ValidationError when the track never crosses the scene.
PhotonTrack gen_photons(const Scene& scene, const TrackLine& track, const PhotonConfig& config);

/// A track running north to south through the middle column of the scene.
TrackLine center_track(const Scene& scene);

/// Above-ground point cloud in a disk: canopy-top, mid-canopy and ground returns.
std::vector<lidar::PointXYZ> gen_point_cloud(const Scene& scene, double center_x, double center_y,
                                             double radius, double points_per_m2, std::uint64_t seed);

}  // namespace canopyfuse::synth
