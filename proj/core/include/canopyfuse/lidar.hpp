#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace canopyfuse::lidar {

enum class PhotonLabel : std::uint8_t { unlabeled, signal, noise };

/// One photon return reduced to the along-track / elevation plane (both in meters).
struct PhotonEvent {
  double along_track = 0.0;
  double elevation = 0.0;
  PhotonLabel label = PhotonLabel::unlabeled;
};

inline constexpr double kDefaultDbscanEps = 8.9;
inline constexpr std::size_t kDefaultDbscanMinPts = 11;

/// DBSCAN in the (along_track, elevation) plane. A photon is signal when it is a core
/// point (at least `min_pts` photons within `eps`, itself included) or lies within
/// `eps` of a core point; everything else is noise.
std::vector<PhotonLabel> dbscan_label(std::span<const PhotonEvent> photons,
                                      double eps = kDefaultDbscanEps,
                                      std::size_t min_pts = kDefaultDbscanMinPts);

struct CanopyStep {
  double step_center = 0.0;
  double canopy_top_elev = 0.0;
  double ground_elev = 0.0;
  double canopy_height = 0.0;
};

/// Buckets photons by floor(along_track / step). Buckets holding fewer than two photons
/// are dropped; the rest yield max - min elevation. Output ordered by bucket.
std::vector<CanopyStep> classify_canopy_steps(std::span<const PhotonEvent> signal_photons,
                                              double step = 10.0);

inline constexpr double kDefaultBinSize = 0.15;

/// Vertical energy profile. Bin i spans [elev0 + i*bin_size, elev0 + (i+1)*bin_size).
struct Waveform {
  std::vector<double> bin_energy;
  double bin_size = kDefaultBinSize;
  double elev0 = 0.0;

  double total_energy() const noexcept;
  /// Throws ValidationError when energies are negative/all zero or bin_size <= 0.
  void validate() const;
};

struct PointXYZ {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;  // height above ground
};

struct WaveformOptions {
  double diameter = 25.0;
  double sigma_bins = 2.0;
  double bin_size = kDefaultBinSize;
};

/// Footprint-weighted height histogram convolved with a discrete Gaussian (truncated at
/// +/-4 sigma, normalized). Energy smeared below the first bin is reflected about the
/// bottom edge so the total is conserved.
Waveform simulate_waveform(std::span<const PointXYZ> points, double center_x, double center_y,
                           const WaveformOptions& opts = {});

/// Discrete Gaussian kernel of the given standard deviation in bins, radius ceil(4*sigma),
/// summing to 1. sigma <= 0 yields the unit impulse.
std::vector<double> gaussian_kernel(double sigma_bins);

inline constexpr std::array<int, 10> kStandardPercentiles{10, 20, 30, 40, 50, 60, 70, 80, 90, 98};

/// percentile -> height above elev0 (meters).
using RHProfile = std::map<int, double>;

RHProfile extract_rh(const Waveform& w, std::span<const int> percentiles = kStandardPercentiles);
/// Height at which cumulative energy from the bottom reaches `fraction` (0..1] of the total.
double relative_height(const Waveform& w, double fraction);

enum class FootprintSource : std::uint8_t { gedi, icesat2, uavls };

std::string_view to_string(FootprintSource s) noexcept;
FootprintSource parse_source(std::string_view s);

inline constexpr double kMaxCanopyHeight = 150.0;

struct FootprintRecord {
  double x = 0.0;
  double y = 0.0;
  double canopy_height = 0.0;
  FootprintSource source = FootprintSource::gedi;
  int quality = 1;

  friend bool operator==(const FootprintRecord&, const FootprintRecord&) = default;
};

/// Throws ValidationError unless 0 <= canopy_height <= 150 and coordinates are finite.
void validate(const FootprintRecord& r);

/// Records with quality == 1, order preserved.
std::vector<FootprintRecord> filter_quality(std::span<const FootprintRecord> records);

// CSV interfaces. Footprints: `x,y,canopy_height,source,quality`.
// Photons: `along_track,elevation` with an optional third `label` column.
std::vector<FootprintRecord> read_footprints_csv(std::istream& in);
std::vector<FootprintRecord> read_footprints_csv(const std::filesystem::path& path);
void write_footprints_csv(std::ostream& out, std::span<const FootprintRecord> records);

std::vector<PhotonEvent> read_photons_csv(std::istream& in);
std::vector<PhotonEvent> read_photons_csv(const std::filesystem::path& path);
void write_photons_csv(std::ostream& out, std::span<const PhotonEvent> photons, bool with_labels);

std::vector<PointXYZ> read_points_csv(std::istream& in);

}  // namespace canopyfuse::lidar
