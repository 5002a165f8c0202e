#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace canopyfuse::geo {

inline constexpr float kDefaultNodata = -9999.0f;

struct PixelCoord {
  double col = 0.0;
  double row = 0.0;
};

struct WorldCoord {
  double x = 0.0;
  double y = 0.0;
};

/// Maps pixel (col, row) to world (x, y):
///   x = a*col + b*row + c
///   y = d*col + e*row + f
class AffineTransform {
 public:
  /// Identity transform.
  AffineTransform() = default;
  /// Throws ValidationError when |a*e - b*d| < 1e-12.
  AffineTransform(double a, double b, double c, double d, double e, double f);

  /// North-up grid with square pixels of `pixel_size` meters, origin at the top-left corner.
  static AffineTransform north_up(double origin_x, double origin_y, double pixel_size);

  WorldCoord forward(PixelCoord p) const noexcept;
  PixelCoord inverse(WorldCoord w) const noexcept;

  double determinant() const noexcept { return a_ * e_ - b_ * d_; }

  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double c() const noexcept { return c_; }
  double d() const noexcept { return d_; }
  double e() const noexcept { return e_; }
  double f() const noexcept { return f_; }

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;

 private:
  double a_ = 1.0, b_ = 0.0, c_ = 0.0;
  double d_ = 0.0, e_ = 1.0, f_ = 0.0;
};

PixelCoord world_to_pixel(const AffineTransform& t, double x, double y) noexcept;
WorldCoord pixel_to_world(const AffineTransform& t, double col, double row) noexcept;

/// Multi-band float32 grid, band-major then row-major.
///
/// Every stored value is either finite or exactly equal to the nodata sentinel.
class RasterGrid {
 public:
  RasterGrid(std::size_t width, std::size_t height, std::size_t bands,
             AffineTransform transform = {}, float nodata = kDefaultNodata);
  /// Takes ownership of `data`; its length must equal bands*height*width.
  RasterGrid(std::size_t width, std::size_t height, std::size_t bands, AffineTransform transform,
             float nodata, std::vector<float> data);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t bands() const noexcept { return bands_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }
  const AffineTransform& transform() const noexcept { return transform_; }
  float nodata() const noexcept { return nodata_; }

  float at(std::size_t band, std::size_t row, std::size_t col) const;
  /// Stores `v`; throws ValidationError when `v` is neither finite nor nodata.
  void set(std::size_t band, std::size_t row, std::size_t col, float v);
  bool is_nodata(std::size_t band, std::size_t row, std::size_t col) const;

  std::span<const float> band(std::size_t b) const;
  std::span<const float> data() const noexcept { return data_; }

  /// Same geometry, `bands` bands, all values `fill`.
  RasterGrid like(std::size_t bands, float fill) const;
  /// Subset of bands, in the given order.
  RasterGrid select_bands(std::span<const std::size_t> band_ids) const;

  bool same_geometry(const RasterGrid& other) const noexcept;

  friend bool operator==(const RasterGrid& lhs, const RasterGrid& rhs);

 private:
  std::size_t index(std::size_t band, std::size_t row, std::size_t col) const;
  void validate() const;

  std::size_t width_;
  std::size_t height_;
  std::size_t bands_;
  AffineTransform transform_;
  float nodata_;
  std::vector<float> data_;
};

/// Per-band population mean/std over valid pixels.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t band_count() const noexcept { return mean.size(); }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// `mask`, when given, has one entry per pixel (row-major); false excludes the pixel.
/// Throws DegenerateBandError naming the band for < 2 valid pixels or zero variance.
ChannelStats compute_channel_stats(const RasterGrid& r,
                                   std::optional<std::span<const bool>> mask = std::nullopt);

/// (v - mean_b) / std_b per band. Nodata stays nodata.
RasterGrid normalize(const RasterGrid& r, const ChannelStats& s);

struct PatchOrigin {
  std::size_t col0 = 0;
  std::size_t row0 = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// Row-major origins of every patch x patch window on the `step` lattice, with the final
/// row/column clamped so the windows cover every pixel.
std::vector<PatchOrigin> tile_patches(std::size_t width, std::size_t height, std::size_t patch,
                                      std::size_t step);
std::vector<PatchOrigin> tile_patches(const RasterGrid& r, std::size_t patch, std::size_t step);

// CHMR binary raster format (little-endian):
//   "CHMR" | u32 version=1 | u32 width | u32 height | u32 bands |
//   f64 a,b,c,d,e,f | f32 nodata | f32 payload[bands*height*width]
inline constexpr std::uint32_t kRasterFormatVersion = 1;

void write_raster(const RasterGrid& r, std::ostream& out);
void write_raster(const RasterGrid& r, const std::filesystem::path& path);
RasterGrid read_raster(std::istream& in);
RasterGrid read_raster(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_raster(const RasterGrid& r);
RasterGrid decode_raster(std::span<const std::uint8_t> bytes);

}  // namespace canopyfuse::geo
