#include "canopyfuse/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "binary_io.hpp"
#include "canopyfuse/error.hpp"

namespace canopyfuse {

const char* to_string(FormatErrc code) noexcept {
  switch (code) {
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::version_mismatch: return "version mismatch";
    case FormatErrc::truncated_payload: return "truncated payload";
    case FormatErrc::dimension_overflow: return "dimension overflow";
    case FormatErrc::io_failure: return "i/o failure";
    case FormatErrc::malformed: return "malformed";
  }
  return "unknown";
}

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io_failure, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io_failure, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io_failure, "write failed: " + path);
}

}  // namespace detail

namespace geo {

AffineTransform::AffineTransform(double a, double b, double c, double d, double e, double f)
    : a_(a), b_(b), c_(c), d_(d), e_(e), f_(f) {
  for (double v : {a, b, c, d, e, f}) {
    if (!std::isfinite(v)) throw ValidationError("affine coefficient is not finite");
  }
  if (std::abs(determinant()) < 1e-12) {
    throw ValidationError("affine transform is not invertible (|det| < 1e-12)");
  }
}

AffineTransform AffineTransform::north_up(double origin_x, double origin_y, double pixel_size) {
  return {pixel_size, 0.0, origin_x, 0.0, -pixel_size, origin_y};
}

WorldCoord AffineTransform::forward(PixelCoord p) const noexcept {
  return {a_ * p.col + b_ * p.row + c_, d_ * p.col + e_ * p.row + f_};
}

PixelCoord AffineTransform::inverse(WorldCoord w) const noexcept {
  const double det = determinant();
  const double dx = w.x - c_;
  const double dy = w.y - f_;
  return {(e_ * dx - b_ * dy) / det, (a_ * dy - d_ * dx) / det};
}

PixelCoord world_to_pixel(const AffineTransform& t, double x, double y) noexcept {
  return t.inverse({x, y});
}

WorldCoord pixel_to_world(const AffineTransform& t, double col, double row) noexcept {
  return t.forward({col, row});
}

// ---------------------------------------------------------------------------
// RasterGrid

RasterGrid::RasterGrid(std::size_t width, std::size_t height, std::size_t bands,
                       AffineTransform transform, float nodata)
    : RasterGrid(width, height, bands, transform, nodata,
                 std::vector<float>(width * height * bands, 0.0f)) {}

RasterGrid::RasterGrid(std::size_t width, std::size_t height, std::size_t bands,
                       AffineTransform transform, float nodata, std::vector<float> data)
    : width_(width), height_(height), bands_(bands), transform_(transform), nodata_(nodata),
      data_(std::move(data)) {
  validate();
}

void RasterGrid::validate() const {
  if (width_ < 1 || height_ < 1 || bands_ < 1) {
    throw ValidationError("raster dimensions must be >= 1");
  }
  if (data_.size() != width_ * height_ * bands_) {
    throw ValidationError("raster payload has " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(width_ * height_ * bands_));
  }
  for (float v : data_) {
    if (!std::isfinite(v) && v != nodata_) throw ValidationError("raster holds a non-finite value");
  }
}

std::size_t RasterGrid::index(std::size_t band, std::size_t row, std::size_t col) const {
  if (band >= bands_ || row >= height_ || col >= width_) {
    throw ValidationError("raster index out of range");
  }
  return (band * height_ + row) * width_ + col;
}

float RasterGrid::at(std::size_t band, std::size_t row, std::size_t col) const {
  return data_[index(band, row, col)];
}

void RasterGrid::set(std::size_t band, std::size_t row, std::size_t col, float v) {
  if (!std::isfinite(v) && v != nodata_) throw ValidationError("cannot store non-finite value");
  data_[index(band, row, col)] = v;
}

bool RasterGrid::is_nodata(std::size_t band, std::size_t row, std::size_t col) const {
  return at(band, row, col) == nodata_;
}

std::span<const float> RasterGrid::band(std::size_t b) const {
  if (b >= bands_) throw ValidationError("band index out of range");
  return std::span<const float>(data_).subspan(b * pixel_count(), pixel_count());
}

RasterGrid RasterGrid::like(std::size_t bands, float fill) const {
  return {width_, height_, bands, transform_, nodata_,
          std::vector<float>(width_ * height_ * bands, fill)};
}

RasterGrid RasterGrid::select_bands(std::span<const std::size_t> band_ids) const {
  if (band_ids.empty()) throw ValidationError("band subset is empty");
  std::vector<float> out;
  out.reserve(band_ids.size() * pixel_count());
  for (std::size_t b : band_ids) {
    auto src = band(b);
    out.insert(out.end(), src.begin(), src.end());
  }
  return {width_, height_, band_ids.size(), transform_, nodata_, std::move(out)};
}

bool RasterGrid::same_geometry(const RasterGrid& other) const noexcept {
  return width_ == other.width_ && height_ == other.height_ && transform_ == other.transform_;
}

bool operator==(const RasterGrid& lhs, const RasterGrid& rhs) {
  if (!lhs.same_geometry(rhs) || lhs.bands_ != rhs.bands_) return false;
  if (std::memcmp(&lhs.nodata_, &rhs.nodata_, sizeof(float)) != 0) return false;
  return std::memcmp(lhs.data_.data(), rhs.data_.data(), lhs.data_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// Channel statistics

ChannelStats compute_channel_stats(const RasterGrid& r, std::optional<std::span<const bool>> mask) {
  if (mask && mask->size() != r.pixel_count()) {
    throw ValidationError("mask length does not match raster pixel count");
  }
  ChannelStats s;
  s.mean.resize(r.bands());
  s.std.resize(r.bands());
  for (std::size_t b = 0; b < r.bands(); ++b) {
    auto values = r.band(b);
    std::size_t n = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == r.nodata() || (mask && !(*mask)[i])) continue;
      sum += values[i];
      ++n;
    }
    if (n < 2) throw DegenerateBandError(b, "fewer than 2 valid pixels");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == r.nodata() || (mask && !(*mask)[i])) continue;
      const double d = values[i] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) throw DegenerateBandError(b, "zero variance");
    s.mean[b] = mean;
    s.std[b] = sd;
  }
  return s;
}

RasterGrid normalize(const RasterGrid& r, const ChannelStats& s) {
  if (s.band_count() != r.bands() || s.std.size() != r.bands()) {
    throw ValidationError("channel stats have " + std::to_string(s.band_count()) +
                          " bands, raster has " + std::to_string(r.bands()));
  }
  std::vector<float> out(r.data().begin(), r.data().end());
  const std::size_t np = r.pixel_count();
  for (std::size_t b = 0; b < r.bands(); ++b) {
    for (std::size_t i = 0; i < np; ++i) {
      float& v = out[b * np + i];
      if (v == r.nodata()) continue;
      v = static_cast<float>((v - s.mean[b]) / s.std[b]);
    }
  }
  return {r.width(), r.height(), r.bands(), r.transform(), r.nodata(), std::move(out)};
}

// ---------------------------------------------------------------------------
// Tiling

namespace {

std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t patch, std::size_t step) {
  std::vector<std::size_t> out;
  const std::size_t last = extent - patch;
  for (std::size_t o = 0; o <= last; o += step) out.push_back(o);
  if (out.back() != last) out.push_back(last);
  return out;
}

}  // namespace

std::vector<PatchOrigin> tile_patches(std::size_t width, std::size_t height, std::size_t patch,
                                      std::size_t step) {
  if (patch == 0) throw ValidationError("patch size must be >= 1");
  if (step == 0) throw ValidationError("tile step must be >= 1");
  if (patch > width || patch > height) {
    throw ValidationError("patch " + std::to_string(patch) + " larger than raster " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  const auto cols = axis_origins(width, patch, step);
  const auto rows = axis_origins(height, patch, step);
  std::vector<PatchOrigin> out;
  out.reserve(cols.size() * rows.size());
  for (std::size_t r : rows) {
    for (std::size_t c : cols) out.push_back({c, r});
  }
  return out;
}

std::vector<PatchOrigin> tile_patches(const RasterGrid& r, std::size_t patch, std::size_t step) {
  return tile_patches(r.width(), r.height(), patch, step);
}

// ---------------------------------------------------------------------------
// CHMR format

namespace {

constexpr char kRasterMagic[5] = "CHMR";
constexpr std::size_t kRasterHeaderBytes = 4 + 4 * 4 + 6 * 8 + 4;
// Payloads beyond 2^40 bytes are rejected before allocation.
constexpr std::uint64_t kMaxPayloadValues = std::uint64_t{1} << 38;

}  // namespace

std::vector<std::uint8_t> encode_raster(const RasterGrid& r) {
  detail::ByteWriter w;
  w.put_magic(kRasterMagic);
  w.put<std::uint32_t>(kRasterFormatVersion);
  if (r.width() > std::numeric_limits<std::uint32_t>::max() ||
      r.height() > std::numeric_limits<std::uint32_t>::max() ||
      r.bands() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatErrc::dimension_overflow, "raster dimension exceeds u32");
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.width()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.height()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.bands()));
  const auto& t = r.transform();
  for (double v : {t.a(), t.b(), t.c(), t.d(), t.e(), t.f()}) w.put<double>(v);
  w.put<float>(r.nodata());
  w.put_array<float>(r.data());
  return std::move(w).take();
}

RasterGrid decode_raster(std::span<const std::uint8_t> bytes) {
  detail::ByteReader rd(bytes);
  if (bytes.size() < 4 || !rd.magic_matches(kRasterMagic)) {
    throw FormatError(FormatErrc::bad_magic, "not a CHMR raster");
  }
  if (bytes.size() < kRasterHeaderBytes) {
    throw FormatError(FormatErrc::truncated_payload, "header shorter than " +
                                                         std::to_string(kRasterHeaderBytes) + " bytes");
  }
  const auto version = rd.get<std::uint32_t>();
  if (version != kRasterFormatVersion) {
    throw FormatError(FormatErrc::version_mismatch,
                      "CHMR version " + std::to_string(version) + ", expected " +
                          std::to_string(kRasterFormatVersion));
  }
  const std::uint64_t width = rd.get<std::uint32_t>();
  const std::uint64_t height = rd.get<std::uint32_t>();
  const std::uint64_t bands = rd.get<std::uint32_t>();
  if (width == 0 || height == 0 || bands == 0) {
    throw FormatError(FormatErrc::malformed, "zero raster dimension");
  }
  // u32*u32 fits in u64; the third factor may not.
  const std::uint64_t plane = width * height;
  if (plane > kMaxPayloadValues || bands > kMaxPayloadValues / plane) {
    throw FormatError(FormatErrc::dimension_overflow,
                      std::to_string(width) + "x" + std::to_string(height) + "x" +
                          std::to_string(bands) + " exceeds the payload limit");
  }
  double coef[6];
  for (double& c : coef) c = rd.get<double>();
  const auto nodata = rd.get<float>();
  const std::uint64_t count = plane * bands;
  if (rd.remaining() < count * sizeof(float)) {
    throw FormatError(FormatErrc::truncated_payload,
                      "payload has " + std::to_string(rd.remaining()) + " bytes, expected " +
                          std::to_string(count * sizeof(float)));
  }
  if (rd.remaining() > count * sizeof(float)) {
    throw FormatError(FormatErrc::malformed, "trailing bytes after payload");
  }
  std::vector<float> data(count);
  rd.get_array<float>(data);
  AffineTransform t;
  try {
    t = AffineTransform(coef[0], coef[1], coef[2], coef[3], coef[4], coef[5]);
  } catch (const ValidationError& e) {
    throw FormatError(FormatErrc::malformed, e.what());
  }
  try {
    return {width, height, bands, t, nodata, std::move(data)};
  } catch (const ValidationError& e) {
    throw FormatError(FormatErrc::malformed, e.what());
  }
}

void write_raster(const RasterGrid& r, std::ostream& out) {
  const auto bytes = encode_raster(r);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io_failure, "raster write failed");
}

void write_raster(const RasterGrid& r, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_raster(r));
}

RasterGrid read_raster(std::istream& in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_raster(bytes);
}

RasterGrid read_raster(const std::filesystem::path& path) {
  return decode_raster(detail::read_file_bytes(path.string()));
}

}  // namespace geo
}  // namespace canopyfuse
