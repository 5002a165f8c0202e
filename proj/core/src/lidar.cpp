#include "canopyfuse/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "canopyfuse/error.hpp"
#include "csv_util.hpp"

namespace canopyfuse::lidar {

namespace {

void validate_photons(std::span<const PhotonEvent> photons) {
  for (std::size_t i = 0; i < photons.size(); ++i) {
    const auto& p = photons[i];
    if (!std::isfinite(p.along_track) || !std::isfinite(p.elevation)) {
      throw ValidationError("photon " + std::to_string(i) + " has a non-finite coordinate");
    }
    if (p.along_track < 0.0) {
      throw ValidationError("photon " + std::to_string(i) + " has negative along-track distance");
    }
  }
}

struct CellKey {
  std::int64_t cx;
  std::int64_t cy;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    return std::hash<std::int64_t>{}(k.cx * 0x9E3779B97F4A7C15LL ^ k.cy);
  }
};

}  // namespace

std::vector<PhotonLabel> dbscan_label(std::span<const PhotonEvent> photons, double eps,
                                      std::size_t min_pts) {
  if (!(eps > 0.0)) throw ValidationError("dbscan eps must be > 0");
  if (min_pts < 1) throw ValidationError("dbscan min_pts must be >= 1");
  validate_photons(photons);
  const std::size_t n = photons.size();
  if (n == 0) return {};

  // Cells of side eps: every neighbor within eps lies in the 3x3 cell block.
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  std::vector<CellKey> cell_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    CellKey k{static_cast<std::int64_t>(std::floor(photons[i].along_track / eps)),
              static_cast<std::int64_t>(std::floor(photons[i].elevation / eps))};
    cell_of[i] = k;
    grid[k].push_back(i);
  }
  const double eps2 = eps * eps;
  auto for_each_neighbor = [&](std::size_t i, auto&& fn) {
    const auto& p = photons[i];
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = grid.find({cell_of[i].cx + dx, cell_of[i].cy + dy});
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          const double ax = photons[j].along_track - p.along_track;
          const double ay = photons[j].elevation - p.elevation;
          if (ax * ax + ay * ay <= eps2) fn(j);
        }
      }
    }
  };

  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for_each_neighbor(i, [&](std::size_t) { ++count; });
    core[i] = count >= min_pts;
  }
  std::vector<PhotonLabel> labels(n, PhotonLabel::noise);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      labels[i] = PhotonLabel::signal;
      continue;
    }
    bool near_core = false;
    for_each_neighbor(i, [&](std::size_t j) { near_core = near_core || core[j]; });
    if (near_core) labels[i] = PhotonLabel::signal;
  }
  return labels;
}

std::vector<CanopyStep> classify_canopy_steps(std::span<const PhotonEvent> signal_photons,
                                              double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("step must be > 0");
  validate_photons(signal_photons);

  struct Bucket {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t count = 0;
  };
  std::map<std::int64_t, Bucket> buckets;
  for (const auto& p : signal_photons) {
    if (p.label == PhotonLabel::noise) continue;
    auto& b = buckets[static_cast<std::int64_t>(std::floor(p.along_track / step))];
    b.lo = std::min(b.lo, p.elevation);
    b.hi = std::max(b.hi, p.elevation);
    ++b.count;
  }
  std::vector<CanopyStep> out;
  for (const auto& [idx, b] : buckets) {
    if (b.count < 2) continue;
    out.push_back({(static_cast<double>(idx) + 0.5) * step, b.hi, b.lo, b.hi - b.lo});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Waveforms

double Waveform::total_energy() const noexcept {
  return std::accumulate(bin_energy.begin(), bin_energy.end(), 0.0);
}

void Waveform::validate() const {
  if (!(bin_size > 0.0) || !std::isfinite(bin_size)) throw ValidationError("bin_size must be > 0");
  bool any_positive = false;
  for (double e : bin_energy) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw ValidationError("waveform energy must be finite and >= 0");
    any_positive = any_positive || e > 0.0;
  }
  if (!any_positive) throw ValidationError("waveform carries no energy");
}

std::vector<double> gaussian_kernel(double sigma_bins) {
  if (!(sigma_bins > 0.0)) return {1.0};
  const auto radius = static_cast<std::size_t>(std::ceil(4.0 * sigma_bins));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-0.5 * d * d / (sigma_bins * sigma_bins));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

Waveform simulate_waveform(std::span<const PointXYZ> points, double center_x, double center_y,
                           const WaveformOptions& opts) {
  if (!(opts.diameter > 0.0)) throw ValidationError("footprint diameter must be > 0");
  if (!(opts.bin_size > 0.0)) throw ValidationError("bin_size must be > 0");
  const double radius = opts.diameter / 2.0;
  const double sigma = opts.diameter / 4.0;

  struct Hit {
    double z;
    double w;
  };
  std::vector<Hit> hits;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValidationError("point has a non-finite coordinate");
    }
    const double dx = p.x - center_x;
    const double dy = p.y - center_y;
    const double d2 = dx * dx + dy * dy;
    if (d2 > radius * radius) continue;
    if (p.z < 0.0) throw ValidationError("point height below ground (z < 0)");
    hits.push_back({p.z, std::exp(-d2 / (2.0 * sigma * sigma))});
  }
  if (hits.empty()) throw ValidationError("empty footprint: no points within diameter/2 of center");

  double zmax = 0.0;
  for (const auto& h : hits) zmax = std::max(zmax, h.z);
  const auto nbins = static_cast<std::size_t>(std::floor(zmax / opts.bin_size)) + 1;
  std::vector<double> hist(nbins, 0.0);
  for (const auto& h : hits) {
    auto i = static_cast<std::size_t>(std::floor(h.z / opts.bin_size));
    hist[std::min(i, nbins - 1)] += h.w;
  }

  const auto kernel = gaussian_kernel(opts.sigma_bins);
  const std::size_t kr = kernel.size() / 2;
  std::vector<double> out(nbins + kr, 0.0);
  for (std::size_t i = 0; i < nbins; ++i) {
    if (hist[i] == 0.0) continue;
    for (std::size_t k = 0; k < kernel.size(); ++k) {
      // Target index i + k - kr; below zero reflects about the bottom edge.
      const auto t = static_cast<std::ptrdiff_t>(i + k) - static_cast<std::ptrdiff_t>(kr);
      const auto dst = static_cast<std::size_t>(t >= 0 ? t : -t - 1);
      out[dst] += hist[i] * kernel[k];
    }
  }
  return {std::move(out), opts.bin_size, 0.0};
}

double relative_height(const Waveform& w, double fraction) {
  w.validate();
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("fraction must be in (0, 1]");
  const double total = w.total_energy();
  const double target = fraction * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < w.bin_energy.size(); ++i) {
    const double e = w.bin_energy[i];
    if (e > 0.0 && cum + e >= target) {
      const double frac = std::clamp((target - cum) / e, 0.0, 1.0);
      return (static_cast<double>(i) + frac) * w.bin_size;
    }
    cum += e;
  }
  // Rounding left target a hair above the final cumulative sum: top of the last non-empty bin.
  for (std::size_t i = w.bin_energy.size(); i-- > 0;) {
    if (w.bin_energy[i] > 0.0) return static_cast<double>(i + 1) * w.bin_size;
  }
  return 0.0;
}

RHProfile extract_rh(const Waveform& w, std::span<const int> percentiles) {
  w.validate();
  RHProfile out;
  for (int p : percentiles) {
    if (p <= 0 || p > 100) throw ValidationError("percentile must be in (0, 100]");
    out[p] = relative_height(w, p / 100.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Footprints

std::string_view to_string(FootprintSource s) noexcept {
  switch (s) {
    case FootprintSource::gedi: return "GEDI";
    case FootprintSource::icesat2: return "ICESAT2";
    case FootprintSource::uavls: return "UAVLS";
  }
  return "?";
}

FootprintSource parse_source(std::string_view s) {
  if (s == "GEDI") return FootprintSource::gedi;
  if (s == "ICESAT2") return FootprintSource::icesat2;
  if (s == "UAVLS") return FootprintSource::uavls;
  throw ValidationError("unknown footprint source '" + std::string(s) + "'");
}

void validate(const FootprintRecord& r) {
  if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw ValidationError("footprint coordinate not finite");
  if (!(r.canopy_height >= 0.0 && r.canopy_height <= kMaxCanopyHeight)) {
    throw ValidationError("canopy height " + detail::format_double(r.canopy_height) +
                          " outside [0, 150] m");
  }
}

std::vector<FootprintRecord> filter_quality(std::span<const FootprintRecord> records) {
  std::vector<FootprintRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const FootprintRecord& r) { return r.quality == 1; });
  return out;
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrc::io_failure, "cannot open " + path.string());
  return in;
}

void expect_header(const std::vector<std::string>& got, std::span<const std::string_view> want,
                   std::size_t optional_tail) {
  const bool size_ok = got.size() <= want.size() && got.size() + optional_tail >= want.size();
  bool ok = size_ok;
  for (std::size_t i = 0; ok && i < got.size(); ++i) ok = got[i] == want[i];
  if (!ok) {
    std::string expected;
    for (auto w : want) expected += (expected.empty() ? "" : ",") + std::string(w);
    throw FormatError(FormatErrc::malformed, "unexpected CSV header, expected '" + expected + "'");
  }
}

}  // namespace

std::vector<FootprintRecord> read_footprints_csv(std::istream& in) {
  static constexpr std::string_view kCols[] = {"x", "y", "canopy_height", "source", "quality"};
  std::vector<std::string> header;
  if (!detail::read_header(in, header)) return {};
  expect_header(header, kCols, 0);
  std::vector<FootprintRecord> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 5) {
      throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": expected 5 fields");
    }
    FootprintRecord r;
    r.x = detail::parse_double(f[0], line_no);
    r.y = detail::parse_double(f[1], line_no);
    r.canopy_height = detail::parse_double(f[2], line_no);
    try {
      r.source = parse_source(f[3]);
    } catch (const ValidationError& e) {
      throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": " + e.what());
    }
    r.quality = static_cast<int>(detail::parse_int(f[4], line_no));
    validate(r);
    out.push_back(r);
  }
  return out;
}

std::vector<FootprintRecord> read_footprints_csv(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_footprints_csv(in);
}

void write_footprints_csv(std::ostream& out, std::span<const FootprintRecord> records) {
  out << "x,y,canopy_height,source,quality\n";
  for (const auto& r : records) {
    out << detail::format_double(r.x) << ',' << detail::format_double(r.y) << ','
        << detail::format_double(r.canopy_height) << ',' << to_string(r.source) << ',' << r.quality
        << '\n';
  }
}

std::vector<PhotonEvent> read_photons_csv(std::istream& in) {
  static constexpr std::string_view kCols[] = {"along_track", "elevation", "label"};
  std::vector<std::string> header;
  if (!detail::read_header(in, header)) return {};
  expect_header(header, kCols, 1);
  const bool with_labels = header.size() == 3;
  std::vector<PhotonEvent> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != header.size()) {
      throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": wrong field count");
    }
    PhotonEvent p;
    p.along_track = detail::parse_double(f[0], line_no);
    p.elevation = detail::parse_double(f[1], line_no);
    if (with_labels) {
      if (f[2] == "signal") p.label = PhotonLabel::signal;
      else if (f[2] == "noise") p.label = PhotonLabel::noise;
      else if (f[2] == "unlabeled" || f[2].empty()) p.label = PhotonLabel::unlabeled;
      else throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": bad label");
    }
    out.push_back(p);
  }
  validate_photons(out);
  return out;
}

std::vector<PhotonEvent> read_photons_csv(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_photons_csv(in);
}

void write_photons_csv(std::ostream& out, std::span<const PhotonEvent> photons, bool with_labels) {
  out << (with_labels ? "along_track,elevation,label\n" : "along_track,elevation\n");
  for (const auto& p : photons) {
    out << detail::format_double(p.along_track) << ',' << detail::format_double(p.elevation);
    if (with_labels) {
      out << ','
          << (p.label == PhotonLabel::signal ? "signal"
              : p.label == PhotonLabel::noise ? "noise"
                                              : "unlabeled");
    }
    out << '\n';
  }
}

std::vector<PointXYZ> read_points_csv(std::istream& in) {
  static constexpr std::string_view kCols[] = {"x", "y", "z"};
  std::vector<std::string> header;
  if (!detail::read_header(in, header)) return {};
  expect_header(header, kCols, 0);
  std::vector<PointXYZ> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 3) throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": expected 3 fields");
    out.push_back({detail::parse_double(f[0], line_no), detail::parse_double(f[1], line_no),
                   detail::parse_double(f[2], line_no)});
  }
  return out;
}

}  // namespace canopyfuse::lidar
