#include "canopyfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "canopyfuse/error.hpp"
#include "canopyfuse/random.hpp"

namespace canopyfuse::synth {

HeightField parse_height_field(std::string_view s) {
  if (s == "smooth") return HeightField::smooth;
  if (s == "ridged") return HeightField::ridged;
  if (s == "patchy") return HeightField::patchy;
  throw ValidationError("unknown height field '" + std::string(s) + "' (smooth|ridged|patchy)");
}

std::string_view to_string(HeightField f) noexcept {
  switch (f) {
    case HeightField::smooth: return "smooth";
    case HeightField::ridged: return "ridged";
    case HeightField::patchy: return "patchy";
  }
  return "?";
}

TrackPattern parse_track_pattern(std::string_view s) {
  if (s == "gedi_like") return TrackPattern::gedi_like;
  if (s == "icesat_like") return TrackPattern::icesat_like;
  throw ValidationError("unknown footprint pattern '" + std::string(s) + "' (gedi_like|icesat_like)");
}

const std::string& Scene::region_at(std::size_t row, std::size_t col) const {
  return region_names.at(static_cast<std::size_t>(region_map.at(0, row, col)));
}

double lattice_value(std::uint64_t seed, std::uint32_t octave, std::int64_t ix, std::int64_t iy) noexcept {
  std::uint64_t h = mix64(seed ^ mix64(octave + 0x51ULL));
  h = mix64(h ^ static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

namespace {

constexpr std::uint32_t kOctaves = 3;
constexpr double kBaseCell = 48.0;
constexpr double kGiantMin = 80.0;
constexpr double kGiantMax = 110.0;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, std::uint32_t octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double v00 = lattice_value(seed, octave, ix, iy);
  const double v10 = lattice_value(seed, octave, ix + 1, iy);
  const double v01 = lattice_value(seed, octave, ix, iy + 1);
  const double v11 = lattice_value(seed, octave, ix + 1, iy + 1);
  const double top = v00 + (v10 - v00) * tx;
  const double bottom = v01 + (v11 - v01) * tx;
  return top + (bottom - top) * ty;
}

double fractal(std::uint64_t seed, HeightField field, double px, double py) {
  double sum = 0.0, amp = 1.0, total = 0.0, cell = kBaseCell;
  for (std::uint32_t o = 0; o < kOctaves; ++o) {
    double n = value_noise(seed, o, px / cell, py / cell);
    if (field == HeightField::ridged) n = 1.0 - std::abs(2.0 * n - 1.0);
    sum += amp * n;
    total += amp;
    amp *= 0.5;
    cell *= 0.5;
  }
  return sum / total;
}

}  // namespace

double band_response(std::size_t band, double h) noexcept {
  const double t = h / kBaseCanopyMax;
  const double scale = 1.0 + 0.05 * static_cast<double>(band / 4);
  switch (band % 4) {
    case 0: return scale * (0.05 + 0.25 * std::exp(-t));
    case 1: return scale * (0.20 + 0.30 * std::tanh(0.8 * t + 0.1));
    case 2: return scale * (0.10 + 0.15 * std::log1p(2.0 * t));
    default: return scale * (0.30 - 0.10 * t / (1.0 + t));
  }
}

Scene gen_scene(const SceneConfig& c) {
  if (c.width < 16 || c.height < 16) throw ValidationError("scene must be at least 16x16 pixels");
  if (c.bands == 0) throw ValidationError("scene needs at least one band");
  if (c.regions_x == 0 || c.regions_y == 0) throw ValidationError("region grid must be at least 1x1");
  if (!(c.band_noise >= 0.0)) throw ValidationError("band noise must be >= 0");
  const auto transform = geo::AffineTransform::north_up(c.origin_x, c.origin_y, c.pixel_size);
  const std::size_t W = c.width, H = c.height, N = W * H;

  std::vector<double> raw(N);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t col = 0; col < W; ++col) {
      raw[r * W + col] = fractal(c.seed, c.height_field, static_cast<double>(col) + 0.5, static_cast<double>(r) + 0.5);
    }
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double lo_v = *lo, span = *hi - *lo;
  std::vector<float> chm(N);
  for (std::size_t i = 0; i < N; ++i) {
    chm[i] = static_cast<float>(span > 0.0 ? kBaseCanopyMax * (raw[i] - lo_v) / span : 0.0);
  }

  if (c.height_field == HeightField::patchy) {
    // Giant-tree clusters: disks of radius 2 until the 0.9% pixel budget is spent.
    Rng rng(derive_seed(c.seed, 0x6769616eULL));
    const std::size_t budget = std::max<std::size_t>(1, N * 9 / 1000);
    std::size_t used = 0;
    for (int attempt = 0; attempt < 1000 && used < budget; ++attempt) {
      const auto cx = static_cast<std::ptrdiff_t>(rng.index(W));
      const auto cy = static_cast<std::ptrdiff_t>(rng.index(H));
      for (std::ptrdiff_t dy = -2; dy <= 2 && used < budget; ++dy) {
        for (std::ptrdiff_t dx = -2; dx <= 2 && used < budget; ++dx) {
          if (dx * dx + dy * dy > 4) continue;
          const auto x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(W) || y >= static_cast<std::ptrdiff_t>(H)) continue;
          float& v = chm[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
          if (v >= kGiantMin) continue;
          v = static_cast<float>(rng.uniform(kGiantMin, kGiantMax));
          ++used;
        }
      }
    }
  }

  std::vector<float> bands(c.bands * N);
  for (std::size_t b = 0; b < c.bands; ++b) {
    Rng noise(derive_seed(c.seed, 0x62616e64ULL + b));
    for (std::size_t i = 0; i < N; ++i) {
      double v = band_response(b, chm[i]);
      if (c.band_noise > 0.0) v += noise.normal() * c.band_noise;
      bands[b * N + i] = static_cast<float>(v);
    }
  }

  std::vector<std::string> names;
  for (std::size_t i = 0; i < c.regions_x * c.regions_y; ++i) names.push_back("R" + std::to_string(i));
  std::vector<float> regions(N);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t col = 0; col < W; ++col) {
      const std::size_t rx = col * c.regions_x / W, ry = r * c.regions_y / H;
      regions[r * W + col] = static_cast<float>(ry * c.regions_x + rx);
    }
  }

  return {geo::RasterGrid(W, H, 1, transform, geo::kDefaultNodata, std::move(chm)),
          geo::RasterGrid(W, H, c.bands, transform, geo::kDefaultNodata, std::move(bands)),
          geo::RasterGrid(W, H, 1, transform, geo::kDefaultNodata, std::move(regions)), std::move(names), c.seed};
}

// ---------------------------------------------------------------------------

namespace {

bool pixel_of(const geo::RasterGrid& g, double x, double y, std::size_t& row, std::size_t& col) {
  const auto p = geo::world_to_pixel(g.transform(), x, y);
  const double fc = std::floor(p.col), fr = std::floor(p.row);
  if (fc < 0.0 || fr < 0.0 || fc >= static_cast<double>(g.width()) || fr >= static_cast<double>(g.height())) return false;
  col = static_cast<std::size_t>(fc);
  row = static_cast<std::size_t>(fr);
  return true;
}

struct Extent {
  double x_min, x_max, y_min, y_max;
};

Extent extent_of(const geo::RasterGrid& g) {
  const auto a = g.transform().forward({0.0, 0.0});
  const auto b = g.transform().forward({static_cast<double>(g.width()), static_cast<double>(g.height())});
  return {std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y), std::max(a.y, b.y)};
}

}  // namespace

double chm_at_world(const Scene& scene, double x, double y) {
  std::size_t r = 0, c = 0;
  return pixel_of(scene.true_chm, x, y, r, c) ? scene.true_chm.at(0, r, c) : 0.0;
}

std::vector<lidar::FootprintRecord> sample_footprints(const Scene& scene, const FootprintSampling& s) {
  if (!(s.along_spacing > 0.0)) throw ValidationError("along-track spacing must be > 0");
  if (s.pattern == TrackPattern::gedi_like && !(s.across_spacing > 0.0)) {
    throw ValidationError("across-track spacing must be > 0");
  }
  if (!(s.height_noise >= 0.0) || !(s.dropout >= 0.0 && s.dropout <= 1.0) ||
      !(s.bad_quality_fraction >= 0.0 && s.bad_quality_fraction <= 1.0)) {
    throw ValidationError("noise must be >= 0 and fractions within [0, 1]");
  }
  const Extent e = extent_of(scene.true_chm);
  std::vector<double> track_x;
  lidar::FootprintSource source = lidar::FootprintSource::gedi;
  if (s.pattern == TrackPattern::gedi_like) {
    for (double x = e.x_min + s.across_spacing / 2.0; x < e.x_max; x += s.across_spacing) track_x.push_back(x);
  } else {
    source = lidar::FootprintSource::icesat2;
    const double width = e.x_max - e.x_min;
    for (double f : {1.0 / 6.0, 3.0 / 6.0, 5.0 / 6.0}) {
      track_x.push_back(e.x_min + f * width - 45.0);
      track_x.push_back(e.x_min + f * width + 45.0);
    }
  }

  Rng rng(derive_seed(s.seed, 0x666f6f74ULL));
  std::vector<lidar::FootprintRecord> out;
  for (double x : track_x) {
    for (double y = e.y_max - s.along_spacing / 2.0; y > e.y_min; y -= s.along_spacing) {
      std::size_t r = 0, c = 0;
      if (!pixel_of(scene.true_chm, x, y, r, c)) continue;
      // Draws happen in a fixed order per candidate so outputs are reproducible.
      const double u_drop = rng.uniform();
      const double noise = s.height_noise > 0.0 ? rng.normal() * s.height_noise : 0.0;
      const double u_flag = rng.uniform();
      if (u_drop < s.dropout) continue;
      lidar::FootprintRecord rec;
      rec.x = x;
      rec.y = y;
      rec.canopy_height = std::clamp(static_cast<double>(scene.true_chm.at(0, r, c)) + noise, 0.0, lidar::kMaxCanopyHeight);
      rec.source = source;
      rec.quality = u_flag < s.bad_quality_fraction ? 0 : 1;
      out.push_back(rec);
    }
  }
  if (out.empty()) throw ValidationError("footprint sampling produced zero footprints");
  return out;
}

double TrackLine::length() const noexcept { return std::hypot(x1 - x0, y1 - y0); }

TrackLine center_track(const Scene& scene) {
  const Extent e = extent_of(scene.true_chm);
  const double x = (e.x_min + e.x_max) / 2.0 + 0.25 * scene.true_chm.transform().a();
  return {x, e.y_max - 0.01, x, e.y_min + 0.01};
}

PhotonTrack gen_photons(const Scene& scene, const TrackLine& track, const PhotonConfig& cfg) {
  if (!(cfg.photons_per_meter >= 0.0) || !(cfg.noise_rate >= 0.0)) throw ValidationError("photon rates must be >= 0");
  if (!(cfg.ground_fraction >= 0.0 && cfg.ground_fraction <= 1.0)) throw ValidationError("ground fraction outside [0, 1]");
  const double L = track.length();
  if (!(L > 0.0)) throw ValidationError("track has zero length");
  auto point_at = [&](double s) {
    return std::pair{track.x0 + (track.x1 - track.x0) * s / L, track.y0 + (track.y1 - track.y0) * s / L};
  };

  bool crosses = false;
  double max_chm = 0.0;
  for (double s = 0.0; s <= L; s += 1.0) {
    const auto [x, y] = point_at(s);
    std::size_t r = 0, c = 0;
    if (!pixel_of(scene.true_chm, x, y, r, c)) continue;
    crosses = true;
    max_chm = std::max(max_chm, static_cast<double>(scene.true_chm.at(0, r, c)));
  }
  if (!crosses) throw ValidationError("photon track misses the scene");
  const double window = std::max(max_chm, 10.0);

  Rng rng(derive_seed(cfg.seed, 0x70686f74ULL));
  std::vector<lidar::PhotonEvent> photons;
  std::vector<bool> truth;
  const auto n_signal = static_cast<std::size_t>(std::llround(cfg.photons_per_meter * L));
  for (std::size_t i = 0; i < n_signal; ++i) {
    const double s = rng.uniform(0.0, L);
    const double u_ground = rng.uniform();
    const double u_depth = rng.uniform();
    const auto [x, y] = point_at(s);
    std::size_t r = 0, c = 0;
    if (!pixel_of(scene.true_chm, x, y, r, c)) continue;
    const double chm = scene.true_chm.at(0, r, c);
    const double elev = u_ground < cfg.ground_fraction ? 0.0 : chm - u_depth * std::min(cfg.crown_depth, chm);
    photons.push_back({s, elev, lidar::PhotonLabel::unlabeled});
    truth.push_back(true);
  }
  const auto n_noise = static_cast<std::size_t>(std::llround(cfg.noise_rate * L));
  for (std::size_t i = 0; i < n_noise; ++i) {
    const double s = rng.uniform(0.0, L);
    const double elev = rng.uniform(-2.0 * window, 3.0 * window);
    photons.push_back({s, elev, lidar::PhotonLabel::unlabeled});
    truth.push_back(false);
  }

  std::vector<std::size_t> order(photons.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return photons[a].along_track < photons[b].along_track; });
  PhotonTrack out;
  for (std::size_t i : order) {
    out.photons.push_back(photons[i]);
    out.is_signal.push_back(truth[i]);
  }
  return out;
}

std::vector<lidar::PointXYZ> gen_point_cloud(const Scene& scene, double cx, double cy, double radius,
                                             double points_per_m2, std::uint64_t seed) {
  if (!(radius > 0.0) || !(points_per_m2 > 0.0)) throw ValidationError("radius and density must be > 0");
  Rng rng(derive_seed(seed, 0x636c6f75ULL));
  const auto n = static_cast<std::size_t>(std::llround(points_per_m2 * 3.141592653589793 * radius * radius));
  std::vector<lidar::PointXYZ> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rr = radius * std::sqrt(rng.uniform());
    const double th = rng.uniform(0.0, 6.283185307179586);
    const double x = cx + rr * std::cos(th), y = cy + rr * std::sin(th);
    const double chm = chm_at_world(scene, x, y);
    const double u = rng.uniform();
    const double v = rng.uniform();
    double z = 0.0;
    if (u < 0.5) z = chm - v * std::min(1.0, chm);
    else if (u < 0.8) z = v * chm;
    out.push_back({x, y, z});
  }
  return out;
}

}  // namespace canopyfuse::synth
