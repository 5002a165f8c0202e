#include "canopyfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "canopyfuse/error.hpp"

namespace canopyfuse::fusion {

HeightMoments moments(std::span<const double> values) {
  HeightMoments m;
  m.n = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(values.size()));
  return m;
}

std::vector<double> harmonize(std::span<const double> heights_src, double ref_mean, double ref_std) {
  if (heights_src.size() < 2) throw ValidationError("harmonize needs at least 2 source heights");
  if (!(ref_std > 0.0) || !std::isfinite(ref_std) || !std::isfinite(ref_mean)) {
    throw ValidationError("reference std must be finite and > 0");
  }
  const auto m = moments(heights_src);
  if (!(m.std > 0.0)) throw ValidationError("source heights have zero variance");
  std::vector<double> out;
  out.reserve(heights_src.size());
  // Matching moments are an exact fixed point.
  if (m.mean == ref_mean && m.std == ref_std) return {heights_src.begin(), heights_src.end()};
  for (double h : heights_src) out.push_back((h - m.mean) / m.std * ref_std + ref_mean);
  return out;
}

std::vector<lidar::FootprintRecord> harmonize_sources(std::span<const lidar::FootprintRecord> records,
                                                      lidar::FootprintSource reference,
                                                      lidar::FootprintSource target) {
  std::vector<double> ref_h;
  std::vector<double> src_h;
  for (const auto& r : records) {
    if (r.source == reference) ref_h.push_back(r.canopy_height);
    else if (r.source == target) src_h.push_back(r.canopy_height);
  }
  if (ref_h.size() < 2) {
    throw ValidationError("harmonization reference " + std::string(lidar::to_string(reference)) +
                          " has fewer than 2 records");
  }
  const auto ref = moments(ref_h);
  const auto mapped = harmonize(src_h, ref.mean, ref.std);
  std::vector<lidar::FootprintRecord> out(records.begin(), records.end());
  std::size_t k = 0;
  for (auto& r : out) {
    if (r.source != target) continue;
    r.canopy_height = std::clamp(mapped[k++], 0.0, lidar::kMaxCanopyHeight);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t SparseLabelGrid::labeled_pixels() const noexcept {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
}

SparseLabelGrid rasterize_footprints(std::span<const lidar::FootprintRecord> records,
                                     const geo::RasterGrid& templ, RasterizeSummary* summary) {
  const std::size_t w = templ.width();
  const std::size_t h = templ.height();
  std::vector<double> sums(w * h, 0.0);
  std::vector<std::uint32_t> counts(w * h, 0);
  RasterizeSummary s;
  for (const auto& r : records) {
    lidar::validate(r);
    const auto p = geo::world_to_pixel(templ.transform(), r.x, r.y);
    const double col = std::floor(p.col);
    const double row = std::floor(p.row);
    if (col < 0.0 || row < 0.0 || col >= static_cast<double>(w) || row >= static_cast<double>(h)) {
      ++s.out_of_bounds;
      continue;
    }
    const auto idx = static_cast<std::size_t>(row) * w + static_cast<std::size_t>(col);
    sums[idx] += r.canopy_height;
    ++counts[idx];
    ++s.in_bounds;
    ++s.per_source[r.source];
  }
  auto labels = templ.like(1, templ.nodata());
  for (std::size_t i = 0; i < w * h; ++i) {
    if (counts[i] == 0) continue;
    labels.set(0, i / w, i % w, static_cast<float>(sums[i] / counts[i]));
  }
  if (summary) *summary = s;
  return {std::move(labels), std::move(counts)};
}

std::string format_summary(const RasterizeSummary& s) {
  std::ostringstream os;
  os << "records_in_bounds=" << s.in_bounds << '\n';
  os << "records_out_of_bounds=" << s.out_of_bounds << '\n';
  for (auto src : {lidar::FootprintSource::gedi, lidar::FootprintSource::icesat2, lidar::FootprintSource::uavls}) {
    auto it = s.per_source.find(src);
    os << "source_" << lidar::to_string(src) << '=' << (it == s.per_source.end() ? 0 : it->second) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

std::size_t Sample::masked_count() const noexcept {
  return static_cast<std::size_t>(std::count(label_mask.begin(), label_mask.end(), std::uint8_t{1}));
}

net::Tensor extract_patch(const geo::RasterGrid& bands, geo::PatchOrigin origin, std::size_t patch) {
  if (origin.col0 + patch > bands.width() || origin.row0 + patch > bands.height()) {
    throw ValidationError("patch window out of raster bounds");
  }
  net::Tensor t({bands.bands(), patch, patch});
  for (std::size_t b = 0; b < bands.bands(); ++b) {
    auto src = bands.band(b);
    for (std::size_t y = 0; y < patch; ++y) {
      const float* row = src.data() + (origin.row0 + y) * bands.width() + origin.col0;
      for (std::size_t x = 0; x < patch; ++x) {
        t.at(b, y, x) = row[x] == bands.nodata() ? 0.0f : row[x];
      }
    }
  }
  return t;
}

std::vector<Sample> build_samples(const geo::RasterGrid& bands, const SparseLabelGrid& labels,
                                  std::size_t patch, std::size_t step) {
  if (!bands.same_geometry(labels.labels)) {
    throw ValidationError("bands and labels differ in dimensions or transform");
  }
  if (labels.counts.size() != bands.pixel_count()) throw ValidationError("label count grid size mismatch");
  const std::size_t w = bands.width();
  // Summed-area table of labeled pixels: O(1) emptiness test per window.
  std::vector<std::size_t> sat((bands.height() + 1) * (w + 1), 0);
  for (std::size_t r = 0; r < bands.height(); ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      sat[(r + 1) * (w + 1) + c + 1] = (labels.counts[r * w + c] > 0 ? 1 : 0) + sat[r * (w + 1) + c + 1] +
                                       sat[(r + 1) * (w + 1) + c] - sat[r * (w + 1) + c];
    }
  }
  std::vector<Sample> out;
  for (const auto& o : geo::tile_patches(bands, patch, step)) {
    const std::size_t r0 = o.row0, c0 = o.col0, r1 = o.row0 + patch, c1 = o.col0 + patch;
    const std::size_t n = sat[r1 * (w + 1) + c1] + sat[r0 * (w + 1) + c0] - sat[r0 * (w + 1) + c1] -
                          sat[r1 * (w + 1) + c0];
    if (n == 0) continue;
    Sample s;
    s.origin = o;
    s.patch = extract_patch(bands, o, patch);
    s.label_mask.assign(patch * patch, 0);
    s.label_values.assign(patch * patch, 0.0f);
    for (std::size_t y = 0; y < patch; ++y) {
      for (std::size_t x = 0; x < patch; ++x) {
        if (labels.counts[(r0 + y) * w + c0 + x] == 0) continue;
        s.label_mask[y * patch + x] = 1;
        s.label_values[y * patch + x] = labels.labels.at(0, r0 + y, c0 + x);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace canopyfuse::fusion
