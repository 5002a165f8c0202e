#include "config.hpp"

#include <charconv>
#include <fstream>
#include <system_error>

#include "canopyfuse/error.hpp"

namespace canopyfuse::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view v, std::string_view what) {
  throw ValidationError("bad value for " + std::string(key) + ": '" + std::string(v) + "' (" + std::string(what) + ")");
}

double to_double(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "number");
  return x;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return x;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true|false");
}

std::vector<std::size_t> to_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto pos = v.find(',');
    const auto part = trim(v.substr(0, pos));
    if (!part.empty()) out.push_back(to_uint(key, part));
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

PipelineConfig::PipelineConfig() {
  fit.model.entry_widths = {16, 16};
  fit.model.sepconv_filters = 8;
  fit.model.num_blocks = 4;
  fit.model.branch_width = 8;
  fit.train.epochs = 10;
  fit.train.iters_per_epoch = 200;
  fit.patch = 15;
  fit.sample_step = 4;
}

void PipelineConfig::apply(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  auto& m = fit.model;
  if (key == "seed") seed = to_uint(key, value);
  else if (key == "width") scene.width = to_uint(key, value);
  else if (key == "height") scene.height = to_uint(key, value);
  else if (key == "scene_bands") scene.bands = to_uint(key, value);
  else if (key == "height_field") scene.height_field = synth::parse_height_field(value);
  else if (key == "band_noise") scene.band_noise = to_double(key, value);
  else if (key == "pixel_size") scene.pixel_size = to_double(key, value);
  else if (key == "regions_x") scene.regions_x = to_uint(key, value);
  else if (key == "regions_y") scene.regions_y = to_uint(key, value);
  else if (key == "footprint_pattern") {
    if (value != "gedi_like" && value != "icesat_like" && value != "both") bad_value(key, value, "gedi_like|icesat_like|both");
    footprint_pattern = std::string(value);
  } else if (key == "along_spacing") footprints.along_spacing = to_double(key, value);
  else if (key == "across_spacing") footprints.across_spacing = to_double(key, value);
  else if (key == "height_noise") footprints.height_noise = to_double(key, value);
  else if (key == "dropout") footprints.dropout = to_double(key, value);
  else if (key == "bad_quality_fraction") footprints.bad_quality_fraction = to_double(key, value);
  else if (key == "photons_per_meter") photons.photons_per_meter = to_double(key, value);
  else if (key == "noise_rate") photons.noise_rate = to_double(key, value);
  else if (key == "cloud_radius") cloud_radius = to_double(key, value);
  else if (key == "cloud_density") cloud_density = to_double(key, value);
  else if (key == "dbscan_eps") dbscan_eps = to_double(key, value);
  else if (key == "dbscan_min_pts") dbscan_min_pts = to_uint(key, value);
  else if (key == "harmonize_to") {
    if (value != "GEDI" && value != "ICESAT2") bad_value(key, value, "GEDI|ICESAT2");
    harmonize_to = lidar::parse_source(value);
  } else if (key == "step_length") step_length = to_double(key, value);
  else if (key == "footprint_diameter") waveform.diameter = to_double(key, value);
  else if (key == "sigma_bins") waveform.sigma_bins = to_double(key, value);
  else if (key == "bin_size") waveform.bin_size = to_double(key, value);
  else if (key == "entry_widths") m.entry_widths = to_list(key, value);
  else if (key == "sepconv_filters") m.sepconv_filters = to_uint(key, value);
  else if (key == "num_blocks") m.num_blocks = to_uint(key, value);
  else if (key == "branch_kernels") m.branch_kernels = to_list(key, value);
  else if (key == "pool_branch") m.pool_branch = to_bool(key, value);
  else if (key == "branch_width") m.branch_width = to_uint(key, value);
  else if (key == "patch") fit.patch = to_uint(key, value);
  else if (key == "sample_step") fit.sample_step = to_uint(key, value);
  else if (key == "predict_step") predict_step = to_uint(key, value);
  else if (key == "band_subset") band_subset = to_list(key, value);
  else if (key == "folds") folds = to_uint(key, value);
  else if (key == "tolerance") tolerance = to_double(key, value);
  else if (key == "threshold") threshold = to_double(key, value);
  else if (!train::apply_setting(fit.train, key, value)) {
    throw ValidationError("unknown setting '" + std::string(key) + "'");
  }
  if (key == "seed") fit.train.seed = seed;
}

void PipelineConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (const auto hash = t.find('#'); hash != std::string_view::npos) t = trim(t.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    apply(t.substr(0, eq), t.substr(eq + 1));
  }
}

std::map<std::string, std::string> PipelineConfig::snapshot() const {
  const auto& m = fit.model;
  const auto& t = fit.train;
  std::vector<std::uint64_t> milestones(t.milestones.begin(), t.milestones.end());
  return {
      {"seed", fmt(seed)},
      {"width", fmt(std::uint64_t{scene.width})},
      {"height", fmt(std::uint64_t{scene.height})},
      {"scene_bands", fmt(std::uint64_t{scene.bands})},
      {"height_field", std::string(synth::to_string(scene.height_field))},
      {"band_noise", fmt(scene.band_noise)},
      {"pixel_size", fmt(scene.pixel_size)},
      {"regions_x", fmt(std::uint64_t{scene.regions_x})},
      {"regions_y", fmt(std::uint64_t{scene.regions_y})},
      {"footprint_pattern", footprint_pattern},
      {"along_spacing", fmt(footprints.along_spacing)},
      {"across_spacing", fmt(footprints.across_spacing)},
      {"height_noise", fmt(footprints.height_noise)},
      {"dropout", fmt(footprints.dropout)},
      {"bad_quality_fraction", fmt(footprints.bad_quality_fraction)},
      {"photons_per_meter", fmt(photons.photons_per_meter)},
      {"noise_rate", fmt(photons.noise_rate)},
      {"cloud_radius", fmt(cloud_radius)},
      {"cloud_density", fmt(cloud_density)},
      {"dbscan_eps", fmt(dbscan_eps)},
      {"dbscan_min_pts", fmt(std::uint64_t{dbscan_min_pts})},
      {"step_length", fmt(step_length)},
      {"harmonize_to", std::string(lidar::to_string(harmonize_to))},
      {"footprint_diameter", fmt(waveform.diameter)},
      {"sigma_bins", fmt(waveform.sigma_bins)},
      {"bin_size", fmt(waveform.bin_size)},
      {"entry_widths", fmt_list(m.entry_widths)},
      {"sepconv_filters", fmt(std::uint64_t{m.sepconv_filters})},
      {"num_blocks", fmt(std::uint64_t{m.num_blocks})},
      {"branch_kernels", fmt_list(m.branch_kernels)},
      {"pool_branch", fmt(m.pool_branch)},
      {"branch_width", fmt(std::uint64_t{m.branch_width})},
      {"patch", fmt(std::uint64_t{fit.patch})},
      {"sample_step", fmt(std::uint64_t{fit.sample_step})},
      {"predict_step", fmt(std::uint64_t{predict_step})},
      {"band_subset", fmt_list(band_subset)},
      {"folds", fmt(std::uint64_t{folds})},
      {"tolerance", fmt(tolerance)},
      {"threshold", fmt(threshold)},
      {"batch_size", fmt(std::uint64_t{t.batch_size})},
      {"lr", fmt(t.lr)},
      {"milestones", fmt_list(milestones)},
      {"lr_gamma", fmt(t.lr_gamma)},
      {"epochs", fmt(std::uint64_t{t.epochs})},
      {"iters_per_epoch", fmt(std::uint64_t{t.iters_per_epoch})},
      {"grad_clip", fmt(t.grad_clip)},
      {"l2_lambda", fmt(t.l2_lambda)},
      {"beta1", fmt(t.beta1)},
      {"beta2", fmt(t.beta2)},
      {"epsilon", fmt(t.epsilon)},
      {"val_fraction", fmt(t.val_fraction)},
      {"init_pred_bias", fmt(t.init_pred_bias)},
  };
}

}  // namespace canopyfuse::cli
