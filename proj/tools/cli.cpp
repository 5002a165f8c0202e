#include "cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "canopyfuse/error.hpp"
#include "canopyfuse/eval.hpp"
#include "canopyfuse/pipeline.hpp"
#include "canopyfuse/random.hpp"
#include "canopyfuse/synth.hpp"
#include "config.hpp"
#include "output.hpp"

namespace canopyfuse::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::vector<std::string> settings;

  std::string bands, labels, footprints, photons, points, model, pred, reference, exclude, regions, accuracy;
  std::optional<double> center_x, center_y;
  std::optional<std::size_t> folds;
  std::optional<double> threshold;
  std::string mode = "holdout";
  std::vector<std::string> train_regions, test_regions;
};

// Inputs read by the current subcommand, name -> digest, recorded in the manifest.
using InputLog = std::map<std::string, std::string>;

fs::path require_input(const std::string& path, const char* flag, InputLog& log) {
  if (path.empty()) throw ValidationError(std::string("missing required input ") + flag);
  if (!fs::is_regular_file(path)) throw ValidationError(std::string(flag) + ": input not found: " + path);
  log[fs::path(path).filename().string()] = hash_file(path);
  return path;
}

PipelineConfig resolve_config(const Options& o) {
  PipelineConfig c;
  if (!o.config_path.empty()) {
    if (!fs::is_regular_file(o.config_path)) throw ValidationError("config file not found: " + o.config_path);
    c.load_file(o.config_path);
  }
  if (o.seed) c.apply("seed", std::to_string(*o.seed));
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    c.apply(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.folds) c.folds = *o.folds;
  if (o.threshold) c.threshold = *o.threshold;
  return c;
}

std::string to_text(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

std::vector<std::uint8_t> raster_bytes(const geo::RasterGrid& r) { return geo::encode_raster(r); }

void finish(OutputSet& outputs, const std::string& subcommand, const PipelineConfig& config, const InputLog& inputs) {
  nlohmann::json m;
  m["tool"] = "canopyfuse";
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["config"] = config.snapshot();
  m["inputs"] = inputs;
  m["outputs"] = outputs.digests();
  outputs.add(subcommand + ".manifest.json", m.dump(2) + "\n");
  outputs.commit();
  spdlog::info("{}: wrote {} files to {}", subcommand, m["outputs"].size() + 1, outputs.dir().string());
}

geo::RasterGrid load_bands(const Options& o, const PipelineConfig& c, InputLog& log) {
  auto bands = geo::read_raster(require_input(o.bands, "--bands", log));
  if (c.band_subset.empty()) return bands;
  for (std::size_t b : c.band_subset) {
    if (b >= bands.bands()) {
      throw ValidationError("band_subset index " + std::to_string(b) + " outside the raster's " +
                            std::to_string(bands.bands()) + " bands");
    }
  }
  return bands.select_bands(c.band_subset);
}

fusion::SparseLabelGrid load_labels(const Options& o, const geo::RasterGrid& bands, InputLog& log) {
  auto raster = geo::read_raster(require_input(o.labels, "--labels", log));
  if (raster.bands() != 1 || !raster.same_geometry(bands)) {
    throw ValidationError("label raster must be single-band with the same geometry as the bands");
  }
  std::vector<std::uint32_t> counts(raster.pixel_count(), 0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    counts[i] = raster.is_nodata(0, i / raster.width(), i % raster.width()) ? 0 : 1;
  }
  return {std::move(raster), std::move(counts)};
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_synth(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  auto sc = c.scene;
  sc.seed = c.seed;
  const auto scene = synth::gen_scene(sc);

  std::vector<lidar::FootprintRecord> records;
  auto sampling = c.footprints;
  if (c.footprint_pattern != "icesat_like") {
    sampling.pattern = synth::TrackPattern::gedi_like;
    sampling.seed = derive_seed(c.seed, 1);
    records = synth::sample_footprints(scene, sampling);
  }
  if (c.footprint_pattern != "gedi_like") {
    sampling.pattern = synth::TrackPattern::icesat_like;
    sampling.seed = derive_seed(c.seed, 4);
    const auto more = synth::sample_footprints(scene, sampling);
    records.insert(records.end(), more.begin(), more.end());
  }

  auto pc = c.photons;
  pc.seed = derive_seed(c.seed, 2);
  const auto track = synth::gen_photons(scene, synth::center_track(scene), pc);
  auto truth = track.photons;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i].label = track.is_signal[i] ? lidar::PhotonLabel::signal : lidar::PhotonLabel::noise;
  }

  const auto centre = geo::pixel_to_world(scene.true_chm.transform(), static_cast<double>(sc.width) / 2.0,
                                          static_cast<double>(sc.height) / 2.0);
  const auto cloud =
      synth::gen_point_cloud(scene, centre.x, centre.y, c.cloud_radius, c.cloud_density, derive_seed(c.seed, 3));

  OutputSet out(o.out_dir);
  out.add("bands.chmr", raster_bytes(scene.bands));
  out.add("chm.chmr", raster_bytes(scene.true_chm));
  out.add("regions.chmr", raster_bytes(scene.region_map));
  out.add("footprints.csv", to_text([&](std::ostream& s) { lidar::write_footprints_csv(s, records); }));
  out.add("photons.csv", to_text([&](std::ostream& s) { lidar::write_photons_csv(s, track.photons, false); }));
  out.add("photons_truth.csv", to_text([&](std::ostream& s) { lidar::write_photons_csv(s, truth, true); }));
  out.add("points.csv", to_text([&](std::ostream& s) {
            s << "x,y,z\n";
            for (const auto& p : cloud) s << std::to_string(p.x) << ',' << std::to_string(p.y) << ',' << p.z << '\n';
          }));
  finish(out, "synth", c, inputs);
}

void cmd_denoise(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  auto photons = lidar::read_photons_csv(require_input(o.photons, "--photons", inputs));
  const auto labels = lidar::dbscan_label(photons, c.dbscan_eps, c.dbscan_min_pts);
  std::size_t n_signal = 0;
  for (std::size_t i = 0; i < photons.size(); ++i) {
    photons[i].label = labels[i];
    n_signal += labels[i] == lidar::PhotonLabel::signal ? 1 : 0;
  }
  OutputSet out(o.out_dir);
  out.add("photons_labeled.csv", to_text([&](std::ostream& s) { lidar::write_photons_csv(s, photons, true); }));
  out.add("denoise_summary.txt", "photons=" + std::to_string(photons.size()) + "\nsignal=" + std::to_string(n_signal) +
                                     "\nnoise=" + std::to_string(photons.size() - n_signal) + "\n");
  finish(out, "denoise", c, inputs);
}

void cmd_steps(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  auto photons = lidar::read_photons_csv(require_input(o.photons, "--photons", inputs));
  const bool labeled = std::any_of(photons.begin(), photons.end(),
                                   [](const auto& p) { return p.label != lidar::PhotonLabel::unlabeled; });
  if (!labeled) {
    const auto labels = lidar::dbscan_label(photons, c.dbscan_eps, c.dbscan_min_pts);
    for (std::size_t i = 0; i < photons.size(); ++i) photons[i].label = labels[i];
  }
  std::vector<lidar::PhotonEvent> signal;
  for (const auto& p : photons) {
    if (p.label == lidar::PhotonLabel::signal) signal.push_back(p);
  }
  const auto steps = lidar::classify_canopy_steps(signal, c.step_length);
  OutputSet out(o.out_dir);
  out.add("steps.csv", to_text([&](std::ostream& s) {
            s << "step_center,canopy_top_elev,ground_elev,canopy_height\n";
            for (const auto& st : steps) {
              s << st.step_center << ',' << st.canopy_top_elev << ',' << st.ground_elev << ',' << st.canopy_height
                << '\n';
            }
          }));
  finish(out, "steps", c, inputs);
}

void cmd_waveform_rh(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  std::ifstream in(require_input(o.points, "--points", inputs));
  const auto points = lidar::read_points_csv(in);
  if (points.empty()) throw ValidationError("point cloud is empty");
  double cx = 0.0, cy = 0.0;
  for (const auto& p : points) {
    cx += p.x;
    cy += p.y;
  }
  cx = o.center_x.value_or(cx / static_cast<double>(points.size()));
  cy = o.center_y.value_or(cy / static_cast<double>(points.size()));
  const auto w = lidar::simulate_waveform(points, cx, cy, c.waveform);
  const auto rh = lidar::extract_rh(w);
  OutputSet out(o.out_dir);
  out.add("waveform.csv", to_text([&](std::ostream& s) {
            s << "bin_low_m,energy\n";
            for (std::size_t i = 0; i < w.bin_energy.size(); ++i) {
              s << w.elev0 + static_cast<double>(i) * w.bin_size << ',' << w.bin_energy[i] << '\n';
            }
          }));
  out.add("rh.csv", to_text([&](std::ostream& s) {
            s << "percentile,height_m\n";
            for (const auto& [p, h] : rh) s << p << ',' << h << '\n';
          }));
  finish(out, "waveform-rh", c, inputs);
}

void cmd_fuse(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  const auto bands = load_bands(o, c, inputs);
  const auto records = lidar::read_footprints_csv(require_input(o.footprints, "--footprints", inputs));
  const auto fused = pipeline::fuse(records, bands, c.harmonize_to);
  if (fused.labels.labeled_pixels() == 0) throw ValidationError("no footprint falls inside the raster");
  OutputSet out(o.out_dir);
  out.add("labels.chmr", raster_bytes(fused.labels.labels));
  out.add("fusion_summary.txt", fusion::format_summary(fused.summary) +
                                    "dropped_quality=" + std::to_string(fused.dropped_quality) +
                                    "\nharmonized=" + (fused.harmonized ? "true" : "false") +
                                    "\nlabeled_pixels=" + std::to_string(fused.labels.labeled_pixels()) + "\n");
  finish(out, "fuse", c, inputs);
}

void cmd_train(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  const auto bands = load_bands(o, c, inputs);
  const auto labels = load_labels(o, bands, inputs);
  const auto fit = pipeline::fit(bands, labels, c.fit, [](const train::EpochLoss& e) {
    spdlog::info("epoch {} train_loss {:.6g} val_loss {:.6g}", e.epoch, e.train_loss, e.val_loss);
  });
  spdlog::info("best epoch {} val_loss {:.6g} over {} samples", fit.train.best_epoch, fit.train.best_val_loss,
               fit.sample_count);
  OutputSet out(o.out_dir);
  out.add("model.prfx", net::encode_checkpoint(fit.train.model));
  out.add("loss_trace.csv", to_text([&](std::ostream& s) { train::write_loss_trace(s, fit.train.trace); }));
  finish(out, "train", c, inputs);
}

geo::RasterGrid predict(const Options& o, const PipelineConfig& c, InputLog& inputs) {
  const auto model = net::read_checkpoint(require_input(o.model, "--model", inputs));
  const auto bands = load_bands(o, c, inputs);
  if (bands.bands() != model.in_channels()) {
    throw ValidationError("checkpoint expects " + std::to_string(model.in_channels()) +
                          " channels but the band raster provides " + std::to_string(bands.bands()));
  }
  return eval::predict_map(model, bands, c.fit.patch, c.predict_step);
}

void cmd_predict(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  const auto map = predict(o, c, inputs);
  OutputSet out(o.out_dir);
  out.add("chm_pred.chmr", raster_bytes(map));
  finish(out, "predict", c, inputs);
}

void cmd_evaluate(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  if (o.pred.empty() == o.model.empty()) throw ValidationError("evaluate needs either --pred or --model with --bands");
  const auto map = o.pred.empty() ? predict(o, c, inputs) : geo::read_raster(require_input(o.pred, "--pred", inputs));
  const auto ref = geo::read_raster(require_input(o.reference, "--reference", inputs));
  if (map.bands() != 1 || ref.bands() != 1 || map.width() != ref.width() || map.height() != ref.height()) {
    throw ValidationError("prediction and reference must be single-band rasters of equal size");
  }
  std::optional<geo::RasterGrid> exclude;
  if (!o.exclude.empty()) exclude = geo::read_raster(require_input(o.exclude, "--exclude", inputs));
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < ref.pixel_count(); ++i) {
    const std::size_t r = i / ref.width(), col = i % ref.width();
    if (exclude && !exclude->is_nodata(0, r, col)) continue;
    ids.push_back(i);
  }
  const auto pr = pipeline::sample_pairs(map, ref, ids);
  const auto report = eval::metrics(pr.pred, pr.ref);
  const auto acc = eval::interval_accuracy(pr.pred, pr.ref, c.tolerance);
  spdlog::info("rmse {:.4f} mae {:.4f} me {:.4f} n {}", report.rmse, report.mae, report.me, report.n);
  OutputSet out(o.out_dir);
  out.add("metrics.csv", to_text([&](std::ostream& s) { eval::write_metrics_csv(s, report); }));
  out.add("bins.csv", to_text([&](std::ostream& s) { eval::write_binned_csv(s, report); }));
  out.add("cdf.csv", to_text([&](std::ostream& s) {
            eval::write_cdf_csv(s, eval::cumulative_height_distribution(pr.ref));
          }));
  out.add("interval_accuracy.csv", to_text([&](std::ostream& s) { eval::write_interval_accuracy_csv(s, acc); }));
  finish(out, "evaluate", c, inputs);
}

void write_cv(OutputSet& out, const eval::CvResult& cv) {
  out.add("cv_runs.csv", to_text([&](std::ostream& s) {
            s << "run,rmse,mae,me,n_train,n_test\n";
            for (const auto& r : cv.runs) {
              s << r.name << ',' << r.report.rmse << ',' << r.report.mae << ',' << r.report.me << ','
                << r.train_ids.size() << ',' << r.test_ids.size() << '\n';
            }
          }));
  out.add("metrics.csv", to_text([&](std::ostream& s) { eval::write_metrics_csv(s, cv.aggregate); }));
  out.add("bins.csv", to_text([&](std::ostream& s) { eval::write_binned_csv(s, cv.aggregate); }));
}

struct CvData {
  geo::RasterGrid bands;
  fusion::SparseLabelGrid labels;
  std::vector<std::size_t> pixels;
};

auto cv_train_fn(const CvData& d, const PipelineConfig& c) {
  return [&d, &c](std::span<const std::size_t> ids) {
    std::vector<std::size_t> px;
    for (std::size_t i : ids) px.push_back(d.pixels[i]);
    spdlog::info("cv: training on {} labeled pixels", px.size());
    return pipeline::fit(d.bands, pipeline::subset_labels(d.labels, px), c.fit).train.model;
  };
}

auto cv_eval_fn(const CvData& d, const PipelineConfig& c) {
  return [&d, &c](const net::ModelParams& model, std::span<const std::size_t> ids) {
    std::vector<std::size_t> px;
    for (std::size_t i : ids) px.push_back(d.pixels[i]);
    const auto map = eval::predict_map(model, d.bands, c.fit.patch, c.predict_step);
    return pipeline::sample_pairs(map, d.labels.labels, px);
  };
}

void cmd_cv_random(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  CvData d{load_bands(o, c, inputs), {geo::RasterGrid(1, 1, 1), {}}, {}};
  d.labels = load_labels(o, d.bands, inputs);
  d.pixels = pipeline::labeled_indices(d.labels);
  const auto cv = eval::kfold_random(d.pixels.size(), c.folds, c.seed, cv_train_fn(d, c), cv_eval_fn(d, c));
  OutputSet out(o.out_dir);
  write_cv(out, cv);
  finish(out, "cv-random", c, inputs);
}

std::vector<std::string> split_names(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::stringstream s(r);
    std::string part;
    while (std::getline(s, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

void cmd_cv_geo(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  eval::GeoCvMode mode = eval::GeoCvMode::holdout;
  if (o.mode == "transfer") mode = eval::GeoCvMode::transfer;
  else if (o.mode != "holdout") throw ValidationError("--mode must be holdout or transfer, got '" + o.mode + "'");
  const auto train_regions = split_names(o.train_regions);
  const auto test_regions = split_names(o.test_regions);
  if (mode == eval::GeoCvMode::transfer) {
    for (const auto& r : train_regions) {
      if (std::find(test_regions.begin(), test_regions.end(), r) != test_regions.end()) {
        throw ValidationError("region '" + r + "' is in both --train-regions and --test-regions");
      }
    }
  }
  CvData d{load_bands(o, c, inputs), {geo::RasterGrid(1, 1, 1), {}}, {}};
  d.labels = load_labels(o, d.bands, inputs);
  d.pixels = pipeline::labeled_indices(d.labels);
  const auto region_map = geo::read_raster(require_input(o.regions, "--regions", inputs));
  if (region_map.width() != d.bands.width() || region_map.height() != d.bands.height()) {
    throw ValidationError("region raster size differs from the band raster");
  }
  std::vector<std::string> names;
  for (std::size_t px : d.pixels) {
    const float v = region_map.at(0, px / region_map.width(), px % region_map.width());
    if (region_map.is_nodata(0, px / region_map.width(), px % region_map.width())) {
      throw ValidationError("labeled pixel " + std::to_string(px) + " has no region");
    }
    names.push_back("R" + std::to_string(static_cast<long long>(std::lround(v))));
  }
  const auto cv =
      eval::geographic_cv(names, mode, cv_train_fn(d, c), cv_eval_fn(d, c), train_regions, test_regions);
  OutputSet out(o.out_dir);
  write_cv(out, cv);
  finish(out, "cv-geo", c, inputs);
}

void cmd_potential(const Options& o, const PipelineConfig& c) {
  InputLog inputs;
  const auto map = geo::read_raster(require_input(o.pred, "--pred", inputs));
  std::ifstream in(require_input(o.accuracy, "--accuracy", inputs));
  const auto acc = eval::read_interval_accuracy_csv(in);
  const auto potential = eval::giant_tree_potential(map, acc, c.threshold);
  OutputSet out(o.out_dir);
  out.add("potential.chmr", raster_bytes(potential));
  finish(out, "potential", c, inputs);
}

using Handler = void (*)(const Options&, const PipelineConfig&);

struct Command {
  const char* name;
  const char* help;
  Handler handler;
};

constexpr Command kCommands[] = {
    {"synth", "generate a synthetic scene, footprints, photons and a point cloud", cmd_synth},
    {"denoise", "label photons signal/noise with DBSCAN", cmd_denoise},
    {"steps", "canopy height per along-track step from signal photons", cmd_steps},
    {"waveform-rh", "simulate a waveform from a point cloud and extract RH metrics", cmd_waveform_rh},
    {"fuse", "harmonize and rasterize footprints into a sparse label raster", cmd_fuse},
    {"train", "train the regressor on bands and sparse labels", cmd_train},
    {"predict", "sliding-window canopy height map from a checkpoint", cmd_predict},
    {"evaluate", "metrics, per-bin MAE, CDF and interval accuracy", cmd_evaluate},
    {"cv-random", "random k-fold cross-validation over labeled pixels", cmd_cv_random},
    {"cv-geo", "geographic (holdout or transfer) cross-validation", cmd_cv_geo},
    {"potential", "giant-tree potential map from a prediction and interval accuracy", cmd_potential},
};

}  // namespace

void init_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("canopyfuse");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("CANOPYFUSE_LOG");
  const std::string level = env ? env : "warn";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::warn);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"canopyfuse: canopy height mapping from sparse LiDAR footprints and multispectral rasters"};
  app.name("canopyfuse");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);

  Options o;
  std::map<CLI::App*, const Command*> subs;
  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    subs[sub] = &cmd;
    sub->add_option("--config", o.config_path, "key=value config file");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_option("--set", o.settings, "override one setting, key=value (repeatable)");
    const std::string name = cmd.name;
    if (name == "denoise" || name == "steps") sub->add_option("--photons", o.photons, "photon CSV");
    if (name == "waveform-rh") {
      sub->add_option("--points", o.points, "point cloud CSV (x,y,z)");
      sub->add_option("--center-x", o.center_x, "footprint center x (default: point centroid)");
      sub->add_option("--center-y", o.center_y, "footprint center y (default: point centroid)");
    }
    if (name == "fuse" || name == "train" || name == "predict" || name == "evaluate" || name == "cv-random" ||
        name == "cv-geo") {
      sub->add_option("--bands", o.bands, "band raster (CHMR)");
    }
    if (name == "fuse") sub->add_option("--footprints", o.footprints, "footprint CSV");
    if (name == "train" || name == "cv-random" || name == "cv-geo") {
      sub->add_option("--labels", o.labels, "sparse label raster (CHMR)");
    }
    if (name == "predict" || name == "evaluate") sub->add_option("--model", o.model, "checkpoint (PRFX)");
    if (name == "evaluate" || name == "potential") sub->add_option("--pred", o.pred, "predicted CHM raster");
    if (name == "evaluate") {
      sub->add_option("--reference", o.reference, "reference CHM raster");
      sub->add_option("--exclude", o.exclude, "raster whose valid pixels are left out (e.g. training labels)");
    }
    if (name == "cv-random") sub->add_option("--k", o.folds, "number of folds");
    if (name == "cv-geo") {
      sub->add_option("--regions", o.regions, "region raster (CHMR, integer ids; region names R<id>)");
      sub->add_option("--mode", o.mode, "holdout | transfer");
      sub->add_option("--train-regions", o.train_regions, "transfer: training regions (comma separated)");
      sub->add_option("--test-regions", o.test_regions, "transfer: test regions (comma separated)");
    }
    if (name == "potential") {
      sub->add_option("--accuracy", o.accuracy, "interval accuracy CSV (bin_low_m,accuracy)");
      sub->add_option("--threshold", o.threshold, "minimum predicted height in meters");
    }
  }

  if (!args.empty() && !args.front().empty() && args.front().front() != '-') {
    const bool known = std::any_of(std::begin(kCommands), std::end(kCommands),
                                   [&](const Command& c) { return args.front() == c.name; });
    if (!known) {
      err << "error: unknown subcommand '" << args.front() << "'\n" << app.help();
      return kExitUnknownCommand;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  const Command* cmd = nullptr;
  for (auto* sub : app.get_subcommands()) cmd = subs.at(sub);
  if (!cmd) {
    err << app.help();
    return kExitUnknownCommand;
  }

  try {
    const auto config = resolve_config(o);
    spdlog::info("{}: seed {}", cmd->name, config.seed);
    cmd->handler(o, config);
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace canopyfuse::cli
