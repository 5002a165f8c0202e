#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "canopyfuse/error.hpp"
#include "canopyfuse/geo.hpp"
#include "canopyfuse/net/model.hpp"

namespace canopyfuse::eval {

inline constexpr double kHeightBin = 10.0;

struct BinStat {
  double mae = 0.0;
  std::size_t n = 0;
  friend bool operator==(const BinStat&, const BinStat&) = default;
};

/// Keyed by the lower edge of the reference-height bin in meters.
using BinnedMae = std::map<double, BinStat>;

struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  double me = 0.0;  // mean(pred - ref); positive = overestimation
  std::size_t n = 0;
  BinnedMae binned_mae;
};

/// RMSE, MAE and ME plus per-bin MAE grouped by floor(ref / bin) * bin.
/// Throws on empty input or length mismatch.
MetricsReport metrics(std::span<const double> pred, std::span<const double> ref, double bin = kHeightBin);
BinnedMae binned_mae(std::span<const double> pred, std::span<const double> ref, double bin = kHeightBin);

/// Macro average of per-run reports (rmse/mae/me averaged with equal weight, n summed).
/// Bins are averaged over the runs that contain them; bin counts are summed.
MetricsReport average_reports(std::span<const MetricsReport> reports);

struct PredRef {
  std::vector<double> pred;
  std::vector<double> ref;
};

/// Seeded shuffle of 0..n-1 dealt into k folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed);

struct CvRun {
  std::string name;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
  MetricsReport report;
};

struct CvResult {
  std::vector<CvRun> runs;
  MetricsReport aggregate;
};

/// Random k-fold cross-validation over item ids 0..n-1.
///   train_fn(std::span<const std::size_t> train_ids) -> Model
///   eval_fn(const Model&, std::span<const std::size_t> test_ids) -> PredRef
template <class TrainFn, class EvalFn>
CvResult kfold_random(std::size_t n, std::size_t k, std::uint64_t seed, TrainFn&& train_fn, EvalFn&& eval_fn) {
  const auto folds = kfold_partition(n, k, seed);
  CvResult out;
  std::vector<MetricsReport> reports;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    CvRun run;
    run.name = "fold" + std::to_string(f);
    run.test_ids = folds[f];
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) run.train_ids.insert(run.train_ids.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(run.train_ids.begin(), run.train_ids.end());
    std::sort(run.test_ids.begin(), run.test_ids.end());
    auto model = train_fn(std::span<const std::size_t>(run.train_ids));
    const PredRef pr = eval_fn(model, std::span<const std::size_t>(run.test_ids));
    run.report = metrics(pr.pred, pr.ref);
    reports.push_back(run.report);
    out.runs.push_back(std::move(run));
  }
  out.aggregate = average_reports(reports);
  return out;
}

enum class GeoCvMode { holdout, transfer };

struct GeoCvPlan {
  std::string name;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
};

/// Train/test id sets for geographic cross-validation. `regions[i]` is item i's region.
///  holdout:  one run per distinct region (sorted), trained on every other region.
///  transfer: a single run training on `train_regions`, testing on `test_regions`.
/// Throws when fewer than two regions exist, a named region has no items, or the transfer
/// sets overlap. No test item ever appears in a run's training set.
std::vector<GeoCvPlan> plan_geographic_cv(std::span<const std::string> regions, GeoCvMode mode,
                                          const std::vector<std::string>& train_regions = {},
                                          const std::vector<std::string>& test_regions = {});

/// Runs every plan from plan_geographic_cv; the aggregate is the macro average.
template <class TrainFn, class EvalFn>
CvResult geographic_cv(std::span<const std::string> regions, GeoCvMode mode, TrainFn&& train_fn, EvalFn&& eval_fn,
                       const std::vector<std::string>& train_regions = {},
                       const std::vector<std::string>& test_regions = {}) {
  CvResult out;
  std::vector<MetricsReport> reports;
  for (auto& plan : plan_geographic_cv(regions, mode, train_regions, test_regions)) {
    CvRun run{plan.name, std::move(plan.train_ids), std::move(plan.test_ids), {}};
    auto model = train_fn(std::span<const std::size_t>(run.train_ids));
    const PredRef pr = eval_fn(model, std::span<const std::size_t>(run.test_ids));
    run.report = metrics(pr.pred, pr.ref);
    reports.push_back(run.report);
    out.runs.push_back(std::move(run));
  }
  out.aggregate = average_reports(reports);
  return out;
}

/// Sliding-window prediction. Bands are normalized with the model's stored channel stats
/// (used as-is when the model carries none); overlapping windows are averaged with equal
/// weight. Pixels that are nodata in any band come out nodata.
geo::RasterGrid predict_map(const net::ModelParams& model, const geo::RasterGrid& bands, std::size_t patch,
                            std::size_t step);

/// Empirical CDF: sorted distinct heights with the fraction of values <= each height.
std::vector<std::pair<double, double>> cumulative_height_distribution(std::span<const double> values);
/// Right-continuous evaluation of a curve from cumulative_height_distribution.
double cdf_at(const std::vector<std::pair<double, double>>& curve, double h);

/// Per reference-height bin: fraction of predictions with |pred - ref| <= tolerance.
std::map<double, double> interval_accuracy(std::span<const double> pred, std::span<const double> ref,
                                           double tolerance = 10.0, double bin = kHeightBin);

/// Per pixel: the accuracy of the predicted height's bin when the prediction is >= threshold,
/// 0 below it, nodata where the input is nodata. Throws when an occurring bin is missing.
geo::RasterGrid giant_tree_potential(const geo::RasterGrid& pred_map, const std::map<double, double>& interval_acc,
                                     double threshold = 80.0, double bin = kHeightBin);

void write_metrics_csv(std::ostream& out, const MetricsReport& r);
void write_binned_csv(std::ostream& out, const MetricsReport& r);
void write_cdf_csv(std::ostream& out, const std::vector<std::pair<double, double>>& curve);
void write_interval_accuracy_csv(std::ostream& out, const std::map<double, double>& acc);
std::map<double, double> read_interval_accuracy_csv(std::istream& in);

}  // namespace canopyfuse::eval
