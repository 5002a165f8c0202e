#include "canopyfuse/eval.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "canopyfuse/fusion.hpp"
#include "canopyfuse/random.hpp"
#include "csv_util.hpp"

namespace canopyfuse::eval {

namespace {

void require_pairs(std::span<const double> pred, std::span<const double> ref) {
  if (pred.empty()) throw ValidationError("metrics need at least one prediction");
  if (pred.size() != ref.size()) {
    throw ValidationError("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                          std::to_string(ref.size()) + " references");
  }
}

double bin_of(double h, double bin) { return std::floor(h / bin) * bin; }

}  // namespace

BinnedMae binned_mae(std::span<const double> pred, std::span<const double> ref, double bin) {
  require_pairs(pred, ref);
  if (!(bin > 0.0)) throw ValidationError("bin width must be > 0");
  std::map<double, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& a = acc[bin_of(ref[i], bin)];
    a.first += std::abs(pred[i] - ref[i]);
    ++a.second;
  }
  BinnedMae out;
  for (const auto& [b, a] : acc) out[b] = {a.first / static_cast<double>(a.second), a.second};
  return out;
}

MetricsReport metrics(std::span<const double> pred, std::span<const double> ref, double bin) {
  require_pairs(pred, ref);
  double se = 0.0, ae = 0.0, e = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    se += d * d;
    ae += std::abs(d);
    e += d;
  }
  const auto n = static_cast<double>(pred.size());
  MetricsReport r;
  r.n = pred.size();
  r.rmse = std::sqrt(se / n);
  r.mae = ae / n;
  r.me = e / n;
  r.binned_mae = binned_mae(pred, ref, bin);
  return r;
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ValidationError("no reports to average");
  MetricsReport out;
  std::map<double, std::pair<double, std::size_t>> bin_mae;  // sum of per-run mae, run count
  for (const auto& r : reports) {
    out.rmse += r.rmse;
    out.mae += r.mae;
    out.me += r.me;
    out.n += r.n;
    for (const auto& [b, s] : r.binned_mae) {
      auto& a = bin_mae[b];
      a.first += s.mae;
      ++a.second;
      out.binned_mae[b].n += s.n;
    }
  }
  const auto k = static_cast<double>(reports.size());
  out.rmse /= k;
  out.mae /= k;
  out.me /= k;
  for (const auto& [b, a] : bin_mae) out.binned_mae[b].mae = a.first / static_cast<double>(a.second);
  return out;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k-fold needs k >= 2");
  if (n < k) throw ValidationError("k-fold needs at least k=" + std::to_string(k) + " items, got " + std::to_string(n));
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(ids.begin(), ids.end());
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(ids[i]);
  return folds;
}

std::vector<GeoCvPlan> plan_geographic_cv(std::span<const std::string> regions, GeoCvMode mode,
                                          const std::vector<std::string>& train_regions,
                                          const std::vector<std::string>& test_regions) {
  std::map<std::string, std::vector<std::size_t>> by_region;
  for (std::size_t i = 0; i < regions.size(); ++i) by_region[regions[i]].push_back(i);
  if (by_region.size() < 2) throw ValidationError("geographic CV needs at least 2 regions");

  std::vector<GeoCvPlan> plans;
  if (mode == GeoCvMode::holdout) {
    for (const auto& [name, ids] : by_region) {
      GeoCvPlan p{name, {}, ids};
      for (const auto& [other, oids] : by_region) {
        if (other != name) p.train_ids.insert(p.train_ids.end(), oids.begin(), oids.end());
      }
      std::sort(p.train_ids.begin(), p.train_ids.end());
      plans.push_back(std::move(p));
    }
    return plans;
  }

  if (train_regions.empty() || test_regions.empty()) {
    throw ValidationError("transfer mode needs non-empty train and test region sets");
  }
  const std::set<std::string> a(train_regions.begin(), train_regions.end());
  const std::set<std::string> b(test_regions.begin(), test_regions.end());
  for (const auto& r : a) {
    if (b.count(r)) throw ValidationError("region '" + r + "' is in both the train and test sets");
  }
  GeoCvPlan p;
  for (const auto& set : {a, b}) {
    for (const auto& r : set) {
      if (!by_region.count(r)) throw ValidationError("region '" + r + "' has zero samples");
    }
  }
  for (const auto& r : a) p.train_ids.insert(p.train_ids.end(), by_region[r].begin(), by_region[r].end());
  for (const auto& r : b) {
    p.test_ids.insert(p.test_ids.end(), by_region[r].begin(), by_region[r].end());
    p.name += (p.name.empty() ? "" : "+") + r;
  }
  std::sort(p.train_ids.begin(), p.train_ids.end());
  std::sort(p.test_ids.begin(), p.test_ids.end());
  plans.push_back(std::move(p));
  return plans;
}

geo::RasterGrid predict_map(const net::ModelParams& model, const geo::RasterGrid& bands, std::size_t patch,
                            std::size_t step) {
  if (bands.bands() != model.in_channels()) {
    throw ValidationError("model expects " + std::to_string(model.in_channels()) + " channels, raster has " +
                          std::to_string(bands.bands()));
  }
  const geo::RasterGrid input = model.stats().mean.empty() ? bands : geo::normalize(bands, model.stats());
  const std::size_t W = bands.width(), H = bands.height();
  std::vector<double> sum(W * H, 0.0);
  std::vector<std::uint32_t> count(W * H, 0);
  for (const auto& o : geo::tile_patches(input, patch, step)) {
    const auto out = net::forward(model, fusion::extract_patch(input, o, patch));
    for (std::size_t y = 0; y < patch; ++y) {
      for (std::size_t x = 0; x < patch; ++x) {
        const std::size_t i = (o.row0 + y) * W + o.col0 + x;
        sum[i] += out.pred[y * patch + x];
        ++count[i];
      }
    }
  }
  auto result = bands.like(1, bands.nodata());
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      bool valid = true;
      for (std::size_t b = 0; b < bands.bands() && valid; ++b) valid = !bands.is_nodata(b, r, c);
      if (!valid) continue;
      const std::size_t i = r * W + c;
      result.set(0, r, c, static_cast<float>(sum[i] / count[i]));
    }
  }
  return result;
}

std::vector<std::pair<double, double>> cumulative_height_distribution(std::span<const double> values) {
  if (values.empty()) throw ValidationError("cumulative distribution of an empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> curve;
  const auto n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    curve.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
  }
  return curve;
}

double cdf_at(const std::vector<std::pair<double, double>>& curve, double h) {
  auto it = std::upper_bound(curve.begin(), curve.end(), h,
                             [](double v, const std::pair<double, double>& p) { return v < p.first; });
  return it == curve.begin() ? 0.0 : std::prev(it)->second;
}

std::map<double, double> interval_accuracy(std::span<const double> pred, std::span<const double> ref,
                                           double tolerance, double bin) {
  require_pairs(pred, ref);
  std::map<double, std::pair<std::size_t, std::size_t>> hits;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& h = hits[bin_of(ref[i], bin)];
    h.first += std::abs(pred[i] - ref[i]) <= tolerance ? 1 : 0;
    ++h.second;
  }
  std::map<double, double> out;
  for (const auto& [b, h] : hits) out[b] = static_cast<double>(h.first) / static_cast<double>(h.second);
  return out;
}

geo::RasterGrid giant_tree_potential(const geo::RasterGrid& pred_map, const std::map<double, double>& acc,
                                     double threshold, double bin) {
  if (pred_map.bands() != 1) throw ValidationError("potential map expects a single-band prediction");
  auto out = pred_map.like(1, 0.0f);
  for (std::size_t r = 0; r < pred_map.height(); ++r) {
    for (std::size_t c = 0; c < pred_map.width(); ++c) {
      if (pred_map.is_nodata(0, r, c)) {
        out.set(0, r, c, pred_map.nodata());
        continue;
      }
      const double h = pred_map.at(0, r, c);
      if (h < threshold) continue;
      const double b = bin_of(h, bin);
      auto it = acc.find(b);
      if (it == acc.end()) {
        throw ValidationError("interval accuracy table has no entry for the " + detail::format_double(b) +
                              " m bin (pixel predicted " + detail::format_double(h) + " m)");
      }
      out.set(0, r, c, static_cast<float>(it->second));
    }
  }
  return out;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
  out << "metric,value\n";
  out << "rmse," << detail::format_double(r.rmse) << '\n';
  out << "mae," << detail::format_double(r.mae) << '\n';
  out << "me," << detail::format_double(r.me) << '\n';
  out << "n," << r.n << '\n';
}

void write_binned_csv(std::ostream& out, const MetricsReport& r) {
  out << "bin_low_m,mae_m,n\n";
  for (const auto& [b, s] : r.binned_mae) {
    out << detail::format_double(b) << ',' << detail::format_double(s.mae) << ',' << s.n << '\n';
  }
}

void write_cdf_csv(std::ostream& out, const std::vector<std::pair<double, double>>& curve) {
  out << "height_m,cumulative_fraction\n";
  for (const auto& [h, f] : curve) out << detail::format_double(h) << ',' << detail::format_double(f) << '\n';
}

void write_interval_accuracy_csv(std::ostream& out, const std::map<double, double>& acc) {
  out << "bin_low_m,accuracy\n";
  for (const auto& [b, a] : acc) out << detail::format_double(b) << ',' << detail::format_double(a) << '\n';
}

std::map<double, double> read_interval_accuracy_csv(std::istream& in) {
  std::vector<std::string> header;
  if (!detail::read_header(in, header) || header != std::vector<std::string>{"bin_low_m", "accuracy"}) {
    throw FormatError(FormatErrc::malformed, "interval accuracy CSV needs header 'bin_low_m,accuracy'");
  }
  std::map<double, double> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 2) throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": expected 2 fields");
    const double acc = detail::parse_double(f[1], line_no);
    if (!(acc >= 0.0 && acc <= 1.0)) {
      throw FormatError(FormatErrc::malformed, "line " + std::to_string(line_no) + ": accuracy outside [0, 1]");
    }
    out[detail::parse_double(f[0], line_no)] = acc;
  }
  return out;
}

}  // namespace canopyfuse::eval
