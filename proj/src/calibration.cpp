#include "fovea/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "fovea/error.hpp"

namespace fovea {

EccentricityBins::EccentricityBins(std::vector<double> upper_edges) : edges_(std::move(upper_edges)) {
  if (edges_.empty()) throw InvalidInput("EccentricityBins: need at least one level");
  double prev = 0.0;
  for (double e : edges_) {
    if (!(e > prev) || e > 1.0) {
      throw InvalidInput("EccentricityBins: edges must be strictly increasing within (0, 1]");
    }
    prev = e;
  }
  if (edges_.back() != 1.0) throw InvalidInput("EccentricityBins: last edge must be 1");
}

EccentricityBins EccentricityBins::uniform(int levels) {
  if (levels < 1) throw InvalidInput("EccentricityBins: need at least one level");
  std::vector<double> edges(levels);
  for (int i = 0; i < levels; ++i) edges[i] = static_cast<double>(i + 1) / levels;
  edges.back() = 1.0;
  return EccentricityBins(std::move(edges));
}

int EccentricityBins::level_of(double d) const {
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), d);
  if (it == edges_.end()) return num_levels() - 1;
  return static_cast<int>(it - edges_.begin());
}

double normalized_distance(Point box_center, Point fovea_center, const GridGeometry& geometry) {
  return distance(box_center, fovea_center) / geometry.half_diagonal();
}

int distance_level(Point box_center, Point fovea_center, const GridGeometry& geometry,
                   const EccentricityBins& bins) {
  return bins.level_of(normalized_distance(box_center, fovea_center, geometry));
}

CalibrationModel::CalibrationModel(int num_classes, EccentricityBins bins,
                                   std::vector<std::vector<Entry>> alpha,
                                   std::vector<std::vector<std::size_t>> counts,
                                   std::vector<Entry> class_alpha)
    : num_classes_(num_classes),
      bins_(std::move(bins)),
      alpha_(std::move(alpha)),
      counts_(std::move(counts)),
      class_alpha_(std::move(class_alpha)) {
  const auto rows = static_cast<std::size_t>(num_classes_ + 1);
  const auto levels = static_cast<std::size_t>(bins_.num_levels());
  if (num_classes_ < 1) throw InvalidInput("CalibrationModel: need at least one object class");
  if (alpha_.size() != rows || counts_.size() != rows || class_alpha_.size() != rows) {
    throw InvalidInput("CalibrationModel: tables must have K+1 class rows");
  }
  auto check = [&](const Entry& e) {
    if (e && e->size() != rows) throw InvalidInput("CalibrationModel: alpha entries must have K+1 components");
  };
  for (std::size_t k = 0; k < rows; ++k) {
    if (alpha_[k].size() != levels || counts_[k].size() != levels) {
      throw InvalidInput("CalibrationModel: tables must have N level columns");
    }
    for (const auto& e : alpha_[k]) check(e);
    check(class_alpha_[k]);
  }

  resolved_.resize(rows * levels);
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t d = 0; d < levels; ++d) {
      Resolved& r = resolved_[k * levels + d];
      if (alpha_[k][d]) {
        r.source = AlphaSource::own;
        r.alpha = alpha_[k][d];
      } else {
        // Nearest populated level of the same class; ties go to the inner level.
        std::size_t best = levels;
        std::size_t best_gap = std::numeric_limits<std::size_t>::max();
        for (std::size_t other = 0; other < levels; ++other) {
          if (!alpha_[k][other]) continue;
          const std::size_t gap = other > d ? other - d : d - other;
          if (gap < best_gap) {
            best_gap = gap;
            best = other;
          }
        }
        if (best < levels) {
          r.source = AlphaSource::nearest_level;
          r.alpha = alpha_[k][best];
        } else if (class_alpha_[k]) {
          r.source = AlphaSource::class_global;
          r.alpha = class_alpha_[k];
        }
      }
      if (r.alpha) {
        const auto m = mean(*r.alpha);
        r.mean.assign(m.values().begin(), m.values().end());
      }
    }
  }
}

const CalibrationModel::Entry& CalibrationModel::entry(int k, int level) const {
  return alpha_.at(k).at(level);
}

const CalibrationModel::Resolved& CalibrationModel::resolved(int k, int level) const {
  if (k < 0 || k > num_classes_ || level < 0 || level >= num_levels()) {
    throw InvalidInput("CalibrationModel: (class, level) out of range");
  }
  return resolved_[static_cast<std::size_t>(k) * num_levels() + level];
}

AlphaSource CalibrationModel::source(int k, int level) const { return resolved(k, level).source; }

const DirichletParams& CalibrationModel::resolve(int k, int level) const {
  const auto& r = resolved(k, level);
  if (!r.alpha) {
    throw ModelUnavailable("no likelihood for class " + std::to_string(k) + " at level " +
                           std::to_string(level));
  }
  return *r.alpha;
}

std::span<const double> CalibrationModel::likelihood_mean(int k, int level) const {
  const auto& r = resolved(k, level);
  if (!r.alpha) {
    throw ModelUnavailable("no likelihood for class " + std::to_string(k) + " at level " +
                           std::to_string(level));
  }
  return r.mean;
}

bool CalibrationModel::usable_at(int level) const {
  for (int k = 0; k <= num_classes_; ++k) {
    if (source(k, level) == AlphaSource::unavailable) return false;
  }
  return true;
}

bool CalibrationModel::operator==(const CalibrationModel& other) const {
  return num_classes_ == other.num_classes_ && bins_ == other.bins_ && alpha_ == other.alpha_ &&
         counts_ == other.counts_ && class_alpha_ == other.class_alpha_;
}

CalibrationModel train(std::span<const TrainingRecord> records, int num_classes,
                       const EccentricityBins& bins, const TrainOptions& options) {
  if (records.empty()) throw InvalidInput("train: no training records");
  if (num_classes < 1) throw InvalidInput("train: need at least one object class");
  const auto rows = static_cast<std::size_t>(num_classes + 1);
  const auto levels = static_cast<std::size_t>(bins.num_levels());

  std::vector<DirichletStats> cell_stats(rows * levels, DirichletStats(rows));
  std::vector<DirichletStats> class_stats(rows, DirichletStats(rows));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.true_class < 0 || r.true_class > num_classes) {
      throw InvalidInput("train: record " + std::to_string(i) + " has class outside [0, K]");
    }
    if (r.scores.size() != rows) {
      throw InvalidInput("train: record " + std::to_string(i) + " has wrong score length");
    }
    if (!(r.distance >= 0.0) || r.distance > 1.0) {
      throw InvalidInput("train: record " + std::to_string(i) + " distance outside [0, 1]");
    }
    const auto level = static_cast<std::size_t>(bins.level_of(r.distance));
    cell_stats[r.true_class * levels + level].add(r.scores.values());
    class_stats[r.true_class].add(r.scores.values());
  }

  const std::size_t threshold = std::max<std::size_t>(options.min_samples, 2);
  auto fit_if_enough = [&](const DirichletStats& stats) -> CalibrationModel::Entry {
    if (stats.count < threshold) return std::nullopt;
    return fit_mle(stats, options.fit).params;
  };

  std::vector<std::vector<CalibrationModel::Entry>> alpha(rows);
  std::vector<std::vector<std::size_t>> counts(rows);
  std::vector<CalibrationModel::Entry> class_alpha(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t d = 0; d < levels; ++d) {
      const auto& stats = cell_stats[k * levels + d];
      alpha[k].push_back(fit_if_enough(stats));
      counts[k].push_back(stats.count);
    }
    class_alpha[k] = fit_if_enough(class_stats[k]);
  }
  return CalibrationModel(num_classes, bins, std::move(alpha), std::move(counts), std::move(class_alpha));
}

ScoreVector calibrate(const ScoreVector& s, int level, const CalibrationModel& model) {
  const auto rows = static_cast<std::size_t>(model.num_classes() + 1);
  if (s.size() != rows) throw InvalidInput("calibrate: score vector length does not match model");
  std::vector<double> log_like(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    log_like[k] = log_pdf(s, model.resolve(static_cast<int>(k), level));
  }
  const double peak = *std::max_element(log_like.begin(), log_like.end());
  for (double& v : log_like) v = std::exp(v - peak);
  return ScoreVector::normalized(std::move(log_like));
}

ScoreVector expected_scores(const DirichletParams& beta, int level, const CalibrationModel& model) {
  const auto rows = static_cast<std::size_t>(model.num_classes() + 1);
  if (beta.size() != rows) throw InvalidInput("expected_scores: beta length does not match model");
  const double total = beta.sum();
  std::vector<double> out(rows, 0.0);
  for (std::size_t k = 0; k < rows; ++k) {
    const double weight = beta[k] / total;
    const auto m = model.likelihood_mean(static_cast<int>(k), level);
    for (std::size_t j = 0; j < rows; ++j) out[j] += weight * m[j];
  }
  return ScoreVector::normalized(std::move(out));
}

ScoreVector expected_local_scores(const DirichletParams& beta, const CalibrationModel& model) {
  return expected_scores(beta, 0, model);
}

namespace {

nlohmann::json entry_to_json(const CalibrationModel::Entry& e) {
  if (!e) return nullptr;
  return std::vector<double>(e->values().begin(), e->values().end());
}

CalibrationModel::Entry entry_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return DirichletParams(j.get<std::vector<double>>());
}

}  // namespace

nlohmann::json model_to_json(const CalibrationModel& model) {
  nlohmann::json alpha = nlohmann::json::array();
  nlohmann::json counts = nlohmann::json::array();
  nlohmann::json class_alpha = nlohmann::json::array();
  for (int k = 0; k <= model.num_classes(); ++k) {
    nlohmann::json row = nlohmann::json::array();
    nlohmann::json count_row = nlohmann::json::array();
    for (int d = 0; d < model.num_levels(); ++d) {
      row.push_back(entry_to_json(model.entry(k, d)));
      count_row.push_back(model.count(k, d));
    }
    alpha.push_back(std::move(row));
    counts.push_back(std::move(count_row));
    class_alpha.push_back(entry_to_json(model.class_entry(k)));
  }
  return {{"K", model.num_classes()},
          {"bins", {{"edges", model.bins().edges()}}},
          {"alpha", std::move(alpha)},
          {"counts", std::move(counts)},
          {"class_alpha", std::move(class_alpha)}};
}

CalibrationModel model_from_json(const nlohmann::json& j) {
  try {
    const int num_classes = j.at("K").get<int>();
    EccentricityBins bins(j.at("bins").at("edges").get<std::vector<double>>());
    const auto rows = static_cast<std::size_t>(num_classes + 1);
    std::vector<std::vector<CalibrationModel::Entry>> alpha(rows);
    std::vector<std::vector<std::size_t>> counts(rows);
    std::vector<CalibrationModel::Entry> class_alpha(rows);
    const auto& ja = j.at("alpha");
    const auto& jc = j.at("counts");
    if (ja.size() != rows || jc.size() != rows) {
      throw InvalidInput("model JSON: alpha/counts must have K+1 rows");
    }
    for (std::size_t k = 0; k < rows; ++k) {
      for (const auto& e : ja[k]) alpha[k].push_back(entry_from_json(e));
      counts[k] = jc[k].get<std::vector<std::size_t>>();
    }
    if (j.contains("class_alpha")) {
      const auto& jg = j.at("class_alpha");
      if (jg.size() != rows) throw InvalidInput("model JSON: class_alpha must have K+1 rows");
      for (std::size_t k = 0; k < rows; ++k) class_alpha[k] = entry_from_json(jg[k]);
    }
    return CalibrationModel(num_classes, std::move(bins), std::move(alpha), std::move(counts),
                            std::move(class_alpha));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model JSON: ") + e.what());
  }
}

std::string serialize_model(const CalibrationModel& model) { return model_to_json(model).dump(2) + "\n"; }

std::string backoff_report(const CalibrationModel& model) {
  std::ostringstream out;
  out << "class,level,count,source\n";
  for (int k = 0; k <= model.num_classes(); ++k) {
    for (int d = 0; d < model.num_levels(); ++d) {
      const char* src = "unavailable";
      switch (model.source(k, d)) {
        case AlphaSource::own: src = "own"; break;
        case AlphaSource::nearest_level: src = "nearest_level"; break;
        case AlphaSource::class_global: src = "class_global"; break;
        case AlphaSource::unavailable: break;
      }
      out << k << ',' << d << ',' << model.count(k, d) << ',' << src << '\n';
    }
  }
  return out.str();
}

}  // namespace fovea
