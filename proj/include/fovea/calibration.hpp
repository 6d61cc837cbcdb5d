#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fovea/dirichlet.hpp"
#include "fovea/geometry.hpp"
#include "json.hpp"

namespace fovea {

/// Discretization of the normalized fovea distance into N levels. Edges are
/// upper bounds, strictly increasing, the last equal to 1.
class EccentricityBins {
public:
  explicit EccentricityBins(std::vector<double> upper_edges);
  static EccentricityBins uniform(int levels);

  int num_levels() const { return static_cast<int>(edges_.size()); }
  const std::vector<double>& edges() const { return edges_; }
  /// First level whose upper edge is >= d; d above 1 maps to the last level.
  int level_of(double normalized_distance) const;

  bool operator==(const EccentricityBins&) const = default;

private:
  std::vector<double> edges_;
};

/// Euclidean distance between the two points divided by the image half-diagonal.
double normalized_distance(Point box_center, Point fovea_center, const GridGeometry& geometry);

int distance_level(Point box_center, Point fovea_center, const GridGeometry& geometry,
                   const EccentricityBins& bins);

struct TrainingRecord {
  ScoreVector scores;
  int true_class = 0;
  /// Normalized fovea distance in [0, 1].
  double distance = 0.0;
};

struct TrainOptions {
  /// Entries fitted from fewer samples are treated as unpopulated.
  std::size_t min_samples = 50;
  FitOptions fit;
};

/// Where a likelihood used for (class, level) came from.
enum class AlphaSource { own, nearest_level, class_global, unavailable };

/// Foveal observation model: a (K+1) x N table of Dirichlet likelihoods
/// p(S | C=k, level). Immutable once built.
class CalibrationModel {
public:
  using Entry = std::optional<DirichletParams>;

  /// alpha and counts are indexed [class][level]; class_alpha holds the
  /// per-class fit over all levels used as the last backoff.
  CalibrationModel(int num_classes, EccentricityBins bins, std::vector<std::vector<Entry>> alpha,
                   std::vector<std::vector<std::size_t>> counts, std::vector<Entry> class_alpha);

  int num_classes() const { return num_classes_; }
  int num_levels() const { return bins_.num_levels(); }
  const EccentricityBins& bins() const { return bins_; }

  const Entry& entry(int k, int level) const;
  const Entry& class_entry(int k) const { return class_alpha_.at(k); }
  std::size_t count(int k, int level) const { return counts_.at(k).at(level); }
  AlphaSource source(int k, int level) const;

  /// Likelihood parameters after backoff; throws ModelUnavailable.
  const DirichletParams& resolve(int k, int level) const;
  /// Mean of the resolved likelihood (cached).
  std::span<const double> likelihood_mean(int k, int level) const;
  /// True when every class resolves at this level.
  bool usable_at(int level) const;

  bool operator==(const CalibrationModel& other) const;

private:
  struct Resolved {
    AlphaSource source = AlphaSource::unavailable;
    std::optional<DirichletParams> alpha;
    std::vector<double> mean;
  };
  const Resolved& resolved(int k, int level) const;

  int num_classes_;
  EccentricityBins bins_;
  std::vector<std::vector<Entry>> alpha_;
  std::vector<std::vector<std::size_t>> counts_;
  std::vector<Entry> class_alpha_;
  std::vector<Resolved> resolved_;
};

/// Partitions records by (true class, level) and fits each partition.
CalibrationModel train(std::span<const TrainingRecord> records, int num_classes,
                       const EccentricityBins& bins, const TrainOptions& options = {});

/// Calibrated scores: component k proportional to Dir(s | alpha_{k,level}),
/// evaluated in log space.
ScoreVector calibrate(const ScoreVector& s, int level, const CalibrationModel& model);

/// Expected detector scores for a cell with map state beta observed at the
/// given level: sum_k mean(alpha_{k,level}) * beta_k / sum(beta).
ScoreVector expected_scores(const DirichletParams& beta, int level, const CalibrationModel& model);

/// expected_scores at the innermost level.
ScoreVector expected_local_scores(const DirichletParams& beta, const CalibrationModel& model);

nlohmann::json model_to_json(const CalibrationModel& model);
CalibrationModel model_from_json(const nlohmann::json& j);
std::string serialize_model(const CalibrationModel& model);

/// Per-entry counts and backoff sources, one line per (class, level).
std::string backoff_report(const CalibrationModel& model);

}  // namespace fovea
