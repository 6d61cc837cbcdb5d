#pragma once

#include <span>
#include <vector>

#include "fovea/calibration.hpp"
#include "fovea/dirichlet.hpp"
#include "fovea/geometry.hpp"
#include "json.hpp"

namespace fovea {

/// Per-cell prior concentration of a fresh map.
inline constexpr double kPriorConcentration = 0.5;

struct Detection {
  BoundingBox box;
  ScoreVector scores;

  bool operator==(const Detection&) const = default;
};

enum class UpdateMode { raw, calibrated };

/// World-fixed grid of Dirichlet beliefs over K+1 classes plus the
/// inhibition-of-return state (visited mask and fixation history).
class SemanticMap {
public:
  /// Every cell starts at [0.5]*(K+1); nothing visited.
  static SemanticMap init_uniform(const GridGeometry& geometry, int num_classes);

  const GridGeometry& geometry() const { return geometry_; }
  int num_classes() const { return num_classes_; }
  std::size_t num_cells() const { return beta_.size(); }

  const DirichletParams& beta(Cell c) const { return beta_[geometry_.index(c)]; }
  const DirichletParams& beta(std::size_t index) const { return beta_[index]; }
  void set_beta(Cell c, DirichletParams beta);

  bool visited(Cell c) const { return visited_[geometry_.index(c)]; }
  bool visited(std::size_t index) const { return visited_[index]; }
  const std::vector<Cell>& history() const { return history_; }
  std::vector<Cell> unvisited_cells() const;
  bool exhausted() const;

  /// Marks the cell visited and records it; a repeated mark keeps it visited
  /// and does not grow the history.
  void mark_visited(Cell c);

  bool operator==(const SemanticMap&) const = default;

private:
  SemanticMap(GridGeometry geometry, int num_classes);

  GridGeometry geometry_;
  int num_classes_;
  std::vector<DirichletParams> beta_;
  std::vector<bool> visited_;
  std::vector<Cell> history_;

  friend SemanticMap map_from_json(const nlohmann::json& j);
};

/// Posterior class probabilities beta_k / sum(beta), the single-draw
/// Dirichlet-compound multinomial.
ScoreVector cell_posterior(const DirichletParams& beta);

/// Moment-matching Dirichlet update fusing one categorical likelihood.
/// The likelihood must be nonnegative, not all zero, and sized like beta.
DirichletParams kaplan_update(const DirichletParams& beta, std::span<const double> likelihood);

struct UpdateOptions {
  UpdateMode mode = UpdateMode::raw;
  double min_overlap_fraction = 0.0;
};

/// Fuses one fixation's detections into a copy of the map, in input order,
/// and marks the fixation visited. Calibrated mode requires a model.
SemanticMap apply_detections(SemanticMap map, std::span<const Detection> detections, Cell fixation,
                             const UpdateOptions& options, const CalibrationModel* model = nullptr);

/// Same, updating in place.
void apply_detections_inplace(SemanticMap& map, std::span<const Detection> detections, Cell fixation,
                              const UpdateOptions& options, const CalibrationModel* model = nullptr);

/// Alias kept for policy code: marks the cell visited on a copy.
SemanticMap ior_mark(SemanticMap map, Cell c);

nlohmann::json map_to_json(const SemanticMap& map);
SemanticMap map_from_json(const nlohmann::json& j);

nlohmann::json geometry_to_json(const GridGeometry& geometry);
GridGeometry geometry_from_json(const nlohmann::json& j);

}  // namespace fovea
