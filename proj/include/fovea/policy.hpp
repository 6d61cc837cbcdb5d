#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "fovea/calibration.hpp"
#include "fovea/dirichlet.hpp"
#include "fovea/geometry.hpp"
#include "fovea/semantic_map.hpp"

namespace fovea {

enum class PolicyType { random, saliency, search_nonpredictive, search_predictive, explore_predictive };
enum class Metric { kl, negentropy, two_peaks };
enum class Acquisition { sum_expected, expected_improvement };

/// A gaze policy together with the map-update mode it runs on.
struct PolicySpec {
  PolicyType type = PolicyType::random;
  Metric metric = Metric::kl;
  Acquisition acquisition = Acquisition::sum_expected;
  UpdateMode mode = UpdateMode::calibrated;

  /// Exploration with the usual acquisition for the metric: two-peaks with
  /// expected improvement, the others with the summed expectation.
  static PolicySpec explore(Metric metric, UpdateMode mode = UpdateMode::calibrated);

  bool needs_model() const;
  /// Stable identifier, e.g. "search_predictive_calibrated".
  std::string label() const;

  bool operator==(const PolicySpec&) const = default;
};

std::string to_string(PolicyType type);
std::string to_string(Metric metric);
std::string to_string(Acquisition acquisition);
std::string to_string(UpdateMode mode);
PolicyType policy_type_from_string(const std::string& s);
Metric metric_from_string(const std::string& s);
Acquisition acquisition_from_string(const std::string& s);
UpdateMode update_mode_from_string(const std::string& s);

nlohmann::json policy_to_json(const PolicySpec& policy);
PolicySpec policy_from_json(const nlohmann::json& j);

/// Cell-aggregated bottom-up saliency, one nonnegative value per cell.
class SaliencyGrid {
public:
  SaliencyGrid(int cols, int rows, std::vector<double> values);

  int cols() const { return cols_; }
  int rows() const { return rows_; }
  double at(Cell c) const { return values_[static_cast<std::size_t>(c.y) * cols_ + c.x]; }

private:
  int cols_;
  int rows_;
  std::vector<double> values_;
};

/// One CSV line per grid row, one value per column.
SaliencyGrid read_saliency_csv(std::istream& in, const GridGeometry& geometry);
/// 8-bit grayscale PGM (P2 or P5); pixel intensities are averaged per cell.
SaliencyGrid read_saliency_pgm(std::istream& in, const GridGeometry& geometry);
/// Dispatches on the file extension (.csv or .pgm).
SaliencyGrid load_saliency(const std::filesystem::path& path, const GridGeometry& geometry);

/// Uniform draw over unvisited cells.
Cell select_random(const SemanticMap& map, Rng& rng);

/// Winner-take-all over the saliency of unvisited cells.
Cell select_saliency(const SaliencyGrid& grid, const SemanticMap& map);

/// Unvisited cell with the highest current posterior of the target class.
Cell select_search_nonpredictive(const SemanticMap& map, int target);

/// The map expected after fixating the candidate: every cell is updated with
/// its expected scores at the candidate-relative distance level. The visited
/// mask and history are left untouched.
SemanticMap predict_map(const SemanticMap& map, Cell candidate, const CalibrationModel& model);

/// Target posterior of a cell after one simulated update with its expected
/// foveal (level 0) scores.
double predicted_local_target_posterior(const DirichletParams& beta, int target,
                                        const CalibrationModel& model);

/// Unvisited cell maximizing predicted_local_target_posterior.
Cell select_search_predictive(const SemanticMap& map, int target, const CalibrationModel& model);

/// Per-cell uncertainty metric; larger means less uncertain.
double metric_value(const DirichletParams& beta, Metric metric);

/// Score of one exploration candidate under the acquisition function.
double acquisition_score(const SemanticMap& map, Cell candidate, const CalibrationModel& model,
                         Metric metric, Acquisition acquisition);

/// Unvisited candidate maximizing acquisition_score.
Cell select_explore(const SemanticMap& map, const CalibrationModel& model, Metric metric,
                    Acquisition acquisition);

/// Scores within this relative margin count as tied; ties go to the lowest
/// row-major cell.
inline constexpr double kTieTolerance = 1e-12;
bool strictly_better(double candidate, double incumbent);

/// Dispatches to the selector named by the policy. The model is required for
/// predictive policies and the grid for saliency.
Cell select_next(const PolicySpec& policy, const SemanticMap& map, int target,
                 const CalibrationModel* model, const SaliencyGrid* saliency, Rng& rng);

}  // namespace fovea
