#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fovea/calibration.hpp"
#include "fovea/policy.hpp"
#include "fovea/semantic_map.hpp"
#include "fovea/simworld.hpp"

namespace fovea {

/// Per-trial seed derived from a campaign seed and the trial index.
std::uint64_t trial_seed(std::uint64_t campaign_seed, std::uint64_t trial_index);

struct TrialConfig {
  PolicySpec policy;
  int max_iterations = 30;
  int repetitions = 10;
  /// Start here instead of drawing a non-target cell.
  std::optional<Cell> initial_fixation;
  UpdateOptions update;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SearchResult {
  bool found = false;
  /// 1-based iteration at which the Oracle fired; iteration 1 is the initial fixation.
  std::optional<int> found_at;
  std::vector<Cell> path;
  /// Wall time of each policy selection, in seconds.
  std::vector<double> selection_seconds;
};

struct ExploreResult {
  /// success[0] scores the prior map; success[s] the map after the s-th
  /// fixation, the initial one counting as the first.
  std::vector<double> success;
  std::vector<Cell> path;
  std::vector<double> selection_seconds;
};

/// Detections produced when fixating a cell.
using DetectionSource = std::function<std::vector<Detection>(Cell fixation, Rng& rng)>;

DetectionSource emulator_source(const SceneSpec& scene, const GridGeometry& geometry, const EmulatorConfig& config);
/// Replays a recorded log; fixations absent from the log yield no detections.
DetectionSource log_source(const DetectionLog& log);

/// Uniform over cells that do not overlap a target instance.
Cell initial_fixation(const SceneSpec& scene, const GridGeometry& geometry, Rng& rng);

/// Everything a trial reads besides its own RNG.
struct TrialContext {
  const SceneSpec& scene;
  const GridGeometry& geometry;
  DetectionSource source;
  const CalibrationModel* model = nullptr;
  const SaliencyGrid* saliency = nullptr;
};

/// Fixate, fuse, stop when the fixation overlaps a target (Oracle), else move
/// on with the policy. Stops after max_iterations or when the policy runs out
/// of cells.
SearchResult run_search_trial(const TrialContext& ctx, const TrialConfig& config, Rng& rng);

/// Same loop without the Oracle, recording success_rate after each fixation.
ExploreResult run_explore_trial(const TrialContext& ctx, const TrialConfig& config, Rng& rng);

/// Fraction of ground-truth cells whose argmax class matches an overlapping
/// object. Ties in the argmax resolve to background.
double success_rate(const SemanticMap& map, const SceneSpec& scene);

/// CP[t-1] = fraction of trials found at or before iteration t, t = 1..horizon.
std::vector<double> cumulative_performance(const std::vector<SearchResult>& results, int horizon);

struct MeanCurve {
  std::vector<double> mean;
  std::vector<double> sem;
};

/// Pointwise mean and sample standard deviation / sqrt(R). Needs R >= 2
/// curves of equal length.
MeanCurve aggregate_with_sem(const std::vector<std::vector<double>>& curves);

/// Mean policy-selection time per iteration, 0 when no selection happened.
double time_per_iteration(const SearchResult& result);
double time_per_iteration(const ExploreResult& result);

enum class CampaignKind { search, explore };
enum class SemLevel { repetition, image };

struct CampaignConfig {
  CampaignKind kind = CampaignKind::search;
  std::vector<SceneSpec> scenes;
  /// Parallel to scenes when replaying recorded detections.
  std::vector<DetectionLog> logs;
  /// Parallel to scenes when a saliency policy is present.
  std::vector<SaliencyGrid> saliency;
  std::vector<PolicySpec> policies;
  int grid_cols = 10;
  int grid_rows = 10;
  int horizon = 30;
  int repetitions = 10;
  std::uint64_t seed = 0;
  EmulatorConfig emulator = EmulatorConfig::defaults();
  UpdateOptions update;
  SemLevel sem = SemLevel::repetition;
  bool record_timing = false;
  int jobs = 1;
};

struct PolicyCurve {
  PolicySpec policy;
  /// Cumulative performance (search) or success rate (explore) per iteration.
  MeanCurve curve;
  /// Mean selection time at each iteration index; empty unless timing is on.
  std::vector<double> mean_time;
  /// Mean selection time over every selection of the campaign.
  double overall_time = 0.0;
};

struct CampaignResult {
  CampaignKind kind = CampaignKind::search;
  std::vector<PolicyCurve> curves;
};

/// Checks a campaign before any trial runs; throws InvalidInput.
void validate_campaign(const CampaignConfig& config, const CalibrationModel* model);

/// Runs every (policy, scene, repetition) trial. Trial index
/// scene * repetitions + rep seeds the trial RNG, so the starting cell of a
/// (scene, rep) pair is shared across policies.
CampaignResult run_campaign(const CampaignConfig& config, const CalibrationModel* model);

/// CSV with columns iteration, mean_cp | mean_success_rate, sem, mean_time_s.
std::string curve_csv(CampaignKind kind, const PolicyCurve& curve);

}  // namespace fovea
