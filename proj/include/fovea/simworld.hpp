#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fovea/calibration.hpp"
#include "fovea/dirichlet.hpp"
#include "fovea/geometry.hpp"
#include "fovea/semantic_map.hpp"
#include "json.hpp"

namespace fovea {

struct GroundTruthObject {
  int cls = 1;
  BoundingBox box;

  bool operator==(const GroundTruthObject&) const = default;
};

/// A synthetic visual field: ground-truth objects on a canvas and the class
/// being searched for.
struct SceneSpec {
  double width = 640.0;
  double height = 480.0;
  int target = 1;
  std::vector<GroundTruthObject> objects;

  bool operator==(const SceneSpec&) const = default;
};

/// Checks the benchmark constraints: at least 8 objects, at least one target
/// instance, at least one non-target class, target boxes within the area cap,
/// every box non-degenerate and on the canvas.
void validate_scene(const SceneSpec& scene, double target_area_cap = 0.2);

nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j);

struct SceneGenConfig {
  int num_classes = 5;
  double width = 640.0;
  double height = 480.0;
  int min_objects = 8;
  int max_objects = 14;
  int max_targets = 2;
  /// Largest target box as a fraction of the canvas area.
  double target_area_cap = 0.2;
  /// Box side lengths as fractions of the canvas side.
  double min_side = 0.06;
  double max_side = 0.3;
  int max_retries = 1000;
};

SceneSpec generate_scene(const SceneGenConfig& config, Rng& rng);

/// Parametric stand-in for a foveated object detector.
struct EmulatorConfig {
  int num_classes = 5;
  EccentricityBins bins = EccentricityBins::uniform(5);
  /// Generative score distributions, indexed [class][level].
  std::vector<std::vector<DirichletParams>> alpha;
  /// Probability that an object is reported, per level; non-increasing.
  std::vector<double> detection_prob;
  /// Class each object class is confused with (index 0 unused).
  std::vector<int> confusable;
  /// Probability of drawing scores from the confusable class, per level.
  std::vector<double> confusion;
  double jitter_std = 4.0;
  /// Mean number of spurious background detections per fixation.
  double false_positive_rate = 0.0;
  std::uint64_t seed = 0;

  static EmulatorConfig defaults(int num_classes = 5, int levels = 5);
  void validate() const;
};

nlohmann::json emulator_to_json(const EmulatorConfig& config);
/// Fields missing from the JSON take the values of EmulatorConfig::defaults.
EmulatorConfig emulator_from_json(const nlohmann::json& j);

std::vector<Detection> emulate_detections(const SceneSpec& scene, Cell fixation, const GridGeometry& geometry,
                                          const EmulatorConfig& config, Rng& rng);

/// Labelled score vectors drawn from the emulator's observation model,
/// stratified round-robin over (class, level) with the distance uniform
/// inside the level's bin.
std::vector<TrainingRecord> generate_training_records(const EmulatorConfig& config, std::size_t count, Rng& rng);

void write_training_records(std::ostream& out, const std::vector<TrainingRecord>& records);
std::vector<TrainingRecord> read_training_records(std::istream& in);

/// Cells overlapped by ground-truth boxes, optionally only of one class.
std::vector<Cell> ground_truth_cells(const SceneSpec& scene, const GridGeometry& geometry,
                                     std::optional<int> class_filter = std::nullopt);

/// Recorded detections keyed by fixation cell.
using DetectionLog = std::map<Cell, std::vector<Detection>>;

DetectionLog read_detection_log(std::istream& in);
DetectionLog load_detection_log(const std::filesystem::path& path);
void write_detection_log(std::ostream& out, const DetectionLog& log);

}  // namespace fovea
