#include "fovea/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fovea/error.hpp"

namespace fovea {

namespace {

// Default observation-model shape: the true class holds this much mean mass
// at the fovea and at the outermost level, other object classes a small
// floor (kept high enough that the 1e-6 score clamp barely touches their
// draws), and the rest is split between background and the confusable class.
constexpr double kFovealTrueMass = 0.85;
constexpr double kPeripheralTrueMass = 0.35;
constexpr double kOtherClassMass = 0.02;
constexpr double kBackgroundShare = 0.2;
constexpr double kPrecision = 30.0;
constexpr double kFovealDetection = 1.0;
constexpr double kPeripheralDetection = 0.6;

double ramp(double start, double end, int level, int levels) {
  if (levels == 1) return start;
  return start + (end - start) * static_cast<double>(level) / (levels - 1);
}

}  // namespace

void validate_scene(const SceneSpec& scene, double target_area_cap) {
  if (!(scene.width > 0.0) || !(scene.height > 0.0)) throw InvalidInput("scene: canvas must be positive");
  if (scene.objects.size() < 8) throw InvalidInput("scene: need at least 8 object instances");
  const double canvas_area = scene.width * scene.height;
  bool has_target = false;
  bool has_other = false;
  for (const auto& obj : scene.objects) {
    if (obj.cls < 1) throw InvalidInput("scene: object class must be >= 1");
    if (!(obj.box.width > 0.0) || !(obj.box.height > 0.0)) throw InvalidInput("scene: degenerate box");
    if (obj.box.left < 0.0 || obj.box.top < 0.0 || obj.box.right() > scene.width ||
        obj.box.bottom() > scene.height) {
      throw InvalidInput("scene: box outside canvas");
    }
    if (obj.cls == scene.target) {
      has_target = true;
      if (obj.box.area() > target_area_cap * canvas_area) {
        throw InvalidInput("scene: target box exceeds the area cap");
      }
    } else {
      has_other = true;
    }
  }
  if (!has_target) throw InvalidInput("scene: no target instance");
  if (!has_other) throw InvalidInput("scene: no distractor class");
}

nlohmann::json scene_to_json(const SceneSpec& scene) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& obj : scene.objects) {
    objects.push_back({{"class", obj.cls}, {"box", {obj.box.left, obj.box.top, obj.box.width, obj.box.height}}});
  }
  return {{"canvas", {scene.width, scene.height}}, {"target", scene.target}, {"objects", std::move(objects)}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec scene;
    scene.width = j.at("canvas").at(0).get<double>();
    scene.height = j.at("canvas").at(1).get<double>();
    scene.target = j.at("target").get<int>();
    for (const auto& o : j.at("objects")) {
      const auto& b = o.at("box");
      scene.objects.push_back({o.at("class").get<int>(),
                               {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                b.at(3).get<double>()}});
    }
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("scene JSON: ") + e.what());
  }
}

SceneSpec generate_scene(const SceneGenConfig& config, Rng& rng) {
  if (config.num_classes < 2) throw InvalidInput("generate_scene: need K >= 2");
  if (config.min_objects < 8 || config.max_objects < config.min_objects) {
    throw InvalidInput("generate_scene: object count range must start at 8 or more");
  }
  if (config.max_targets < 1 || config.max_targets >= config.min_objects) {
    throw InvalidInput("generate_scene: max_targets must be in [1, min_objects)");
  }
  if (!(config.target_area_cap > 0.0)) throw InvalidInput("generate_scene: target area cap must be > 0");
  if (!(config.min_side > 0.0) || config.max_side < config.min_side || config.max_side > 1.0) {
    throw InvalidInput("generate_scene: side fractions must satisfy 0 < min <= max <= 1");
  }
  if (config.width * config.min_side < 1.0 || config.height * config.min_side < 1.0) {
    throw InvalidInput("generate_scene: canvas too small for non-degenerate boxes");
  }

  SceneSpec scene;
  scene.width = config.width;
  scene.height = config.height;
  std::uniform_int_distribution<int> pick_class(1, config.num_classes);
  scene.target = pick_class(rng);

  const int count = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);
  const int targets = std::uniform_int_distribution<int>(1, config.max_targets)(rng);
  std::vector<int> classes(targets, scene.target);
  std::uniform_int_distribution<int> pick_other(1, config.num_classes - 1);
  while (static_cast<int>(classes.size()) < count) {
    const int c = pick_other(rng);
    classes.push_back(c >= scene.target ? c + 1 : c);
  }
  std::shuffle(classes.begin(), classes.end(), rng);

  std::uniform_real_distribution<double> side(config.min_side, config.max_side);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cap = config.target_area_cap * config.width * config.height;
  for (int cls : classes) {
    BoundingBox box;
    bool placed = false;
    for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
      box.width = std::max(1.0, std::round(side(rng) * config.width));
      box.height = std::max(1.0, std::round(side(rng) * config.height));
      box.left = std::round(unit(rng) * (config.width - box.width));
      box.top = std::round(unit(rng) * (config.height - box.height));
      placed = cls != scene.target || box.area() <= cap;
    }
    if (!placed) throw InvalidInput("generate_scene: could not satisfy the target area cap");
    scene.objects.push_back({cls, box});
  }
  validate_scene(scene, config.target_area_cap);
  return scene;
}

EmulatorConfig EmulatorConfig::defaults(int num_classes, int levels) {
  if (num_classes < 2) throw InvalidInput("EmulatorConfig: need K >= 2");
  EmulatorConfig c;
  c.num_classes = num_classes;
  c.bins = EccentricityBins::uniform(levels);
  const int rows = num_classes + 1;
  c.confusable.assign(rows, 0);
  for (int k = 1; k <= num_classes; ++k) c.confusable[k] = k % num_classes + 1;

  c.alpha.assign(rows, {});
  for (int k = 0; k < rows; ++k) {
    for (int d = 0; d < levels; ++d) {
      const double own = ramp(kFovealTrueMass, kPeripheralTrueMass, d, levels);
      std::vector<double> m(rows, 0.0);
      if (k == 0) {
        m[0] = own;
        for (int j = 1; j < rows; ++j) m[j] = (1.0 - own) / num_classes;
      } else {
        const int conf = c.confusable[k];
        int others = 0;
        for (int j = 1; j < rows; ++j) {
          if (j != k && j != conf) {
            m[j] = kOtherClassMass;
            ++others;
          }
        }
        const double rest = 1.0 - own - kOtherClassMass * others;
        m[k] = own;
        m[0] = kBackgroundShare * rest;
        m[conf] = (1.0 - kBackgroundShare) * rest;
      }
      for (double& v : m) v *= kPrecision;
      c.alpha[k].push_back(DirichletParams(std::move(m)));
    }
  }
  for (int d = 0; d < levels; ++d) {
    c.detection_prob.push_back(ramp(kFovealDetection, kPeripheralDetection, d, levels));
  }
  c.confusion.assign(levels, 0.0);
  return c;
}

void EmulatorConfig::validate() const {
  const auto rows = static_cast<std::size_t>(num_classes + 1);
  const auto levels = static_cast<std::size_t>(bins.num_levels());
  if (num_classes < 1) throw InvalidInput("EmulatorConfig: need K >= 1");
  if (alpha.size() != rows) throw InvalidInput("EmulatorConfig: alpha must have K+1 rows");
  for (const auto& row : alpha) {
    if (row.size() != levels) throw InvalidInput("EmulatorConfig: alpha rows must have N levels");
    for (const auto& a : row) {
      if (a.size() != rows) throw InvalidInput("EmulatorConfig: alpha entries must have K+1 components");
    }
  }
  if (detection_prob.size() != levels || confusion.size() != levels) {
    throw InvalidInput("EmulatorConfig: per-level tables must have N entries");
  }
  for (std::size_t d = 0; d < levels; ++d) {
    if (!(detection_prob[d] >= 0.0 && detection_prob[d] <= 1.0) || !(confusion[d] >= 0.0 && confusion[d] <= 1.0)) {
      throw InvalidInput("EmulatorConfig: probabilities must lie in [0, 1]");
    }
    if (d > 0 && detection_prob[d] > detection_prob[d - 1]) {
      throw InvalidInput("EmulatorConfig: detection probability must not increase with distance");
    }
  }
  if (confusable.size() != rows) throw InvalidInput("EmulatorConfig: confusable must have K+1 entries");
  for (std::size_t k = 1; k < rows; ++k) {
    if (confusable[k] < 0 || confusable[k] > num_classes) {
      throw InvalidInput("EmulatorConfig: confusable class outside [0, K]");
    }
  }
  if (!(jitter_std >= 0.0) || !(false_positive_rate >= 0.0)) {
    throw InvalidInput("EmulatorConfig: jitter and false-positive rate must be >= 0");
  }
}

nlohmann::json emulator_to_json(const EmulatorConfig& config) {
  nlohmann::json alpha = nlohmann::json::array();
  for (const auto& row : config.alpha) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& a : row) r.push_back(std::vector<double>(a.values().begin(), a.values().end()));
    alpha.push_back(std::move(r));
  }
  return {{"K", config.num_classes},
          {"bins", {{"edges", config.bins.edges()}}},
          {"alpha", std::move(alpha)},
          {"detection_prob", config.detection_prob},
          {"confusable", config.confusable},
          {"confusion", config.confusion},
          {"jitter_std", config.jitter_std},
          {"false_positive_rate", config.false_positive_rate},
          {"seed", config.seed}};
}

EmulatorConfig emulator_from_json(const nlohmann::json& j) {
  try {
    const int k = j.value("K", 5);
    int levels = 5;
    if (j.contains("bins")) {
      levels = static_cast<int>(j.at("bins").at("edges").size());
    } else if (j.contains("detection_prob")) {
      levels = static_cast<int>(j.at("detection_prob").size());
    }
    EmulatorConfig c = EmulatorConfig::defaults(k, levels);
    if (j.contains("bins")) c.bins = EccentricityBins(j.at("bins").at("edges").get<std::vector<double>>());
    if (j.contains("alpha")) {
      c.alpha.clear();
      for (const auto& row : j.at("alpha")) {
        std::vector<DirichletParams> r;
        for (const auto& a : row) r.emplace_back(a.get<std::vector<double>>());
        c.alpha.push_back(std::move(r));
      }
    }
    if (j.contains("detection_prob")) c.detection_prob = j.at("detection_prob").get<std::vector<double>>();
    if (j.contains("confusable")) c.confusable = j.at("confusable").get<std::vector<int>>();
    if (j.contains("confusion")) c.confusion = j.at("confusion").get<std::vector<double>>();
    c.jitter_std = j.value("jitter_std", c.jitter_std);
    c.false_positive_rate = j.value("false_positive_rate", c.false_positive_rate);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("emulator JSON: ") + e.what());
  }
}

std::vector<Detection> emulate_detections(const SceneSpec& scene, Cell fixation, const GridGeometry& geometry,
                                          const EmulatorConfig& config, Rng& rng) {
  const Point fovea = geometry.cell_center(fixation);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<Detection> detections;

  auto clip = [&](BoundingBox b) {
    const double l = std::clamp(b.left, 0.0, scene.width);
    const double t = std::clamp(b.top, 0.0, scene.height);
    const double r = std::clamp(b.right(), 0.0, scene.width);
    const double bo = std::clamp(b.bottom(), 0.0, scene.height);
    return BoundingBox{l, t, r - l, bo - t};
  };

  for (const auto& obj : scene.objects) {
    if (obj.cls < 1 || obj.cls > config.num_classes) {
      throw InvalidInput("emulate_detections: object class outside [1, K]");
    }
    const int level = distance_level(obj.box.center(), fovea, geometry, config.bins);
    if (unit(rng) >= config.detection_prob[level]) continue;
    BoundingBox box = obj.box;
    if (config.jitter_std > 0.0) {
      box.left += config.jitter_std * jitter(rng);
      box.top += config.jitter_std * jitter(rng);
      box.width += config.jitter_std * jitter(rng);
      box.height += config.jitter_std * jitter(rng);
    }
    int drawn = obj.cls;
    if (config.confusion[level] > 0.0 && unit(rng) < config.confusion[level]) {
      drawn = config.confusable[obj.cls];
    }
    auto scores = sample(config.alpha[drawn][level], rng);
    box = clip(box);
    if (!(box.width > 0.0) || !(box.height > 0.0)) continue;
    detections.push_back({box, std::move(scores)});
  }

  if (config.false_positive_rate > 0.0) {
    const int spurious = std::poisson_distribution<int>(config.false_positive_rate)(rng);
    std::uniform_real_distribution<double> side(0.05, 0.2);
    for (int i = 0; i < spurious; ++i) {
      BoundingBox box;
      box.width = side(rng) * scene.width;
      box.height = side(rng) * scene.height;
      box.left = unit(rng) * (scene.width - box.width);
      box.top = unit(rng) * (scene.height - box.height);
      const int level = distance_level(box.center(), fovea, geometry, config.bins);
      detections.push_back({box, sample(config.alpha[0][level], rng)});
    }
  }
  return detections;
}

std::vector<TrainingRecord> generate_training_records(const EmulatorConfig& config, std::size_t count, Rng& rng) {
  config.validate();
  const auto rows = static_cast<std::size_t>(config.num_classes + 1);
  const auto levels = static_cast<std::size_t>(config.bins.num_levels());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TrainingRecord> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int k = static_cast<int>(i % rows);
    const int level = static_cast<int>((i / rows) % levels);
    const double lo = level == 0 ? 0.0 : config.bins.edges()[level - 1];
    const double hi = config.bins.edges()[level];
    // Strictly inside (lo, hi] so the record lands in its own bin.
    const double d = hi - (hi - lo) * unit(rng);
    int drawn = k;
    if (k > 0 && config.confusion[level] > 0.0 && unit(rng) < config.confusion[level]) {
      drawn = config.confusable[k];
    }
    records.push_back({sample(config.alpha[drawn][level], rng), k, d});
  }
  return records;
}

void write_training_records(std::ostream& out, const std::vector<TrainingRecord>& records) {
  for (const auto& r : records) {
    const nlohmann::json j = {{"scores", std::vector<double>(r.scores.values().begin(), r.scores.values().end())},
                              {"class", r.true_class},
                              {"distance", r.distance}};
    out << j.dump() << '\n';
  }
}

std::vector<TrainingRecord> read_training_records(std::istream& in) {
  std::vector<TrainingRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({ScoreVector::normalized(j.at("scores").get<std::vector<double>>()),
                         j.at("class").get<int>(), j.at("distance").get<double>()});
    } catch (const std::exception& e) {
      throw InvalidInput("training records line " + std::to_string(number) + ": " + e.what());
    }
  }
  return records;
}

std::vector<Cell> ground_truth_cells(const SceneSpec& scene, const GridGeometry& geometry,
                                     std::optional<int> class_filter) {
  std::set<Cell> cells;
  for (const auto& obj : scene.objects) {
    if (class_filter && obj.cls != *class_filter) continue;
    for (const Cell c : cells_overlapped(obj.box, geometry)) cells.insert(c);
  }
  return {cells.begin(), cells.end()};
}

DetectionLog read_detection_log(std::istream& in) {
  DetectionLog log;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const Cell fixation{j.at("fixation").at(0).get<int>(), j.at("fixation").at(1).get<int>()};
      auto& entry = log[fixation];
      for (const auto& d : j.at("detections")) {
        const auto& b = d.at("box");
        const BoundingBox box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                              b.at(3).get<double>()};
        if (!(box.width > 0.0) || !(box.height > 0.0)) throw InvalidInput("box must have positive size");
        entry.push_back({box, ScoreVector::normalized(d.at("scores").get<std::vector<double>>())});
      }
    } catch (const std::exception& e) {
      throw InvalidInput("detection log line " + std::to_string(number) + ": " + e.what());
    }
  }
  return log;
}

DetectionLog load_detection_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open detection log " + path.string());
  return read_detection_log(in);
}

void write_detection_log(std::ostream& out, const DetectionLog& log) {
  for (const auto& [cell, detections] : log) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : detections) {
      dets.push_back({{"box", {d.box.left, d.box.top, d.box.width, d.box.height}},
                      {"scores", std::vector<double>(d.scores.values().begin(), d.scores.values().end())}});
    }
    out << nlohmann::json{{"fixation", {cell.x, cell.y}}, {"detections", std::move(dets)}}.dump() << '\n';
  }
}

}  // namespace fovea
