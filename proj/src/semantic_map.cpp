#include "fovea/semantic_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fovea/error.hpp"

namespace fovea {

SemanticMap::SemanticMap(GridGeometry geometry, int num_classes)
    : geometry_(geometry),
      num_classes_(num_classes),
      beta_(geometry.num_cells(), DirichletParams::uniform(num_classes + 1, kPriorConcentration)),
      visited_(geometry.num_cells(), false) {}

SemanticMap SemanticMap::init_uniform(const GridGeometry& geometry, int num_classes) {
  if (num_classes < 1) throw InvalidInput("SemanticMap: need at least one object class");
  return SemanticMap(geometry, num_classes);
}

void SemanticMap::set_beta(Cell c, DirichletParams beta) {
  if (beta.size() != static_cast<std::size_t>(num_classes_ + 1)) {
    throw InvalidInput("SemanticMap::set_beta: expected " + std::to_string(num_classes_ + 1) +
                       " components");
  }
  beta_[geometry_.index(c)] = std::move(beta);
}

std::vector<Cell> SemanticMap::unvisited_cells() const {
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < visited_.size(); ++i) {
    if (!visited_[i]) cells.push_back(geometry_.cell_at(i));
  }
  return cells;
}

bool SemanticMap::exhausted() const {
  return std::all_of(visited_.begin(), visited_.end(), [](bool v) { return v; });
}

void SemanticMap::mark_visited(Cell c) {
  const auto i = geometry_.index(c);
  if (visited_[i]) return;
  visited_[i] = true;
  history_.push_back(c);
}

SemanticMap ior_mark(SemanticMap map, Cell c) {
  map.mark_visited(c);
  return map;
}

ScoreVector cell_posterior(const DirichletParams& beta) { return mean(beta); }

DirichletParams kaplan_update(const DirichletParams& beta, std::span<const double> likelihood) {
  if (likelihood.size() != beta.size()) {
    throw InvalidInput("kaplan_update: likelihood has " + std::to_string(likelihood.size()) +
                       " components, beta has " + std::to_string(beta.size()));
  }
  double dot = 0.0;
  double lowest = likelihood.front();
  for (std::size_t k = 0; k < beta.size(); ++k) {
    if (!(likelihood[k] >= 0.0) || !std::isfinite(likelihood[k])) {
      throw InvalidInput("kaplan_update: likelihood must be finite and >= 0");
    }
    dot += beta[k] * likelihood[k];
    lowest = std::min(lowest, likelihood[k]);
  }
  if (!(dot > 0.0)) throw InvalidInput("kaplan_update: likelihood is all zero");

  const double denom = 1.0 + lowest / dot;
  std::vector<double> next(beta.size());
  for (std::size_t k = 0; k < beta.size(); ++k) {
    next[k] = beta[k] * ((1.0 + likelihood[k] / dot) / denom);
  }
  return DirichletParams(std::move(next));
}

void apply_detections_inplace(SemanticMap& map, std::span<const Detection> detections, Cell fixation,
                              const UpdateOptions& options, const CalibrationModel* model) {
  if (options.mode == UpdateMode::calibrated && model == nullptr) {
    throw InvalidInput("apply_detections: calibrated mode requires a calibration model");
  }
  const auto& geometry = map.geometry();
  const Point fovea = geometry.cell_center(fixation);
  for (const auto& det : detections) {
    if (det.scores.size() != static_cast<std::size_t>(map.num_classes() + 1)) {
      throw InvalidInput("apply_detections: detection has wrong number of classes");
    }
    const auto cells = cells_overlapped(det.box, geometry, options.min_overlap_fraction);
    if (cells.empty()) continue;
    std::vector<double> lambda;
    if (options.mode == UpdateMode::calibrated) {
      const int level = distance_level(det.box.center(), fovea, geometry, model->bins());
      const auto calibrated = calibrate(det.scores, level, *model);
      lambda.assign(calibrated.values().begin(), calibrated.values().end());
    } else {
      lambda.assign(det.scores.values().begin(), det.scores.values().end());
    }
    for (const Cell c : cells) {
      map.set_beta(c, kaplan_update(map.beta(c), lambda));
    }
  }
  map.mark_visited(fixation);
}

SemanticMap apply_detections(SemanticMap map, std::span<const Detection> detections, Cell fixation,
                             const UpdateOptions& options, const CalibrationModel* model) {
  apply_detections_inplace(map, detections, fixation, options, model);
  return map;
}

nlohmann::json geometry_to_json(const GridGeometry& geometry) {
  return {{"image_width", geometry.image_width()},
          {"image_height", geometry.image_height()},
          {"cols", geometry.cols()},
          {"rows", geometry.rows()}};
}

GridGeometry geometry_from_json(const nlohmann::json& j) {
  return GridGeometry(j.at("image_width").get<double>(), j.at("image_height").get<double>(),
                      j.at("cols").get<int>(), j.at("rows").get<int>());
}

nlohmann::json map_to_json(const SemanticMap& map) {
  nlohmann::json beta = nlohmann::json::array();
  nlohmann::json visited = nlohmann::json::array();
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    const auto v = map.beta(i).values();
    beta.push_back(std::vector<double>(v.begin(), v.end()));
    visited.push_back(map.visited(i));
  }
  nlohmann::json history = nlohmann::json::array();
  for (const Cell c : map.history()) history.push_back({c.x, c.y});
  return {{"geometry", geometry_to_json(map.geometry())},
          {"K", map.num_classes()},
          {"beta", std::move(beta)},
          {"visited", std::move(visited)},
          {"history", std::move(history)}};
}

SemanticMap map_from_json(const nlohmann::json& j) {
  try {
    auto map = SemanticMap::init_uniform(geometry_from_json(j.at("geometry")), j.at("K").get<int>());
    const auto& beta = j.at("beta");
    const auto& visited = j.at("visited");
    if (beta.size() != map.num_cells() || visited.size() != map.num_cells()) {
      throw InvalidInput("map JSON: beta/visited length does not match geometry");
    }
    for (std::size_t i = 0; i < map.num_cells(); ++i) {
      map.set_beta(map.geometry_.cell_at(i), DirichletParams(beta[i].get<std::vector<double>>()));
    }
    for (const auto& c : j.at("history")) {
      map.mark_visited({c.at(0).get<int>(), c.at(1).get<int>()});
    }
    for (std::size_t i = 0; i < map.num_cells(); ++i) {
      if (visited[i].get<bool>() != map.visited_[i]) {
        throw InvalidInput("map JSON: visited mask disagrees with history");
      }
    }
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("map JSON: ") + e.what());
  }
}

}  // namespace fovea
