#include "fovea/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fovea/error.hpp"

namespace fovea {

PolicySpec PolicySpec::explore(Metric metric, UpdateMode mode) {
  PolicySpec p;
  p.type = PolicyType::explore_predictive;
  p.metric = metric;
  p.acquisition = metric == Metric::two_peaks ? Acquisition::expected_improvement : Acquisition::sum_expected;
  p.mode = mode;
  return p;
}

bool PolicySpec::needs_model() const {
  return mode == UpdateMode::calibrated || type == PolicyType::search_predictive ||
         type == PolicyType::explore_predictive;
}

std::string PolicySpec::label() const {
  std::string s = to_string(type);
  if (type == PolicyType::explore_predictive) {
    s += "_" + to_string(metric) + "_" + to_string(acquisition);
  }
  return s + "_" + to_string(mode);
}

std::string to_string(PolicyType type) {
  switch (type) {
    case PolicyType::random: return "random";
    case PolicyType::saliency: return "saliency";
    case PolicyType::search_nonpredictive: return "search_nonpredictive";
    case PolicyType::search_predictive: return "search_predictive";
    case PolicyType::explore_predictive: return "explore_predictive";
  }
  return "?";
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kl: return "kl";
    case Metric::negentropy: return "negentropy";
    case Metric::two_peaks: return "two_peaks";
  }
  return "?";
}

std::string to_string(Acquisition acquisition) {
  return acquisition == Acquisition::sum_expected ? "sum_expected" : "expected_improvement";
}

std::string to_string(UpdateMode mode) { return mode == UpdateMode::raw ? "raw" : "calibrated"; }

PolicyType policy_type_from_string(const std::string& s) {
  for (auto t : {PolicyType::random, PolicyType::saliency, PolicyType::search_nonpredictive,
                 PolicyType::search_predictive, PolicyType::explore_predictive}) {
    if (to_string(t) == s) return t;
  }
  throw InvalidInput("unknown policy kind '" + s + "'");
}

Metric metric_from_string(const std::string& s) {
  for (auto m : {Metric::kl, Metric::negentropy, Metric::two_peaks}) {
    if (to_string(m) == s) return m;
  }
  throw InvalidInput("unknown metric '" + s + "'");
}

Acquisition acquisition_from_string(const std::string& s) {
  for (auto a : {Acquisition::sum_expected, Acquisition::expected_improvement}) {
    if (to_string(a) == s) return a;
  }
  throw InvalidInput("unknown acquisition '" + s + "'");
}

UpdateMode update_mode_from_string(const std::string& s) {
  if (s == "raw") return UpdateMode::raw;
  if (s == "calibrated") return UpdateMode::calibrated;
  throw InvalidInput("unknown update mode '" + s + "'");
}

nlohmann::json policy_to_json(const PolicySpec& policy) {
  nlohmann::json j = {{"kind", to_string(policy.type)}, {"mode", to_string(policy.mode)}};
  if (policy.type == PolicyType::explore_predictive) {
    j["metric"] = to_string(policy.metric);
    j["acquisition"] = to_string(policy.acquisition);
  }
  return j;
}

PolicySpec policy_from_json(const nlohmann::json& j) {
  PolicySpec p;
  p.type = policy_type_from_string(j.at("kind").get<std::string>());
  p.mode = update_mode_from_string(j.value("mode", std::string("calibrated")));
  if (p.type == PolicyType::explore_predictive) {
    p = PolicySpec::explore(metric_from_string(j.value("metric", std::string("kl"))), p.mode);
    if (j.contains("acquisition")) {
      p.acquisition = acquisition_from_string(j.at("acquisition").get<std::string>());
    }
  }
  return p;
}

SaliencyGrid::SaliencyGrid(int cols, int rows, std::vector<double> values)
    : cols_(cols), rows_(rows), values_(std::move(values)) {
  if (cols < 1 || rows < 1 || values_.size() != static_cast<std::size_t>(cols) * rows) {
    throw InvalidInput("SaliencyGrid: value count does not match dimensions");
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("SaliencyGrid: values must be >= 0");
  }
}

SaliencyGrid read_saliency_csv(std::istream& in, const GridGeometry& geometry) {
  std::vector<double> values;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string field;
    int cols = 0;
    while (std::getline(ss, field, ',')) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw InvalidInput("saliency CSV: bad value '" + field + "' on row " + std::to_string(rows + 1));
      }
      ++cols;
    }
    if (cols != geometry.cols()) {
      throw InvalidInput("saliency CSV: row " + std::to_string(rows + 1) + " has " + std::to_string(cols) +
                         " values, expected " + std::to_string(geometry.cols()));
    }
    ++rows;
  }
  if (rows != geometry.rows()) {
    throw InvalidInput("saliency CSV: expected " + std::to_string(geometry.rows()) + " rows");
  }
  return SaliencyGrid(geometry.cols(), geometry.rows(), std::move(values));
}

namespace {

int read_pgm_int(std::istream& in) {
  in >> std::ws;
  while (in.peek() == '#') {
    std::string comment;
    std::getline(in, comment);
    in >> std::ws;
  }
  int v = 0;
  if (!(in >> v)) throw InvalidInput("PGM: malformed header");
  return v;
}

}  // namespace

SaliencyGrid read_saliency_pgm(std::istream& in, const GridGeometry& geometry) {
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P2" && magic != "P5") throw InvalidInput("PGM: expected P2 or P5 magic");
  const int width = read_pgm_int(in);
  const int height = read_pgm_int(in);
  const int maxval = read_pgm_int(in);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw InvalidInput("PGM: only 8-bit rasters with positive size are supported");
  }
  std::vector<double> pixels(static_cast<std::size_t>(width) * height);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(pixels.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw InvalidInput("PGM: truncated raster");
    std::copy(raw.begin(), raw.end(), pixels.begin());
  } else {
    for (auto& p : pixels) {
      int v = 0;
      if (!(in >> v)) throw InvalidInput("PGM: truncated raster");
      p = v;
    }
  }

  const auto cells = geometry.num_cells();
  std::vector<double> sum(cells, 0.0);
  std::vector<std::size_t> count(cells, 0);
  for (int py = 0; py < height; ++py) {
    const int cy = std::min(geometry.rows() - 1, static_cast<int>((py + 0.5) * geometry.rows() / height));
    for (int px = 0; px < width; ++px) {
      const int cx = std::min(geometry.cols() - 1, static_cast<int>((px + 0.5) * geometry.cols() / width));
      const auto i = geometry.index({cx, cy});
      sum[i] += pixels[static_cast<std::size_t>(py) * width + px];
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < cells; ++i) sum[i] = count[i] ? sum[i] / count[i] : 0.0;
  return SaliencyGrid(geometry.cols(), geometry.rows(), std::move(sum));
}

SaliencyGrid load_saliency(const std::filesystem::path& path, const GridGeometry& geometry) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open saliency file " + path.string());
  const auto ext = path.extension().string();
  if (ext == ".csv") return read_saliency_csv(in, geometry);
  if (ext == ".pgm") return read_saliency_pgm(in, geometry);
  throw InvalidInput("saliency file must be .csv or .pgm: " + path.string());
}

bool strictly_better(double candidate, double incumbent) {
  return candidate > incumbent + kTieTolerance * std::max(1.0, std::abs(incumbent));
}

namespace {

// Row-major argmax over unvisited cells with the shared tie rule.
template <typename ScoreFn>
Cell argmax_unvisited(const SemanticMap& map, ScoreFn&& score) {
  bool found = false;
  Cell best{};
  double best_score = 0.0;
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    if (map.visited(i)) continue;
    const Cell c = map.geometry().cell_at(i);
    const double s = score(c, i);
    if (!found || strictly_better(s, best_score)) {
      found = true;
      best = c;
      best_score = s;
    }
  }
  if (!found) throw TrialExhausted();
  return best;
}

void require_target(const SemanticMap& map, int target) {
  if (target < 0 || target > map.num_classes()) throw InvalidInput("target class outside [0, K]");
}

}  // namespace

Cell select_random(const SemanticMap& map, Rng& rng) {
  const auto cells = map.unvisited_cells();
  if (cells.empty()) throw TrialExhausted();
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  return cells[pick(rng)];
}

Cell select_saliency(const SaliencyGrid& grid, const SemanticMap& map) {
  if (grid.cols() != map.geometry().cols() || grid.rows() != map.geometry().rows()) {
    throw InvalidInput("select_saliency: grid dimensions do not match the map");
  }
  return argmax_unvisited(map, [&](Cell c, std::size_t) { return grid.at(c); });
}

Cell select_search_nonpredictive(const SemanticMap& map, int target) {
  require_target(map, target);
  return argmax_unvisited(map, [&](Cell, std::size_t i) {
    const auto& beta = map.beta(i);
    return beta[target] / beta.sum();
  });
}

SemanticMap predict_map(const SemanticMap& map, Cell candidate, const CalibrationModel& model) {
  SemanticMap predicted = map;
  const auto& geometry = map.geometry();
  const Point fovea = geometry.cell_center(candidate);
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    const Cell c = geometry.cell_at(i);
    const int level = distance_level(geometry.cell_center(c), fovea, geometry, model.bins());
    const auto& beta = map.beta(i);
    predicted.set_beta(c, kaplan_update(beta, expected_scores(beta, level, model).values()));
  }
  return predicted;
}

double predicted_local_target_posterior(const DirichletParams& beta, int target,
                                        const CalibrationModel& model) {
  const auto next = kaplan_update(beta, expected_local_scores(beta, model).values());
  return next[target] / next.sum();
}

Cell select_search_predictive(const SemanticMap& map, int target, const CalibrationModel& model) {
  require_target(map, target);
  return argmax_unvisited(map, [&](Cell, std::size_t i) {
    return predicted_local_target_posterior(map.beta(i), target, model);
  });
}

double metric_value(const DirichletParams& beta, Metric metric) {
  switch (metric) {
    case Metric::kl:
      return kl_divergence(beta, DirichletParams::uniform(beta.size(), kPriorConcentration));
    case Metric::negentropy: {
      const double total = beta.sum();
      double acc = 0.0;
      for (double b : beta.values()) {
        const double p = b / total;
        if (p > 0.0) acc += p * std::log(p);
      }
      return acc;
    }
    case Metric::two_peaks: {
      const double total = beta.sum();
      double first = -1.0;
      double second = -1.0;
      for (double b : beta.values()) {
        const double p = b / total;
        if (p > first) {
          second = first;
          first = p;
        } else if (p > second) {
          second = p;
        }
      }
      return first - second;
    }
  }
  return 0.0;
}

double acquisition_score(const SemanticMap& map, Cell candidate, const CalibrationModel& model,
                         Metric metric, Acquisition acquisition) {
  const auto predicted = predict_map(map, candidate, model);
  double score = 0.0;
  for (std::size_t i = 0; i < map.num_cells(); ++i) {
    const double next = metric_value(predicted.beta(i), metric);
    if (acquisition == Acquisition::sum_expected) {
      score += next;
    } else {
      score = std::max(score, std::abs(next - metric_value(map.beta(i), metric)));
    }
  }
  return score;
}

Cell select_explore(const SemanticMap& map, const CalibrationModel& model, Metric metric,
                    Acquisition acquisition) {
  return argmax_unvisited(map, [&](Cell c, std::size_t) {
    return acquisition_score(map, c, model, metric, acquisition);
  });
}

Cell select_next(const PolicySpec& policy, const SemanticMap& map, int target,
                 const CalibrationModel* model, const SaliencyGrid* saliency, Rng& rng) {
  auto need_model = [&]() -> const CalibrationModel& {
    if (model == nullptr) throw InvalidInput(policy.label() + " requires a calibration model");
    return *model;
  };
  switch (policy.type) {
    case PolicyType::random:
      return select_random(map, rng);
    case PolicyType::saliency:
      if (saliency == nullptr) throw InvalidInput("saliency policy requires a saliency grid");
      return select_saliency(*saliency, map);
    case PolicyType::search_nonpredictive:
      return select_search_nonpredictive(map, target);
    case PolicyType::search_predictive:
      return select_search_predictive(map, target, need_model());
    case PolicyType::explore_predictive:
      return select_explore(map, need_model(), policy.metric, policy.acquisition);
  }
  throw InvalidInput("unknown policy");
}

}  // namespace fovea
