#include "fovea/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fovea/error.hpp"

namespace fovea {

std::uint64_t trial_seed(std::uint64_t campaign_seed, std::uint64_t trial_index) {
  // splitmix64 finalizer over seed xor index
  std::uint64_t z = (campaign_seed ^ trial_index) + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void TrialConfig::validate() const {
  if (max_iterations < 1) throw InvalidInput("TrialConfig: max_iterations must be >= 1");
  if (repetitions < 1) throw InvalidInput("TrialConfig: repetitions must be >= 1");
}

DetectionSource emulator_source(const SceneSpec& scene, const GridGeometry& geometry, const EmulatorConfig& config) {
  return [&scene, &geometry, &config](Cell fixation, Rng& rng) {
    return emulate_detections(scene, fixation, geometry, config, rng);
  };
}

DetectionSource log_source(const DetectionLog& log) {
  return [&log](Cell fixation, Rng&) {
    const auto it = log.find(fixation);
    return it == log.end() ? std::vector<Detection>{} : it->second;
  };
}

Cell initial_fixation(const SceneSpec& scene, const GridGeometry& geometry, Rng& rng) {
  const auto targets = ground_truth_cells(scene, geometry, scene.target);
  const std::set<Cell> excluded(targets.begin(), targets.end());
  std::vector<Cell> eligible;
  for (std::size_t i = 0; i < geometry.num_cells(); ++i) {
    const Cell c = geometry.cell_at(i);
    if (!excluded.contains(c)) eligible.push_back(c);
  }
  if (eligible.empty()) throw InvalidInput("initial_fixation: every cell overlaps a target");
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

namespace {

using Clock = std::chrono::steady_clock;

int map_classes(const TrialContext& ctx) {
  if (ctx.model != nullptr) return ctx.model->num_classes();
  int k = 1;
  for (const auto& obj : ctx.scene.objects) k = std::max(k, obj.cls);
  return std::max(k, ctx.scene.target);
}

// Shared fixate / fuse / select loop. on_fixation returns true to stop.
template <typename OnFixation>
void run_loop(const TrialContext& ctx, const TrialConfig& config, Rng& rng, int num_classes,
              std::vector<Cell>& path, std::vector<double>& selection_seconds, OnFixation&& on_fixation) {
  config.validate();
  if (config.policy.needs_model() && ctx.model == nullptr) {
    throw InvalidInput(config.policy.label() + " requires a calibration model");
  }
  auto map = SemanticMap::init_uniform(ctx.geometry, num_classes);
  Cell fixation = config.initial_fixation ? *config.initial_fixation : initial_fixation(ctx.scene, ctx.geometry, rng);
  UpdateOptions update = config.update;
  update.mode = config.policy.mode;
  for (int t = 1; t <= config.max_iterations; ++t) {
    path.push_back(fixation);
    const auto detections = ctx.source(fixation, rng);
    apply_detections_inplace(map, detections, fixation, update, ctx.model);
    if (on_fixation(map, fixation, t) || t == config.max_iterations) return;
    try {
      const auto start = Clock::now();
      fixation = select_next(config.policy, map, ctx.scene.target, ctx.model, ctx.saliency, rng);
      selection_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    } catch (const TrialExhausted&) {
      return;
    }
  }
}

}  // namespace

SearchResult run_search_trial(const TrialContext& ctx, const TrialConfig& config, Rng& rng) {
  const auto target_cells = ground_truth_cells(ctx.scene, ctx.geometry, ctx.scene.target);
  const std::set<Cell> targets(target_cells.begin(), target_cells.end());
  SearchResult result;
  run_loop(ctx, config, rng, map_classes(ctx), result.path, result.selection_seconds,
           [&](const SemanticMap&, Cell fixation, int t) {
             if (targets.contains(fixation)) {
               result.found = true;
               result.found_at = t;
               return true;
             }
             return false;
           });
  return result;
}

ExploreResult run_explore_trial(const TrialContext& ctx, const TrialConfig& config, Rng& rng) {
  ExploreResult result;
  // Entry 0 scores the prior map, before the eye has landed anywhere.
  result.success.push_back(success_rate(SemanticMap::init_uniform(ctx.geometry, map_classes(ctx)), ctx.scene));
  run_loop(ctx, config, rng, map_classes(ctx), result.path, result.selection_seconds,
           [&](const SemanticMap& map, Cell, int) {
             result.success.push_back(success_rate(map, ctx.scene));
             return false;
           });
  return result;
}

double success_rate(const SemanticMap& map, const SceneSpec& scene) {
  if (scene.objects.empty()) throw InvalidInput("success_rate: scene has no objects");
  const auto& geometry = map.geometry();
  std::vector<std::set<int>> classes(geometry.num_cells());
  for (const auto& obj : scene.objects) {
    for (const Cell c : cells_overlapped(obj.box, geometry)) classes[geometry.index(c)].insert(obj.cls);
  }
  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].empty()) continue;
    ++total;
    const auto& beta = map.beta(i);
    int best = 0;
    bool tied = false;
    for (std::size_t k = 1; k < beta.size(); ++k) {
      if (beta[k] > beta[best]) {
        best = static_cast<int>(k);
        tied = false;
      } else if (beta[k] == beta[best]) {
        tied = true;
      }
    }
    if (tied) best = 0;
    if (classes[i].contains(best)) ++correct;
  }
  if (total == 0) throw InvalidInput("success_rate: no cell contains a ground-truth object");
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<double> cumulative_performance(const std::vector<SearchResult>& results, int horizon) {
  if (results.empty()) throw InvalidInput("cumulative_performance: no results");
  std::vector<double> cp(std::max(horizon, 0), 0.0);
  for (const auto& r : results) {
    if (!r.found_at) continue;
    for (int t = *r.found_at; t <= horizon; ++t) cp[t - 1] += 1.0;
  }
  for (double& v : cp) v /= static_cast<double>(results.size());
  return cp;
}

MeanCurve aggregate_with_sem(const std::vector<std::vector<double>>& curves) {
  if (curves.size() < 2) throw InvalidInput("aggregate_with_sem: SEM needs at least two curves");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != len) throw InvalidInput("aggregate_with_sem: curves differ in length");
  }
  const double r = static_cast<double>(curves.size());
  MeanCurve out{std::vector<double>(len, 0.0), std::vector<double>(len, 0.0)};
  for (std::size_t t = 0; t < len; ++t) {
    double sum = 0.0;
    for (const auto& c : curves) sum += c[t];
    const double m = sum / r;
    double ss = 0.0;
    for (const auto& c : curves) ss += (c[t] - m) * (c[t] - m);
    out.mean[t] = m;
    out.sem[t] = std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double time_per_iteration(const SearchResult& result) { return mean_of(result.selection_seconds); }
double time_per_iteration(const ExploreResult& result) { return mean_of(result.selection_seconds); }

namespace {

struct TrialOutcome {
  std::vector<double> curve;
  std::vector<double> selection_seconds;
};

TrialOutcome run_one(const CampaignConfig& config, const GridGeometry& geometry, const CalibrationModel* model,
                     const PolicySpec& policy, std::size_t scene_index, int rep) {
  const auto& scene = config.scenes[scene_index];
  TrialContext ctx{scene, geometry,
                   config.logs.empty() ? emulator_source(scene, geometry, config.emulator)
                                       : log_source(config.logs[scene_index]),
                   model, config.saliency.empty() ? nullptr : &config.saliency[scene_index]};
  TrialConfig trial;
  trial.policy = policy;
  trial.max_iterations = config.horizon;
  trial.repetitions = config.repetitions;
  trial.update = config.update;
  trial.seed = trial_seed(config.seed, scene_index * static_cast<std::uint64_t>(config.repetitions) + rep);
  Rng rng(trial.seed);

  TrialOutcome out;
  if (config.kind == CampaignKind::search) {
    auto r = run_search_trial(ctx, trial, rng);
    out.curve = cumulative_performance({r}, config.horizon);
    out.selection_seconds = std::move(r.selection_seconds);
  } else {
    auto r = run_explore_trial(ctx, trial, rng);
    out.curve = r.success;
    // An exhausted trial keeps its last success rate.
    const double last = out.curve.empty() ? 0.0 : out.curve.back();
    out.curve.resize(static_cast<std::size_t>(config.horizon) + 1, last);
    out.selection_seconds = std::move(r.selection_seconds);
  }
  return out;
}

}  // namespace

void validate_campaign(const CampaignConfig& config, const CalibrationModel* model) {
  if (config.scenes.empty()) throw InvalidInput("campaign: no scenes");
  if (config.policies.empty()) throw InvalidInput("campaign: no policies");
  if (config.horizon < 1) throw InvalidInput("campaign: horizon must be >= 1");
  if (config.repetitions < 1) throw InvalidInput("campaign: repetitions must be >= 1");
  if (config.sem == SemLevel::repetition && config.repetitions < 2) {
    throw InvalidInput("campaign: repetition-level SEM needs at least two repetitions");
  }
  if (config.sem == SemLevel::image && config.scenes.size() < 2) {
    throw InvalidInput("campaign: image-level SEM needs at least two scenes");
  }
  if (!config.logs.empty() && config.logs.size() != config.scenes.size()) {
    throw InvalidInput("campaign: one detection log per scene is required");
  }
  config.emulator.validate();
  for (const auto& p : config.policies) {
    if (p.needs_model() && model == nullptr) {
      throw InvalidInput("campaign: policy " + p.label() + " needs a calibration model");
    }
    if (p.type == PolicyType::saliency && config.saliency.size() != config.scenes.size()) {
      throw InvalidInput("campaign: saliency policy needs one saliency grid per scene");
    }
  }
  if (model != nullptr && model->num_classes() != config.emulator.num_classes) {
    throw InvalidInput("campaign: calibration model and emulator disagree on K");
  }
  for (const auto& scene : config.scenes) {
    for (const auto& obj : scene.objects) {
      if (obj.cls > config.emulator.num_classes) throw InvalidInput("campaign: scene class exceeds K");
    }
  }
}

CampaignResult run_campaign(const CampaignConfig& config, const CalibrationModel* model) {
  validate_campaign(config, model);
  const GridGeometry geometry(config.scenes.front().width, config.scenes.front().height, config.grid_cols,
                              config.grid_rows);
  for (const auto& s : config.scenes) {
    if (s.width != geometry.image_width() || s.height != geometry.image_height()) {
      throw InvalidInput("campaign: all scenes must share one canvas size");
    }
  }

  const std::size_t scenes = config.scenes.size();
  const auto reps = static_cast<std::size_t>(config.repetitions);
  const std::size_t per_policy = scenes * reps;
  const std::size_t total = config.policies.size() * per_policy;
  std::vector<TrialOutcome> outcomes(total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        const std::size_t p = i / per_policy;
        const std::size_t within = i % per_policy;
        outcomes[i] = run_one(config, geometry, model, config.policies[p], within / reps,
                              static_cast<int>(within % reps));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  CampaignResult result;
  result.kind = config.kind;
  const auto horizon = static_cast<std::size_t>(config.horizon);
  // Exploration curves carry an extra leading point for the prior map.
  const std::size_t points = config.kind == CampaignKind::explore ? horizon + 1 : horizon;
  for (std::size_t p = 0; p < config.policies.size(); ++p) {
    const auto* base = &outcomes[p * per_policy];
    std::vector<std::vector<double>> curves;
    if (config.sem == SemLevel::repetition) {
      curves.assign(reps, std::vector<double>(points, 0.0));
      for (std::size_t s = 0; s < scenes; ++s) {
        for (std::size_t r = 0; r < reps; ++r) {
          const auto& c = base[s * reps + r].curve;
          for (std::size_t t = 0; t < points; ++t) curves[r][t] += c[t] / static_cast<double>(scenes);
        }
      }
    } else {
      curves.assign(scenes, std::vector<double>(points, 0.0));
      for (std::size_t s = 0; s < scenes; ++s) {
        for (std::size_t r = 0; r < reps; ++r) {
          const auto& c = base[s * reps + r].curve;
          for (std::size_t t = 0; t < points; ++t) curves[s][t] += c[t] / static_cast<double>(reps);
        }
      }
    }
    PolicyCurve pc{config.policies[p], aggregate_with_sem(curves), {}, 0.0};
    std::vector<double> time_sum(horizon, 0.0);
    std::vector<std::size_t> time_count(horizon, 0);
    double all = 0.0;
    std::size_t all_count = 0;
    for (std::size_t i = 0; i < per_policy; ++i) {
      const auto& secs = base[i].selection_seconds;
      for (std::size_t t = 0; t < secs.size() && t < horizon; ++t) {
        time_sum[t] += secs[t];
        ++time_count[t];
        all += secs[t];
        ++all_count;
      }
    }
    pc.overall_time = all_count ? all / static_cast<double>(all_count) : 0.0;
    if (config.record_timing) {
      pc.mean_time.resize(horizon, 0.0);
      for (std::size_t t = 0; t < horizon; ++t) {
        pc.mean_time[t] = time_count[t] ? time_sum[t] / static_cast<double>(time_count[t]) : 0.0;
      }
    }
    result.curves.push_back(std::move(pc));
  }
  return result;
}

std::string curve_csv(CampaignKind kind, const PolicyCurve& curve) {
  std::ostringstream out;
  out << "iteration," << (kind == CampaignKind::search ? "mean_cp" : "mean_success_rate") << ",sem,mean_time_s\n";
  char buf[64];
  // Search rows are iterations 1..horizon; exploration rows count fixations
  // from 0 (the prior map). Either way the time column holds the selection
  // made right after that row's fixation.
  const std::size_t first = kind == CampaignKind::search ? 1 : 0;
  for (std::size_t t = 0; t < curve.curve.mean.size(); ++t) {
    const std::size_t row = t + first;
    out << row;
    std::snprintf(buf, sizeof buf, ",%.10f,%.10f,", curve.curve.mean[t], curve.curve.sem[t]);
    out << buf;
    if (!curve.mean_time.empty() && row >= 1 && row - 1 < curve.mean_time.size()) {
      std::snprintf(buf, sizeof buf, "%.9e", curve.mean_time[row - 1]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fovea
