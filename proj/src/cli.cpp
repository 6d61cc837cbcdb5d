#include "fovea/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fovea/error.hpp"

namespace fovea {

namespace fs = std::filesystem;

namespace {

// Independent RNG streams derived from the one user-facing seed.
constexpr std::uint64_t kSceneStream = 0x5343454e45ULL;
constexpr std::uint64_t kTrainStream = 0x545241494eULL;

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidInput("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create directory " + dir.string());
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

EccentricityBins bins_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return EccentricityBins::uniform(j.get<int>());
  return EccentricityBins(j.at("edges").get<std::vector<double>>());
}

SceneGenConfig scene_gen_from_json(const nlohmann::json& j, int num_classes) {
  SceneGenConfig c;
  c.num_classes = num_classes;
  if (j.contains("canvas")) {
    c.width = j.at("canvas").at(0).get<double>();
    c.height = j.at("canvas").at(1).get<double>();
  }
  c.min_objects = j.value("min_objects", c.min_objects);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.max_targets = j.value("max_targets", c.max_targets);
  c.target_area_cap = j.value("target_area_cap", c.target_area_cap);
  c.min_side = j.value("min_side", c.min_side);
  c.max_side = j.value("max_side", c.max_side);
  return c;
}

}  // namespace

std::vector<SceneSpec> generate_scenes(const SceneGenConfig& config, std::size_t count, std::uint64_t seed) {
  std::vector<SceneSpec> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(trial_seed(seed ^ kSceneStream, i));
    scenes.push_back(generate_scene(config, rng));
  }
  return scenes;
}

void gen_scenes(const SceneGenConfig& config, std::size_t count, std::uint64_t seed, const fs::path& out_dir) {
  const auto scenes = generate_scenes(config, count, seed);
  ensure_dir(out_dir);
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu.json", i);
    write_text(out_dir / name, scene_to_json(scenes[i]).dump(2) + "\n");
    files.push_back(name);
  }
  const nlohmann::json manifest = {{"count", count},
                                   {"K", config.num_classes},
                                   {"canvas", {config.width, config.height}},
                                   {"seed", seed},
                                   {"files", std::move(files)}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<SceneSpec> load_scene_dir(const fs::path& dir, std::vector<std::string>* stems) {
  if (!fs::is_directory(dir)) throw InvalidInput("scene directory not found: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() == ".json" && p.filename() != "manifest.json") paths.push_back(p);
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SceneSpec> scenes;
  for (const auto& p : paths) {
    try {
      auto scene = scene_from_json(read_json_file(p));
      validate_scene(scene);
      scenes.push_back(std::move(scene));
    } catch (const InvalidInput& e) {
      throw InvalidInput(p.string() + ": " + e.what());
    }
    if (stems) stems->push_back(p.stem().string());
  }
  return scenes;
}

CalibrationModel fit_from_emulator(const EmulatorConfig& emulator, std::size_t records, const EccentricityBins& bins,
                                   std::uint64_t seed) {
  Rng rng(trial_seed(seed ^ kTrainStream, 0));
  const auto data = generate_training_records(emulator, records, rng);
  return train(data, emulator.num_classes, bins);
}

LoadedCampaign load_campaign(const nlohmann::json& j, const fs::path& base_dir,
                             std::optional<std::uint64_t> seed_override, CampaignKind kind) {
  try {
    LoadedCampaign out;
    auto& c = out.config;
    c.kind = kind;
    c.seed = seed_override ? *seed_override : j.value("seed", std::uint64_t{0});
    const int num_classes = j.value("K", 5);
    const auto bins = j.contains("bins") ? bins_from_json(j.at("bins")) : EccentricityBins::uniform(5);

    if (j.contains("emulator")) {
      const auto& e = j.at("emulator");
      c.emulator = e.is_string() ? emulator_from_json(read_json_file(resolve(base_dir, e.get<std::string>())))
                                 : emulator_from_json(e);
    } else {
      c.emulator = EmulatorConfig::defaults(num_classes, bins.num_levels());
    }
    if (c.emulator.num_classes != num_classes) throw InvalidInput("campaign: emulator K differs from K");

    std::vector<std::string> stems;
    if (j.contains("scenes")) {
      c.scenes = load_scene_dir(resolve(base_dir, j.at("scenes").get<std::string>()), &stems);
    } else if (j.contains("generate")) {
      const auto& g = j.at("generate");
      const auto count = g.value("count", std::size_t{100});
      c.scenes = generate_scenes(scene_gen_from_json(g, num_classes), count, c.seed);
      for (std::size_t i = 0; i < count; ++i) stems.push_back("scene_" + std::to_string(i));
    } else {
      throw InvalidInput("campaign: need 'scenes' (directory) or 'generate'");
    }
    if (c.scenes.empty()) throw InvalidInput("campaign: no scenes found");

    if (j.contains("grid")) {
      c.grid_cols = j.at("grid").at(0).get<int>();
      c.grid_rows = j.at("grid").at(1).get<int>();
    }
    const GridGeometry geometry(c.scenes.front().width, c.scenes.front().height, c.grid_cols, c.grid_rows);

    if (j.contains("logs")) {
      const auto dir = resolve(base_dir, j.at("logs").get<std::string>());
      for (const auto& stem : stems) c.logs.push_back(load_detection_log(dir / (stem + ".jsonl")));
    }
    for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_json(p));
    if (j.contains("saliency")) {
      const auto dir = resolve(base_dir, j.at("saliency").get<std::string>());
      for (const auto& stem : stems) {
        const auto csv = dir / (stem + ".csv");
        c.saliency.push_back(load_saliency(fs::exists(csv) ? csv : dir / (stem + ".pgm"), geometry));
      }
    }
    c.horizon = j.value("horizon", 30);
    c.repetitions = j.value("repetitions", 10);
    c.update.min_overlap_fraction = j.value("min_overlap_fraction", 0.0);
    const auto sem = j.value("sem", std::string("repetition"));
    if (sem == "repetition") {
      c.sem = SemLevel::repetition;
    } else if (sem == "image") {
      c.sem = SemLevel::image;
    } else {
      throw InvalidInput("campaign: sem must be 'repetition' or 'image'");
    }
    c.record_timing = j.value("timing", false);

    nlohmann::json calibration_echo = nullptr;
    if (j.contains("calibration")) {
      const auto& cal = j.at("calibration");
      if (cal.is_string()) {
        out.model = model_from_json(read_json_file(resolve(base_dir, cal.get<std::string>())));
        calibration_echo = cal;
      } else {
        const auto records = cal.value("records", std::size_t{100000});
        const auto model_bins = cal.contains("bins") ? bins_from_json(cal.at("bins")) : bins;
        out.model = fit_from_emulator(c.emulator, records, model_bins, c.seed);
        calibration_echo = {{"emulate", true}, {"records", records}, {"bins", model_bins.edges()}};
      }
    }

    nlohmann::json policies = nlohmann::json::array();
    for (const auto& p : c.policies) policies.push_back(policy_to_json(p));
    out.manifest = {{"kind", kind == CampaignKind::search ? "search" : "explore"},
                    {"seed", c.seed},
                    {"K", num_classes},
                    {"grid", {c.grid_cols, c.grid_rows}},
                    {"horizon", c.horizon},
                    {"repetitions", c.repetitions},
                    {"scenes", c.scenes.size()},
                    {"scene_source", j.contains("scenes") ? j.at("scenes") : j.at("generate")},
                    {"logs", j.contains("logs")},
                    {"sem", sem},
                    {"calibration", calibration_echo},
                    {"emulator", emulator_to_json(c.emulator)},
                    {"policies", std::move(policies)}};
    validate_campaign(c, out.model ? &*out.model : nullptr);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("campaign config: ") + e.what());
  }
}

void write_campaign(const LoadedCampaign& campaign, const CampaignResult& result, const fs::path& out_dir) {
  ensure_dir(out_dir);
  nlohmann::json manifest = campaign.manifest;
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& curve : result.curves) {
    const auto file = curve.policy.label() + ".csv";
    write_text(out_dir / file, curve_csv(result.kind, curve));
    nlohmann::json entry = {{"policy", policy_to_json(curve.policy)}, {"label", curve.policy.label()}, {"csv", file}};
    if (campaign.config.record_timing) entry["mean_time_s"] = curve.overall_time;
    outputs.push_back(std::move(entry));
  }
  manifest["outputs"] = std::move(outputs);
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string report_csv(const fs::path& in_dir) {
  const auto manifest = read_json_file(in_dir / "manifest.json");
  std::ostringstream out;
  out << "policy,at_5,at_15,at_final,max_sem,mean_time_s\n";
  char buf[64];
  for (const auto& entry : manifest.at("outputs")) {
    std::ifstream in(in_dir / entry.at("csv").get<std::string>());
    if (!in) throw InvalidInput("missing " + entry.at("csv").get<std::string>());
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> mean;
    long first_row = -1;
    double max_sem = 0.0;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string iteration, m, sem;
      std::getline(ss, iteration, ',');
      std::getline(ss, m, ',');
      std::getline(ss, sem, ',');
      if (first_row < 0) first_row = std::stol(iteration);
      mean.push_back(std::stod(m));
      max_sem = std::max(max_sem, std::stod(sem));
    }
    if (mean.empty()) throw InvalidInput("empty curve in " + entry.at("csv").get<std::string>());
    // Rows are keyed by their iteration value, which starts at 0 for exploration.
    auto at = [&](long t) {
      const long i = std::clamp(t - first_row, 0L, static_cast<long>(mean.size()) - 1);
      return mean[static_cast<std::size_t>(i)];
    };
    out << entry.at("label").get<std::string>();
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f,%.4f,", at(5), at(15), mean.back(), max_sem);
    out << buf;
    if (entry.contains("mean_time_s")) {
      std::snprintf(buf, sizeof buf, "%.6e", entry.at("mean_time_s").get<double>());
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::pair<double, double> parse_canvas(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw InvalidInput("--canvas must look like WxH");
  try {
    return {std::stod(s.substr(0, x)), std::stod(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw InvalidInput("--canvas must look like WxH");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic active-perception engine: Dirichlet maps, foveal calibration, gaze policies", "fovea"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-scenes", "Generate synthetic search scenes");
  std::size_t count = 100;
  int classes = 5;
  std::string canvas = "640x480";
  std::string out_path;
  gen->add_option("--count", count, "Number of scenes")->capture_default_str();
  gen->add_option("--classes", classes, "Number of object classes K")->capture_default_str();
  gen->add_option("--canvas", canvas, "Canvas size WxH")->capture_default_str();
  gen->add_option("--seed", seed, "Random seed")->capture_default_str();
  gen->add_option("--out", out_path, "Output directory")->required();

  auto* gen_train = app.add_subcommand("gen-train", "Generate labelled training records from the emulator");
  std::string emulator_path;
  std::size_t record_count = 100000;
  gen_train->add_option("--emulator", emulator_path, "Emulator config JSON (defaults if omitted)");
  gen_train->add_option("--count", record_count, "Number of records")->capture_default_str();
  gen_train->add_option("--seed", seed, "Random seed")->capture_default_str();
  gen_train->add_option("--out", out_path, "Output JSON-lines file")->required();

  auto* fit = app.add_subcommand("fit-calib", "Fit the foveal observation model");
  std::string records_path;
  bool emulate = false;
  int levels = 5;
  auto* records_opt = fit->add_option("--records", records_path, "Training records (JSON lines)");
  auto* emulate_flag = fit->add_flag("--emulate", emulate, "Train on emulator-generated records");
  records_opt->excludes(emulate_flag);
  fit->add_option("--emulator", emulator_path, "Emulator config JSON for --emulate");
  fit->add_option("--count", record_count, "Records to generate with --emulate")->capture_default_str();
  fit->add_option("--bins", levels, "Number of uniform distance levels")->capture_default_str();
  fit->add_option("--seed", seed, "Random seed")->capture_default_str();
  fit->add_option("--out", out_path, "Output model JSON")->required();

  std::string config_path;
  int jobs = 1;
  bool timing = false;
  std::optional<std::uint64_t> seed_override;
  auto add_campaign = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Campaign config JSON")->required();
    sub->add_option("--jobs", jobs, "Parallel trials")->capture_default_str();
    sub->add_option("--seed", seed_override, "Override the config seed");
    sub->add_flag("--timing", timing, "Record per-iteration policy cost in the CSVs");
    sub->add_option("--out", out_path, "Output directory")->required();
    return sub;
  };
  auto* search = add_campaign("run-search", "Run a visual-search campaign");
  auto* explore = add_campaign("run-explore", "Run a scene-exploration campaign");

  auto* report = app.add_subcommand("report", "Summarize a campaign output directory");
  std::string in_dir;
  std::string format = "csv";
  report->add_option("--in", in_dir, "Campaign output directory")->required();
  report->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv"}))->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfigError;
  }

  try {
    if (gen->parsed()) {
      const auto [w, h] = parse_canvas(canvas);
      SceneGenConfig config;
      config.num_classes = classes;
      config.width = w;
      config.height = h;
      gen_scenes(config, count, seed, out_path);
      out << "wrote " << count << " scenes to " << out_path << "\n";
      return kExitOk;
    }
    auto load_emulator = [&] {
      return emulator_path.empty() ? EmulatorConfig::defaults() : emulator_from_json(read_json_file(emulator_path));
    };
    if (gen_train->parsed()) {
      const auto emulator = load_emulator();
      Rng rng(trial_seed(seed ^ kTrainStream, 0));
      const auto records = generate_training_records(emulator, record_count, rng);
      std::ofstream f(out_path);
      if (!f) throw InvalidInput("cannot write " + out_path);
      write_training_records(f, records);
      out << "wrote " << records.size() << " records to " << out_path << "\n";
      return kExitOk;
    }
    if (fit->parsed()) {
      if (records_path.empty() && !emulate) throw InvalidInput("fit-calib needs --records or --emulate");
      const auto bins = EccentricityBins::uniform(levels);
      std::optional<CalibrationModel> model;
      if (emulate) {
        model = fit_from_emulator(load_emulator(), record_count, bins, seed);
      } else {
        std::ifstream f(records_path);
        if (!f) throw InvalidInput("cannot open " + records_path);
        const auto records = read_training_records(f);
        int k = 1;
        for (const auto& r : records) k = std::max(k, r.true_class);
        if (!records.empty()) k = std::max(k, static_cast<int>(records.front().scores.size()) - 1);
        model = train(records, k, bins);
      }
      write_text(out_path, serialize_model(*model));
      out << backoff_report(*model);
      return kExitOk;
    }
    if (search->parsed() || explore->parsed()) {
      const fs::path cfg(config_path);
      const auto kind = search->parsed() ? CampaignKind::search : CampaignKind::explore;
      auto campaign = load_campaign(read_json_file(cfg), cfg.parent_path(), seed_override, kind);
      campaign.config.jobs = jobs;
      if (timing) campaign.config.record_timing = true;
      CampaignResult result;
      try {
        result = run_campaign(campaign.config, campaign.model ? &*campaign.model : nullptr);
      } catch (const std::exception& e) {
        err << "trial error: " << e.what() << "\n";
        return kExitTrialError;
      }
      write_campaign(campaign, result, out_path);
      out << "wrote " << result.curves.size() << " curves to " << out_path << "\n";
      return kExitOk;
    }
    if (report->parsed()) {
      out << report_csv(in_dir);
      return kExitOk;
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitTrialError;
  }
  return kExitConfigError;
}

}  // namespace fovea
