#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fovea/calibration.hpp"
#include "fovea/harness.hpp"
#include "fovea/simworld.hpp"

namespace fovea {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitTrialError = 2;

/// count scenes seeded per index, so scene i does not depend on count.
std::vector<SceneSpec> generate_scenes(const SceneGenConfig& config, std::size_t count, std::uint64_t seed);

/// Writes scene_NNNN.json files plus manifest.json into out_dir.
void gen_scenes(const SceneGenConfig& config, std::size_t count, std::uint64_t seed,
                const std::filesystem::path& out_dir);

/// Loads every *.json scene in a directory (manifest.json excluded), sorted by name.
std::vector<SceneSpec> load_scene_dir(const std::filesystem::path& dir, std::vector<std::string>* stems = nullptr);

/// Trains from emulator-generated records with the given seed.
CalibrationModel fit_from_emulator(const EmulatorConfig& emulator, std::size_t records, const EccentricityBins& bins,
                                   std::uint64_t seed);

/// A campaign config file resolved into runnable form.
struct LoadedCampaign {
  CampaignConfig config;
  std::optional<CalibrationModel> model;
  /// Echo of the inputs for the manifest.
  nlohmann::json manifest;
};

/// Parses a campaign JSON. Relative paths resolve against base_dir. A seed
/// passed here overrides the file's seed. Errors are InvalidInput.
LoadedCampaign load_campaign(const nlohmann::json& j, const std::filesystem::path& base_dir,
                             std::optional<std::uint64_t> seed_override, CampaignKind kind);

/// Writes one CSV per policy plus manifest.json.
void write_campaign(const LoadedCampaign& campaign, const CampaignResult& result, const std::filesystem::path& out_dir);

/// Summary table over a campaign output directory.
std::string report_csv(const std::filesystem::path& in_dir);

/// Full command-line entry point; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fovea
