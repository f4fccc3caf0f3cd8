#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdst/model/config.hpp"
#include "hdst/noise/noise.hpp"
#include "json.hpp"

namespace hdst::app {

using model::ConfigError;

struct DataConfig {
    std::vector<std::string> clean;  // ground-truth cubes
    std::vector<std::string> noisy;  // paired with clean by position
    std::size_t patch_size = 32;
    std::size_t stride = 32;
    bool augment = false;
};

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 1;
    // (epoch, lr) breakpoints, strictly increasing epochs, first at 0
    std::vector<std::pair<std::size_t, double>> lr_schedule{{0, 1e-3}};
    std::uint64_t seed = 0;
    std::string checkpoint = "model.ckpt";
    std::string resume;  // checkpoint to continue from, empty for a fresh start
    std::size_t checkpoint_every = 50;
    std::string log = "train_log.csv";
};

struct DenoiseConfig {
    std::string checkpoint = "model.ckpt";
    std::vector<std::string> inputs;
    std::size_t tile = 64;
    std::size_t overlap = 16;
};

struct EvalConfig {
    std::optional<double> peak;  // default: max of each ground-truth cube
    std::vector<std::string> estimates;
    std::vector<std::string> truths;
    std::string report = "report.json";
};

struct InspectConfig {
    std::size_t height = 64;
    std::size_t width = 64;
};

/// One configuration file drives every command. Relative output paths are
/// resolved against `out`.
struct RunConfig {
    model::ModelConfig model = model::ModelConfig::toy();
    DataConfig data;
    noise::NoiseSpec noise;
    TrainConfig train;
    DenoiseConfig denoise;
    EvalConfig eval;
    InspectConfig inspect;
    std::string out = ".";

    /// Throws ConfigError naming the field.
    void validate() const;
    /// `out / p` unless p is absolute.
    std::string output_path(const std::string& p) const;
};

nlohmann::json to_json(const RunConfig& c);
/// Sections and fields missing from `j` keep their defaults; unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Applies "a.b.c=value" to a JSON document. `value` is parsed as JSON when
/// it is valid JSON and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Config file (or defaults when `path` is empty), then overrides, then
/// `seed` copied into noise.seed and train.seed.
RunConfig resolve_run_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed, std::optional<std::string> out);

}  // namespace hdst::app
