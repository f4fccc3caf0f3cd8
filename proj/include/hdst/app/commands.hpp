#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hdst/app/run_config.hpp"
#include "hdst/metrics/metrics.hpp"
#include "hdst/model/hdst.hpp"
#include "hdst/noise/cube.hpp"

namespace hdst::app {

/// Diagnostics sink for warnings and progress; defaults to stderr.
using Logger = std::function<void(const std::string&)>;
Logger stderr_logger();

// ---- synthesize ------------------------------------------------------------

struct SynthesisEntry {
    std::string clean;
    std::string noisy;
    noise::NoiseSpec spec;  // seed already specialized for this cube
    std::uint64_t clean_fnv = 0;
    std::uint64_t noisy_fnv = 0;
};

/// Each clean cube i gets noise.seed specialized as derive(noise.seed, i) and
/// is written to out/<stem>_noisy.hdc. The manifest (out/manifest.json) lists
/// every spec, checksum and the full per-band realization.
std::vector<SynthesisEntry> cmd_synthesize(const RunConfig& cfg, const Logger& log = stderr_logger());

/// Re-applies every manifest entry and writes the cubes to `out_dir` (the
/// recorded names, relocated). Throws NumericError when a clean cube no longer
/// matches its recorded checksum.
std::vector<SynthesisEntry> regenerate_from_manifest(const std::string& manifest_path, const std::string& out_dir,
                                                     const Logger& log = stderr_logger());

// ---- train -----------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;  // mean batch loss, before the epoch's updates
};

struct TrainResult {
    std::vector<EpochRecord> epochs;  // epochs run by this call
    double initial_loss = 0.0;        // first logged epoch loss
    double final_loss = 0.0;          // full-pass loss after the last update
    std::size_t steps = 0;
    std::string checkpoint;
};

/// Adam on mean squared error over paired noisy/clean patches. One epoch is
/// one pass over every patch, batched in an order drawn from
/// derive(train.seed, epoch). A checkpoint is written only for states whose
/// loss has been observed finite; a non-finite loss aborts with NumericError
/// and leaves the previous checkpoint file in place.
TrainResult cmd_train(const RunConfig& cfg, const Logger& log = stderr_logger());

// ---- denoise ---------------------------------------------------------------

/// Overlapping tiles of `tile` pixels sharing `overlap` pixels, averaged
/// uniformly where they overlap. A cube no larger than a tile takes one pass.
noise::HsiCube denoise_cube(const model::HdstModel& model, const noise::HsiCube& cube, std::size_t tile,
                            std::size_t overlap);

/// Writes out/<stem>_denoised.hdc for every input. Returns the written paths.
std::vector<std::string> cmd_denoise(const RunConfig& cfg, const Logger& log = stderr_logger());

// ---- evaluate --------------------------------------------------------------

struct EvaluationResult {
    std::vector<metrics::MetricReport> pairs;
    double mean_psnr = 0.0, mean_ssim = 0.0, mean_sam = 0.0;  // means of per-pair means
    nlohmann::ordered_json json;
    std::string table;
};

/// Writes eval.report (JSON) and the same path with a .txt extension (table).
EvaluationResult cmd_evaluate(const RunConfig& cfg, const Logger& log = stderr_logger());

// ---- inspect ---------------------------------------------------------------

struct VariantRow {
    std::string name;
    model::AblationFlags flags;
    std::size_t params = 0;
    std::uint64_t macs = 0;
};

std::vector<VariantRow> inspect_variants(const model::ModelConfig& base, std::size_t height, std::size_t width);
std::string format_inspect_table(const std::vector<VariantRow>& rows, std::size_t height, std::size_t width);
/// Prints the table and writes out/inspect.json.
std::vector<VariantRow> cmd_inspect(const RunConfig& cfg, const Logger& log = stderr_logger());

// ---- export ----------------------------------------------------------------

/// One binary 16-bit PGM (P5, maxval 65535, big-endian samples) per band,
/// values clamped to [0, peak] and scaled to [0, 65535].
std::vector<std::string> export_pgm(const noise::HsiCube& cube, const std::string& out_dir, const std::string& stem,
                                    double peak = 1.0);

std::uint64_t file_fnv1a64(const std::string& path);

}  // namespace hdst::app
