// hdst: noise synthesis, training, denoising, evaluation and model inspection.
//
// Exit codes: 0 ok, 2 configuration / usage, 3 file I/O, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdst/app/commands.hpp"
#include "hdst/app/run_config.hpp"
#include "hdst/noise/cube.hpp"
#include "hdst/noise/noise.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, io_error = 3, numeric_error = 4 };

}  // namespace

int main(int argc, char** argv) {
    using namespace hdst;
    CLI::App app{"Hyperspectral denoising: synthesize, train, denoise, evaluate, inspect"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override a config field, key.path=value (repeatable)");
    app.add_option("--seed", seed, "seed for noise and training");
    app.add_option("--out", out, "output directory");

    auto* synth = app.add_subcommand("synthesize", "add seeded synthetic noise to clean cubes");
    std::string manifest;
    synth->add_option("--from-manifest", manifest, "regenerate the cubes listed in a manifest into --out");

    auto* train = app.add_subcommand("train", "fit the model on paired noisy/clean patches");

    auto* denoise = app.add_subcommand("denoise", "run a trained checkpoint over cubes");
    std::vector<std::string> denoise_inputs;
    std::string checkpoint;
    denoise->add_option("inputs", denoise_inputs, "cubes to denoise (added to denoise.inputs)");
    denoise->add_option("--checkpoint", checkpoint, "checkpoint manifest");

    auto* evaluate = app.add_subcommand("evaluate", "PSNR / SSIM / SAM of estimates against ground truth");
    std::vector<std::string> eval_pairs;
    evaluate->add_option("pairs", eval_pairs, "ESTIMATE TRUTH [ESTIMATE TRUTH ...]");

    auto* inspect = app.add_subcommand("inspect", "parameter and MAC table for the ablation variants");

    auto* pgm = app.add_subcommand("export-pgm", "write each band as a 16-bit binary PGM");
    std::string pgm_cube;
    double pgm_peak = 1.0;
    pgm->add_option("cube", pgm_cube, "HDC1 cube")->required();
    pgm->add_option("--peak", pgm_peak, "value mapped to 65535");

    auto* raw = app.add_subcommand("convert-raw", "convert flat raw scalars with a JSON sidecar to HDC1");
    std::string raw_in, raw_sidecar, raw_out;
    raw->add_option("raw", raw_in)->required();
    raw->add_option("sidecar", raw_sidecar)->required();
    raw->add_option("output", raw_out)->required();

    auto* scene = app.add_subcommand("scene", "write a deterministic smooth synthetic scene");
    std::string scene_out;
    std::size_t scene_bands = 4, scene_h = 32, scene_w = 32;
    std::uint64_t scene_seed = 7;
    scene->add_option("output", scene_out)->required();
    scene->add_option("--bands", scene_bands);
    scene->add_option("--height", scene_h);
    scene->add_option("--width", scene_w);
    scene->add_option("--scene-seed", scene_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    const auto log = app::stderr_logger();
    try {
        if (*pgm) {
            const auto cube = noise::load_cube(pgm_cube);
            const auto paths = app::export_pgm(cube, out.value_or("."), std::filesystem::path(pgm_cube).stem().string(), pgm_peak);
            log("wrote " + std::to_string(paths.size()) + " PGM files");
            return ok;
        }
        if (*raw) {
            noise::save_cube(noise::convert_raw(raw_in, raw_sidecar), raw_out);
            log("wrote " + raw_out);
            return ok;
        }
        if (*scene) {
            noise::save_cube(noise::synthetic_scene(scene_bands, scene_h, scene_w, scene_seed), scene_out);
            log("wrote " + scene_out);
            return ok;
        }

        if (!checkpoint.empty()) overrides.push_back("denoise.checkpoint=\"" + checkpoint + "\"");
        app::RunConfig cfg = app::resolve_run_config(config_path, overrides, seed, out);
        for (const auto& in : denoise_inputs) cfg.denoise.inputs.push_back(in);
        if (eval_pairs.size() % 2) throw app::ConfigError("evaluate: positional arguments must be ESTIMATE TRUTH pairs");
        for (std::size_t i = 0; i < eval_pairs.size(); i += 2) {
            cfg.eval.estimates.push_back(eval_pairs[i]);
            cfg.eval.truths.push_back(eval_pairs[i + 1]);
        }

        if (*synth) {
            if (!manifest.empty()) app::regenerate_from_manifest(manifest, cfg.out, log);
            else app::cmd_synthesize(cfg, log);
        } else if (*train) {
            const auto r = app::cmd_train(cfg, log);
            std::printf("initial_loss %.9g\nfinal_loss %.9g\nsteps %zu\n", r.initial_loss, r.final_loss, r.steps);
        } else if (*denoise) {
            app::cmd_denoise(cfg, log);
        } else if (*evaluate) {
            std::cout << app::cmd_evaluate(cfg, log).table;
        } else if (*inspect) {
            app::cmd_inspect(cfg, log);
        }
        return ok;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return numeric_error;
    } catch (const std::domain_error& e) {  // undefined metric
        std::cerr << "error: " << e.what() << '\n';
        return numeric_error;
    } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError, bad specs
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    }
}
