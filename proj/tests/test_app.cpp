#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hdst/app/commands.hpp"
#include "hdst/app/run_config.hpp"
#include "hdst/model/checkpoint.hpp"
#include "hdst/noise/noise.hpp"

using namespace hdst;
using namespace hdst::app;
namespace fs = std::filesystem;
using noise::HsiCube;

namespace {

const std::string kClean = HDST_TEST_DATA_DIR "/fixture_clean.hdc";
const std::string kNoisy = HDST_TEST_DATA_DIR "/fixture_noisy.hdc";

std::string scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("hdst_test_app_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Capture {
    std::vector<std::string> lines;
    Logger logger() {
        return [this](const std::string& s) { lines.push_back(s); };
    }
    bool any(const std::string& needle) const {
        for (const auto& l : lines)
            if (l.find(needle) != std::string::npos) return true;
        return false;
    }
};

// Small training setup on the fixture pair: four 16x16 patches, one batch.
RunConfig train_config(const std::string& out) {
    RunConfig c;
    c.out = out;
    c.data.clean = {kClean};
    c.data.noisy = {kNoisy};
    c.data.patch_size = 16;
    c.data.stride = 16;
    c.train.batch_size = 4;
    c.train.epochs = 4;
    c.train.seed = 5;
    c.train.checkpoint_every = 1;
    return c;
}

std::vector<std::string> csv_rows(const std::string& path) {
    std::istringstream in(slurp(path));
    std::vector<std::string> rows;
    for (std::string l; std::getline(in, l);) rows.push_back(l);
    return rows;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HDST_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---- configuration ---------------------------------------------------------

TEST_CASE("run config: defaults validate and survive a JSON round trip") {
    RunConfig c;
    c.train.lr_schedule = {{0, 1e-4}, {200, 5e-5}};
    c.eval.peak = 2.5;
    c.validate();
    const RunConfig back = run_config_from_json(to_json(c));
    CHECK(to_json(back).dump() == to_json(c).dump());
}

TEST_CASE("run config: unknown keys and bad schedules are rejected") {
    CHECK_THROWS_AS(run_config_from_json({{"trian", nlohmann::json::object()}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"train", {{"epoch", 3}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"noise", {{"sigma", 0.1}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json({{"eval", {{"peak", "auto"}}}}), ConfigError);

    RunConfig c;
    c.train.lr_schedule = {{0, 1e-3}, {10, 1e-4}, {10, 1e-5}};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.train.lr_schedule = {{5, 1e-3}};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.train.lr_schedule = {{0, -1.0}};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("run config: overrides, scalar schedule and seed") {
    nlohmann::json doc = nlohmann::json::object();
    apply_override(doc, "train.epochs=7");
    apply_override(doc, "train.lr_schedule=[[0,0.001],[3,0.0001]]");
    apply_override(doc, "train.checkpoint=run/a.ckpt");
    apply_override(doc, "noise.pattern=stripe");
    CHECK(doc["train"]["epochs"] == 7);
    CHECK(doc["train"]["checkpoint"] == "run/a.ckpt");
    CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "train..epochs=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "train.epochs.x=1"), ConfigError);

    const RunConfig c = resolve_run_config("", {"train.epochs=7", "train.lr_schedule=0.01"}, 42, std::string("o"));
    CHECK(c.train.epochs == 7);
    REQUIRE(c.train.lr_schedule.size() == 1);
    CHECK(c.train.lr_schedule[0].second == 0.01);
    CHECK(c.noise.seed == 42);
    CHECK(c.train.seed == 42);
    CHECK(c.output_path("x.hdc") == (fs::path("o") / "x.hdc").string());
}

// ---- synthesize ------------------------------------------------------------

TEST_CASE("synthesize: reruns are byte-identical and the manifest regenerates them") {
    RunConfig c;
    c.data.clean = {kClean};
    c.noise.pattern = noise::NoisePattern::mixture;
    c.noise.affected_band_fraction = 0.5;
    c.noise.seed = 3;
    const std::string dir_a = scratch("synth_a"), dir_b = scratch("synth_b");
    c.out = dir_a;
    const auto a = cmd_synthesize(c, Capture{}.logger());
    c.out = dir_b;
    const auto b = cmd_synthesize(c, Capture{}.logger());
    REQUIRE(a.size() == 1);
    CHECK(slurp(a[0].noisy) == slurp(b[0].noisy));
    CHECK(slurp(dir_a + "/manifest.json") == slurp(dir_b + "/manifest.json"));

    const auto m = nlohmann::json::parse(slurp(c.output_path("manifest.json")));
    const auto& bands = m["entries"][0]["realization"]["bands"];
    REQUIRE(bands.size() == 4);
    std::size_t with_sub = 0;
    for (const auto& band : bands) with_sub += band.at("sub_pattern") != "none";
    CHECK(with_sub == 2);

    const std::string regen = scratch("synth_regen");
    const auto r = regenerate_from_manifest(c.output_path("manifest.json"), regen, Capture{}.logger());
    REQUIRE(r.size() == 1);
    CHECK(slurp(r[0].noisy) == slurp(a[0].noisy));
}

TEST_CASE("synthesize: a changed clean cube fails manifest regeneration") {
    const std::string dir = scratch("synth_tamper");
    const std::string clean = dir + "/clean.hdc";
    fs::copy_file(kClean, clean);
    RunConfig c;
    c.data.clean = {clean};
    c.out = dir;
    cmd_synthesize(c, Capture{}.logger());
    HsiCube cube = noise::load_cube(clean);
    cube.data[0] += 0.25f;
    noise::save_cube(cube, clean);
    CHECK_THROWS_AS(regenerate_from_manifest(dir + "/manifest.json", dir + "/regen", Capture{}.logger()), NumericError);
}

TEST_CASE("synthesize: zero sigma adds no noise and warns") {
    RunConfig c;
    c.data.clean = {kClean};
    c.noise.sigma_range = {0.0, 0.0};
    c.out = scratch("synth_zero");
    Capture log;
    const auto e = cmd_synthesize(c, log.logger());
    CHECK(noise::load_cube(e[0].noisy) == noise::load_cube(kClean));
    CHECK(log.any("adds no noise"));
}

// ---- train -----------------------------------------------------------------

TEST_CASE("train: a zero learning rate leaves every parameter unchanged") {
    RunConfig c = train_config(scratch("train_lr0"));
    c.train.epochs = 3;
    c.train.lr_schedule = {{0, 0.0}};
    cmd_train(c, Capture{}.logger());
    const auto ck = model::read_checkpoint(c.output_path(c.train.checkpoint));
    const model::HdstModel fresh(c.model);
    for (const auto& p : fresh.parameters()) {
        const Tensor& stored = ck.params.at(p.name);
        REQUIRE(stored.numel() == p.var.value().numel());
        for (std::size_t i = 0; i < stored.numel(); ++i) REQUIRE(stored[i] == p.var.value()[i]);
    }
}

TEST_CASE("train: loss falls and the CSV log has one row per epoch") {
    RunConfig c = train_config(scratch("train_log"));
    const auto r = cmd_train(c, Capture{}.logger());
    CHECK(r.epochs.size() == 4);
    CHECK(r.steps == 4);
    CHECK(r.final_loss < r.initial_loss);
    const auto rows = csv_rows(c.output_path(c.train.log));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "epoch,step,lr,loss");
    CHECK(rows[1].rfind("0,1,", 0) == 0);
}

TEST_CASE("train: resuming reproduces the uninterrupted trajectory bit for bit") {
    RunConfig full = train_config(scratch("train_full"));
    full.train.epochs = 6;
    full.data.augment = true;
    full.train.batch_size = 2;
    cmd_train(full, Capture{}.logger());

    RunConfig part = train_config(scratch("train_part"));
    part.train.epochs = 3;
    part.data.augment = true;
    part.train.batch_size = 2;
    cmd_train(part, Capture{}.logger());
    part.train.resume = part.output_path(part.train.checkpoint);
    part.train.epochs = 6;
    part.train.checkpoint = "resumed.ckpt";
    cmd_train(part, Capture{}.logger());

    CHECK(csv_rows(full.output_path(full.train.log)) == csv_rows(part.output_path(part.train.log)));
    CHECK(slurp(full.output_path("model.ckpt.bin")) == slurp(part.output_path("resumed.ckpt.bin")));
}

TEST_CASE("train: a diverging run aborts and keeps the last finite checkpoint") {
    RunConfig c = train_config(scratch("train_nan"));
    c.train.epochs = 10;
    c.train.lr_schedule = {{0, 1e-3}, {2, 1e300}};
    std::string message;
    try {
        cmd_train(c, Capture{}.logger());
    } catch (const NumericError& e) {
        message = e.what();
    }
    REQUIRE(!message.empty());
    CHECK(message.find("last good checkpoint") != std::string::npos);
    const auto ck = model::read_checkpoint(c.output_path(c.train.checkpoint));
    CHECK(ck.meta.at("epoch") == "2");
    for (const auto& [name, t] : ck.params) CHECK(t.all_finite());
    model::HdstModel net = model::model_from_checkpoint(ck);
    CHECK(net.forward(noise::to_tensor(noise::load_cube(kNoisy))).all_finite());
}

// ---- denoise ---------------------------------------------------------------

TEST_CASE("denoise: a tile covering the cube matches one direct forward pass") {
    const model::HdstModel net(model::ModelConfig::toy(4));
    const HsiCube cube = noise::load_cube(kNoisy);
    const HsiCube tiled = denoise_cube(net, cube, 64, 8);
    const Tensor direct = net.forward(noise::to_tensor(cube));
    REQUIRE(tiled.data.size() == direct.numel());
    for (std::size_t i = 0; i < direct.numel(); ++i) REQUIRE(tiled.data[i] == static_cast<float>(direct[i]));
}

TEST_CASE("denoise: a zero output conv makes overlapping tiles reproduce the input") {
    model::HdstModel net(model::ModelConfig::toy(4));
    for (Variable v : {net.tail().weight.var, net.tail().bias.var}) v.mutable_value().fill(0.0);
    const HsiCube cube = noise::load_cube(kNoisy);
    CHECK(denoise_cube(net, cube, 16, 4) == cube);
    CHECK(denoise_cube(net, cube, 24, 8) == cube);
}

TEST_CASE("denoise: band mismatch between checkpoint and cube") {
    const model::HdstModel net(model::ModelConfig::toy(5));
    CHECK_THROWS_AS(denoise_cube(net, noise::load_cube(kNoisy), 32, 8), ShapeError);
}

// ---- evaluate --------------------------------------------------------------

TEST_CASE("evaluate: fixture report matches the golden file byte for byte") {
    RunConfig c;
    c.eval.estimates = {kNoisy};
    c.eval.truths = {kClean};
    c.out = scratch("eval_golden");
    cmd_evaluate(c, Capture{}.logger());
    CHECK(slurp(c.output_path("report.json")) == slurp(HDST_TEST_DATA_DIR "/fixture_report.json"));
    CHECK(fs::exists(c.output_path("report.txt")));
}

TEST_CASE("evaluate: identical pair row and aggregate of pair means") {
    RunConfig c;
    c.eval.estimates = {kClean, kNoisy};
    c.eval.truths = {kClean, kClean};
    c.out = scratch("eval_agg");
    const auto r = cmd_evaluate(c, Capture{}.logger());
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0].mean_psnr == metrics::kPsnrCap);
    CHECK(r.pairs[0].mean_ssim == 1.0);
    CHECK(r.pairs[0].mean_sam == 0.0);
    CHECK(std::abs(r.mean_psnr - (r.pairs[0].mean_psnr + r.pairs[1].mean_psnr) / 2) <= 1e-9);
    CHECK(std::abs(r.mean_ssim - (r.pairs[0].mean_ssim + r.pairs[1].mean_ssim) / 2) <= 1e-9);
    CHECK(std::abs(r.mean_sam - (r.pairs[0].mean_sam + r.pairs[1].mean_sam) / 2) <= 1e-9);
}

TEST_CASE("evaluate: shape mismatch") {
    const std::string dir = scratch("eval_shape");
    noise::save_cube(noise::synthetic_scene(4, 16, 16, 1), dir + "/small.hdc");
    RunConfig c;
    c.eval.estimates = {dir + "/small.hdc"};
    c.eval.truths = {kClean};
    c.out = dir;
    CHECK_THROWS_AS(cmd_evaluate(c, Capture{}.logger()), ShapeError);
}

// ---- inspect ---------------------------------------------------------------

TEST_CASE("inspect: parameter chains grow and the table names every variant") {
    RunConfig c;
    c.out = scratch("inspect");
    const auto rows = cmd_inspect(c, Capture{}.logger());
    REQUIRE(rows.size() == 6);
    auto by = [&](const std::string& n) {
        for (const auto& r : rows)
            if (r.name == n) return r;
        FAIL("missing variant " << n);
        return rows.front();
    };
    CHECK(by("Baseline").params < by("Net1").params);
    CHECK(by("Net1").params < by("Net2").params);
    CHECK(by("Baseline").params < by("Net3").params);
    CHECK(by("Net3").params < by("Net4").params);
    CHECK(by("Net4").params < by("HDST").params);
    const std::string table = format_inspect_table(rows, 64, 64);
    for (const auto& r : rows) CHECK(table.find(r.name) != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(c.output_path("inspect.json")));
    CHECK(j["variants"].size() == 6);
}

// ---- export ----------------------------------------------------------------

TEST_CASE("export: 16-bit PGM header and big-endian clamped samples") {
    HsiCube cube(2, 1, 3);
    cube.data = {0.0f, 0.5f, 1.0f, -1.0f, 2.0f, 0.25f};
    const auto paths = export_pgm(cube, scratch("pgm"), "c", 1.0);
    REQUIRE(paths.size() == 2);
    CHECK(fs::path(paths[1]).filename() == "c_band001.pgm");
    const std::string a = slurp(paths[0]), b = slurp(paths[1]);
    const std::string header = "P5\n3 1\n65535\n";
    REQUIRE(a.size() == header.size() + 6);
    CHECK(a.substr(0, header.size()) == header);
    auto sample = [&](const std::string& s, std::size_t i) {
        return (unsigned(static_cast<unsigned char>(s[header.size() + 2 * i])) << 8) |
               unsigned(static_cast<unsigned char>(s[header.size() + 2 * i + 1]));
    };
    CHECK(sample(a, 0) == 0);
    CHECK(sample(a, 1) == 32768);
    CHECK(sample(a, 2) == 65535);
    CHECK(sample(b, 0) == 0);
    CHECK(sample(b, 1) == 65535);
    CHECK(sample(b, 2) == 16384);
    CHECK_THROWS_AS(export_pgm(cube, scratch("pgm0"), "c", 0.0), ConfigError);
}

// ---- command line ----------------------------------------------------------

TEST_CASE("cli: exit codes separate configuration, I/O and numeric failures") {
    const std::string dir = scratch("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--set train.epoch=3 --out " + dir + " inspect") == 2);
    CHECK(run_cli("--out " + dir + " evaluate " + dir + "/missing.hdc " + kClean) == 3);
    HsiCube zero(4, 16, 16);
    noise::save_cube(zero, dir + "/zero.hdc");
    CHECK(run_cli("--out " + dir + " evaluate " + dir + "/zero.hdc " + dir + "/zero.hdc") == 4);
    CHECK(run_cli("--out " + dir + " evaluate " + kNoisy + " " + kClean) == 0);
    CHECK(slurp(dir + "/report.json") == slurp(HDST_TEST_DATA_DIR "/fixture_report.json"));
}

TEST_CASE("cli: scene, raw conversion and PGM export") {
    const std::string dir = scratch("cli_io");
    REQUIRE(run_cli("scene " + dir + "/s.hdc --bands 4 --height 32 --width 32 --scene-seed 7") == 0);
    CHECK(slurp(dir + "/s.hdc") == slurp(kClean));

    const HsiCube cube = noise::load_cube(kClean);
    {
        std::ofstream raw(dir + "/s.raw", std::ios::binary);
        raw.write(reinterpret_cast<const char*>(cube.data.data()), std::streamsize(cube.data.size() * sizeof(float)));
        std::ofstream side(dir + "/s.json");
        side << R"({"bands": 4, "height": 32, "width": 32})";
    }
    REQUIRE(run_cli("convert-raw " + dir + "/s.raw " + dir + "/s.json " + dir + "/r.hdc") == 0);
    CHECK(noise::load_cube(dir + "/r.hdc").data == cube.data);

    REQUIRE(run_cli("--out " + dir + " export-pgm " + kClean) == 0);
    for (int b = 0; b < 4; ++b) CHECK(fs::exists(dir + "/fixture_clean_band00" + std::to_string(b) + ".pgm"));
}
