#include "hdst/app/commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numeric>

#include "hdst/autograd.hpp"
#include "hdst/model/checkpoint.hpp"
#include "hdst/noise/noise.hpp"
#include "hdst/noise/patches.hpp"
#include "hdst/ops.hpp"
#include "hdst/optim.hpp"
#include "hdst/rng.hpp"

namespace hdst::app {

namespace fs = std::filesystem;
using noise::HsiCube;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kOrderTag = 1, kAugmentTag = 2;

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent(path);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f << text;
        if (!f) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

HsiCube load_logged(const std::string& path, const Logger& log) {
    std::vector<std::string> warnings;
    HsiCube c = noise::load_cube(path, &warnings);
    for (const auto& w : warnings) log("warning: " + w);
    return c;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// Copies one descriptor's window (with augmentation) into batch slot `slot`.
void copy_patch(const HsiCube& cube, const noise::PatchDescriptor& d, Tensor& batch, std::size_t slot) {
    const HsiCube p = noise::extract_patch(cube, d);
    const std::size_t n = p.data.size();
    for (std::size_t i = 0; i < n; ++i) batch[slot * n + i] = p.data[i];
}

struct Pair {
    HsiCube noisy, clean;
};

struct PatchRef {
    std::size_t pair;
    noise::PatchDescriptor d;
};

std::vector<PatchRef> epoch_patches(const std::vector<Pair>& pairs, const DataConfig& data, bool augment,
                                    std::uint64_t seed, std::size_t epoch) {
    std::vector<PatchRef> all;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto set = noise::crop_and_augment(pairs[i].clean, data.patch_size, data.stride, augment,
                                                 CounterRng::derive(CounterRng::derive(seed, kAugmentTag, epoch), i), i);
        for (const auto& d : set.patches) all.push_back({i, d});
    }
    return all;
}

std::pair<Tensor, Tensor> make_batch(const std::vector<Pair>& pairs, const std::vector<PatchRef>& refs,
                                     std::size_t begin, std::size_t end, std::size_t bands, std::size_t size) {
    Tensor x(Shape{end - begin, bands, size, size}), y(Shape{end - begin, bands, size, size});
    for (std::size_t k = begin; k < end; ++k) {
        copy_patch(pairs[refs[k].pair].noisy, refs[k].d, x, k - begin);
        copy_patch(pairs[refs[k].pair].clean, refs[k].d, y, k - begin);
    }
    return {std::move(x), std::move(y)};
}

std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t tile, std::size_t overlap) {
    if (extent <= tile) return {0};
    std::vector<std::size_t> o;
    for (std::size_t p = 0; p + tile < extent; p += tile - overlap) o.push_back(p);
    o.push_back(extent - tile);
    return o;
}

}  // namespace

Logger stderr_logger() {
    return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::uint64_t file_fnv1a64(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return fnv1a64(bytes);
}

// ---- synthesize ------------------------------------------------------------

std::vector<SynthesisEntry> cmd_synthesize(const RunConfig& cfg, const Logger& log) {
    if (cfg.data.clean.empty()) throw ConfigError("synthesize: data.clean lists no cubes");
    ensure_dir(cfg.out);
    std::vector<SynthesisEntry> entries;
    ojson manifest;
    manifest["format"] = "hdst-synthesis 1";
    manifest["base_spec"] = noise::to_json(cfg.noise);
    manifest["seed_rule"] = "entry i uses CounterRng::derive(base_spec.seed, i)";
    manifest["entries"] = ojson::array();
    for (std::size_t i = 0; i < cfg.data.clean.size(); ++i) {
        const std::string& path = cfg.data.clean[i];
        const HsiCube clean = load_logged(path, log);
        SynthesisEntry e;
        e.clean = path;
        e.spec = cfg.noise;
        e.spec.seed = CounterRng::derive(cfg.noise.seed, i);
        noise::NoiseRealization r;
        const HsiCube noisy = noise::apply_noise(clean, e.spec, &r);
        if (noisy == clean) log("warning: noise spec adds no noise; " + path + " is copied unchanged");
        e.noisy = cfg.output_path(stem_of(path) + "_noisy.hdc");
        noise::save_cube(noisy, e.noisy);
        e.clean_fnv = file_fnv1a64(path);
        e.noisy_fnv = file_fnv1a64(e.noisy);
        ojson entry;
        entry["clean"] = e.clean;
        entry["clean_fnv1a64"] = hex64(e.clean_fnv);
        entry["noisy"] = fs::path(e.noisy).filename().string();
        entry["noisy_fnv1a64"] = hex64(e.noisy_fnv);
        entry["spec"] = noise::to_json(e.spec);
        entry["realization"] = noise::to_json(r);
        manifest["entries"].push_back(std::move(entry));
        log("synthesized " + e.noisy + " (" + noise::to_string(e.spec.pattern) + ")");
        entries.push_back(std::move(e));
    }
    write_text(cfg.output_path("manifest.json"), manifest.dump(2) + "\n");
    return entries;
}

std::vector<SynthesisEntry> regenerate_from_manifest(const std::string& manifest_path, const std::string& out_dir,
                                                     const Logger& log) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest " + manifest_path);
    json m;
    try {
        m = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(manifest_path + ": " + e.what());
    }
    ensure_dir(out_dir);
    std::vector<SynthesisEntry> entries;
    try {
        for (const auto& j : m.at("entries")) {
            SynthesisEntry e;
            e.clean = j.at("clean").get<std::string>();
            e.spec = noise::noise_spec_from_json(j.at("spec"));
            e.clean_fnv = file_fnv1a64(e.clean);
            if (e.clean_fnv != parse_hex64(j.at("clean_fnv1a64").get<std::string>()))
                throw NumericError("clean cube " + e.clean + " no longer matches its manifest checksum");
            const HsiCube noisy = noise::apply_noise(noise::load_cube(e.clean), e.spec);
            e.noisy = (fs::path(out_dir) / j.at("noisy").get<std::string>()).string();
            noise::save_cube(noisy, e.noisy);
            e.noisy_fnv = file_fnv1a64(e.noisy);
            if (e.noisy_fnv != parse_hex64(j.at("noisy_fnv1a64").get<std::string>()))
                throw NumericError("regenerated " + e.noisy + " differs from the manifest checksum");
            log("regenerated " + e.noisy);
            entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ConfigError(manifest_path + ": " + e.what());
    }
    return entries;
}

// ---- train -----------------------------------------------------------------

TrainResult cmd_train(const RunConfig& cfg, const Logger& log) {
    const auto& data = cfg.data;
    const auto& tc = cfg.train;
    if (data.clean.empty()) throw ConfigError("train: data.clean lists no cubes");
    if (data.noisy.size() != data.clean.size()) throw ConfigError("train: data.noisy must pair with data.clean");

    std::optional<model::HdstModel> net;
    OptimizerState state;
    std::size_t start_epoch = 0, steps = 0;
    if (!tc.resume.empty()) {
        const auto ck = model::read_checkpoint(tc.resume);
        if (!(ck.config == cfg.model)) log("warning: resuming with the model config stored in " + tc.resume);
        net.emplace(model::model_from_checkpoint(ck));
        if (ck.optimizer) state = *ck.optimizer;
        try {
            start_epoch = std::stoul(ck.meta.at("epoch"));
            steps = std::stoul(ck.meta.at("steps"));
        } catch (const std::exception&) {
            throw IoError(tc.resume + ": checkpoint has no epoch/steps metadata to resume from");
        }
    } else {
        net.emplace(cfg.model);
    }
    const auto& mc = net->config();

    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < data.clean.size(); ++i) {
        Pair p{load_logged(data.noisy[i], log), load_logged(data.clean[i], log)};
        if (!p.noisy.same_shape(p.clean))
            throw ShapeError("train: " + data.noisy[i] + " is " + p.noisy.shape_string() + " but " + data.clean[i] +
                             " is " + p.clean.shape_string());
        if (p.clean.bands != mc.bands)
            throw ShapeError("train: " + data.clean[i] + " has " + std::to_string(p.clean.bands) +
                             " bands, model expects " + std::to_string(mc.bands));
        pairs.push_back(std::move(p));
    }

    const LrSchedule schedule(tc.lr_schedule);
    const std::string ckpt_path = cfg.output_path(tc.checkpoint), log_path = cfg.output_path(tc.log);
    ensure_parent(ckpt_path);
    ensure_parent(log_path);
    const bool append = start_epoch > 0 && fs::exists(log_path);
    std::ofstream csv(log_path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot open " + log_path + " for writing");
    if (!append) csv << "epoch,step,lr,loss\n";

    TrainResult result;
    result.checkpoint = ckpt_path;
    std::optional<std::size_t> pending;  // epoch count of a state waiting for a finite loss
    std::optional<std::size_t> saved;
    auto meta = [&](std::size_t epoch) {
        return std::map<std::string, std::string>{
            {"epoch", std::to_string(epoch)}, {"steps", std::to_string(steps)}, {"train_seed", std::to_string(tc.seed)}};
    };
    auto abort = [&](std::size_t epoch, const std::string& why) -> NumericError {
        std::string msg = "training aborted at epoch " + std::to_string(epoch) + ": " + why;
        msg += saved ? "; last good checkpoint " + ckpt_path + " (epoch " + std::to_string(*saved) + ")"
                     : "; no checkpoint was written by this run";
        return NumericError(msg);
    };
    auto batch_loss = [&](const Tensor& x, const Tensor& y, Tape* tape, std::size_t epoch) {
        std::optional<Tape::Scope> scope;
        if (tape) scope.emplace(*tape);
        Variable loss;
        try {
            loss = ops::mean_squared_error(net->forward(Variable(x)), y);
        } catch (const NumericError& e) {
            throw abort(epoch, e.what());
        }
        if (!std::isfinite(loss.value()[0])) throw abort(epoch, "non-finite loss");
        return loss;
    };

    for (std::size_t epoch = start_epoch; epoch < tc.epochs; ++epoch) {
        state.learning_rate = schedule.at(epoch);
        auto refs = epoch_patches(pairs, data, data.augment, tc.seed, epoch);
        CounterRng order(CounterRng::derive(tc.seed, kOrderTag, epoch));
        for (std::size_t i = refs.size(); i > 1; --i) std::swap(refs[i - 1], refs[order.below(i)]);

        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < refs.size(); b += tc.batch_size) {
            const auto [x, y] = make_batch(pairs, refs, b, std::min(refs.size(), b + tc.batch_size), mc.bands, data.patch_size);
            Tape tape;
            const Variable loss = batch_loss(x, y, &tape, epoch);
            if (pending) {
                model::save_checkpoint(ckpt_path, *net, &state, meta(*pending));
                saved = pending;
                pending.reset();
            }
            adam_step(net->parameters(), backward(loss, tape, net->parameters()), state);
            total += loss.value()[0];
            ++batches;
            ++steps;
        }
        const EpochRecord rec{epoch, state.learning_rate, total / double(batches)};
        result.epochs.push_back(rec);
        char line[96];
        std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g\n", rec.epoch, steps, rec.lr, rec.loss);
        csv << line << std::flush;
        if ((epoch + 1) % tc.checkpoint_every == 0) pending = epoch + 1;
    }

    // final full pass, unaugmented, fixed order: also certifies the last state
    const auto refs = epoch_patches(pairs, data, false, tc.seed, 0);
    double total = 0.0;
    for (std::size_t b = 0; b < refs.size(); b += tc.batch_size) {
        const std::size_t e = std::min(refs.size(), b + tc.batch_size);
        const auto [x, y] = make_batch(pairs, refs, b, e, mc.bands, data.patch_size);
        total += batch_loss(x, y, nullptr, tc.epochs).value()[0] * double(e - b);
    }
    result.final_loss = total / double(refs.size());
    auto final_meta = meta(std::max(start_epoch, tc.epochs));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", result.final_loss);
    final_meta["final_loss"] = buf;
    model::save_checkpoint(ckpt_path, *net, &state, final_meta);
    result.steps = steps;
    result.initial_loss = result.epochs.empty() ? result.final_loss : result.epochs.front().loss;
    log("trained " + std::to_string(result.epochs.size()) + " epochs, final loss " + buf + ", checkpoint " + ckpt_path);
    return result;
}

// ---- denoise ---------------------------------------------------------------

HsiCube denoise_cube(const model::HdstModel& model, const HsiCube& cube, std::size_t tile, std::size_t overlap) {
    if (cube.bands != model.config().bands)
        throw ShapeError("denoise: cube has " + std::to_string(cube.bands) + " bands, checkpoint expects " +
                         std::to_string(model.config().bands));
    if (tile == 0 || overlap >= tile) throw ConfigError("denoise: need tile >= 1 and overlap < tile");
    const std::size_t B = cube.bands, H = cube.height, W = cube.width;
    const auto ys = tile_origins(H, tile, overlap), xs = tile_origins(W, tile, overlap);
    const std::size_t th = std::min(tile, H), tw = std::min(tile, W);
    std::vector<double> acc(B * H * W, 0.0), count(H * W, 0.0);
    for (std::size_t y0 : ys)
        for (std::size_t x0 : xs) {
            Tensor t(Shape{1, B, th, tw});
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t y = 0; y < th; ++y)
                    for (std::size_t x = 0; x < tw; ++x) t.at(0, b, y, x) = cube.at(b, y0 + y, x0 + x);
            const Tensor out = model.forward(t);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t y = 0; y < th; ++y)
                    for (std::size_t x = 0; x < tw; ++x) acc[(b * H + y0 + y) * W + x0 + x] += out.at(0, b, y, x);
            for (std::size_t y = 0; y < th; ++y)
                for (std::size_t x = 0; x < tw; ++x) count[(y0 + y) * W + x0 + x] += 1.0;
        }
    HsiCube result(B, H, W);
    result.wavelength_nm = cube.wavelength_nm;
    for (std::size_t i = 0; i < acc.size(); ++i) result.data[i] = static_cast<float>(acc[i] / count[i % (H * W)]);
    return result;
}

std::vector<std::string> cmd_denoise(const RunConfig& cfg, const Logger& log) {
    if (cfg.denoise.inputs.empty()) throw ConfigError("denoise: denoise.inputs lists no cubes");
    const auto ck = model::read_checkpoint(cfg.denoise.checkpoint);
    const auto net = model::model_from_checkpoint(ck);
    ensure_dir(cfg.out);
    std::vector<std::string> written;
    for (const auto& in : cfg.denoise.inputs) {
        const HsiCube out = denoise_cube(net, load_logged(in, log), cfg.denoise.tile, cfg.denoise.overlap);
        const std::string path = cfg.output_path(stem_of(in) + "_denoised.hdc");
        noise::save_cube(out, path);
        log("denoised " + in + " -> " + path);
        written.push_back(path);
    }
    return written;
}

// ---- evaluate --------------------------------------------------------------

EvaluationResult cmd_evaluate(const RunConfig& cfg, const Logger& log) {
    const auto& ec = cfg.eval;
    if (ec.estimates.empty()) throw ConfigError("evaluate: eval.estimates lists no cubes");
    EvaluationResult r;
    r.json["ssim_averaging"] = "per_band";
    r.json["pairs"] = ojson::array();
    for (std::size_t i = 0; i < ec.estimates.size(); ++i) {
        const HsiCube est = load_logged(ec.estimates[i], log), truth = load_logged(ec.truths[i], log);
        auto rep = metrics::evaluate_pair(est, truth, ec.peak);
        ojson p;
        p["estimate"] = fs::path(ec.estimates[i]).filename().string();
        p["estimate_fnv1a64"] = hex64(file_fnv1a64(ec.estimates[i]));
        p["truth"] = fs::path(ec.truths[i]).filename().string();
        p["truth_fnv1a64"] = hex64(file_fnv1a64(ec.truths[i]));
        p["mean_psnr"] = rep.mean_psnr;
        p["mean_ssim"] = rep.mean_ssim;
        p["mean_sam"] = rep.mean_sam;
        p["sam_skipped_pixels"] = rep.sam_skipped;
        p["data_peak"] = rep.data_peak;
        p["per_band_psnr"] = rep.per_band_psnr;
        p["per_band_ssim"] = rep.per_band_ssim;
        r.json["pairs"].push_back(std::move(p));
        r.table += ec.estimates[i] + " vs " + ec.truths[i] + "\n" + metrics::format_table(rep) + "\n";
        r.mean_psnr += rep.mean_psnr, r.mean_ssim += rep.mean_ssim, r.mean_sam += rep.mean_sam;
        r.pairs.push_back(std::move(rep));
    }
    const double n = double(r.pairs.size());
    r.mean_psnr /= n, r.mean_ssim /= n, r.mean_sam /= n;
    r.json["aggregate"] = {{"pairs", r.pairs.size()}, {"mean_psnr", r.mean_psnr}, {"mean_ssim", r.mean_ssim}, {"mean_sam", r.mean_sam}};
    char line[128];
    std::snprintf(line, sizeof line, "aggregate over %zu pairs: PSNR %.4f dB  SSIM %.4f  SAM %.4f deg\n", r.pairs.size(),
                  r.mean_psnr, r.mean_ssim, r.mean_sam);
    r.table += line;
    const std::string report = cfg.output_path(ec.report);
    write_text(report, r.json.dump(2) + "\n");
    write_text(fs::path(report).replace_extension(".txt").string(), r.table);
    log("wrote " + report);
    return r;
}

// ---- inspect ---------------------------------------------------------------

std::vector<VariantRow> inspect_variants(const model::ModelConfig& base, std::size_t height, std::size_t width) {
    std::vector<VariantRow> rows;
    for (const auto& v : model::ablation_variants()) {
        model::ModelConfig c = base;
        c.ablation = v.flags;
        const model::HdstModel m(c);
        rows.push_back({v.name, v.flags, model::count_params(m).total, m.macs(height, width)});
    }
    return rows;
}

std::string format_inspect_table(const std::vector<VariantRow>& rows, std::size_t height, std::size_t width) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "MACs per forward pass at %zux%zu; deltas relative to %s\n", height, width,
                  rows.front().name.c_str());
    out += line;
    std::snprintf(line, sizeof line, "%-9s %4s %6s %4s %12s %9s %15s %9s\n", "variant", "freq", "fusion", "hdms", "params",
                  "dparams", "MACs", "dMACs");
    out += line;
    const double p0 = double(rows.front().params), m0 = double(rows.front().macs);
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-9s %4s %6s %4s %12zu %+8.2f%% %15" PRIu64 " %+8.2f%%\n", r.name.c_str(),
                      r.flags.use_frequency ? "on" : "-", r.flags.use_dynamic_fusion ? "on" : "-",
                      r.flags.use_hdms ? "on" : "-", r.params, 100.0 * (double(r.params) / p0 - 1.0), r.macs,
                      100.0 * (double(r.macs) / m0 - 1.0));
        out += line;
    }
    return out;
}

std::vector<VariantRow> cmd_inspect(const RunConfig& cfg, const Logger& log) {
    const auto rows = inspect_variants(cfg.model, cfg.inspect.height, cfg.inspect.width);
    const std::string table = format_inspect_table(rows, cfg.inspect.height, cfg.inspect.width);
    std::cout << table;
    ojson j;
    j["height"] = cfg.inspect.height;
    j["width"] = cfg.inspect.width;
    j["model"] = model::to_json(cfg.model);
    j["variants"] = ojson::array();
    for (const auto& r : rows)
        j["variants"].push_back({{"name", r.name},
                                 {"use_frequency", r.flags.use_frequency},
                                 {"use_dynamic_fusion", r.flags.use_dynamic_fusion},
                                 {"use_hdms", r.flags.use_hdms},
                                 {"params", r.params},
                                 {"macs", r.macs}});
    ensure_dir(cfg.out);
    const std::string path = cfg.output_path("inspect.json");
    write_text(path, j.dump(2) + "\n");
    log("wrote " + path);
    return rows;
}

// ---- export ----------------------------------------------------------------

std::vector<std::string> export_pgm(const HsiCube& cube, const std::string& out_dir, const std::string& stem, double peak) {
    if (!(peak > 0.0)) throw ConfigError("export-pgm: peak must be > 0");
    ensure_dir(out_dir);
    std::vector<std::string> paths;
    for (std::size_t b = 0; b < cube.bands; ++b) {
        char name[32];
        std::snprintf(name, sizeof name, "_band%03zu.pgm", b);
        const std::string path = (fs::path(out_dir) / (stem + name)).string();
        std::string bytes = "P5\n" + std::to_string(cube.width) + " " + std::to_string(cube.height) + "\n65535\n";
        for (std::size_t i = 0; i < cube.plane(); ++i) {
            const double v = std::clamp(double(cube.band(b)[i]) / peak, 0.0, 1.0);
            const auto s = static_cast<std::uint16_t>(std::lround(v * 65535.0));
            bytes.push_back(static_cast<char>(s >> 8));
            bytes.push_back(static_cast<char>(s & 0xff));
        }
        write_text(path, bytes);
        paths.push_back(path);
    }
    return paths;
}

}  // namespace hdst::app
