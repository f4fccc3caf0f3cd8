#include "hdst/app/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>

namespace hdst::app {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
            throw ConfigError(std::string(section) + ": unknown field '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

template <class T>
T section(const json& j, const char* name, T (*parse)(const json&)) {
    try {
        return parse(j.contains(name) ? j.at(name) : json::object());
    } catch (const json::exception& e) {
        throw ConfigError(std::string(name) + ": " + e.what());
    }
}

DataConfig parse_data(const json& j) {
    reject_unknown(j, "data", {"clean", "noisy", "patch_size", "stride", "augment"});
    DataConfig d;
    read(j, "clean", d.clean);
    read(j, "noisy", d.noisy);
    read(j, "patch_size", d.patch_size);
    read(j, "stride", d.stride);
    read(j, "augment", d.augment);
    return d;
}

TrainConfig parse_train(const json& j) {
    reject_unknown(j, "train", {"epochs", "batch_size", "lr_schedule", "seed", "checkpoint", "resume", "checkpoint_every", "log"});
    TrainConfig t;
    read(j, "epochs", t.epochs);
    read(j, "batch_size", t.batch_size);
    read(j, "seed", t.seed);
    read(j, "checkpoint", t.checkpoint);
    read(j, "resume", t.resume);
    read(j, "checkpoint_every", t.checkpoint_every);
    read(j, "log", t.log);
    if (j.contains("lr_schedule")) {
        const auto& s = j.at("lr_schedule");
        if (s.is_number()) {
            t.lr_schedule = {{0, s.get<double>()}};
        } else {
            t.lr_schedule.clear();
            for (const auto& p : s) {
                if (!p.is_array() || p.size() != 2) throw ConfigError("train.lr_schedule entries must be [epoch, lr]");
                t.lr_schedule.emplace_back(p[0].get<std::size_t>(), p[1].get<double>());
            }
        }
    }
    return t;
}

DenoiseConfig parse_denoise(const json& j) {
    reject_unknown(j, "denoise", {"checkpoint", "inputs", "tile", "overlap"});
    DenoiseConfig d;
    read(j, "checkpoint", d.checkpoint);
    read(j, "inputs", d.inputs);
    read(j, "tile", d.tile);
    read(j, "overlap", d.overlap);
    return d;
}

EvalConfig parse_eval(const json& j) {
    reject_unknown(j, "eval", {"peak", "estimates", "truths", "report"});
    EvalConfig e;
    if (j.contains("peak") && !j.at("peak").is_null()) {
        if (j.at("peak").is_string()) {
            if (j.at("peak").get<std::string>() != "max_truth") throw ConfigError("eval.peak must be a number or \"max_truth\"");
        } else {
            e.peak = j.at("peak").get<double>();
        }
    }
    read(j, "estimates", e.estimates);
    read(j, "truths", e.truths);
    read(j, "report", e.report);
    return e;
}

InspectConfig parse_inspect(const json& j) {
    reject_unknown(j, "inspect", {"height", "width"});
    InspectConfig i;
    read(j, "height", i.height);
    read(j, "width", i.width);
    return i;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    try {
        noise.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (data.patch_size == 0 || data.stride == 0) throw ConfigError("data.patch_size and data.stride must be >= 1");
    if (!data.noisy.empty() && data.noisy.size() != data.clean.size())
        throw ConfigError("data.noisy must pair one-to-one with data.clean");
    if (train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (train.checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be >= 1");
    if (train.lr_schedule.empty() || train.lr_schedule.front().first != 0)
        throw ConfigError("train.lr_schedule must start at epoch 0");
    for (std::size_t i = 0; i < train.lr_schedule.size(); ++i) {
        const double lr = train.lr_schedule[i].second;
        if (!(std::isfinite(lr) && lr >= 0.0)) throw ConfigError("train.lr_schedule rates must be finite and >= 0");
        if (i > 0 && train.lr_schedule[i].first <= train.lr_schedule[i - 1].first)
            throw ConfigError("train.lr_schedule epochs must be strictly increasing");
    }
    if (denoise.tile == 0) throw ConfigError("denoise.tile must be >= 1");
    if (denoise.overlap >= denoise.tile) throw ConfigError("denoise.overlap must be smaller than denoise.tile");
    if (eval.peak && !(std::isfinite(*eval.peak) && *eval.peak > 0.0)) throw ConfigError("eval.peak must be > 0");
    if (eval.estimates.size() != eval.truths.size()) throw ConfigError("eval.estimates and eval.truths must pair up");
    if (inspect.height == 0 || inspect.width == 0) throw ConfigError("inspect.height and inspect.width must be >= 1");
    if (out.empty()) throw ConfigError("out must name a directory");
}

std::string RunConfig::output_path(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (std::filesystem::path(out) / path).string();
}

nlohmann::json to_json(const RunConfig& c) {
    json schedule = json::array();
    for (const auto& [e, lr] : c.train.lr_schedule) schedule.push_back({e, lr});
    return {{"model", model::to_json(c.model)},
            {"data",
             {{"clean", c.data.clean},
              {"noisy", c.data.noisy},
              {"patch_size", c.data.patch_size},
              {"stride", c.data.stride},
              {"augment", c.data.augment}}},
            {"noise", noise::to_json(c.noise)},
            {"train",
             {{"epochs", c.train.epochs},
              {"batch_size", c.train.batch_size},
              {"lr_schedule", schedule},
              {"seed", c.train.seed},
              {"checkpoint", c.train.checkpoint},
              {"resume", c.train.resume},
              {"checkpoint_every", c.train.checkpoint_every},
              {"log", c.train.log}}},
            {"denoise",
             {{"checkpoint", c.denoise.checkpoint},
              {"inputs", c.denoise.inputs},
              {"tile", c.denoise.tile},
              {"overlap", c.denoise.overlap}}},
            {"eval",
             {{"peak", c.eval.peak ? json(*c.eval.peak) : json("max_truth")},
              {"estimates", c.eval.estimates},
              {"truths", c.eval.truths},
              {"report", c.eval.report}}},
            {"inspect", {{"height", c.inspect.height}, {"width", c.inspect.width}}},
            {"out", c.out}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    reject_unknown(j, "config", {"model", "data", "noise", "train", "denoise", "eval", "inspect", "out"});
    RunConfig c;
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"), c.model);
    c.data = section(j, "data", parse_data);
    if (j.contains("noise")) {
        try {
            c.noise = noise::noise_spec_from_json(j.at("noise"), c.noise);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    c.train = section(j, "train", parse_train);
    c.denoise = section(j, "denoise", parse_denoise);
    c.eval = section(j, "eval", parse_eval);
    c.inspect = section(j, "inspect", parse_inspect);
    if (j.contains("out")) {
        if (!j.at("out").is_string()) throw ConfigError("out must be a string");
        c.out = j.at("out").get<std::string>();
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    try {
        return run_config_from_json(json::parse(f, nullptr, true, true));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

RunConfig resolve_run_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed, std::optional<std::string> out) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config " + path);
        try {
            doc = json::parse(f, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    RunConfig c = run_config_from_json(doc);
    if (seed) c.noise.seed = c.train.seed = *seed;
    if (out) c.out = *out;
    c.validate();
    return c;
}

}  // namespace hdst::app
