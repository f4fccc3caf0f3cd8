#include "hdst/model/config.hpp"

#include <cmath>

namespace hdst::model {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("model config: " + msg);
}

void require_rates(const std::vector<std::size_t>& rates, const char* what) {
    require(!rates.empty(), std::string(what) + " must not be empty");
    for (auto d : rates) require(d >= 1, std::string(what) + " entries must be >= 1");
}

}  // namespace

void ModelConfig::validate() const {
    require(bands >= 1, "bands must be >= 1");
    require(embed_channels >= 1, "embed_channels must be >= 1");
    require(n_rtl >= 1, "n_rtl must be >= 1");
    require(blocks_per_rtl >= 1, "blocks_per_rtl must be >= 1");
    require(window_m >= 1, "window_M must be >= 1");
    require(n_heads >= 1 && head_dim >= 1, "n_heads and head_dim must be >= 1");
    require(n_heads * head_dim == embed_channels,
            "n_heads * head_dim (" + std::to_string(n_heads * head_dim) + ") must equal embed_channels (" +
                std::to_string(embed_channels) + ")");
    require(fpp_depth <= blocks_per_rtl, "fpp_depth (" + std::to_string(fpp_depth) + ") exceeds blocks_per_rtl (" +
                                             std::to_string(blocks_per_rtl) + ")");
    require(std::isfinite(alpha), "alpha must be finite");
    require_rates(spatial_dilations, "spatial_dilations");
    require_rates(freq_dilations, "freq_dilations");
    require_rates(aspp_reference_dilations, "aspp_reference_dilations");
    require(se_reduction >= 1 && mlp_ratio >= 1, "se_reduction and mlp_ratio must be >= 1");
}

ModelConfig ModelConfig::toy(std::size_t bands) {
    ModelConfig c;
    c.bands = bands;
    c.embed_channels = 8;
    c.n_rtl = 1;
    c.blocks_per_rtl = 2;
    c.window_m = 4;
    c.n_heads = 2;
    c.head_dim = 4;
    c.fpp_depth = 1;
    return c;
}

std::vector<AblationVariant> ablation_variants() {
    return {
        {"Baseline", {false, false, false}},
        {"Net1", {true, false, false}},
        {"Net2", {true, true, false}},
        {"Net3", {false, false, true}},
        {"Net4", {true, false, true}},
        {"HDST", {true, true, true}},
    };
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"bands", c.bands},
        {"embed_channels", c.embed_channels},
        {"n_rtl", c.n_rtl},
        {"blocks_per_rtl", c.blocks_per_rtl},
        {"window_M", c.window_m},
        {"n_heads", c.n_heads},
        {"head_dim", c.head_dim},
        {"alpha", c.alpha},
        {"fpp_depth", c.fpp_depth},
        {"fpp_placement", c.fpp_placement == FppPlacement::per_rtl ? "per_rtl" : "final_rtl"},
        {"spatial_dilations", c.spatial_dilations},
        {"freq_dilations", c.freq_dilations},
        {"aspp_reference_dilations", c.aspp_reference_dilations},
        {"hdms_reference_aspp", c.hdms_reference_aspp},
        {"se_reduction", c.se_reduction},
        {"mlp_ratio", c.mlp_ratio},
        {"init_seed", c.init_seed},
        {"ablation",
         {{"use_frequency", c.ablation.use_frequency},
          {"use_dynamic_fusion", c.ablation.use_dynamic_fusion},
          {"use_hdms", c.ablation.use_hdms}}},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    static const char* known[] = {"bands", "embed_channels", "n_rtl", "blocks_per_rtl", "window_M", "n_heads",
                                  "head_dim", "alpha", "fpp_depth", "fpp_placement", "spatial_dilations",
                                  "freq_dilations", "aspp_reference_dilations", "hdms_reference_aspp",
                                  "se_reduction", "mlp_ratio", "init_seed", "ablation"};
    if (!j.is_object()) throw ConfigError("model config must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("model config: unknown field '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        get("bands", c.bands);
        get("embed_channels", c.embed_channels);
        get("n_rtl", c.n_rtl);
        get("blocks_per_rtl", c.blocks_per_rtl);
        get("window_M", c.window_m);
        get("n_heads", c.n_heads);
        get("head_dim", c.head_dim);
        get("alpha", c.alpha);
        get("fpp_depth", c.fpp_depth);
        if (j.contains("fpp_placement")) {
            const auto p = j.at("fpp_placement").get<std::string>();
            if (p == "per_rtl") c.fpp_placement = FppPlacement::per_rtl;
            else if (p == "final_rtl") c.fpp_placement = FppPlacement::final_rtl;
            else throw ConfigError("model config: fpp_placement must be per_rtl or final_rtl");
        }
        get("spatial_dilations", c.spatial_dilations);
        get("freq_dilations", c.freq_dilations);
        get("aspp_reference_dilations", c.aspp_reference_dilations);
        get("hdms_reference_aspp", c.hdms_reference_aspp);
        get("se_reduction", c.se_reduction);
        get("mlp_ratio", c.mlp_ratio);
        get("init_seed", c.init_seed);
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            if (a.contains("use_frequency")) a.at("use_frequency").get_to(c.ablation.use_frequency);
            if (a.contains("use_dynamic_fusion")) a.at("use_dynamic_fusion").get_to(c.ablation.use_dynamic_fusion);
            if (a.contains("use_hdms")) a.at("use_hdms").get_to(c.ablation.use_hdms);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

}  // namespace hdst::model
