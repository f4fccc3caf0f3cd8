#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace hdst::model {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct AblationFlags {
    bool use_frequency = true;       // FSGF + FSCA
    bool use_dynamic_fusion = true;  // learnable beta residual; needs use_frequency
    bool use_hdms = true;

    bool operator==(const AblationFlags&) const = default;
};

enum class FppPlacement {
    per_rtl,    // deepest fpp_depth blocks of every RTL
    final_rtl,  // deepest fpp_depth blocks of the last RTL only
};

struct ModelConfig {
    std::size_t bands = 31;
    std::size_t embed_channels = 32;
    std::size_t n_rtl = 3;
    std::size_t blocks_per_rtl = 6;
    std::size_t window_m = 8;
    std::size_t n_heads = 2;
    std::size_t head_dim = 16;
    double alpha = 0.5;
    std::size_t fpp_depth = 2;
    FppPlacement fpp_placement = FppPlacement::per_rtl;
    std::vector<std::size_t> spatial_dilations{2, 4, 8};
    std::vector<std::size_t> freq_dilations{2, 4, 8};
    std::vector<std::size_t> aspp_reference_dilations{6, 12, 18};
    // HDMS uses aspp_reference_dilations with a pooling branch instead of the
    // separable spatial pyramid.
    bool hdms_reference_aspp = false;
    std::size_t se_reduction = 4;
    std::size_t mlp_ratio = 2;
    std::uint64_t init_seed = 0x5eed;
    AblationFlags ablation{};

    /// Throws ConfigError on the first violated invariant.
    void validate() const;

    /// Spatial multiple every forward input is reflect-padded to.
    std::size_t spatial_multiple() const { return 2 * window_m; }

    /// Small configuration for tests and the desk-scale pipeline.
    static ModelConfig toy(std::size_t bands = 4);

    bool operator==(const ModelConfig&) const = default;
};

/// The six rows of the ablation matrix, in table order.
struct AblationVariant {
    std::string name;
    AblationFlags flags;
};
std::vector<AblationVariant> ablation_variants();

nlohmann::json to_json(const ModelConfig& c);
/// Fields absent from `j` keep their values from `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

}  // namespace hdst::model
