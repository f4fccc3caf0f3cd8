#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdst/model/blocks.hpp"
#include "hdst/model/config.hpp"

namespace hdst::model {

/// One transformer block of an RTL with its optional HDMS and FPP attachments.
struct Layer {
    BackboneBlock backbone;
    std::optional<HdmsBlock> hdms;
    std::optional<FppUnit> fpp;
};

struct RtlStage {
    std::vector<Layer> layers;
    Conv2d conv;  // 3x3 before the stage residual
};

/// head conv -> RTL stages -> tail conv, with a global residual on the input
/// cube. Inputs are reflect-padded to a multiple of 2 * window_M and cropped
/// back afterwards. Parameters are shared handles, so the model is move-only.
class HdstModel {
public:
    explicit HdstModel(ModelConfig cfg);
    HdstModel(HdstModel&&) = default;
    HdstModel& operator=(HdstModel&&) = default;
    HdstModel(const HdstModel&) = delete;
    HdstModel& operator=(const HdstModel&) = delete;

    /// [B,bands,H,W] -> [B,bands,H,W].
    Variable forward(const Variable& cube) const;
    Tensor forward(const Tensor& cube) const;

    const ModelConfig& config() const { return cfg_; }
    const ParameterList& parameters() const { return params_; }
    const Parameter& parameter(const std::string& name) const;

    Conv2d& head() { return head_; }
    Conv2d& tail() { return tail_; }
    std::vector<RtlStage>& stages() { return stages_; }

    /// Estimated multiply-accumulates for one forward pass on one H x W image.
    std::uint64_t macs(std::size_t height, std::size_t width) const;

private:
    ModelConfig cfg_;
    Conv2d head_;
    std::vector<RtlStage> stages_;
    Conv2d tail_;
    ParameterList params_;
};

struct ParamCount {
    std::size_t total = 0;
    std::map<std::string, std::size_t> by_module;
};

/// Module kind from a parameter name: head, tail, rtl_conv, backbone, hdms,
/// fsgf, fsca, dynamic_fusion.
std::string module_of(const std::string& param_name);
ParamCount count_params(const ParameterList& params);
inline ParamCount count_params(const HdstModel& m) { return count_params(m.parameters()); }

}  // namespace hdst::model
