#include "hdst/model/hdst.hpp"

#include <set>
#include <stdexcept>

#include "hdst/ops.hpp"

namespace hdst::model {

HdstModel::HdstModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    ParamInit init(cfg_.init_seed);
    const std::size_t e = cfg_.embed_channels;
    const auto& flags = cfg_.ablation;

    head_ = Conv2d::make(init, "head", cfg_.bands, e, 3);
    for (std::size_t r = 0; r < cfg_.n_rtl; ++r) {
        RtlStage stage;
        const std::string rtl = "rtl" + std::to_string(r);
        const bool fpp_here = flags.use_frequency &&
                              (cfg_.fpp_placement == FppPlacement::per_rtl || r + 1 == cfg_.n_rtl);
        for (std::size_t j = 0; j < cfg_.blocks_per_rtl; ++j) {
            const std::string prefix = rtl + ".block" + std::to_string(j);
            Layer layer{BackboneBlock(init, prefix + ".backbone", cfg_, j), std::nullopt, std::nullopt};
            if (flags.use_hdms) layer.hdms.emplace(init, prefix + ".hdms", cfg_);
            if (fpp_here && j + cfg_.fpp_depth >= cfg_.blocks_per_rtl) layer.fpp.emplace(init, prefix + ".fpp", cfg_);
            stage.layers.push_back(std::move(layer));
        }
        stage.conv = Conv2d::make(init, rtl + ".conv", e, e, 3);
        stages_.push_back(std::move(stage));
    }
    tail_ = Conv2d::make(init, "tail", e, cfg_.bands, 3);

    head_.collect(params_);
    for (const auto& stage : stages_) {
        for (const auto& layer : stage.layers) {
            layer.backbone.collect(params_);
            if (layer.hdms) layer.hdms->collect(params_);
            if (layer.fpp) layer.fpp->collect(params_);
        }
        stage.conv.collect(params_);
    }
    tail_.collect(params_);

    std::set<std::string> seen;
    for (const auto& p : params_)
        if (!seen.insert(p.name).second) throw std::logic_error("duplicate parameter name " + p.name);
}

Variable HdstModel::forward(const Variable& cube) const {
    const Shape& s = cube.shape();
    if (s.size() != 4) throw ShapeError("hdst: expected [B,bands,H,W], got " + shape_string(s));
    if (s[1] != cfg_.bands)
        throw ShapeError("hdst: model has " + std::to_string(cfg_.bands) + " bands, input has " + std::to_string(s[1]));
    const std::size_t m = cfg_.spatial_multiple();
    const std::size_t h = s[2], w = s[3];
    const Variable x = ops::reflect_pad(cube, (m - h % m) % m, (m - w % m) % m);

    Variable f = head_.forward(x);
    for (const auto& stage : stages_) {
        Variable y = f;
        for (const auto& layer : stage.layers) {
            y = layer.backbone.forward(y);
            if (layer.hdms) y = layer.hdms->forward(y);
            if (layer.fpp) y = layer.fpp->forward(y);
        }
        f = ops::add(f, stage.conv.forward(y));
    }
    const Variable out = ops::add(x, tail_.forward(f));
    if (!out.value().all_finite()) throw NumericError("non-finite values in model output");
    return ops::crop(out, h, w);
}

Tensor HdstModel::forward(const Tensor& cube) const { return forward(Variable(cube)).value(); }

const Parameter& HdstModel::parameter(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw std::out_of_range("no parameter named " + name);
}

std::uint64_t HdstModel::macs(std::size_t height, std::size_t width) const {
    const std::size_t m = cfg_.spatial_multiple();
    const std::size_t h = height + (m - height % m) % m, w = width + (m - width % m) % m;
    std::uint64_t total = head_.macs(h, w) + tail_.macs(h, w);
    for (const auto& stage : stages_) {
        total += stage.conv.macs(h, w);
        for (const auto& layer : stage.layers) {
            total += layer.backbone.macs(h, w);
            if (layer.hdms) total += layer.hdms->macs(h, w);
            if (layer.fpp) total += layer.fpp->macs(h, w);
        }
    }
    return total;
}

std::string module_of(const std::string& name) {
    auto has = [&](const char* s) { return name.find(s) != std::string::npos; };
    if (has(".fpp.fsgf.")) return "fsgf";
    if (has(".fpp.fsca.")) return "fsca";
    if (has(".fpp.fusion.") || has(".fpp.beta")) return "dynamic_fusion";
    if (has(".hdms.")) return "hdms";
    if (has(".backbone.")) return "backbone";
    if (name.rfind("head.", 0) == 0) return "head";
    if (name.rfind("tail.", 0) == 0) return "tail";
    if (name.rfind("rtl", 0) == 0 && has(".conv.")) return "rtl_conv";
    return "other";
}

ParamCount count_params(const ParameterList& params) {
    ParamCount c;
    for (const auto& p : params) {
        const std::size_t n = p.var.value().numel();
        c.total += n;
        c.by_module[module_of(p.name)] += n;
    }
    return c;
}

}  // namespace hdst::model
