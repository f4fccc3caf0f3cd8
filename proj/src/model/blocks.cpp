#include "hdst/model/blocks.hpp"

#include <algorithm>
#include <cmath>

#include "hdst/ops.hpp"

namespace hdst::model {

namespace {

void check_stage(const Variable& v, const std::string& stage) {
    if (!v.value().all_finite()) throw NumericError("non-finite values after " + stage);
}

void push(ParameterList& out, const Parameter& p) {
    if (p.var.defined()) out.push_back(p);
}

std::uint64_t fft_macs(std::size_t planes, std::size_t h, std::size_t w) {
    const std::size_t n = h * w;
    std::size_t lg = 0;
    while ((std::size_t{1} << lg) < n) ++lg;
    return std::uint64_t(planes) * 2 * n * std::max<std::size_t>(lg, 1);
}

}  // namespace

Parameter ParamInit::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    CounterRng rng(CounterRng::derive(seed_, fnv1a64(name)));
    const double bound = 1.0 / std::sqrt(double(std::max<std::size_t>(fan_in, 1)));
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.uniform(-bound, bound);
    return Parameter{name, Variable(std::move(t), true)};
}

Parameter ParamInit::constant(const std::string& name, Shape shape, double value) {
    return Parameter{name, Variable(Tensor::full(std::move(shape), value), true)};
}

// --- Conv2d

Conv2d Conv2d::make(ParamInit& init, const std::string& name, std::size_t cin, std::size_t cout,
                    std::size_t kernel, long dilation, long groups, bool bias) {
    Conv2d c;
    const std::size_t cin_g = cin / std::size_t(groups);
    const std::size_t fan_in = cin_g * kernel * kernel;
    c.weight = init.uniform(name + ".weight", Shape{cout, cin_g, kernel, kernel}, fan_in);
    if (bias) c.bias = init.uniform(name + ".bias", Shape{cout}, fan_in);
    c.dilation = dilation;
    c.groups = groups;
    return c;
}

Variable Conv2d::forward(const Variable& x) const {
    return ops::conv2d(x, weight.var, bias.var, dilation, groups);
}

std::uint64_t Conv2d::macs(std::size_t h, std::size_t w) const {
    return std::uint64_t(weight.var.value().numel()) * h * w;
}

void Conv2d::collect(ParameterList& out) const {
    push(out, weight);
    push(out, bias);
}

// --- ASPP

AsppBlock::AsppBlock(ParamInit& init, const std::string& prefix, Options opts) : opts_(std::move(opts)) {
    const std::size_t c = opts_.channels;
    std::size_t i = 0;
    auto name = [&](std::size_t k) { return prefix + ".branch" + std::to_string(k); };
    branches_.push_back({Branch::Kind::pointwise, Conv2d::make(init, name(i++), c, c, 1), {}});
    for (std::size_t d : opts_.rates) {
        if (opts_.separable) {
            Branch b{Branch::Kind::separable,
                     Conv2d::make(init, name(i) + ".dw", c, c, 3, long(d), long(c), false),
                     Conv2d::make(init, name(i) + ".pw", c, c, 1)};
            branches_.push_back(std::move(b));
        } else {
            branches_.push_back({Branch::Kind::dilated, Conv2d::make(init, name(i), c, c, 3, long(d)), {}});
        }
        ++i;
    }
    if (opts_.pooling) branches_.push_back({Branch::Kind::pooling, Conv2d::make(init, prefix + ".pool", c, c, 1), {}});
    fuse_ = Conv2d::make(init, prefix + ".fuse", c * branches_.size(), c, 1);
}

Variable AsppBlock::branch_forward(const Variable& x, std::size_t i) const {
    if (i >= branches_.size()) throw std::out_of_range("aspp branch index");
    if (x.shape().size() != 4 || x.shape()[1] != opts_.channels)
        throw ShapeError("aspp: expected " + std::to_string(opts_.channels) + " input channels, got " +
                         shape_string(x.shape()));
    const Branch& b = branches_[i];
    switch (b.kind) {
        case Branch::Kind::separable:
            return b.pointwise.forward(b.conv.forward(x));
        case Branch::Kind::pooling:
            return ops::broadcast_spatial(b.conv.forward(ops::global_avg_pool(x)), x.shape()[2], x.shape()[3]);
        default:
            return b.conv.forward(x);
    }
}

Variable AsppBlock::forward(const Variable& x) const {
    std::vector<Variable> parts;
    parts.reserve(branches_.size());
    for (std::size_t i = 0; i < branches_.size(); ++i) parts.push_back(branch_forward(x, i));
    return fuse_.forward(ops::concat_channels(parts));
}

std::uint64_t AsppBlock::macs(std::size_t h, std::size_t w) const {
    std::uint64_t m = fuse_.macs(h, w);
    for (const Branch& b : branches_) {
        if (b.kind == Branch::Kind::pooling) m += b.conv.macs(1, 1) + std::uint64_t(opts_.channels) * h * w;
        else m += b.conv.macs(h, w);
        if (b.kind == Branch::Kind::separable) m += b.pointwise.macs(h, w);
    }
    return m;
}

void AsppBlock::collect(ParameterList& out) const {
    for (const Branch& b : branches_) {
        b.conv.collect(out);
        if (b.kind == Branch::Kind::separable) b.pointwise.collect(out);
    }
    fuse_.collect(out);
}

// --- FSGF

FsgfBlock::FsgfBlock(ParamInit& init, const std::string& prefix, std::size_t channels,
                     const std::vector<std::size_t>& freq_rates, double alpha)
    : channels_(channels),
      aspp_(init, prefix + ".aspp_fft", {2 * channels, freq_rates, false, false}),
      recon_(Conv2d::make(init, prefix + ".recon", channels, channels, 3)),
      gate_(Conv2d::make(init, prefix + ".gate", 2 * channels, 2 * channels, 1, 1, 1, false)),
      gate_bias_(init.constant(prefix + ".gate_bias", Shape{channels}, 0.0)),
      alpha_(alpha) {}

Variable FsgfBlock::forward(const Variable& s, FsgfTrace* trace) const {
    if (s.shape().size() != 4 || s.shape()[1] != channels_)
        throw ShapeError("fsgf: expected " + std::to_string(channels_) + " channels, got " + shape_string(s.shape()));
    check_stage(s, "fsgf input");
    const Variable f = ops::fft_packed(s);
    check_stage(f, "fsgf fft");
    const Variable f_proc = aspp_.forward(f);
    check_stage(f_proc, "fsgf aspp_fft");
    const Variable s_rec = recon_.forward(ops::ifft_packed_real(f_proc));
    check_stage(s_rec, "fsgf reconstruction");
    const Variable logits = ops::add_channel_bias(ops::ifft_packed_real(gate_.forward(f_proc)), gate_bias_.var);
    const Variable gate = ops::sigmoid(logits);
    check_stage(gate, "fsgf gate");
    // F' = S * G + alpha * S' * (1 - G)
    const Variable out =
        ops::add(ops::mul(s, gate), ops::scale(ops::mul(s_rec, ops::affine(gate, -1.0, 1.0)), alpha_));
    check_stage(out, "fsgf output");
    if (trace) {
        trace->gate = gate.value();
        trace->reconstructed = s_rec.value();
    }
    return out;
}

std::uint64_t FsgfBlock::macs(std::size_t h, std::size_t w) const {
    // forward FFT of C planes, two inverse transforms of C complex planes
    return aspp_.macs(h, w) + recon_.macs(h, w) + gate_.macs(h, w) + fft_macs(3 * channels_, h, w);
}

void FsgfBlock::collect(ParameterList& out) const {
    aspp_.collect(out);
    recon_.collect(out);
    gate_.collect(out);
    push(out, gate_bias_);
}

// --- FSCA

FscaBlock::FscaBlock(ParamInit& init, const std::string& prefix, std::size_t channels, std::size_t window,
                     std::size_t heads)
    : channels_(channels),
      window_(window),
      heads_(heads),
      wq_(init.uniform(prefix + ".wq", Shape{channels, channels}, channels)),
      wk_(init.uniform(prefix + ".wk", Shape{channels, channels}, channels)),
      wv_(init.uniform(prefix + ".wv", Shape{channels, channels}, channels)),
      wo_(init.uniform(prefix + ".wo", Shape{channels, channels}, channels)) {
    if (heads == 0 || channels % heads != 0)
        throw ShapeError("fsca: " + std::to_string(channels) + " channels not divisible into " +
                         std::to_string(heads) + " heads");
}

Variable FscaBlock::forward(const Variable& s, const Variable& fused, Tensor* probs) const {
    require_same_shape(s.value(), fused.value(), "fsca");
    if (s.shape()[1] != channels_)
        throw ShapeError("fsca: expected " + std::to_string(channels_) + " channels, got " + shape_string(s.shape()));
    const Variable ws = ops::window_partition(s, window_, window_);
    const Variable wf = ops::window_partition(fused, window_, window_);
    const Variable q = ops::linear(ws, wq_.var);
    const Variable k = ops::linear(wf, wk_.var);
    const Variable v = ops::linear(wf, wv_.var);
    const Variable a = ops::linear(ops::attention(q, k, v, heads_, probs), wo_.var);
    return ops::window_merge(a, s.shape(), window_, window_);
}

std::uint64_t FscaBlock::macs(std::size_t h, std::size_t w) const {
    const std::uint64_t hw = std::uint64_t(h) * w;
    const std::uint64_t l = std::uint64_t(window_) * window_;
    return 4 * hw * channels_ * channels_ + 2 * hw * l * channels_;
}

void FscaBlock::collect(ParameterList& out) const {
    for (const Parameter* p : {&wq_, &wk_, &wv_, &wo_}) push(out, *p);
}

// --- Dynamic fusion

DynamicFusionBlock::DynamicFusionBlock(ParamInit& init, const std::string& prefix, const std::string& beta_name,
                                       std::size_t channels)
    : conv1_(Conv2d::make(init, prefix + ".conv1", channels, channels, 1)),
      conv3_(Conv2d::make(init, prefix + ".conv3", channels, channels, 3)),
      beta_(init.constant(beta_name, Shape{1}, 0.1)) {}

Variable DynamicFusionBlock::fused(const Variable& h) const {
    return conv3_.forward(ops::gelu(conv1_.forward(h)));
}

Variable DynamicFusionBlock::forward(const Variable& s, const Variable& h) const {
    require_same_shape(s.value(), h.value(), "dynamic fusion");
    return ops::add(s, ops::scale_by(fused(h), beta_.var));
}

std::uint64_t DynamicFusionBlock::macs(std::size_t h, std::size_t w) const {
    return conv1_.macs(h, w) + conv3_.macs(h, w);
}

void DynamicFusionBlock::collect(ParameterList& out) const {
    conv1_.collect(out);
    conv3_.collect(out);
    push(out, beta_);
}

// --- FPP

FppUnit::FppUnit(ParamInit& init, const std::string& prefix, const ModelConfig& cfg)
    : fsgf_(init, prefix + ".fsgf", cfg.embed_channels, cfg.freq_dilations, cfg.alpha),
      fsca_(init, prefix + ".fsca", cfg.embed_channels, cfg.window_m, cfg.n_heads) {
    if (cfg.ablation.use_dynamic_fusion)
        fusion_.emplace(init, prefix + ".fusion", prefix + ".beta", cfg.embed_channels);
}

Variable FppUnit::forward(const Variable& s) const {
    const Variable fp = fsgf_.forward(s);
    const Variable h = fsca_.forward(s, fp);
    check_stage(h, "fsca");
    return fusion_ ? fusion_->forward(s, h) : ops::add(s, h);
}

std::uint64_t FppUnit::macs(std::size_t h, std::size_t w) const {
    return fsgf_.macs(h, w) + fsca_.macs(h, w) + (fusion_ ? fusion_->macs(h, w) : 0);
}

void FppUnit::collect(ParameterList& out) const {
    fsgf_.collect(out);
    fsca_.collect(out);
    if (fusion_) fusion_->collect(out);
}

// --- HDMS

namespace {

AsppBlock::Options hdms_options(const ModelConfig& cfg) {
    if (cfg.hdms_reference_aspp) return {cfg.embed_channels, cfg.aspp_reference_dilations, true, false};
    return {cfg.embed_channels, cfg.spatial_dilations, false, true};
}

}  // namespace

HdmsBlock::HdmsBlock(ParamInit& init, const std::string& prefix, const ModelConfig& cfg)
    : aspp_(init, prefix + ".aspp", hdms_options(cfg)) {}

Variable HdmsBlock::forward(const Variable& x) const { return ops::add(x, aspp_.forward(x)); }

// --- Backbone

BackboneBlock::BackboneBlock(ParamInit& init, const std::string& prefix, const ModelConfig& cfg, std::size_t index)
    : channels_(cfg.embed_channels),
      heads_(cfg.n_heads),
      window_h_(index % 2 == 0 ? cfg.window_m : 2 * cfg.window_m),
      window_w_(index % 2 == 0 ? 2 * cfg.window_m : cfg.window_m) {
    const std::size_t c = channels_;
    const std::size_t hidden = std::max<std::size_t>(1, c / cfg.se_reduction);
    ln1_gamma_ = init.constant(prefix + ".ln1.gamma", Shape{c}, 1.0);
    ln1_beta_ = init.constant(prefix + ".ln1.beta", Shape{c}, 0.0);
    wq_ = init.uniform(prefix + ".attn.wq", Shape{c, c}, c);
    wk_ = init.uniform(prefix + ".attn.wk", Shape{c, c}, c);
    wv_ = init.uniform(prefix + ".attn.wv", Shape{c, c}, c);
    wo_ = init.uniform(prefix + ".attn.wo", Shape{c, c}, c);
    se_reduce_ = Conv2d::make(init, prefix + ".se.reduce", c, hidden, 1);
    se_expand_ = Conv2d::make(init, prefix + ".se.expand", hidden, c, 1);
    ln2_gamma_ = init.constant(prefix + ".ln2.gamma", Shape{c}, 1.0);
    ln2_beta_ = init.constant(prefix + ".ln2.beta", Shape{c}, 0.0);
    mlp_in_ = Conv2d::make(init, prefix + ".mlp.fc1", c, cfg.mlp_ratio * c, 1);
    mlp_out_ = Conv2d::make(init, prefix + ".mlp.fc2", cfg.mlp_ratio * c, c, 1);
}

Variable BackboneBlock::forward(const Variable& x) const {
    const Variable h = ops::layer_norm_channels(x, ln1_gamma_.var, ln1_beta_.var);
    const Variable win = ops::window_partition(h, window_h_, window_w_);
    Variable a = ops::attention(ops::linear(win, wq_.var), ops::linear(win, wk_.var), ops::linear(win, wv_.var), heads_);
    a = ops::window_merge(ops::linear(a, wo_.var), x.shape(), window_h_, window_w_);
    const Variable se = ops::sigmoid(se_expand_.forward(ops::gelu(se_reduce_.forward(ops::global_avg_pool(a)))));
    const Variable y = ops::add(x, ops::channel_scale(a, se));
    const Variable m = mlp_out_.forward(ops::gelu(mlp_in_.forward(ops::layer_norm_channels(y, ln2_gamma_.var, ln2_beta_.var))));
    return ops::add(y, m);
}

std::uint64_t BackboneBlock::macs(std::size_t h, std::size_t w) const {
    const std::uint64_t hw = std::uint64_t(h) * w;
    const std::uint64_t l = std::uint64_t(window_h_) * window_w_;
    return 4 * hw * channels_ * channels_ + 2 * hw * l * channels_ + se_reduce_.macs(1, 1) + se_expand_.macs(1, 1) +
           mlp_in_.macs(h, w) + mlp_out_.macs(h, w);
}

void BackboneBlock::collect(ParameterList& out) const {
    for (const Parameter* p : {&ln1_gamma_, &ln1_beta_, &wq_, &wk_, &wv_, &wo_}) push(out, *p);
    se_reduce_.collect(out);
    se_expand_.collect(out);
    push(out, ln2_gamma_);
    push(out, ln2_beta_);
    mlp_in_.collect(out);
    mlp_out_.collect(out);
}

}  // namespace hdst::model
