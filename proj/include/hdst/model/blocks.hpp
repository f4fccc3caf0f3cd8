#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdst/autograd.hpp"
#include "hdst/model/config.hpp"
#include "hdst/rng.hpp"

namespace hdst::model {

/// Creates named parameters. Every parameter draws from its own counter
/// stream keyed by (seed, hash of name), so values do not depend on
/// construction order or on which ablation modules exist.
class ParamInit {
public:
    explicit ParamInit(std::uint64_t seed) : seed_(seed) {}

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Parameter uniform(const std::string& name, Shape shape, std::size_t fan_in);
    Parameter constant(const std::string& name, Shape shape, double value);

private:
    std::uint64_t seed_;
};

struct Conv2d {
    Parameter weight;
    Parameter bias;  // undefined Variable when bias-free
    long dilation = 1;
    long groups = 1;

    static Conv2d make(ParamInit& init, const std::string& name, std::size_t cin, std::size_t cout,
                       std::size_t kernel, long dilation = 1, long groups = 1, bool bias = true);

    Variable forward(const Variable& x) const;
    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;
};

/// Parallel branches (1x1, one 3x3 per dilation rate, optional global pooling)
/// whose outputs are concatenated and fused by a 1x1 convolution.
class AsppBlock {
public:
    struct Options {
        std::size_t channels = 0;
        std::vector<std::size_t> rates;
        bool pooling = false;
        bool separable = false;  // depthwise 3x3 followed by pointwise 1x1
    };

    AsppBlock(ParamInit& init, const std::string& prefix, Options opts);

    Variable forward(const Variable& x) const;
    Variable branch_forward(const Variable& x, std::size_t branch) const;
    std::size_t branch_count() const { return branches_.size(); }
    const Options& options() const { return opts_; }

    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;

    struct Branch {
        enum class Kind { pointwise, dilated, separable, pooling } kind;
        Conv2d conv;
        Conv2d pointwise;  // separable only
    };
    const std::vector<Branch>& branches() const { return branches_; }
    const Conv2d& fuse() const { return fuse_; }

private:
    Options opts_;
    std::vector<Branch> branches_;
    Conv2d fuse_;
};

/// Intermediates of one FSGF evaluation, for inspection in tests.
struct FsgfTrace {
    Tensor gate;
    Tensor reconstructed;  // S'
};

/// FFT-scale gated fusion. The 1x1 gate convolution acts on the packed
/// spectrum; its logits are brought back to the spatial layout by the inverse
/// transform, where the per-channel gate bias is added before the sigmoid.
class FsgfBlock {
public:
    FsgfBlock(ParamInit& init, const std::string& prefix, std::size_t channels,
              const std::vector<std::size_t>& freq_rates, double alpha);

    Variable forward(const Variable& s, FsgfTrace* trace = nullptr) const;

    AsppBlock& aspp() { return aspp_; }
    const AsppBlock& aspp() const { return aspp_; }
    Conv2d& reconstruction() { return recon_; }
    Conv2d& gate() { return gate_; }
    Parameter& gate_bias() { return gate_bias_; }
    double alpha() const { return alpha_; }
    void set_alpha(double a) { alpha_ = a; }

    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;

private:
    std::size_t channels_;
    AsppBlock aspp_;
    Conv2d recon_;
    Conv2d gate_;
    Parameter gate_bias_;
    double alpha_;
};

/// Windowed multi-head cross attention: queries from the spatial map,
/// keys and values from the frequency-fused map. Bias-free projections.
class FscaBlock {
public:
    FscaBlock(ParamInit& init, const std::string& prefix, std::size_t channels, std::size_t window,
              std::size_t heads);

    /// `probs` receives [windows, heads, M*M, M*M] attention weights.
    Variable forward(const Variable& s, const Variable& fused, Tensor* probs = nullptr) const;

    Parameter& wq() { return wq_; }
    Parameter& wk() { return wk_; }
    Parameter& wv() { return wv_; }
    Parameter& wo() { return wo_; }
    std::size_t window() const { return window_; }

    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;

private:
    std::size_t channels_, window_, heads_;
    Parameter wq_, wk_, wv_, wo_;
};

/// Output = S + beta * Conv3x3(GELU(Conv1x1(H))), beta learnable from 0.1.
class DynamicFusionBlock {
public:
    DynamicFusionBlock(ParamInit& init, const std::string& prefix, const std::string& beta_name,
                       std::size_t channels);

    Variable fused(const Variable& h) const;
    Variable forward(const Variable& s, const Variable& h) const;

    Parameter& beta() { return beta_; }
    Conv2d& conv1() { return conv1_; }
    Conv2d& conv3() { return conv3_; }

    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;

private:
    Conv2d conv1_, conv3_;
    Parameter beta_;
};

/// FSGF -> FSCA -> dynamic fusion. Without dynamic fusion the calibrated
/// features are added back with a fixed unit coefficient.
class FppUnit {
public:
    FppUnit(ParamInit& init, const std::string& prefix, const ModelConfig& cfg);

    Variable forward(const Variable& s) const;

    FsgfBlock& fsgf() { return fsgf_; }
    FscaBlock& fsca() { return fsca_; }
    DynamicFusionBlock* fusion() { return fusion_ ? &*fusion_ : nullptr; }

    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;

private:
    FsgfBlock fsgf_;
    FscaBlock fsca_;
    std::optional<DynamicFusionBlock> fusion_;
};

/// Residual multiscale refinement: x + ASPP(x).
class HdmsBlock {
public:
    HdmsBlock(ParamInit& init, const std::string& prefix, const ModelConfig& cfg);

    Variable forward(const Variable& x) const;
    const AsppBlock& aspp() const { return aspp_; }

    std::uint64_t macs(std::size_t h, std::size_t w) const { return aspp_.macs(h, w); }
    void collect(ParameterList& out) const { aspp_.collect(out); }

private:
    AsppBlock aspp_;
};

/// Stand-in transformer block: layer norm, rectangular-window self attention
/// (M x 2M on even block indices, 2M x M on odd), channel squeeze-excitation
/// on the attention output, then a GELU MLP. Both halves are residual.
class BackboneBlock {
public:
    BackboneBlock(ParamInit& init, const std::string& prefix, const ModelConfig& cfg, std::size_t index);

    Variable forward(const Variable& x) const;
    std::size_t window_h() const { return window_h_; }
    std::size_t window_w() const { return window_w_; }

    std::uint64_t macs(std::size_t h, std::size_t w) const;
    void collect(ParameterList& out) const;

private:
    std::size_t channels_, heads_, window_h_, window_w_;
    Parameter ln1_gamma_, ln1_beta_, wq_, wk_, wv_, wo_;
    Conv2d se_reduce_, se_expand_;
    Parameter ln2_gamma_, ln2_beta_;
    Conv2d mlp_in_, mlp_out_;
};

}  // namespace hdst::model
