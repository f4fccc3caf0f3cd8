#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hdst/tensor.hpp"

namespace hdst {

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;

    Tensor& grad_buffer();
    void accumulate(const Tensor& g);
};

/// Shared handle to a value node. Copies alias the same node.
class Variable {
public:
    Variable() = default;
    explicit Variable(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool defined() const noexcept { return static_cast<bool>(node_); }

    /// Gradient buffer; zeros of the value shape when nothing was accumulated.
    Tensor grad() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// A trainable tensor with a unique dotted path, e.g. "rtl0.block1.fpp.beta".
struct Parameter {
    std::string name;
    Variable var;
};
using ParameterList = std::vector<Parameter>;

/// Ordered record of executed differentiable operations. Ops record onto the
/// tape that is active on the calling thread (see Tape::Scope); with no active
/// tape they only compute values.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::vector<std::shared_ptr<Node>> outputs, BackwardFn fn);
    std::size_t size() const noexcept { return entries_.size(); }
    void clear();

    /// Replays the tape in reverse from `loss`. Intermediate gradients are
    /// reset first; leaf gradients accumulate across calls.
    void replay(const Variable& loss);

    static Tape* active() noexcept;

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

private:
    struct Entry {
        std::vector<std::shared_ptr<Node>> outputs;
        BackwardFn fn;
    };
    std::vector<Entry> entries_;
};

/// Gradients of a scalar loss for every listed parameter; parameters the loss
/// does not reach report zeros. Parameter buffers are cleared first, so calls do
/// not accumulate into each other. Throws ShapeError when `loss` is not scalar.
std::map<std::string, Tensor> backward(const Variable& loss, Tape& tape, const ParameterList& params);

void zero_grad(const ParameterList& params);
std::size_t count_scalars(const ParameterList& params);

}  // namespace hdst
