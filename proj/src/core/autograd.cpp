#include "hdst/autograd.hpp"

namespace hdst {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tensor& Node::grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor::zeros(value.shape());
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& buf = grad_buffer();
    require_same_shape(buf, g, "gradient accumulation");
    double* d = buf.raw();
    const double* s = g.raw();
    for (std::size_t i = 0; i < buf.numel(); ++i) d[i] += s[i];
}

Variable::Variable(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Variable::grad() const {
    if (node_->grad.shape() != node_->value.shape()) return Tensor::zeros(node_->value.shape());
    return node_->grad;
}

void Variable::zero_grad() {
    if (node_) node_->grad = Tensor();
}

void Tape::record(std::vector<std::shared_ptr<Node>> outputs, BackwardFn fn) {
    entries_.push_back(Entry{std::move(outputs), std::move(fn)});
}

void Tape::clear() { entries_.clear(); }

void Tape::replay(const Variable& loss) {
    for (auto& e : entries_)
        for (auto& n : e.outputs) n->grad = Tensor();
    loss.node()->grad_buffer().fill(1.0);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

Tape* Tape::active() noexcept { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

std::map<std::string, Tensor> backward(const Variable& loss, Tape& tape, const ParameterList& params) {
    if (!loss.defined() || loss.value().numel() != 1)
        throw ShapeError("backward: loss must be a single scalar, got shape " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    zero_grad(params);
    tape.replay(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& p : params) grads.emplace(p.name, p.var.grad());
    return grads;
}

void zero_grad(const ParameterList& params) {
    for (const auto& p : params) {
        Variable v = p.var;
        v.zero_grad();
    }
}

std::size_t count_scalars(const ParameterList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.value().numel();
    return n;
}

}  // namespace hdst
