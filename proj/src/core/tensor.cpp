#include "hdst/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace hdst {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) {
        throw ShapeError("dimension index " + std::to_string(i) + " out of range for shape " +
                         shape_string(shape_));
    }
    return shape_[i];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Tensor::sum() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

ComplexTensor::ComplexTensor(Tensor re, Tensor im) : real(std::move(re)), imag(std::move(im)) {
    if (real.shape() != imag.shape()) {
        throw ShapeError("complex tensor planes differ: real " + shape_string(real.shape()) +
                         " vs imag " + shape_string(imag.shape()));
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
    }
}

}  // namespace hdst
