#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdst {

using Shape = std::vector<std::size_t>;

/// Thrown when operand extents disagree. The message names the offending
/// dimension.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File-level failures; messages carry the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const;
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* raw() noexcept { return data_.data(); }
    const double* raw() const noexcept { return data_.data(); }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // 4-D accessors, [B,C,H,W].
    double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    Tensor reshaped(Shape shape) const;
    void fill(double v);
    bool all_finite() const noexcept;
    double max_abs() const noexcept;
    double sum() const noexcept;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Paired real and imaginary planes of one complex-valued array.
struct ComplexTensor {
    Tensor real;
    Tensor imag;

    ComplexTensor() = default;
    ComplexTensor(Tensor re, Tensor im);
    const Shape& shape() const noexcept { return real.shape(); }
};

void require_rank(const Tensor& t, std::size_t rank, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace hdst
