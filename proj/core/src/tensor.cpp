#include "amc/tensor.hpp"

#include <cmath>
#include <cstring>

namespace amc {

Shape::Shape(std::initializer_list<int> dims) {
    if (dims.size() > 3) {
        throw ShapeError("tensor rank above 3 is not supported");
    }
    for (int d : dims) {
        if (d <= 0) {
            throw ShapeError("tensor extents must be positive, got " + std::to_string(d));
        }
        dims_[static_cast<size_t>(rank_++)] = d;
    }
}

long long Shape::numel() const {
    if (rank_ == 0) return 0;
    long long n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[static_cast<size_t>(i)];
    return n;
}

bool Shape::operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i) {
        if (dims_[static_cast<size_t>(i)] != o.dims_[static_cast<size_t>(i)]) return false;
    }
    return true;
}

std::string Shape::str() const {
    std::string s = "[";
    for (int i = 0; i < rank_; ++i) {
        if (i) s += "x";
        s += std::to_string(dims_[static_cast<size_t>(i)]);
    }
    return s + "]";
}

Tensor Tensor::zeros(const Shape& s) {
    Tensor t;
    t.shape = s;
    t.data.assign(static_cast<size_t>(s.numel()), 0.0);
    return t;
}

Tensor Tensor::filled(const Shape& s, double v) {
    Tensor t;
    t.shape = s;
    t.data.assign(static_cast<size_t>(s.numel()), v);
    require_finite(t, "Tensor::filled");
    return t;
}

Tensor Tensor::scalar(double v) {
    return filled(Shape{1}, v);
}

Tensor Tensor::from(const Shape& s, std::vector<double> values) {
    if (static_cast<long long>(values.size()) != s.numel()) {
        throw ShapeError("data length " + std::to_string(values.size()) +
                         " does not match shape " + s.str());
    }
    Tensor t;
    t.shape = s;
    t.data = std::move(values);
    require_finite(t, "Tensor::from");
    return t;
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("expected a scalar tensor, got shape " + shape.str());
    }
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool Tensor::same_bits(const Tensor& o) const {
    if (shape != o.shape) return false;
    return std::memcmp(data.data(), o.data.data(), data.size() * sizeof(double)) == 0;
}

void require_finite(const Tensor& t, const std::string& where) {
    if (!t.all_finite()) {
        throw ContractError(where + ": tensor contains NaN or Inf");
    }
}

}  // namespace amc
