// Dense rank-1/2/3 tensors of 64-bit reals, the universal value type of the
// library. Values are immutable-by-convention after construction and safe to
// share read-only across threads.

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace amc {

/// Thrown when tensor extents do not line up (includes both shapes).
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when an API precondition is violated (non-scalar seed, bad axis, ...).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Thrown on malformed dataset/checkpoint/config files; message carries
/// file name and line number where known.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Extents of a tensor. Rank 0 denotes the empty sentinel (no value);
/// valid tensors have rank 1..3 with positive extents. Scalars are shape {1}.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<int> dims);

    static Shape vec(int n) { return Shape{n}; }
    static Shape mat(int rows, int cols) { return Shape{rows, cols}; }
    static Shape cube(int a, int b, int c) { return Shape{a, b, c}; }

    int rank() const { return rank_; }
    int operator[](int i) const { return dims_[static_cast<size_t>(i)]; }
    long long numel() const;
    bool operator==(const Shape& o) const;
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;

private:
    std::array<int, 3> dims_{0, 0, 0};
    int rank_ = 0;
};

/// Dense row-major tensor. Invariants: data.size() == shape.numel() and every
/// entry finite; both are enforced by the factories.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(const Shape& s);
    static Tensor filled(const Shape& s, double v);
    static Tensor scalar(double v);
    static Tensor from(const Shape& s, std::vector<double> values);

    bool empty() const { return shape.rank() == 0; }
    long long numel() const { return shape.numel(); }

    double& operator[](long long i) { return data[static_cast<size_t>(i)]; }
    double operator[](long long i) const { return data[static_cast<size_t>(i)]; }

    // Row-major indexed access for ranks 2 and 3.
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    /// The single entry of a scalar (numel-1) tensor.
    double value() const;

    bool all_finite() const;
    bool same_bits(const Tensor& o) const;
};

/// Validates the finiteness invariant; throws ContractError naming `where`.
void require_finite(const Tensor& t, const std::string& where);

}  // namespace amc
