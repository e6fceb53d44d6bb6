// Reverse-mode gradient tape over Tensor values.
//
// Nodes are appended in construction order, so inputs always reference
// earlier nodes and the backward sweep is a single reverse pass. Gradients
// accumulate (never overwrite) at shared nodes. A tape is single-owner while
// being built; parallelism belongs above this layer.

#pragma once

#include <functional>
#include <vector>

#include "amc/tensor.hpp"

namespace amc {

class Tape;

/// Lightweight handle to a node on a tape.
struct Value {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Constant leaf; gradients do not flow into it.
    Value input(Tensor v);

    /// Tracked leaf; receives a gradient from backward().
    Value param(Tensor v);

    const Tensor& value(Value v) const;
    bool tracked(Value v) const;

    /// Reverse sweep from a scalar seed. Gradient of the seed w.r.t. itself
    /// is 1; every tracked node reachable from the seed accumulates its
    /// adjoint. Throws ContractError if the seed is not scalar.
    void backward(Value seed);

    /// Gradient accumulated at `v` by the last backward(); a zero tensor of
    /// the value's shape if the node was not reached.
    Tensor gradient(Value v) const;

    /// Drops all nodes and gradients, keeping allocated capacity.
    void reset();

    int size() const { return static_cast<int>(nodes_.size()); }

    // Internals used by the op implementations. The adjoint receives the
    // output gradient plus its own node id so it can read its forward value.
    using Backprop = std::function<void(const Tensor& grad, Tape&, int self)>;
    Value emit(const char* op, Tensor value, bool tracked, Backprop bp);
    Tensor& grad_acc(int id);
    const char* op_name(Value v) const;

private:
    struct Node {
        const char* op;
        Tensor value;
        bool tracked;
        Backprop backprop;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;

    void check(Value v) const;
};

// --- Differentiable op set -------------------------------------------------
// Each op validates shapes, computes the forward value, and registers its
// adjoint when a tracked input is involved.

/// Matrix product. Rank-1 operands follow the vector convention: a rank-1
/// left operand is a row vector, a rank-1 right operand a column vector, and
/// rank-1 x rank-1 is an inner product yielding a scalar.
Value matmul(Value a, Value b);

/// Elementwise sum; a rank-1 right operand broadcasts across the rows of a
/// rank-2 left operand (bias add).
Value add(Value a, Value b);

/// max(0, x) elementwise; the subgradient at exactly 0 is 0. Also serves as
/// the hinge for scalar margins.
Value relu(Value x);

/// Softmax along `axis` with max-subtraction for stability. Rank-1 tensors
/// use axis 0; rank-2 supports axis 0 (down columns) and 1 (along rows).
Value softmax(Value x, int axis = 0);

/// Rank-1 softmax restricted to rows flagged active; inactive entries are
/// exactly 0. Requires at least one active row.
Value masked_softmax(Value x, const std::vector<bool>& active);

/// Broadcast multiply of a per-row weight over the channels of a rank-2
/// tensor: out[i, :] = m[i, :] * w[i].
Value row_scale(Value m, Value w);

/// Grid average pool: column-wise mean of a rank-2 tensor, rows being grid
/// cells.
Value mean_rows(Value m);

/// Cosine similarity of two equal-length rank-1 tensors with denominator
/// clamp max(|u|, eps), eps = 1e-8, so zero vectors are safe.
Value cosine(Value u, Value v);

/// Inner product of two equal-length rank-1 tensors.
Value dot(Value u, Value v);

/// Scalar node times tensor node.
Value scale(Value s, Value x);

/// Fixed-coefficient combination sum_i c_i * term_i + constant over
/// same-shape tensors.
Value lincomb(const std::vector<std::pair<double, Value>>& terms, double constant = 0.0);

/// Packs scalar nodes into a rank-1 tensor.
Value pack(const std::vector<Value>& scalars);

/// Extracts element i of a rank-1 tensor as a scalar node.
Value at(Value x, int i);

/// Reinterprets the value with a new shape of equal element count.
Value reshape(Value x, const Shape& s);

}  // namespace amc
