// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/matrix.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

namespace moelab::nk {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Reverse-mode recording of primitive operations.
///
/// Values are appended in evaluation order. `backward()` walks the records in
/// reverse, handing each node's accumulated adjoint to its backward closure.
/// Nodes that do not depend on any trainable leaf carry no closure and never
/// receive an adjoint, so their gradient reads back as exact zeros.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

    Var leaf(Matrix value, bool requires_grad = false);
    Var constant(Matrix value) { return leaf(std::move(value), false); }

    /// Record the result of an operation. The closure is kept only when one of
    /// `parents` requires a gradient.
    Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
    Var record(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    /// Adds `g` to the adjoint of `v`; no-op when `v` does not require a gradient.
    void accumulate(Var v, const Matrix& g);
    void accumulate(Var v, Matrix&& g);

    /// Adjoint of `v` after `backward()`; zeros when none reached it.
    Matrix grad(Var v) const;

    /// Seeds the 1x1 `root` with 1 and propagates adjoints.
    void backward(Var root);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn fn;
    };

    // Deque keeps value() references valid while later nodes are recorded.
    std::deque<Node> nodes_;
};

} // namespace moelab::nk
