// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/tape.hpp"

#include "moelab/errors.hpp"

namespace moelab::nk {

Var Tape::leaf(Matrix value, bool requires_grad)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn)
{
    return record(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn fn)
{
    bool needs = false;
    for (Var p : parents)
        needs = needs || nodes_.at(p.id).requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs)
        n.fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g)
{
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad)
        return;
    if (!g.same_shape(n.value))
        throw ShapeError("adjoint shape does not match value shape");
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
        return;
    }
    auto dst = n.grad.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += src[i];
}

void Tape::accumulate(Var v, Matrix&& g)
{
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad)
        return;
    if (!n.has_grad) {
        if (!g.same_shape(n.value))
            throw ShapeError("adjoint shape does not match value shape");
        n.grad = std::move(g);
        n.has_grad = true;
        return;
    }
    accumulate(v, static_cast<const Matrix&>(g));
}

Matrix Tape::grad(Var v) const
{
    const Node& n = nodes_.at(v.id);
    if (n.has_grad)
        return n.grad;
    return Matrix::zeros_like(n.value);
}

void Tape::backward(Var root)
{
    Node& r = nodes_.at(root.id);
    if (r.value.size() != 1)
        throw ShapeError("backward() needs a scalar root");
    if (!r.requires_grad)
        return;
    accumulate(root, Matrix(1, 1, 1.0));
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.fn)
            continue;
        // The closure only touches earlier nodes, so this reference stays valid.
        n.fn(*this, n.grad);
    }
}

} // namespace moelab::nk
