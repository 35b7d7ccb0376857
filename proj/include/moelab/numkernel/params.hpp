// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/tape.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moelab::nk {

/// Parameter groups; the optimizer can scale the learning rate per group.
enum class ParamGroup { dense, routed, shared, gate };

std::string_view to_string(ParamGroup g);
ParamGroup parse_param_group(std::string_view s);

/// A named trainable tensor. `value` is the master copy.
struct Param {
    std::string name;
    Matrix value;
    bool trainable = false;
    ParamGroup group = ParamGroup::dense;
};

/// Places parameters on a tape as leaves. Each parameter is bound at most once
/// per tape; the leaf holds the compute copy produced by `quantize` (identity
/// when none is given), and its adjoint is read back as the master gradient.
class ParamBinder {
public:
    using Quantizer = std::function<Matrix(const Matrix&)>;

    explicit ParamBinder(Tape& tape, Quantizer quantize = {}, bool grad_all = false)
        : tape_(tape), quantize_(std::move(quantize)), grad_all_(grad_all)
    {
    }

    Var bind(const Param& p);

    /// Gradient for `p`, or an empty matrix when it was never bound.
    Matrix grad(const Param& p) const;
    bool bound(const Param& p) const;

    Tape& tape() noexcept { return tape_; }

private:
    Tape& tape_;
    Quantizer quantize_;
    bool grad_all_;
    std::vector<std::pair<const Param*, Var>> bound_;
};

} // namespace moelab::nk
