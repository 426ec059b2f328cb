// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker. Rebuilds the graph from plain
// tensors on every probe, so the function under test sees fresh leaves each
// time. Relative error uses a floor so near-zero gradients compare sanely.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/rng.hpp"

namespace lswap::testing {

struct GradCheckResult {
    Real max_rel_err = 0;
    std::string worst; // "input#i[j] analytic=... numeric=..."
    int checked = 0;

    bool ok(Real tol) const { return checked > 0 && max_rel_err <= tol; }
};

/// f maps fresh leaf Vars (one per input tensor) to a scalar Var. Checks
/// d f / d inputs[i] at sampled coordinates against central differences.
/// max_coords_per_input < 0 checks every coordinate.
inline GradCheckResult grad_check(
    const std::function<ad::Var(const std::vector<ad::Var>&)>& f,
    const std::vector<Tensor>& inputs, Rng& rng, int max_coords_per_input = 24) {
    auto eval = [&](const std::vector<Tensor>& vals) {
        std::vector<ad::Var> leaves;
        leaves.reserve(vals.size());
        for (const auto& t : vals) leaves.emplace_back(t, false);
        Tensor out = f(leaves).value();
        if (out.numel() != 1) throw DimensionError("grad_check: f must return a scalar");
        return out.data[0];
    };

    // one analytic pass
    std::vector<ad::Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.emplace_back(t, true);
    ad::Var root = f(leaves);
    ad::backward(root);

    GradCheckResult result;
    std::vector<Tensor> probe = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::size_t n = inputs[i].data.size();
        std::vector<std::size_t> coords;
        if (max_coords_per_input < 0 || n <= static_cast<std::size_t>(max_coords_per_input)) {
            coords.resize(n);
            for (std::size_t j = 0; j < n; ++j) coords[j] = j;
        } else {
            for (int j = 0; j < max_coords_per_input; ++j) coords.push_back(rng.uniform_index(n));
        }
        for (std::size_t j : coords) {
            Real v = inputs[i].data[j];
            Real h = 1e-5 * std::max(Real(1), std::abs(v));
            probe[i].data[j] = v + h;
            Real up = eval(probe);
            probe[i].data[j] = v - h;
            Real down = eval(probe);
            probe[i].data[j] = v;
            Real numeric = (up - down) / (2 * h);
            Real analytic = leaves[i].grad().data[j];
            Real scale = std::max({std::abs(analytic), std::abs(numeric), Real(1e-4)});
            Real rel = std::abs(analytic - numeric) / scale;
            ++result.checked;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = "input#" + std::to_string(i) + "[" + std::to_string(j) +
                               "] analytic=" + std::to_string(analytic) +
                               " numeric=" + std::to_string(numeric);
            }
        }
    }
    return result;
}

/// Directional variant: compares dot(analytic gradient, u) for a random unit
/// direction u against a central difference along u. Composite losses with
/// large term weights cancel per coordinate, so pointwise relative error is
/// uninformative there; the directional derivative stays well-scaled.
inline GradCheckResult grad_check_directional(
    const std::function<ad::Var(const std::vector<ad::Var>&)>& f,
    const std::vector<Tensor>& inputs, Rng& rng, int directions = 4) {
    auto eval = [&](const std::vector<Tensor>& vals) {
        std::vector<ad::Var> leaves;
        leaves.reserve(vals.size());
        for (const auto& t : vals) leaves.emplace_back(t, false);
        Tensor out = f(leaves).value();
        if (out.numel() != 1) throw DimensionError("grad_check_directional: f must return a scalar");
        return out.data[0];
    };

    std::vector<ad::Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.emplace_back(t, true);
    ad::Var root = f(leaves);
    ad::backward(root);

    GradCheckResult result;
    for (int d = 0; d < directions; ++d) {
        std::vector<Tensor> dir;
        Real norm_sq = 0;
        for (const auto& t : inputs) {
            dir.push_back(rng.normal_tensor(t.shape));
            for (Real v : dir.back().data) norm_sq += v * v;
        }
        Real inv_norm = 1.0 / std::sqrt(norm_sq);
        Real analytic = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i)
            for (std::size_t j = 0; j < dir[i].data.size(); ++j)
                analytic += leaves[i].grad().data[j] * dir[i].data[j] * inv_norm;

        const Real h = 1e-5;
        std::vector<Tensor> up = inputs, down = inputs;
        for (std::size_t i = 0; i < inputs.size(); ++i)
            for (std::size_t j = 0; j < dir[i].data.size(); ++j) {
                Real step = h * dir[i].data[j] * inv_norm;
                up[i].data[j] += step;
                down[i].data[j] -= step;
            }
        Real numeric = (eval(up) - eval(down)) / (2 * h);
        Real scale = std::max({std::abs(analytic), std::abs(numeric), Real(1e-4)});
        Real rel = std::abs(analytic - numeric) / scale;
        ++result.checked;
        if (rel > result.max_rel_err) {
            result.max_rel_err = rel;
            result.worst = "direction#" + std::to_string(d) + " analytic=" + std::to_string(analytic) +
                           " numeric=" + std::to_string(numeric);
        }
    }
    return result;
}

/// Same probe loop, but the differentiated leaves are an existing parameter
/// set (the graph builder closes over it). f() must rebuild the graph.
inline GradCheckResult grad_check_params(const std::function<ad::Var()>& f, ad::ParamSet& params,
                                         Rng& rng, int max_coords_per_param = 12) {
    params.set_requires_grad(true);
    params.zero_grads();
    ad::Var root = f();
    ad::backward(root);

    std::vector<Tensor> grads;
    for (auto& item : params.items()) grads.push_back(item.var.grad());

    auto eval = [&]() {
        Tensor out = f().value();
        if (out.numel() != 1) throw DimensionError("grad_check_params: f must return a scalar");
        return out.data[0];
    };

    GradCheckResult result;
    auto& items = params.items();
    for (std::size_t p = 0; p < items.size(); ++p) {
        Tensor& val = items[p].var.value_mut();
        const std::size_t n = val.data.size();
        std::vector<std::size_t> coords;
        if (max_coords_per_param < 0 || n <= static_cast<std::size_t>(max_coords_per_param)) {
            coords.resize(n);
            for (std::size_t j = 0; j < n; ++j) coords[j] = j;
        } else {
            for (int j = 0; j < max_coords_per_param; ++j) coords.push_back(rng.uniform_index(n));
        }
        for (std::size_t j : coords) {
            Real v = val.data[j];
            Real h = 1e-5 * std::max(Real(1), std::abs(v));
            val.data[j] = v + h;
            Real up = eval();
            val.data[j] = v - h;
            Real down = eval();
            val.data[j] = v;
            Real numeric = (up - down) / (2 * h);
            Real analytic = grads[p].data[j];
            Real scale = std::max({std::abs(analytic), std::abs(numeric), Real(1e-4)});
            Real rel = std::abs(analytic - numeric) / scale;
            ++result.checked;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = items[p].name + "[" + std::to_string(j) +
                               "] analytic=" + std::to_string(analytic) +
                               " numeric=" + std::to_string(numeric);
            }
        }
    }
    return result;
}

} // namespace lswap::testing
