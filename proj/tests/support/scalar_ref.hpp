// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Standalone scalar-by-scalar reference for the transfer cell, transfer
// block, row-wise transfer module, and identity injection. Written against
// the documented formulas with plain double loops and no shared code with
// the library ops, so agreement is evidence rather than tautology.

#pragma once

#include <cmath>
#include <vector>

#include "latentswap/manipulators.hpp"

namespace lswap::testing {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>; // row-major

inline Mat as_matrix(const Tensor& t) {
    Mat m(static_cast<std::size_t>(t.shape[0]), Vec(static_cast<std::size_t>(t.shape[1])));
    for (int r = 0; r < t.shape[0]; ++r)
        for (int c = 0; c < t.shape[1]; ++c) m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = t(r, c);
    return m;
}

inline Vec as_vector(const Tensor& t) {
    return Vec(t.data.begin(), t.data.end());
}

inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec ref_affine(const Mat& w, const Vec& b, const Vec& x) {
    Vec out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        double acc = b[i];
        for (std::size_t j = 0; j < x.size(); ++j) acc += w[i][j] * x[j];
        out[i] = acc;
    }
    return out;
}

struct RefBranch {
    Mat k1_w; Vec k1_b;
    Mat k2_w; Vec k2_b;
};

struct RefCell {
    RefBranch src, tgt;
};

struct RefBlock {
    RefCell cells[3];
    Vec omega;
};

inline RefBranch ref_branch_of(const BranchParams& b) {
    return {as_matrix(b.k1_w.value()), as_vector(b.k1_b.value()),
            as_matrix(b.k2_w.value()), as_vector(b.k2_b.value())};
}

inline RefBlock ref_block_of(const TransferBlockParams& b) {
    RefBlock out;
    for (int c = 0; c < 3; ++c)
        out.cells[c] = {ref_branch_of(b.cells[static_cast<std::size_t>(c)].source),
                        ref_branch_of(b.cells[static_cast<std::size_t>(c)].target)};
    out.omega = as_vector(b.omega.value());
    return out;
}

/// One cell: concat the pair, gate with sigmoid(K1 .), shift with tanh(K2 .).
inline std::pair<Vec, Vec> ref_transfer_cell(const Vec& l_s, const Vec& l_t, const RefCell& cell) {
    Vec l_c(l_s);
    l_c.insert(l_c.end(), l_t.begin(), l_t.end());
    auto refine = [&l_c](const Vec& code, const RefBranch& br) {
        Vec gate_pre = ref_affine(br.k1_w, br.k1_b, l_c);
        Vec shift_pre = ref_affine(br.k2_w, br.k2_b, l_c);
        Vec out(code.size());
        for (std::size_t i = 0; i < code.size(); ++i)
            out[i] = std::tanh(shift_pre[i]) + ref_sigmoid(gate_pre[i]) * code[i];
        return out;
    };
    return {refine(l_s, cell.src), refine(l_t, cell.tgt)};
}

/// Three chained cells, then the omega blend of the final refined pair.
inline Vec ref_transfer_block(Vec l_s, Vec l_t, const RefBlock& block) {
    for (int c = 0; c < 3; ++c) {
        auto [s, t] = ref_transfer_cell(l_s, l_t, block.cells[c]);
        l_s = std::move(s);
        l_t = std::move(t);
    }
    Vec out(l_s.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double g = ref_sigmoid(block.omega[i]);
        out[i] = g * l_t[i] + (1.0 - g) * l_s[i];
    }
    return out;
}

inline Mat ref_ftm_forward(const Mat& s_high, const Mat& t_high, const FTMParams& ftm) {
    Mat out;
    out.reserve(s_high.size());
    for (std::size_t r = 0; r < s_high.size(); ++r)
        out.push_back(ref_transfer_block(s_high[r], t_high[r], ref_block_of(ftm.blocks[r])));
    return out;
}

/// Identity injection, documented layout: hidden = leaky_relu(W_h id + b_h)
/// with slope 0.2, gamma/beta by affine heads, each row modulated as
/// row + gamma * normalize(row) + beta where normalize subtracts the row
/// mean and divides by sqrt(var + 1e-5).
inline Mat ref_id_inject(const Mat& rows, const Vec& id_code, const IdInjectParams& p) {
    Mat hw = as_matrix(p.hidden_w.value());
    Vec hb = as_vector(p.hidden_b.value());
    Mat gw = as_matrix(p.gamma_w.value());
    Vec gb = as_vector(p.gamma_b.value());
    Mat bw = as_matrix(p.beta_w.value());
    Vec bb = as_vector(p.beta_b.value());

    Vec hidden = ref_affine(hw, hb, id_code);
    for (auto& v : hidden) v = v > 0 ? v : 0.2 * v;
    Vec gamma = ref_affine(gw, gb, hidden);
    Vec beta = ref_affine(bw, bb, hidden);

    Mat out;
    out.reserve(rows.size());
    for (const Vec& row : rows) {
        double mu = 0;
        for (double v : row) mu += v;
        mu /= static_cast<double>(row.size());
        double var = 0;
        for (double v : row) var += (v - mu) * (v - mu);
        var /= static_cast<double>(row.size());
        double inv_s = 1.0 / std::sqrt(var + 1e-5);
        Vec o(row.size());
        for (std::size_t i = 0; i < row.size(); ++i)
            o[i] = row[i] + gamma[i] * ((row[i] - mu) * inv_s) + beta[i];
        out.push_back(std::move(o));
    }
    return out;
}

inline double max_abs_diff(const Mat& a, const Tensor& b) {
    double worst = 0;
    for (int r = 0; r < b.shape[0]; ++r)
        for (int c = 0; c < b.shape[1]; ++c)
            worst = std::max(worst,
                             std::abs(a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] - b(r, c)));
    return worst;
}

inline double max_abs_diff(const Vec& a, const Tensor& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b.data[i]));
    return worst;
}

} // namespace lswap::testing
