// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Latent-code manipulators for identity transfer.
//
// Face transfer module: per high code, a block of three chained transfer
// cells. A cell concatenates the current (source, target) pair and refines
// each side through its own branch,
//     refined = tanh(K2(concat)) + sigmoid(K1(concat)) * code,
// cell i consuming cell i-1's refined pair. The block output blends the final
// pair through a trainable vector omega:
//     out = sigmoid(omega) * refined_t + (1 - sigmoid(omega)) * refined_s.
//
// Ablation manipulators: latent-code replacement (no parameters) and
// identity injection. The injection layout, fixed and documented here:
//     hidden = leaky_relu(W_h id_code + b_h)
//     gamma  = W_g hidden + b_g          (zero-initialized)
//     beta   = W_b hidden + b_b          (zero-initialized)
//     row_out = row + gamma * normalize(row) + beta
// where normalize is the parameter-free per-row normalization. Zero-init of
// the gamma/beta heads makes the block start as the identity.

#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/latent.hpp"
#include "latentswap/rng.hpp"
#include "latentswap/serialize.hpp"

namespace lswap {

// ---------------------------------------------------------------------------
// parameter containers

struct BranchParams {
    ad::Var k1_w, k1_b; // (D, 2D), (D): sigmoid gate
    ad::Var k2_w, k2_b; // (D, 2D), (D): tanh shift
};

struct TransferCellParams {
    BranchParams source;
    BranchParams target;

    int code_width() const { return source.k1_w.value().shape[0]; }
};

struct TransferBlockParams {
    std::array<TransferCellParams, 3> cells;
    ad::Var omega; // (D)

    int code_width() const { return cells[0].code_width(); }
};

struct FTMParams {
    std::vector<TransferBlockParams> blocks;
    ad::ParamSet params;

    int block_count() const { return static_cast<int>(blocks.size()); }
    int code_width() const { return blocks.empty() ? 0 : blocks[0].code_width(); }
};

namespace detail {

inline BranchParams make_branch(ad::ParamSet& ps, const std::string& prefix, int d, Rng& rng) {
    Real stddev = 1.0 / std::sqrt(static_cast<Real>(2 * d));
    BranchParams b;
    b.k1_w = ps.add(prefix + ".k1.w", rng.normal_tensor(Shape{d, 2 * d}, stddev));
    b.k1_b = ps.add(prefix + ".k1.b", Tensor::zeros(Shape{d}));
    b.k2_w = ps.add(prefix + ".k2.w", rng.normal_tensor(Shape{d, 2 * d}, stddev));
    b.k2_b = ps.add(prefix + ".k2.b", Tensor::zeros(Shape{d}));
    return b;
}

} // namespace detail

/// Fresh FTM parameters: one block per high code, three cells per block,
/// independent weights everywhere, omega zero (balanced initial blend).
inline FTMParams make_ftm_params(int n_high, int code_width, Rng& rng) {
    if (n_high < 1) throw ArgumentError("make_ftm_params: need at least one block");
    if (code_width < 1) throw ArgumentError("make_ftm_params: code width must be positive");
    FTMParams ftm;
    ftm.blocks.reserve(static_cast<std::size_t>(n_high));
    for (int i = 0; i < n_high; ++i) {
        std::string bp = "block" + std::to_string(i);
        TransferBlockParams block;
        for (int c = 0; c < 3; ++c) {
            std::string cp = bp + ".cell" + std::to_string(c);
            block.cells[static_cast<std::size_t>(c)].source =
                detail::make_branch(ftm.params, cp + ".src", code_width, rng);
            block.cells[static_cast<std::size_t>(c)].target =
                detail::make_branch(ftm.params, cp + ".tgt", code_width, rng);
        }
        block.omega = ftm.params.add(bp + ".omega", Tensor::zeros(Shape{code_width}));
        ftm.blocks.push_back(std::move(block));
    }
    return ftm;
}

// ---------------------------------------------------------------------------
// forward operations (graph-building)

/// One refinement cell. Returns the refined (source, target) pair.
inline std::pair<ad::Var, ad::Var> transfer_cell(const ad::Var& l_s, const ad::Var& l_t,
                                                 const TransferCellParams& cell) {
    int d = cell.code_width();
    if (l_s.value().shape != Shape{d} || l_t.value().shape != Shape{d})
        throw DimensionError("transfer_cell: codes must be vectors of width " + std::to_string(d) +
                             ", got " + l_s.value().shape.str() + " and " + l_t.value().shape.str());
    ad::Var l_c = ad::concat(l_s, l_t);
    auto refine = [&l_c](const ad::Var& code, const BranchParams& br) {
        ad::Var gate = ad::sigmoid(ad::linear(l_c, br.k1_w, br.k1_b));
        ad::Var shift = ad::tanh_op(ad::linear(l_c, br.k2_w, br.k2_b));
        return ad::add(shift, ad::mul(gate, code));
    };
    return {refine(l_s, cell.source), refine(l_t, cell.target)};
}

/// Three chained cells, then the omega blend of the final refined pair.
inline ad::Var transfer_block(const ad::Var& l_s, const ad::Var& l_t,
                              const TransferBlockParams& block) {
    std::pair<ad::Var, ad::Var> pair{l_s, l_t};
    for (const auto& cell : block.cells) pair = transfer_cell(pair.first, pair.second, cell);
    ad::Var g = ad::sigmoid(block.omega);
    ad::Var one_minus_g = ad::add_scalar(ad::neg(g), 1.0);
    return ad::add(ad::mul(g, pair.second), ad::mul(one_minus_g, pair.first));
}

/// Row i of the output comes from blocks[i] applied to row i of each input;
/// rows are independent.
inline ad::Var ftm_forward(const ad::Var& l_s_high, const ad::Var& l_t_high, const FTMParams& ftm) {
    const Shape& ss = l_s_high.value().shape;
    if (ss.rank() != 2 || l_t_high.value().shape != ss)
        throw DimensionError("ftm_forward: inputs must be equal-shape code matrices, got " +
                             ss.str() + " and " + l_t_high.value().shape.str());
    if (ss[0] != ftm.block_count() || ss[1] != ftm.code_width())
        throw DimensionError("ftm_forward: input " + ss.str() + " does not match parameters (" +
                             std::to_string(ftm.block_count()) + "," +
                             std::to_string(ftm.code_width()) + ")");
    std::vector<ad::Var> rows;
    rows.reserve(static_cast<std::size_t>(ss[0]));
    for (int i = 0; i < ss[0]; ++i)
        rows.push_back(transfer_block(ad::slice_row(l_s_high, i), ad::slice_row(l_t_high, i),
                                      ftm.blocks[static_cast<std::size_t>(i)]));
    return ad::stack_rows(rows);
}

/// Value-level convenience over the graph builder.
inline Tensor ftm_forward(const Tensor& l_s_high, const Tensor& l_t_high, const FTMParams& ftm) {
    return ftm_forward(ad::constant(l_s_high), ad::constant(l_t_high), ftm).value();
}

// ---------------------------------------------------------------------------
// latent-code replacement

/// Parameter-free ablation: keep the target's constant input and low codes,
/// substitute the source's high codes verbatim.
inline HierLatent lcr_compose(const HierLatent& src, const HierLatent& tgt) {
    if (src.resolution != tgt.resolution)
        throw DimensionError("lcr_compose: resolution mismatch " + std::to_string(src.resolution) +
                             " vs " + std::to_string(tgt.resolution));
    if (src.high_codes.shape != tgt.high_codes.shape)
        throw DimensionError("lcr_compose: high-code shape mismatch " + src.high_codes.shape.str() +
                             " vs " + tgt.high_codes.shape.str());
    HierLatent out;
    out.resolution = tgt.resolution;
    out.constant_input = tgt.constant_input;
    out.low_codes = tgt.low_codes;
    out.high_codes = src.high_codes;
    return out;
}

// ---------------------------------------------------------------------------
// identity injection

struct IdInjectParams {
    ad::Var hidden_w, hidden_b; // (H, D), (H)
    ad::Var gamma_w, gamma_b;   // (D, H), (D): zero-initialized
    ad::Var beta_w, beta_b;     // (D, H), (D): zero-initialized
    ad::ParamSet params;

    int code_width() const { return gamma_w.value().shape[0]; }
};

inline IdInjectParams make_id_inject_params(int code_width, Rng& rng, int hidden_width = 0) {
    if (code_width < 2) throw ArgumentError("make_id_inject_params: code width must be >= 2");
    int h = hidden_width > 0 ? hidden_width : code_width;
    IdInjectParams p;
    p.hidden_w = p.params.add("hidden.w",
                              rng.normal_tensor(Shape{h, code_width},
                                                1.0 / std::sqrt(static_cast<Real>(code_width))));
    p.hidden_b = p.params.add("hidden.b", Tensor::zeros(Shape{h}));
    p.gamma_w = p.params.add("gamma.w", Tensor::zeros(Shape{code_width, h}));
    p.gamma_b = p.params.add("gamma.b", Tensor::zeros(Shape{code_width}));
    p.beta_w = p.params.add("beta.w", Tensor::zeros(Shape{code_width, h}));
    p.beta_b = p.params.add("beta.b", Tensor::zeros(Shape{code_width}));
    return p;
}

/// Residual scale/shift modulation of every target row by the source
/// identity code (layout documented at the top of this header).
inline ad::Var id_inject(const ad::Var& l_t_high, const ad::Var& id_code, const IdInjectParams& p) {
    int d = p.code_width();
    const Shape& ts = l_t_high.value().shape;
    if (ts.rank() != 2 || ts[1] != d)
        throw DimensionError("id_inject: target codes must be (n," + std::to_string(d) + "), got " +
                             ts.str());
    if (id_code.value().shape != Shape{d})
        throw DimensionError("id_inject: id code must be a vector of width " + std::to_string(d) +
                             ", got " + id_code.value().shape.str());
    ad::Var hidden = ad::leaky_relu(ad::linear(id_code, p.hidden_w, p.hidden_b));
    ad::Var gamma = ad::linear(hidden, p.gamma_w, p.gamma_b);
    ad::Var beta = ad::linear(hidden, p.beta_w, p.beta_b);
    std::vector<ad::Var> rows;
    rows.reserve(static_cast<std::size_t>(ts[0]));
    for (int i = 0; i < ts[0]; ++i) {
        ad::Var row = ad::slice_row(l_t_high, i);
        ad::Var modulated = ad::add(ad::mul(gamma, ad::normalize_all(row)), beta);
        rows.push_back(ad::add(row, modulated));
    }
    return ad::stack_rows(rows);
}

inline Tensor id_inject(const Tensor& l_t_high, const Tensor& id_code, const IdInjectParams& p) {
    return id_inject(ad::constant(l_t_high), ad::constant(id_code), p).value();
}

/// Identity code used by the pipeline's injection manipulator: the mean of
/// the source's high-code rows.
inline Tensor mean_code(const Tensor& codes) {
    if (codes.shape.rank() != 2) throw DimensionError("mean_code: expects a code matrix");
    int n = codes.shape[0], d = codes.shape[1];
    Tensor out(Shape{d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.data[static_cast<std::size_t>(j)] += codes(i, j);
    for (auto& v : out.data) v /= static_cast<Real>(n);
    return out;
}

// ---------------------------------------------------------------------------
// checkpointing

inline void save_ftm(const std::filesystem::path& dir, const FTMParams& ftm) {
    io::Checkpoint ck;
    ck.meta["kind"] = "ftm";
    ck.meta["blocks"] = std::to_string(ftm.block_count());
    ck.meta["code_width"] = std::to_string(ftm.code_width());
    ck.params = io::params_to_named(ftm.params);
    io::save_checkpoint(dir, ck);
}

inline FTMParams load_ftm(const std::filesystem::path& dir) {
    io::Checkpoint ck = io::load_checkpoint(dir);
    if (ck.meta_at("kind") != "ftm")
        throw CheckpointError("checkpoint at " + dir.string() + " is a " + ck.meta_at("kind") +
                              ", expected a transfer module");
    Rng rng(0);
    FTMParams ftm = make_ftm_params(ck.meta_int("blocks"), ck.meta_int("code_width"), rng);
    io::load_into_params(ck, ftm.params);
    try {
        ftm.params.check_finite("ftm");
    } catch (const ValidationError& e) {
        throw CheckpointError(e.what());
    }
    return ftm;
}

inline void save_id_inject(const std::filesystem::path& dir, const IdInjectParams& p) {
    io::Checkpoint ck;
    ck.meta["kind"] = "id_inject";
    ck.meta["code_width"] = std::to_string(p.code_width());
    ck.meta["hidden_width"] = std::to_string(p.hidden_w.value().shape[0]);
    ck.params = io::params_to_named(p.params);
    io::save_checkpoint(dir, ck);
}

inline IdInjectParams load_id_inject(const std::filesystem::path& dir) {
    io::Checkpoint ck = io::load_checkpoint(dir);
    if (ck.meta_at("kind") != "id_inject")
        throw CheckpointError("checkpoint at " + dir.string() + " is a " + ck.meta_at("kind") +
                              ", expected an identity-injection module");
    Rng rng(0);
    IdInjectParams p = make_id_inject_params(ck.meta_int("code_width"), rng,
                                             ck.meta_int("hidden_width"));
    io::load_into_params(ck, p.params);
    try {
        p.params.check_finite("id_inject");
    } catch (const ValidationError& e) {
        throw CheckpointError(e.what());
    }
    return p;
}

} // namespace lswap
