// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Loss terms and the two composite objectives (encoder inversion, swap).
// Normalization convention, fixed for reproducibility within this repo:
// pixel and feature losses are mean-normalized l2 (root of the mean square);
// landmark and code-norm losses are unnormalized l2 (root of the sum of
// squares). Inputs are resized per model through the oracle set before each
// perceptual term.

#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/oracles.hpp"

namespace lswap {

struct LossWeightsInv {
    Real lambda1 = 1.0;    // reconstruction
    Real lambda2 = 0.8;    // perceptual
    Real lambda3 = 1.0;    // identity
    Real lambda4 = 1000.0; // landmark

    void validate() const {
        for (Real v : {lambda1, lambda2, lambda3, lambda4})
            if (!std::isfinite(v) || v < 0)
                throw ValidationError("inversion loss weights must be finite and non-negative");
    }
};

struct LossWeightsSwap {
    Real phi1 = 8.0;      // reconstruction (source + target)
    Real phi2 = 32.0;     // perceptual
    Real phi3 = 24.0;     // identity
    Real phi4 = 100000.0; // landmark
    Real phi5 = 32.0;     // code norm

    void validate() const {
        for (Real v : {phi1, phi2, phi3, phi4, phi5})
            if (!std::isfinite(v) || v < 0)
                throw ValidationError("swap loss weights must be finite and non-negative");
    }
};

/// Named scalar terms plus the weighted composite. The invariant
/// total = sum_i weight_i * term_i holds within 1e-6 relative.
struct LossReport {
    std::vector<std::pair<std::string, Real>> terms;   // raw (unweighted) term values
    std::vector<std::pair<std::string, Real>> weights; // weight per term, same order
    Real total = 0.0;

    Real term(const std::string& name) const {
        for (const auto& [n, v] : terms)
            if (n == name) return v;
        throw ArgumentError("LossReport has no term named " + name);
    }

    Real weighted_sum() const {
        KahanSum s;
        for (std::size_t i = 0; i < terms.size(); ++i) s.add(weights[i].second * terms[i].second);
        return s.value();
    }

    void check() const {
        for (const auto& [n, v] : terms)
            if (!std::isfinite(v)) throw NumericError("loss term '" + n + "' is non-finite");
        Real ws = weighted_sum();
        Real scale = std::max({std::abs(total), std::abs(ws), Real(1e-12)});
        if (std::abs(total - ws) > 1e-6 * scale)
            throw ValidationError("LossReport total " + std::to_string(total) +
                                  " disagrees with weighted sum " + std::to_string(ws));
        if (!std::isfinite(total)) throw NumericError("LossReport total is non-finite");
    }

    /// One term per line, name=value; used verbatim in training logs.
    std::string to_text() const {
        std::ostringstream out;
        out.precision(10);
        for (const auto& [n, v] : terms) out << n << "=" << v << "\n";
        out << "total=" << total << "\n";
        return out.str();
    }
};

// ---------------------------------------------------------------------------
// individual terms (graph-building; read .value() for plain numbers)

/// Mean-normalized l2: sqrt(mean((x - y)^2)).
inline ad::Var rec_loss(const ad::Var& x, const ad::Var& xhat) {
    if (x.value().shape != xhat.value().shape)
        throw DimensionError("rec_loss: shape mismatch " + x.value().shape.str() + " vs " +
                             xhat.value().shape.str());
    ad::Var d = ad::sub(x, xhat);
    return ad::sqrt_op(ad::mean(ad::mul(d, d)));
}

/// Unnormalized l2: sqrt(sum((x - y)^2)).
inline ad::Var l2_distance(const ad::Var& x, const ad::Var& y) {
    if (x.value().shape != y.value().shape)
        throw DimensionError("l2_distance: shape mismatch " + x.value().shape.str() + " vs " +
                             y.value().shape.str());
    ad::Var d = ad::sub(x, y);
    return ad::sqrt_op(ad::sum(ad::mul(d, d)));
}

/// Mean-normalized l2 between feature stacks of the two images.
inline ad::Var lpips_loss(const ad::Var& x, const ad::Var& xhat, const PerceptualOracles& oracles) {
    if (!oracles.features) throw ConfigError("lpips_loss: no feature extractor configured");
    if (x.value().shape != xhat.value().shape)
        throw DimensionError("lpips_loss: shape mismatch");
    ad::Var fx = oracles.features(resize_for(oracles, ModelKind::FeatureExtractor, x));
    ad::Var fy = oracles.features(resize_for(oracles, ModelKind::FeatureExtractor, xhat));
    ad::Var d = ad::sub(fx, fy);
    return ad::sqrt_op(ad::mean(ad::mul(d, d)));
}

/// 1 - cos(R(x), R(xhat)); embeddings are unit-norm, range [0, 2].
inline ad::Var id_loss(const ad::Var& x, const ad::Var& xhat, const PerceptualOracles& oracles) {
    if (!oracles.recognizer) throw ConfigError("id_loss: no recognizer configured");
    ad::Var ex = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer, x));
    ad::Var ey = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer, xhat));
    return ad::add_scalar(ad::neg(ad::dot(ex, ey)), 1.0);
}

/// Unnormalized l2 between landmark coordinate vectors.
inline ad::Var ldm_loss(const ad::Var& x, const ad::Var& xhat, const PerceptualOracles& oracles) {
    if (!oracles.landmarks) throw ConfigError("ldm_loss: no landmark predictor configured");
    ad::Var px = oracles.landmarks(resize_for(oracles, ModelKind::LandmarkPredictor, x));
    ad::Var py = oracles.landmarks(resize_for(oracles, ModelKind::LandmarkPredictor, xhat));
    return l2_distance(px, py);
}

/// Unnormalized l2 between the source high codes and the transferred codes.
inline ad::Var norm_loss(const ad::Var& l_s_high, const ad::Var& l_s2t) {
    return l2_distance(l_s_high, l_s2t);
}

// ---------------------------------------------------------------------------
// composites

namespace detail {

inline ad::Var weighted_total(const std::vector<std::pair<ad::Var, Real>>& entries) {
    ad::Var total;
    for (const auto& [term, weight] : entries) {
        ad::Var scaled = ad::mul_scalar(term, weight);
        total = total.defined() ? ad::add(total, scaled) : scaled;
    }
    return total;
}

} // namespace detail

/// Composition arithmetic shared by the graph builders; exposed so the
/// weighted-sum contract is testable on bare term values.
inline LossReport compose_inv(Real rec, Real lpips, Real id, Real ldm, const LossWeightsInv& w) {
    w.validate();
    LossReport r;
    r.terms = {{"rec", rec}, {"lpips", lpips}, {"id", id}, {"ldm", ldm}};
    r.weights = {{"rec", w.lambda1}, {"lpips", w.lambda2}, {"id", w.lambda3}, {"ldm", w.lambda4}};
    r.total = r.weighted_sum();
    return r;
}

inline LossReport compose_swap(Real rec, Real lpips, Real id, Real ldm, Real norm,
                               const LossWeightsSwap& w) {
    w.validate();
    LossReport r;
    r.terms = {{"rec", rec}, {"lpips", lpips}, {"id", id}, {"ldm", ldm}, {"norm", norm}};
    r.weights = {{"rec", w.phi1}, {"lpips", w.phi2}, {"id", w.phi3}, {"ldm", w.phi4}, {"norm", w.phi5}};
    r.total = r.weighted_sum();
    return r;
}

/// Encoder-inversion objective:
/// total = l1*rec + l2*lpips + l3*id + l4*ldm. Returns the differentiable
/// total and a value report.
inline std::pair<ad::Var, LossReport> l_inv(const ad::Var& x, const ad::Var& xhat,
                                            const PerceptualOracles& oracles,
                                            const LossWeightsInv& w = {}) {
    if (!oracles.complete()) throw ConfigError("l_inv: oracle set incomplete");
    w.validate();
    ad::Var rec = rec_loss(x, xhat);
    ad::Var lpips = lpips_loss(x, xhat, oracles);
    ad::Var id = id_loss(x, xhat, oracles);
    ad::Var ldm = ldm_loss(x, xhat, oracles);
    ad::Var total = detail::weighted_total(
        {{rec, w.lambda1}, {lpips, w.lambda2}, {id, w.lambda3}, {ldm, w.lambda4}});
    LossReport report = compose_inv(rec.value().data[0], lpips.value().data[0],
                                    id.value().data[0], ldm.value().data[0], w);
    report.total = total.value().data[0];
    report.check();
    return {total, report};
}

/// Swap objective:
/// total = p1*(rec(x_s,xhat_s) + rec(x_t,xhat_t)) + p2*lpips(x_t,y_s2t)
///       + p3*id(x_s,y_s2t) + p4*ldm(x_t,y_s2t) + p5*norm(L_s_high,L_s2t).
inline std::pair<ad::Var, LossReport> l_swap(const ad::Var& x_s, const ad::Var& x_t,
                                             const ad::Var& xhat_s, const ad::Var& xhat_t,
                                             const ad::Var& y_s2t, const ad::Var& l_s_high,
                                             const ad::Var& l_s2t, const PerceptualOracles& oracles,
                                             const LossWeightsSwap& w = {}) {
    if (!oracles.complete()) throw ConfigError("l_swap: oracle set incomplete");
    w.validate();
    ad::Var rec = ad::add(rec_loss(x_s, xhat_s), rec_loss(x_t, xhat_t));
    ad::Var lpips = lpips_loss(x_t, y_s2t, oracles);
    ad::Var id = id_loss(x_s, y_s2t, oracles);
    ad::Var ldm = ldm_loss(x_t, y_s2t, oracles);
    ad::Var norm = norm_loss(l_s_high, l_s2t);
    ad::Var total = detail::weighted_total(
        {{rec, w.phi1}, {lpips, w.phi2}, {id, w.phi3}, {ldm, w.phi4}, {norm, w.phi5}});
    LossReport report = compose_swap(rec.value().data[0], lpips.value().data[0], id.value().data[0],
                                     ldm.value().data[0], norm.value().data[0], w);
    report.total = total.value().data[0];
    report.check();
    return {total, report};
}

} // namespace lswap
