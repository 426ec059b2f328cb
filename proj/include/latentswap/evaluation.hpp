// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: identity retrieval and similarity, pose and expression
// errors against pluggable estimators, Frechet distance between feature
// distributions, and inversion quality (feature distance, pixel MSE, failure
// rate). The Frechet matrix square root runs through two symmetric Jacobi
// eigendecompositions; eigenvalues below -1e-6 times the spectral radius are
// a numeric error, small negatives are clamped to zero. Ties in retrieval
// break toward the lowest gallery index. Aggregations use compensated
// summation so ordering cannot perturb results.

#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "latentswap/losses.hpp"
#include "latentswap/oracles.hpp"

namespace lswap {

// ---------------------------------------------------------------------------
// identity gallery

struct GalleryItem {
    std::string label;
    Tensor embedding; // unit-norm vector
};

struct IdentityGallery {
    std::vector<GalleryItem> items;

    void validate() const {
        if (items.empty()) throw ArgumentError("IdentityGallery: at least one item required");
        for (const auto& it : items) {
            if (it.embedding.shape.rank() != 1)
                throw DimensionError("IdentityGallery: embeddings must be vectors");
            Real ss = 0;
            for (Real v : it.embedding.data) ss += v * v;
            if (std::abs(std::sqrt(ss) - 1.0) > 1e-6)
                throw ValidationError("IdentityGallery: embedding for '" + it.label +
                                      "' is not unit-norm");
        }
    }
};

namespace eval_detail {

inline Real cosine(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) throw DimensionError("cosine: shape mismatch");
    Real dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        dot += a.data[i] * b.data[i];
        na += a.data[i] * a.data[i];
        nb += b.data[i] * b.data[i];
    }
    Real denom = std::sqrt(na) * std::sqrt(nb);
    if (!(denom > 1e-12)) throw NumericError("cosine: zero-norm embedding");
    return dot / denom;
}

} // namespace eval_detail

/// Top-1 nearest-identity matching rate, in percent.
inline Real id_retrieval(const std::vector<std::pair<std::string, Tensor>>& probes,
                         const IdentityGallery& gallery) {
    if (probes.empty()) throw ArgumentError("id_retrieval: no probes");
    gallery.validate();
    int hits = 0;
    for (const auto& [label, emb] : probes) {
        std::size_t best = 0;
        Real best_cos = -2.0;
        for (std::size_t g = 0; g < gallery.items.size(); ++g) {
            Real c = eval_detail::cosine(emb, gallery.items[g].embedding);
            if (c > best_cos) {
                best_cos = c;
                best = g;
            }
        }
        if (gallery.items[best].label == label) ++hits;
    }
    return 100.0 * hits / static_cast<Real>(probes.size());
}

/// Mean cosine similarity between recognizer embeddings of paired images.
inline Real id_similarity(const std::vector<FaceImage>& swapped,
                          const std::vector<FaceImage>& sources,
                          const PerceptualOracles& oracles) {
    if (swapped.size() != sources.size())
        throw ArgumentError("id_similarity: list lengths differ (" + std::to_string(swapped.size()) +
                            " vs " + std::to_string(sources.size()) + ")");
    if (swapped.empty()) throw ArgumentError("id_similarity: empty lists");
    if (!oracles.recognizer) throw ConfigError("id_similarity: no recognizer configured");
    KahanSum s;
    for (std::size_t i = 0; i < swapped.size(); ++i) {
        Tensor ey = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer,
                                                  ad::constant(swapped[i].pixels))).value();
        Tensor ex = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer,
                                                  ad::constant(sources[i].pixels))).value();
        s.add(eval_detail::cosine(ey, ex));
    }
    return s.value() / static_cast<Real>(swapped.size());
}

/// Mean l2 distance between estimator vectors of paired images. Serves both
/// the pose and the expression metric, differing only in the estimator.
inline Real estimator_error(const std::vector<FaceImage>& swapped,
                            const std::vector<FaceImage>& targets, const ImageModel& estimator,
                            int estimator_size) {
    if (swapped.size() != targets.size()) throw ArgumentError("estimator_error: list lengths differ");
    if (swapped.empty()) throw ArgumentError("estimator_error: empty lists");
    if (!estimator) throw ConfigError("estimator_error: no estimator provided");
    KahanSum s;
    for (std::size_t i = 0; i < swapped.size(); ++i) {
        try {
            Tensor vy = estimator(ad::bilinear_resize(ad::constant(swapped[i].pixels),
                                                      estimator_size, estimator_size)).value();
            Tensor vt = estimator(ad::bilinear_resize(ad::constant(targets[i].pixels),
                                                      estimator_size, estimator_size)).value();
            if (vy.shape != vt.shape) throw DimensionError("estimator output shapes differ");
            Real ss = 0;
            for (std::size_t j = 0; j < vy.data.size(); ++j) {
                Real d = vy.data[j] - vt.data[j];
                ss += d * d;
            }
            s.add(std::sqrt(ss));
        } catch (const Error& e) {
            throw NumericError("estimator failed on pair " + std::to_string(i) + ": " + e.what());
        }
    }
    return s.value() / static_cast<Real>(swapped.size());
}

inline Real pose_error(const std::vector<FaceImage>& swapped, const std::vector<FaceImage>& targets,
                       const ImageModel& estimator, int estimator_size) {
    return estimator_error(swapped, targets, estimator, estimator_size);
}

inline Real expression_error(const std::vector<FaceImage>& swapped,
                             const std::vector<FaceImage>& targets, const ImageModel& estimator,
                             int estimator_size) {
    return estimator_error(swapped, targets, estimator, estimator_size);
}

// ---------------------------------------------------------------------------
// Frechet distance

namespace eval_detail {

/// Cyclic Jacobi eigendecomposition of a symmetric d x d matrix (row-major).
/// On return a holds nothing useful; eigvals and eigvecs (columns) are filled.
inline void jacobi_eig(std::vector<Real> a, int d, std::vector<Real>& eigvals,
                       std::vector<Real>& eigvecs) {
    eigvecs.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) eigvecs[static_cast<std::size_t>(i) * d + i] = 1.0;
    auto A = [&](int r, int c) -> Real& { return a[static_cast<std::size_t>(r) * d + c]; };
    auto V = [&](int r, int c) -> Real& { return eigvecs[static_cast<std::size_t>(r) * d + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        Real off = 0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                Real apq = A(p, q);
                if (std::abs(apq) < 1e-300) continue;
                Real theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                Real t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                Real c = 1.0 / std::sqrt(t * t + 1.0);
                Real s = t * c;
                for (int k = 0; k < d; ++k) {
                    Real akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < d; ++k) {
                    Real apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < d; ++k) {
                    Real vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) eigvals[static_cast<std::size_t>(i)] = A(i, i);
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues below
/// -tol * spectral_radius raise a numeric error, small negatives clamp to 0.
inline std::vector<Real> sqrtm_psd(const std::vector<Real>& m, int d, const char* what) {
    std::vector<Real> eigvals, v;
    jacobi_eig(m, d, eigvals, v);
    Real radius = 0;
    for (Real e : eigvals) radius = std::max(radius, std::abs(e));
    Real tol = 1e-6 * std::max(radius, Real(1e-30));
    std::vector<Real> root(eigvals.size());
    for (std::size_t i = 0; i < eigvals.size(); ++i) {
        if (eigvals[i] < -tol)
            throw NumericError(std::string(what) + ": matrix has a significantly negative eigenvalue " +
                               std::to_string(eigvals[i]));
        root[i] = std::sqrt(std::max(eigvals[i], Real(0)));
    }
    // V diag(root) V^T
    std::vector<Real> out(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
            Real acc = 0;
            for (int k = 0; k < d; ++k)
                acc += v[static_cast<std::size_t>(r) * d + k] * root[static_cast<std::size_t>(k)] *
                       v[static_cast<std::size_t>(c) * d + k];
            out[static_cast<std::size_t>(r) * d + c] = acc;
        }
    return out;
}

inline std::vector<Real> matmul(const std::vector<Real>& a, const std::vector<Real>& b, int d) {
    std::vector<Real> out(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < d; ++r)
        for (int k = 0; k < d; ++k) {
            Real av = a[static_cast<std::size_t>(r) * d + k];
            for (int c = 0; c < d; ++c)
                out[static_cast<std::size_t>(r) * d + c] += av * b[static_cast<std::size_t>(k) * d + c];
        }
    return out;
}

struct Moments {
    std::vector<Real> mean;
    std::vector<Real> cov; // d x d, sample covariance (n - 1 denominator)
};

inline Moments moments(const Tensor& features, const char* what) {
    if (features.shape.rank() != 2)
        throw DimensionError(std::string(what) + ": features must be an (n,d) matrix, got " +
                             features.shape.str());
    int n = features.shape[0], d = features.shape[1];
    if (n < 2) throw ArgumentError(std::string(what) + ": needs at least 2 rows, got " + std::to_string(n));
    Moments m;
    m.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
        KahanSum s;
        for (int i = 0; i < n; ++i) s.add(features(i, j));
        m.mean[static_cast<std::size_t>(j)] = s.value() / n;
    }
    m.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) {
            KahanSum s;
            for (int i = 0; i < n; ++i)
                s.add((features(i, r) - m.mean[static_cast<std::size_t>(r)]) *
                      (features(i, c) - m.mean[static_cast<std::size_t>(c)]));
            Real v = s.value() / (n - 1);
            m.cov[static_cast<std::size_t>(r) * d + c] = v;
            m.cov[static_cast<std::size_t>(c) * d + r] = v;
        }
    return m;
}

} // namespace eval_detail

/// Frechet distance between Gaussian fits of two feature sets:
/// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
inline Real fid(const Tensor& features_a, const Tensor& features_b) {
    eval_detail::Moments a = eval_detail::moments(features_a, "fid(a)");
    eval_detail::Moments b = eval_detail::moments(features_b, "fid(b)");
    int d = features_a.shape[1];
    if (features_b.shape[1] != d)
        throw DimensionError("fid: feature widths differ (" + std::to_string(d) + " vs " +
                             std::to_string(features_b.shape[1]) + ")");

    Real mean_gap = 0;
    for (int j = 0; j < d; ++j) {
        Real diff = a.mean[static_cast<std::size_t>(j)] - b.mean[static_cast<std::size_t>(j)];
        mean_gap += diff * diff;
    }

    // tr((Sa Sb)^{1/2}) = tr((B Sb B)^{1/2}) with B = Sa^{1/2}: the two
    // products share eigenvalues and the symmetric form keeps Jacobi exact.
    std::vector<Real> root_a = eval_detail::sqrtm_psd(a.cov, d, "fid: sqrt of first covariance");
    std::vector<Real> inner = eval_detail::matmul(eval_detail::matmul(root_a, b.cov, d), root_a, d);
    for (int r = 0; r < d; ++r)
        for (int c = r + 1; c < d; ++c) {
            Real sym = 0.5 * (inner[static_cast<std::size_t>(r) * d + c] +
                              inner[static_cast<std::size_t>(c) * d + r]);
            inner[static_cast<std::size_t>(r) * d + c] = sym;
            inner[static_cast<std::size_t>(c) * d + r] = sym;
        }
    std::vector<Real> eigvals, vecs;
    eval_detail::jacobi_eig(inner, d, eigvals, vecs);
    Real radius = 0;
    for (Real e : eigvals) radius = std::max(radius, std::abs(e));
    Real tol = 1e-6 * std::max(radius, Real(1e-30));
    KahanSum tr_sqrt;
    for (Real e : eigvals) {
        if (e < -tol)
            throw NumericError("fid: product matrix has a significantly negative eigenvalue " +
                               std::to_string(e));
        tr_sqrt.add(std::sqrt(std::max(e, Real(0))));
    }

    Real tr_a = 0, tr_b = 0;
    for (int j = 0; j < d; ++j) {
        tr_a += a.cov[static_cast<std::size_t>(j) * d + j];
        tr_b += b.cov[static_cast<std::size_t>(j) * d + j];
    }
    return mean_gap + tr_a + tr_b - 2.0 * tr_sqrt.value();
}

// ---------------------------------------------------------------------------
// inversion quality

struct InversionMetrics {
    Real lpips = 0;
    Real mse = 0;
    Real failure_rate = 0; // percent

    bool operator==(const InversionMetrics&) const = default;
};

/// Mean feature distance, mean per-pixel squared error, and the percentage
/// of pairs whose identity similarity falls below the threshold. The
/// recognizer defines "failure", per this repo's operationalization of an
/// unsuccessful reconstruction.
inline InversionMetrics inversion_metrics(const std::vector<FaceImage>& originals,
                                          const std::vector<FaceImage>& reconstructions,
                                          const PerceptualOracles& oracles,
                                          Real failure_threshold = 0.3) {
    if (originals.size() != reconstructions.size())
        throw ArgumentError("inversion_metrics: list lengths differ");
    if (originals.empty()) throw ArgumentError("inversion_metrics: empty lists");
    if (!oracles.complete()) throw ConfigError("inversion_metrics: oracle set incomplete");

    KahanSum lpips_sum, mse_sum;
    int failures = 0;
    for (std::size_t i = 0; i < originals.size(); ++i) {
        ad::Var x = ad::constant(originals[i].pixels);
        ad::Var y = ad::constant(reconstructions[i].pixels);
        lpips_sum.add(lpips_loss(x, y, oracles).value().data[0]);
        if (originals[i].pixels.shape != reconstructions[i].pixels.shape)
            throw DimensionError("inversion_metrics: image shapes differ at pair " + std::to_string(i));
        KahanSum sq;
        for (std::size_t j = 0; j < originals[i].pixels.data.size(); ++j) {
            Real dv = originals[i].pixels.data[j] - reconstructions[i].pixels.data[j];
            sq.add(dv * dv);
        }
        mse_sum.add(sq.value() / static_cast<Real>(originals[i].pixels.data.size()));
        Tensor ex = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer, x)).value();
        Tensor ey = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer, y)).value();
        if (eval_detail::cosine(ex, ey) < failure_threshold) ++failures;
    }
    InversionMetrics m;
    m.lpips = lpips_sum.value() / static_cast<Real>(originals.size());
    m.mse = mse_sum.value() / static_cast<Real>(originals.size());
    m.failure_rate = 100.0 * failures / static_cast<Real>(originals.size());
    return m;
}

// ---------------------------------------------------------------------------
// report

struct MetricReport {
    Real id_retrieval = 0;
    Real id_similarity = 0;
    Real pose_error = 0;
    Real expression_error = 0;
    Real fid = 0;
    InversionMetrics inversion;

    void validate() const {
        auto finite = [](Real v, const char* name) {
            if (!std::isfinite(v)) throw ValidationError(std::string("MetricReport: ") + name + " non-finite");
        };
        finite(id_retrieval, "id_retrieval");
        finite(id_similarity, "id_similarity");
        finite(pose_error, "pose_error");
        finite(expression_error, "expression_error");
        finite(fid, "fid");
        finite(inversion.lpips, "inversion.lpips");
        finite(inversion.mse, "inversion.mse");
        finite(inversion.failure_rate, "inversion.failure_rate");
        if (id_retrieval < 0 || id_retrieval > 100 || inversion.failure_rate < 0 ||
            inversion.failure_rate > 100)
            throw ValidationError("MetricReport: percentage out of [0,100]");
    }

    std::string to_text() const {
        std::ostringstream out;
        out.precision(10);
        out << "id_retrieval=" << id_retrieval << "\n"
            << "id_similarity=" << id_similarity << "\n"
            << "pose_error=" << pose_error << "\n"
            << "expression_error=" << expression_error << "\n"
            << "fid=" << fid << "\n"
            << "inversion_lpips=" << inversion.lpips << "\n"
            << "inversion_mse=" << inversion.mse << "\n"
            << "inversion_failure_rate=" << inversion.failure_rate << "\n";
        return out.str();
    }
};

/// Default feature front end for the Frechet metric: the recognizer
/// embedding of each image, stacked into an (n, d) matrix.
inline Tensor fid_features(const std::vector<FaceImage>& images, const PerceptualOracles& oracles) {
    if (images.empty()) throw ArgumentError("fid_features: empty image list");
    if (!oracles.recognizer) throw ConfigError("fid_features: no recognizer configured");
    Tensor first = oracles.recognizer(resize_for(oracles, ModelKind::Recognizer,
                                                 ad::constant(images[0].pixels))).value();
    int d = first.shape[0];
    Tensor out(Shape{static_cast<int>(images.size()), d});
    for (std::size_t i = 0; i < images.size(); ++i) {
        Tensor e = i == 0 ? first
                          : oracles.recognizer(resize_for(oracles, ModelKind::Recognizer,
                                                          ad::constant(images[i].pixels))).value();
        std::copy(e.data.begin(), e.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i) * d);
    }
    return out;
}

} // namespace lswap
