// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Pluggable perceptual models: feature extractor (perceptual loss), identity
// recognizer (embedding cosine), and landmark predictor. The shipped
// implementations are deterministic differentiable toys with fixed seeded
// weights; real pre-trained models can be slotted in behind the same
// callables. Default input sizes: recognizer 112, feature extractor 256,
// landmark predictor 256 (documented defaults, configurable).

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/latent.hpp"
#include "latentswap/rng.hpp"

namespace lswap {

enum class ModelKind { Recognizer, FeatureExtractor, LandmarkPredictor };

/// Differentiable image -> vector callable. Input is an (h, w, 3) image
/// already resized to the model's expected size.
using ImageModel = std::function<ad::Var(const ad::Var&)>;

struct PerceptualOracles {
    ImageModel recognizer;         // -> unit-norm embedding
    ImageModel features;           // -> flattened feature stack
    ImageModel landmarks;          // -> (2K) pixel coordinates, x then y per point
    int recognizer_size = 112;
    int feature_size = 256;
    int landmark_size = 256;

    bool complete() const { return recognizer && features && landmarks; }

    int expected_size(ModelKind kind) const {
        switch (kind) {
            case ModelKind::Recognizer: return recognizer_size;
            case ModelKind::FeatureExtractor: return feature_size;
            case ModelKind::LandmarkPredictor: return landmark_size;
        }
        throw ArgumentError("expected_size: unknown model kind");
    }
};

/// Bilinear resize to the model's expected input size; identity when the
/// image is already sized (returns the same graph node).
inline ad::Var resize_for(const PerceptualOracles& oracles, ModelKind kind, const ad::Var& image) {
    int target = oracles.expected_size(kind);
    return ad::bilinear_resize(image, target, target);
}

inline FaceImage resize_for(const PerceptualOracles& oracles, ModelKind kind, const FaceImage& image) {
    return FaceImage(resize_for(oracles, kind, ad::constant(image.pixels)).value());
}

// ---------------------------------------------------------------------------
// toy implementations

/// Downsample to 8x8, apply a fixed seeded linear projection, l2-normalize.
/// weight_scale exists so tests can verify scale invariance of the embedding.
inline ImageModel make_toy_recognizer(std::uint64_t seed, int embed_dim = 32, Real weight_scale = 1.0) {
    constexpr int kGrid = 8;
    int in_dim = kGrid * kGrid * 3;
    Rng rng(seed);
    Tensor w = rng.normal_tensor(Shape{embed_dim, in_dim}, 1.0 / std::sqrt(static_cast<Real>(in_dim)));
    for (auto& v : w.data) v *= weight_scale;
    Tensor b = rng.normal_tensor(Shape{embed_dim}, 0.1);
    for (auto& v : b.data) v *= weight_scale;
    ad::Var wv = ad::constant(std::move(w));
    ad::Var bv = ad::constant(std::move(b));
    return [wv, bv, in_dim](const ad::Var& image) {
        if (image.value().shape.rank() != 3 || image.value().shape[2] != 3)
            throw DimensionError("toy recognizer expects an (h,w,3) image, got " + image.value().shape.str());
        ad::Var small = ad::bilinear_resize(image, kGrid, kGrid);
        ad::Var flat = ad::reshape(small, Shape{in_dim});
        return ad::l2_normalize(ad::linear(flat, wv, bv));
    };
}

/// Two fixed seeded strided convolutions with leaky ReLU; the feature stack
/// is the concatenation of both layers' flattened activations.
inline ImageModel make_toy_feature_extractor(std::uint64_t seed, int width = 6) {
    Rng rng(seed);
    Tensor k1 = rng.normal_tensor(Shape{3, 3, 3, width}, 1.0 / std::sqrt(27.0));
    Tensor b1 = Tensor::zeros(Shape{width});
    Tensor k2 = rng.normal_tensor(Shape{3, 3, width, width},
                                  1.0 / std::sqrt(9.0 * static_cast<Real>(width)));
    Tensor b2 = Tensor::zeros(Shape{width});
    ad::Var k1v = ad::constant(std::move(k1)), b1v = ad::constant(std::move(b1));
    ad::Var k2v = ad::constant(std::move(k2)), b2v = ad::constant(std::move(b2));
    return [k1v, b1v, k2v, b2v](const ad::Var& image) {
        if (image.value().shape.rank() != 3 || image.value().shape[2] != 3)
            throw DimensionError("toy feature extractor expects an (h,w,3) image");
        ad::Var f1 = ad::leaky_relu(ad::conv2d(image, k1v, b1v, 2, 1));
        ad::Var f2 = ad::leaky_relu(ad::conv2d(f1, k2v, b2v, 2, 1));
        ad::Var flat1 = ad::reshape(f1, Shape{static_cast<int>(f1.value().numel())});
        ad::Var flat2 = ad::reshape(f2, Shape{static_cast<int>(f2.value().numel())});
        return ad::concat(flat1, flat2);
    };
}

/// Fixed seeded convolution producing K response maps on a 16x16 grid, then a
/// differentiable soft-argmax per map. Coordinates are returned in pixels of
/// the predictor's input image; the softmax temperature sharpens the maps so
/// points spread away from the grid center.
inline ImageModel make_toy_landmark_predictor(std::uint64_t seed, int num_points = 5,
                                              Real temperature = 24.0) {
    constexpr int kGrid = 16;
    Rng rng(seed);
    Tensor k = rng.normal_tensor(Shape{3, 3, 3, num_points}, 1.0 / std::sqrt(27.0));
    Tensor b = rng.normal_tensor(Shape{num_points}, 0.2);
    ad::Var kv = ad::constant(std::move(k));
    ad::Var bv = ad::constant(std::move(b));
    return [kv, bv, num_points, temperature](const ad::Var& image) {
        if (image.value().shape.rank() != 3 || image.value().shape[2] != 3)
            throw DimensionError("toy landmark predictor expects an (h,w,3) image");
        int size = image.value().shape[0];
        Real cell = static_cast<Real>(size) / kGrid;
        ad::Var small = ad::bilinear_resize(image, kGrid, kGrid);
        ad::Var maps = ad::conv2d(small, kv, bv, 1, 1);

        // grid coordinates at cell centers, in input-image pixels
        Tensor gx(Shape{kGrid * kGrid}), gy(Shape{kGrid * kGrid});
        for (int y = 0; y < kGrid; ++y)
            for (int x = 0; x < kGrid; ++x) {
                gx.data[static_cast<std::size_t>(y) * kGrid + x] = (x + 0.5) * cell;
                gy.data[static_cast<std::size_t>(y) * kGrid + x] = (y + 0.5) * cell;
            }
        ad::Var gxv = ad::constant(std::move(gx));
        ad::Var gyv = ad::constant(std::move(gy));

        ad::Var coords;
        for (int p = 0; p < num_points; ++p) {
            ad::Var resp = ad::reshape(ad::slice_channel(maps, p), Shape{kGrid * kGrid});
            ad::Var att = ad::softmax_flat(ad::mul_scalar(resp, temperature));
            ad::Var px = ad::dot(att, gxv);
            ad::Var py = ad::dot(att, gyv);
            ad::Var pt = ad::concat(px, py);
            coords = coords.defined() ? ad::concat(coords, pt) : pt;
        }
        return coords;
    };
}

/// Fixed seeded linear readout of a downsampled image; deterministic stub for
/// pose / expression estimators.
inline ImageModel make_toy_vector_estimator(std::uint64_t seed, int out_dim) {
    constexpr int kGrid = 8;
    int in_dim = kGrid * kGrid * 3;
    Rng rng(seed);
    Tensor w = rng.normal_tensor(Shape{out_dim, in_dim}, 1.0 / std::sqrt(static_cast<Real>(in_dim)));
    Tensor b = rng.normal_tensor(Shape{out_dim}, 0.1);
    ad::Var wv = ad::constant(std::move(w));
    ad::Var bv = ad::constant(std::move(b));
    return [wv, bv, in_dim](const ad::Var& image) {
        if (image.value().shape.rank() != 3 || image.value().shape[2] != 3)
            throw DimensionError("toy estimator expects an (h,w,3) image");
        ad::Var small = ad::bilinear_resize(image, kGrid, kGrid);
        return ad::linear(ad::reshape(small, Shape{in_dim}), wv, bv);
    };
}

inline PerceptualOracles make_toy_oracles(std::uint64_t seed, int recognizer_size = 112,
                                          int feature_size = 256, int landmark_size = 256) {
    PerceptualOracles o;
    o.recognizer = make_toy_recognizer(seed * 3 + 1);
    o.features = make_toy_feature_extractor(seed * 3 + 2);
    o.landmarks = make_toy_landmark_predictor(seed * 3 + 3);
    o.recognizer_size = recognizer_size;
    o.feature_size = feature_size;
    o.landmark_size = landmark_size;
    return o;
}

/// Plug-in lookup by registered name; "toy" is the only shipped set.
inline PerceptualOracles make_oracles_by_name(const std::string& name, std::uint64_t seed,
                                              int recognizer_size = 112, int feature_size = 256,
                                              int landmark_size = 256) {
    if (name == "toy")
        return make_toy_oracles(seed, recognizer_size, feature_size, landmark_size);
    throw ConfigError("unknown oracle plug-in: " + name + " (available: toy)");
}

} // namespace lswap
