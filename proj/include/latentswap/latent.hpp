// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Latent-space data model: hierarchical latents (constant input + low/high
// codes), plain extended latents, face images, and the shared validation
// and packing algebra. Code counts follow total = 2*log2(resolution) - 2.

#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "latentswap/errors.hpp"
#include "latentswap/tensor.hpp"

namespace lswap {

constexpr int kDefaultCodeWidth = 512;
constexpr int kLowCodeCount = 4;
constexpr int kConstantSize = 4;
constexpr int kMinResolution = 16;

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline int log2_exact(int v) {
    if (!is_power_of_two(v)) throw DimensionError("expected a power of two, got " + std::to_string(v));
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}

/// Style-input count of a generator at the given resolution.
inline int total_codes_for(int resolution) {
    if (!is_power_of_two(resolution) || resolution < kMinResolution)
        throw DimensionError("resolution must be a power of two >= " +
                             std::to_string(kMinResolution) + ", got " + std::to_string(resolution));
    return 2 * log2_exact(resolution) - 2;
}

inline int high_codes_for(int resolution) { return total_codes_for(resolution) - kLowCodeCount; }

// ---------------------------------------------------------------------------
// domain types

/// One latent code: a finite real vector of the configured width D.
struct LatentCode {
    Tensor values; // shape (D)

    LatentCode() = default;
    explicit LatentCode(Tensor v) : values(std::move(v)) {
        if (values.shape.rank() != 1)
            throw DimensionError("LatentCode expects a rank-1 tensor, got " + values.shape.str());
    }
    int width() const { return values.shape[0]; }
};

/// Extended hierarchical latent: predicted constant input plus low and high
/// code stacks for one face.
struct HierLatent {
    Tensor constant_input; // (4, 4, D)
    Tensor low_codes;      // (4, D)
    Tensor high_codes;     // (N_high, D)
    int resolution = 0;

    int code_width() const { return low_codes.shape.rank() == 2 ? low_codes.shape[1] : 0; }
    int high_count() const { return high_codes.shape.rank() == 2 ? high_codes.shape[0] : 0; }
};

/// Plain extended latent: the code stack only; the generator keeps its own
/// learned constant.
struct WPlusLatent {
    Tensor codes; // (N_total, D)
    int resolution = 0;

    int code_width() const { return codes.shape.rank() == 2 ? codes.shape[1] : 0; }
    int total_count() const { return codes.shape.rank() == 2 ? codes.shape[0] : 0; }
};

/// RGB raster in [-1, 1] at the pipeline's working resolution.
struct FaceImage {
    Tensor pixels; // (H, W, 3)

    FaceImage() = default;
    explicit FaceImage(Tensor p) : pixels(std::move(p)) {}
    int resolution() const { return pixels.shape.rank() == 3 ? pixels.shape[0] : 0; }
};

// ---------------------------------------------------------------------------
// packing algebra

/// Splits a full code stack into the 4 low rows and the remaining high rows.
inline std::pair<Tensor, Tensor> split_codes(const Tensor& codes) {
    if (codes.shape.rank() != 2)
        throw DimensionError("split_codes expects a rank-2 code matrix, got " + codes.shape.str());
    int n = codes.shape[0];
    int d = codes.shape[1];
    if (n < kLowCodeCount + 1)
        throw DimensionError("split_codes needs at least " + std::to_string(kLowCodeCount + 1) +
                             " rows, got " + std::to_string(n));
    Tensor low(Shape{kLowCodeCount, d});
    Tensor high(Shape{n - kLowCodeCount, d});
    std::copy(codes.data.begin(), codes.data.begin() + static_cast<std::ptrdiff_t>(kLowCodeCount) * d,
              low.data.begin());
    std::copy(codes.data.begin() + static_cast<std::ptrdiff_t>(kLowCodeCount) * d, codes.data.end(),
              high.data.begin());
    return {std::move(low), std::move(high)};
}

/// Inverse of split_codes; round-trips bit-exactly.
inline Tensor merge_codes(const Tensor& low, const Tensor& high) {
    if (low.shape.rank() != 2 || high.shape.rank() != 2)
        throw DimensionError("merge_codes expects rank-2 matrices");
    if (low.shape[0] != kLowCodeCount)
        throw DimensionError("merge_codes expects " + std::to_string(kLowCodeCount) +
                             " low rows, got " + std::to_string(low.shape[0]));
    if (low.shape[1] != high.shape[1])
        throw DimensionError("merge_codes: code width mismatch " + std::to_string(low.shape[1]) +
                             " vs " + std::to_string(high.shape[1]));
    int d = low.shape[1];
    Tensor out(Shape{low.shape[0] + high.shape[0], d});
    std::copy(low.data.begin(), low.data.end(), out.data.begin());
    std::copy(high.data.begin(), high.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(low.shape[0]) * d);
    return out;
}

// ---------------------------------------------------------------------------
// validation

inline void validate(const HierLatent& latent) {
    int n_high = high_codes_for(latent.resolution);
    int d = latent.code_width();
    if (d <= 0) throw DimensionError("HierLatent.low_codes must be a rank-2 matrix");
    if (latent.constant_input.shape != Shape{kConstantSize, kConstantSize, d})
        throw DimensionError("HierLatent.constant_input must have shape (4,4," + std::to_string(d) +
                             "), got " + latent.constant_input.shape.str());
    if (latent.low_codes.shape != Shape{kLowCodeCount, d})
        throw DimensionError("HierLatent.low_codes must have shape (4," + std::to_string(d) +
                             "), got " + latent.low_codes.shape.str());
    if (latent.high_codes.shape != Shape{n_high, d})
        throw DimensionError("HierLatent.high_codes must have shape (" + std::to_string(n_high) +
                             "," + std::to_string(d) + ") at resolution " +
                             std::to_string(latent.resolution) + ", got " + latent.high_codes.shape.str());
    if (!latent.constant_input.all_finite())
        throw ValidationError("HierLatent.constant_input contains a non-finite entry");
    if (!latent.low_codes.all_finite())
        throw ValidationError("HierLatent.low_codes contains a non-finite entry");
    if (!latent.high_codes.all_finite())
        throw ValidationError("HierLatent.high_codes contains a non-finite entry");
}

inline void validate(const WPlusLatent& latent) {
    int n_total = total_codes_for(latent.resolution);
    if (latent.codes.shape.rank() != 2 || latent.codes.shape[0] != n_total)
        throw DimensionError("WPlusLatent.codes must have " + std::to_string(n_total) +
                             " rows at resolution " + std::to_string(latent.resolution) +
                             ", got " + latent.codes.shape.str());
    if (!latent.codes.all_finite())
        throw ValidationError("WPlusLatent.codes contains a non-finite entry");
}

inline void validate(const FaceImage& image, int resolution) {
    if (image.pixels.shape != Shape{resolution, resolution, 3})
        throw DimensionError("FaceImage must have shape (" + std::to_string(resolution) + "," +
                             std::to_string(resolution) + ",3), got " + image.pixels.shape.str());
    if (!image.pixels.all_finite())
        throw ValidationError("FaceImage.pixels contains a non-finite entry");
    for (Real v : image.pixels.data)
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9)
            throw ValidationError("FaceImage.pixels outside [-1,1]: " + std::to_string(v));
}

/// Zero-filled hierarchical latent of the right shapes; handy as a template.
inline HierLatent zero_hier_latent(int resolution, int code_width = kDefaultCodeWidth) {
    HierLatent h;
    h.resolution = resolution;
    h.constant_input = Tensor::zeros(Shape{kConstantSize, kConstantSize, code_width});
    h.low_codes = Tensor::zeros(Shape{kLowCodeCount, code_width});
    h.high_codes = Tensor::zeros(Shape{high_codes_for(resolution), code_width});
    return h;
}

} // namespace lswap
