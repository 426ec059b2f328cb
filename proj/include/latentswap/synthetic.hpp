// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Procedurally generated face-like images for desk-scale training and tests:
// a background gradient, an elliptical head, two eyes, and a mouth, all as
// smooth bumps with seeded per-sample geometry and colors. License-free and
// bit-deterministic.

#pragma once

#include <cmath>
#include <vector>

#include "latentswap/latent.hpp"
#include "latentswap/rng.hpp"

namespace lswap {

/// One synthetic face. The identity_seed controls geometry/colors so tests
/// can draw distinct or repeated identities deliberately.
inline FaceImage synthetic_face(int resolution, std::uint64_t identity_seed) {
    Rng rng(0x5face5eedULL ^ identity_seed * 0x9e3779b97f4a7c15ULL);
    Real cx = rng.uniform(0.4, 0.6), cy = rng.uniform(0.4, 0.6);
    Real rx = rng.uniform(0.22, 0.34), ry = rng.uniform(0.28, 0.4);
    Real eye_dx = rng.uniform(0.1, 0.16), eye_dy = rng.uniform(-0.12, -0.04);
    Real eye_r = rng.uniform(0.03, 0.06);
    Real mouth_dy = rng.uniform(0.12, 0.2), mouth_rx = rng.uniform(0.08, 0.16);
    Real mouth_ry = rng.uniform(0.02, 0.05);
    Real skin_r = rng.uniform(0.3, 0.9), skin_g = rng.uniform(0.0, 0.6), skin_b = rng.uniform(-0.3, 0.3);
    Real bg_r = rng.uniform(-0.9, -0.2), bg_g = rng.uniform(-0.9, -0.2), bg_b = rng.uniform(-0.9, 0.2);
    Real grad_angle = rng.uniform(0.0, 6.28318530717958647692);
    Real ga = std::cos(grad_angle), gb = std::sin(grad_angle);

    Tensor px(Shape{resolution, resolution, 3});
    for (int y = 0; y < resolution; ++y) {
        Real v = (y + 0.5) / resolution;
        for (int x = 0; x < resolution; ++x) {
            Real u = (x + 0.5) / resolution;
            Real bg_shade = 0.3 * (ga * (u - 0.5) + gb * (v - 0.5));
            auto bump = [&](Real bx, Real by, Real brx, Real bry) {
                Real du = (u - bx) / brx, dv = (v - by) / bry;
                return std::exp(-(du * du + dv * dv));
            };
            Real head = bump(cx, cy, rx, ry);
            Real eyes = bump(cx - eye_dx, cy + eye_dy, eye_r, eye_r) +
                        bump(cx + eye_dx, cy + eye_dy, eye_r, eye_r);
            Real mouth = bump(cx, cy + mouth_dy, mouth_rx, mouth_ry);
            Real r = bg_r + bg_shade + head * (skin_r - bg_r) - 1.2 * eyes - 0.4 * mouth;
            Real g = bg_g + bg_shade + head * (skin_g - bg_g) - 1.2 * eyes - 0.9 * mouth;
            Real b = bg_b + bg_shade + head * (skin_b - bg_b) - 1.2 * eyes - 0.9 * mouth;
            px(y, x, 0) = std::tanh(r);
            px(y, x, 1) = std::tanh(g);
            px(y, x, 2) = std::tanh(b);
        }
    }
    return FaceImage(std::move(px));
}

inline std::vector<FaceImage> make_synthetic_faces(int n, int resolution, std::uint64_t seed) {
    if (n < 1) throw ArgumentError("make_synthetic_faces: n must be >= 1");
    std::vector<FaceImage> out;
    out.reserve(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (int i = 0; i < n; ++i) out.push_back(synthetic_face(resolution, rng.next_u64()));
    return out;
}

} // namespace lswap
