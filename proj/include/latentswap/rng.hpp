// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "latentswap/tensor.hpp"

namespace lswap {

/// Deterministic random source. Distributions are implemented by hand on top
/// of mt19937_64 so streams are bit-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    Real uniform() {
        return static_cast<Real>(engine_() >> 11) * 0x1.0p-53;
    }

    Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection-free modulo is fine at these scales; bias < 2^-40 for n < 2^24.
        return engine_() % n;
    }

    /// Standard normal via Box-Muller (one value per call, cached pair).
    Real normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        Real u1 = uniform();
        Real u2 = uniform();
        while (u1 <= 0) u1 = uniform();
        Real r = std::sqrt(-2.0 * std::log(u1));
        Real a = 6.283185307179586476925287 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Tensor normal_tensor(Shape s, Real stddev = 1.0, Real mean = 0.0) {
        Tensor t(std::move(s));
        for (auto& v : t.data) v = mean + stddev * normal();
        return t;
    }

    /// Derive an independent stream, e.g. per sample or per parameter group.
    Rng fork(std::uint64_t salt) {
        std::uint64_t s = next_u64();
        // splitmix-style scramble of (state draw, salt)
        std::uint64_t z = s + 0x9e3779b97f4a7c15ULL * (salt + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    Real spare_ = 0;
};

} // namespace lswap
