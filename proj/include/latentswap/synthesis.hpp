// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Style-based synthesis: a desk-scale generator with the interface semantics
// the pipeline needs. Starting from a (4,4,D) constant (learned, or supplied
// externally by the hierarchical latent), each resolution level upsamples and
// applies two styled convolutions; a styled convolution modulates the
// per-channel normalized activations with a scale/shift affine of its
// assigned latent code. Style-input count is 2*log2(resolution) - 2; codes
// 0..3 drive the 4x4 and 8x8 levels. Noise inputs are fixed to zero, so
// synthesis is a pure function of (latents, weights).

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/latent.hpp"
#include "latentswap/rng.hpp"
#include "latentswap/serialize.hpp"

namespace lswap {

struct GeneratorConfig {
    int resolution = 64;
    int code_width = kDefaultCodeWidth;
    int base_width = 32; // channels at the 4x4 level
    int min_width = 8;
    bool accepts_external_constant = true;
    int mapping_layers = 2;

    void validate() const {
        total_codes_for(resolution);
        if (code_width < 1 || base_width < 1 || min_width < 1 || mapping_layers < 1)
            throw ValidationError("GeneratorConfig: widths and layer counts must be positive");
    }

    int total_codes() const { return total_codes_for(resolution); }
    int high_codes() const { return high_codes_for(resolution); }
    int levels() const { return log2_exact(resolution) - 1; } // 4x4 .. resolution
    int channels_at(int level) const { return std::max(min_width, base_width >> level); }
};

/// One auxiliary draw: the image and the codes that deterministically
/// regenerate it.
struct AuxiliarySample {
    FaceImage image;
    Tensor codes; // (N_total, D)
};

class ToyGenerator {
public:
    explicit ToyGenerator(GeneratorConfig cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        int d = cfg_.code_width;
        constant_ = params_.add("constant",
                                rng.normal_tensor(Shape{kConstantSize, kConstantSize, d}, 1.0));
        int in_ch = d;
        for (int l = 0; l < cfg_.levels(); ++l) {
            int out_ch = cfg_.channels_at(l);
            for (int j = 0; j < 2; ++j) {
                std::string p = "level" + std::to_string(l) + ".conv" + std::to_string(j);
                Real stddev = 1.0 / std::sqrt(9.0 * static_cast<Real>(in_ch));
                conv_w_.push_back(params_.add(p + ".w", rng.normal_tensor(Shape{3, 3, in_ch, out_ch}, stddev)));
                std::string s = "level" + std::to_string(l) + ".style" + std::to_string(j);
                Real sdev = 1.0 / std::sqrt(static_cast<Real>(d));
                style_w_.push_back(params_.add(s + ".w", rng.normal_tensor(Shape{2 * out_ch, d}, sdev)));
                style_b_.push_back(params_.add(s + ".b", Tensor::zeros(Shape{2 * out_ch})));
                in_ch = out_ch;
            }
        }
        to_rgb_w_ = params_.add("to_rgb.w",
                                rng.normal_tensor(Shape{1, 1, in_ch, 3},
                                                  1.0 / std::sqrt(static_cast<Real>(in_ch))));
        to_rgb_b_ = params_.add("to_rgb.b", Tensor::zeros(Shape{3}));
        for (int m = 0; m < cfg_.mapping_layers; ++m) {
            std::string p = "mapping." + std::to_string(m);
            mapping_w_.push_back(params_.add(p + ".w",
                                             rng.normal_tensor(Shape{d, d},
                                                               1.0 / std::sqrt(static_cast<Real>(d)))));
            mapping_b_.push_back(params_.add(p + ".b", Tensor::zeros(Shape{d})));
        }
    }

    const GeneratorConfig& config() const { return cfg_; }
    ad::ParamSet& params() { return params_; }
    const ad::ParamSet& params() const { return params_; }

    /// Graph-building synthesis. C may be undefined (learned constant used).
    ad::Var synthesize_graph(const ad::Var& c_external, const ad::Var& low, const ad::Var& high) const {
        int d = cfg_.code_width;
        if (low.value().shape != Shape{kLowCodeCount, d})
            throw DimensionError("synthesize: low codes must be (4," + std::to_string(d) + "), got " +
                                 low.value().shape.str());
        if (high.value().shape != Shape{cfg_.high_codes(), d})
            throw DimensionError("synthesize: high codes must be (" + std::to_string(cfg_.high_codes()) +
                                 "," + std::to_string(d) + ") at resolution " +
                                 std::to_string(cfg_.resolution) + ", got " + high.value().shape.str());
        ad::Var x;
        if (c_external.defined()) {
            if (!cfg_.accepts_external_constant)
                throw CapabilityError("synthesize: this generator does not accept an external constant");
            if (c_external.value().shape != Shape{kConstantSize, kConstantSize, d})
                throw DimensionError("synthesize: constant input must be (4,4," + std::to_string(d) +
                                     "), got " + c_external.value().shape.str());
            x = c_external;
        } else {
            x = constant_;
        }

        auto code_row = [&](int k) {
            return k < kLowCodeCount ? ad::slice_row(low, k) : ad::slice_row(high, k - kLowCodeCount);
        };
        std::size_t idx = 0;
        for (int l = 0; l < cfg_.levels(); ++l) {
            if (l > 0) x = ad::upsample2x_nearest(x);
            for (int j = 0; j < 2; ++j, ++idx) {
                int out_ch = cfg_.channels_at(l);
                ad::Var y = ad::conv2d(x, conv_w_[idx], 1, 1);
                ad::Var style = ad::reshape(
                    ad::linear(code_row(static_cast<int>(idx)), style_w_[idx], style_b_[idx]),
                    Shape{2, out_ch});
                ad::Var g = ad::slice_row(style, 0);
                ad::Var b = ad::slice_row(style, 1);
                x = ad::leaky_relu(ad::instance_modulate(y, g, b));
            }
        }
        ad::Var rgb = ad::conv2d(x, to_rgb_w_, to_rgb_b_, 1, 0);
        if (!rgb.value().all_finite())
            throw NumericError("synthesize: non-finite activations before the output range map");
        return ad::tanh_op(rgb);
    }

    /// Value-level synthesis from a hierarchical latent's pieces.
    FaceImage synthesize(const std::optional<Tensor>& c_external, const Tensor& low,
                         const Tensor& high) const {
        ad::Var c = c_external ? ad::constant(*c_external) : ad::Var();
        return FaceImage(synthesize_graph(c, ad::constant(low), ad::constant(high)).value());
    }

    FaceImage synthesize(const HierLatent& latent) const {
        if (latent.resolution != cfg_.resolution)
            throw DimensionError("synthesize: latent resolution " + std::to_string(latent.resolution) +
                                 " != generator resolution " + std::to_string(cfg_.resolution));
        return synthesize(latent.constant_input, latent.low_codes, latent.high_codes);
    }

    FaceImage synthesize(const WPlusLatent& latent) const {
        if (latent.resolution != cfg_.resolution)
            throw DimensionError("synthesize: latent resolution mismatch");
        auto [low, high] = split_codes(latent.codes);
        return synthesize(std::nullopt, low, high);
    }

    /// The generator's own mapping network: prior draw z -> intermediate w.
    Tensor map_prior(const Tensor& z) const {
        if (z.shape != Shape{cfg_.code_width})
            throw DimensionError("map_prior: z must be a vector of width " +
                                 std::to_string(cfg_.code_width));
        ad::Var w = ad::constant(z);
        for (std::size_t m = 0; m < mapping_w_.size(); ++m)
            w = ad::leaky_relu(ad::linear(w, mapping_w_[m], mapping_b_[m]));
        return w.value();
    }

    /// Draws n code stacks from the mapping of a standard-normal prior and
    /// renders them; each sample regenerates bit-exactly from its codes.
    std::vector<AuxiliarySample> sample_auxiliary(int n, std::uint64_t seed) const {
        if (n < 1) throw ArgumentError("sample_auxiliary: n must be >= 1");
        Rng rng(seed);
        std::vector<AuxiliarySample> out;
        out.reserve(static_cast<std::size_t>(n));
        int total = cfg_.total_codes();
        for (int i = 0; i < n; ++i) {
            Tensor w = map_prior(rng.normal_tensor(Shape{cfg_.code_width}));
            Tensor codes(Shape{total, cfg_.code_width});
            for (int r = 0; r < total; ++r)
                std::copy(w.data.begin(), w.data.end(),
                          codes.data.begin() + static_cast<std::ptrdiff_t>(r) * cfg_.code_width);
            auto [low, high] = split_codes(codes);
            out.push_back({synthesize(std::nullopt, low, high), std::move(codes)});
        }
        return out;
    }

    void save(const std::filesystem::path& dir) const {
        io::Checkpoint ck;
        ck.meta["kind"] = "generator";
        ck.meta["resolution"] = std::to_string(cfg_.resolution);
        ck.meta["code_width"] = std::to_string(cfg_.code_width);
        ck.meta["base_width"] = std::to_string(cfg_.base_width);
        ck.meta["min_width"] = std::to_string(cfg_.min_width);
        ck.meta["accepts_external_constant"] = cfg_.accepts_external_constant ? "1" : "0";
        ck.meta["mapping_layers"] = std::to_string(cfg_.mapping_layers);
        ck.params = io::params_to_named(params_);
        io::save_checkpoint(dir, ck);
    }

private:
    GeneratorConfig cfg_;
    ad::ParamSet params_;
    ad::Var constant_;
    std::vector<ad::Var> conv_w_;
    std::vector<ad::Var> style_w_, style_b_;
    ad::Var to_rgb_w_, to_rgb_b_;
    std::vector<ad::Var> mapping_w_, mapping_b_;
};

/// Loads a generator checkpoint and validates it against the expected
/// resolution (resolution mismatch is a capability error, not a shape error).
inline ToyGenerator load_generator(const std::filesystem::path& dir, int expected_resolution) {
    io::Checkpoint ck = io::load_checkpoint(dir);
    if (ck.meta_at("kind") != "generator")
        throw CheckpointError("checkpoint at " + dir.string() + " is a " + ck.meta_at("kind") +
                              ", expected a generator");
    GeneratorConfig cfg;
    cfg.resolution = ck.meta_int("resolution");
    cfg.code_width = ck.meta_int("code_width");
    cfg.base_width = ck.meta_int("base_width");
    cfg.min_width = ck.meta_int("min_width");
    cfg.accepts_external_constant = ck.meta_int("accepts_external_constant") != 0;
    cfg.mapping_layers = ck.meta_int("mapping_layers");
    if (cfg.resolution != expected_resolution)
        throw CapabilityError("generator checkpoint is for resolution " +
                              std::to_string(cfg.resolution) + ", pipeline expects " +
                              std::to_string(expected_resolution));
    Rng rng(0);
    ToyGenerator gen(cfg, rng);
    io::load_into_params(ck, gen.params());
    try {
        gen.params().check_finite("generator");
    } catch (const ValidationError& e) {
        throw CheckpointError(e.what());
    }
    return gen;
}

} // namespace lswap
