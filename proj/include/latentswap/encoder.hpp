// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical representation face encoder: a residual backbone feeds a
// three-level feature pyramid (large = resolution/2, mid = resolution/4,
// small = resolution/8); per-code lateral mapping networks downsample a
// pyramid map to a vector and project it to code width. The smallest map
// predicts the 4 low codes and (in the extended mode) the constant input;
// the remaining codes split between the mid map (coarser half) and the large
// map (finer half, rounded up). Normalization is parameterized layer norm,
// chosen over batch statistics so results are independent of batch size.
//
// Mapping-network channel width equals the pyramid width throughout; the
// width is a documented default of this implementation, not a reference
// value.

#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/latent.hpp"
#include "latentswap/rng.hpp"
#include "latentswap/serialize.hpp"

namespace lswap {

enum class LatentSpace { WPlusPlus, WPlus };

enum class PyramidLevel { Small, Mid, Large };

inline std::string to_string(PyramidLevel level) {
    switch (level) {
        case PyramidLevel::Small: return "small";
        case PyramidLevel::Mid: return "mid";
        case PyramidLevel::Large: return "large";
    }
    throw ArgumentError("unknown pyramid level");
}

inline PyramidLevel pyramid_level_from(const std::string& s) {
    if (s == "small") return PyramidLevel::Small;
    if (s == "mid") return PyramidLevel::Mid;
    if (s == "large") return PyramidLevel::Large;
    throw ConfigError("unknown pyramid level: " + s);
}

/// Assigns absolute code indices [begin, end) to one pyramid level.
struct CodeRange {
    PyramidLevel level = PyramidLevel::Mid;
    int begin = 0;
    int end = 0;
};

struct EncoderConfig {
    int resolution = 1024;
    int code_width = kDefaultCodeWidth;
    LatentSpace latent_space = LatentSpace::WPlusPlus;
    int backbone_width = 64;
    int pyramid_width = 0;               // 0 -> 4 * backbone_width
    std::vector<int> stage_blocks = {3, 4, 6, 3};
    std::vector<CodeRange> code_split;   // empty -> default split; covers 4..N_total-1

    int total_codes() const { return total_codes_for(resolution); }
    int high_code_count() const { return high_codes_for(resolution); }
    int effective_pyramid_width() const {
        return pyramid_width > 0 ? pyramid_width : 4 * backbone_width;
    }

    /// Mid map takes the coarser half of the high codes, large map the finer
    /// half (rounded up).
    std::vector<CodeRange> effective_code_split() const {
        if (!code_split.empty()) return code_split;
        int n_high = high_code_count();
        int mid_count = n_high / 2;
        std::vector<CodeRange> split;
        if (mid_count > 0)
            split.push_back({PyramidLevel::Mid, kLowCodeCount, kLowCodeCount + mid_count});
        split.push_back({PyramidLevel::Large, kLowCodeCount + mid_count, total_codes()});
        return split;
    }

    void validate() const {
        if (resolution < 32 || !is_power_of_two(resolution))
            throw DimensionError("encoder resolution must be a power of two >= 32, got " +
                                 std::to_string(resolution));
        if (code_width < 1 || backbone_width < 1)
            throw ValidationError("EncoderConfig: widths must be positive");
        if (stage_blocks.size() != 4)
            throw ValidationError("EncoderConfig: stage_blocks must list 4 stage depths");
        for (int b : stage_blocks)
            if (b < 1) throw ValidationError("EncoderConfig: every stage needs at least one block");
        // the split must cover indices 4..N_total-1 exactly once
        std::vector<int> owner(static_cast<std::size_t>(total_codes()), 0);
        for (const auto& r : effective_code_split()) {
            if (r.begin < kLowCodeCount || r.end > total_codes() || r.begin >= r.end)
                throw ValidationError("EncoderConfig: code range [" + std::to_string(r.begin) + "," +
                                      std::to_string(r.end) + ") out of bounds");
            for (int i = r.begin; i < r.end; ++i) ++owner[static_cast<std::size_t>(i)];
        }
        for (int i = kLowCodeCount; i < total_codes(); ++i)
            if (owner[static_cast<std::size_t>(i)] != 1)
                throw ValidationError("EncoderConfig: code index " + std::to_string(i) +
                                      " covered " + std::to_string(owner[static_cast<std::size_t>(i)]) +
                                      " times by code_split");
    }
};

/// Differentiable encoder output; constant is undefined in the plain mode.
struct EncodedLatent {
    ad::Var constant; // (4,4,D) or undefined
    ad::Var low;      // (4, D)
    ad::Var high;     // (N_high, D)
};

namespace enc_detail {

/// conv3x3 (no bias) -> layer norm -> leaky relu
struct ConvNorm {
    ad::Var w, gamma, beta;
    int stride = 1;

    static ConvNorm make(ad::ParamSet& ps, const std::string& prefix, int in_ch, int out_ch,
                         int stride, Rng& rng, int ksize = 3) {
        ConvNorm c;
        c.stride = stride;
        Real stddev = 1.0 / std::sqrt(static_cast<Real>(ksize * ksize * in_ch));
        c.w = ps.add(prefix + ".w", rng.normal_tensor(Shape{ksize, ksize, in_ch, out_ch}, stddev));
        c.gamma = ps.add(prefix + ".norm.g", Tensor(Shape{out_ch}, 1.0));
        c.beta = ps.add(prefix + ".norm.b", Tensor::zeros(Shape{out_ch}));
        return c;
    }

    ad::Var apply(const ad::Var& x, bool activate = true) const {
        int pad = (w.value().shape[0] - 1) / 2;
        ad::Var y = ad::layer_norm(ad::conv2d(x, w, stride, pad), gamma, beta);
        return activate ? ad::leaky_relu(y) : y;
    }
};

/// Basic residual block: two conv-norm layers plus a projected skip when the
/// shape changes.
struct ResBlock {
    ConvNorm conv1, conv2;
    std::optional<ConvNorm> skip;

    static ResBlock make(ad::ParamSet& ps, const std::string& prefix, int in_ch, int out_ch,
                         int stride, Rng& rng) {
        ResBlock b;
        b.conv1 = ConvNorm::make(ps, prefix + ".conv1", in_ch, out_ch, stride, rng);
        b.conv2 = ConvNorm::make(ps, prefix + ".conv2", out_ch, out_ch, 1, rng);
        if (in_ch != out_ch || stride != 1)
            b.skip = ConvNorm::make(ps, prefix + ".skip", in_ch, out_ch, stride, rng, 1);
        return b;
    }

    ad::Var apply(const ad::Var& x) const {
        ad::Var main = conv2.apply(conv1.apply(x), false);
        ad::Var side = skip ? skip->apply(x, false) : x;
        return ad::leaky_relu(ad::add(main, side));
    }
};

} // namespace enc_detail

/// Repeated stride-2 conv / norm / leaky-relu stages until the map is 1x1,
/// then global pooling and an affine projection to code width.
class MappingNet {
public:
    static MappingNet make(ad::ParamSet& ps, const std::string& prefix, int input_size, int channels,
                           int code_width, Rng& rng) {
        if (input_size < 1 || !is_power_of_two(input_size))
            throw DimensionError("MappingNet: input size must be a power of two");
        MappingNet net;
        net.input_size_ = input_size;
        int size = input_size;
        int stage = 0;
        while (size > 1) {
            net.stages_.push_back(enc_detail::ConvNorm::make(
                ps, prefix + ".down" + std::to_string(stage), channels, channels, 2, rng));
            size /= 2;
            ++stage;
        }
        Real stddev = 1.0 / std::sqrt(static_cast<Real>(channels));
        net.out_w_ = ps.add(prefix + ".out.w", rng.normal_tensor(Shape{code_width, channels}, stddev));
        net.out_b_ = ps.add(prefix + ".out.b", Tensor::zeros(Shape{code_width}));
        return net;
    }

    int stage_count() const { return static_cast<int>(stages_.size()); }

    ad::Var apply(const ad::Var& feature_map) const {
        const Shape& s = feature_map.value().shape;
        if (s.rank() != 3 || s[0] != s[1])
            throw DimensionError("MappingNet: expects a square (h,h,c) map, got " + s.str());
        if (s[0] != input_size_)
            throw DimensionError("MappingNet: built for size " + std::to_string(input_size_) +
                                 ", got " + std::to_string(s[0]));
        ad::Var x = feature_map;
        for (const auto& st : stages_) x = st.apply(x);
        return ad::linear(ad::global_avg_pool(x), out_w_, out_b_);
    }

private:
    int input_size_ = 0;
    std::vector<enc_detail::ConvNorm> stages_;
    ad::Var out_w_, out_b_;
};

class HierfeEncoder {
public:
    HierfeEncoder(EncoderConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
        cfg_.validate();
        int w = cfg_.backbone_width;
        int p = cfg_.effective_pyramid_width();
        int d = cfg_.code_width;

        stem_ = enc_detail::ConvNorm::make(params_, "stem", 3, w, 1, rng);
        int widths[4] = {w, 2 * w, 4 * w, 8 * w};
        int in_ch = w;
        for (int s = 0; s < 4; ++s) {
            int stride = s == 0 ? 1 : 2;
            for (int b = 0; b < cfg_.stage_blocks[static_cast<std::size_t>(s)]; ++b) {
                std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b);
                stages_[static_cast<std::size_t>(s)].push_back(enc_detail::ResBlock::make(
                    params_, prefix, in_ch, widths[s], b == 0 ? stride : 1, rng));
                in_ch = widths[s];
            }
        }
        lat_small_ = enc_detail::ConvNorm::make(params_, "fpn.lat_small", widths[3], p, 1, rng, 1);
        lat_mid_ = enc_detail::ConvNorm::make(params_, "fpn.lat_mid", widths[2], p, 1, rng, 1);
        lat_large_ = enc_detail::ConvNorm::make(params_, "fpn.lat_large", widths[1], p, 1, rng, 1);
        refine_small_ = enc_detail::ConvNorm::make(params_, "fpn.refine_small", p, p, 1, rng);
        refine_mid_ = enc_detail::ConvNorm::make(params_, "fpn.refine_mid", p, p, 1, rng);
        refine_large_ = enc_detail::ConvNorm::make(params_, "fpn.refine_large", p, p, 1, rng);

        int n_total = cfg_.total_codes();
        code_source_.assign(static_cast<std::size_t>(n_total), PyramidLevel::Small);
        for (const auto& r : cfg_.effective_code_split())
            for (int i = r.begin; i < r.end; ++i) code_source_[static_cast<std::size_t>(i)] = r.level;
        for (int k = 0; k < n_total; ++k) {
            PyramidLevel level = code_source_[static_cast<std::size_t>(k)];
            char name[32];
            std::snprintf(name, sizeof name, "map.code%02d", k);
            mapping_.push_back(MappingNet::make(params_, name, map_input_size(level), p, d, rng));
        }

        if (cfg_.latent_space == LatentSpace::WPlusPlus) {
            int size = cfg_.resolution / 8;
            int stage = 0;
            while (size > kConstantSize) {
                const_head_.push_back(enc_detail::ConvNorm::make(
                    params_, "const_head.down" + std::to_string(stage), p, p, 2, rng));
                size /= 2;
                ++stage;
            }
            Real stddev = 1.0 / std::sqrt(static_cast<Real>(p));
            const_out_w_ = params_.add("const_head.out.w", rng.normal_tensor(Shape{1, 1, p, d}, stddev));
            const_out_b_ = params_.add("const_head.out.b", Tensor::zeros(Shape{d}));
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    ad::ParamSet& params() { return params_; }
    const ad::ParamSet& params() const { return params_; }
    const MappingNet& mapping_net(int code_index) const {
        return mapping_.at(static_cast<std::size_t>(code_index));
    }

    /// Graph-building encode over an (R,R,3) image in [-1,1].
    EncodedLatent encode_graph(const ad::Var& image) const {
        const Shape& s = image.value().shape;
        if (s != Shape{cfg_.resolution, cfg_.resolution, 3})
            throw DimensionError("encode: image must be (" + std::to_string(cfg_.resolution) + "," +
                                 std::to_string(cfg_.resolution) + ",3), got " + s.str());

        ad::Var x = stem_.apply(image);
        for (const auto& block : stages_[0]) x = block.apply(x);
        ad::Var c2 = x;
        for (const auto& block : stages_[1]) c2 = block.apply(c2); // R/2
        ad::Var c3 = c2;
        for (const auto& block : stages_[2]) c3 = block.apply(c3); // R/4
        ad::Var c4 = c3;
        for (const auto& block : stages_[3]) c4 = block.apply(c4); // R/8

        ad::Var p4 = lat_small_.apply(c4);
        ad::Var p3 = ad::add(lat_mid_.apply(c3), ad::upsample2x_nearest(p4));
        ad::Var p2 = ad::add(lat_large_.apply(c2), ad::upsample2x_nearest(p3));
        ad::Var small = refine_small_.apply(p4);
        ad::Var mid = refine_mid_.apply(p3);
        ad::Var large = refine_large_.apply(p2);

        auto map_of = [&](PyramidLevel level) -> const ad::Var& {
            switch (level) {
                case PyramidLevel::Small: return small;
                case PyramidLevel::Mid: return mid;
                case PyramidLevel::Large: return large;
            }
            throw ArgumentError("unknown pyramid level");
        };

        std::vector<ad::Var> low_rows, high_rows;
        for (int k = 0; k < cfg_.total_codes(); ++k) {
            ad::Var code = mapping_[static_cast<std::size_t>(k)].apply(
                map_of(code_source_[static_cast<std::size_t>(k)]));
            (k < kLowCodeCount ? low_rows : high_rows).push_back(code);
        }

        EncodedLatent out;
        out.low = ad::stack_rows(low_rows);
        out.high = ad::stack_rows(high_rows);
        if (cfg_.latent_space == LatentSpace::WPlusPlus) {
            ad::Var h = small;
            for (const auto& stage : const_head_) h = stage.apply(h);
            out.constant = ad::conv2d(h, const_out_w_, const_out_b_, 1, 0);
        }
        if (!out.low.value().all_finite() || !out.high.value().all_finite() ||
            (out.constant.defined() && !out.constant.value().all_finite()))
            throw NumericError("encode: non-finite activations in the latent output");
        return out;
    }

    /// Value-level encode in the extended (constant-carrying) mode.
    HierLatent encode(const FaceImage& image) const {
        if (cfg_.latent_space != LatentSpace::WPlusPlus)
            throw CapabilityError("encode: encoder is configured for the plain code stack; "
                                  "use encode_wplus");
        validate(image, cfg_.resolution);
        EncodedLatent g = encode_graph(ad::constant(image.pixels));
        HierLatent h;
        h.resolution = cfg_.resolution;
        h.constant_input = g.constant.value();
        h.low_codes = g.low.value();
        h.high_codes = g.high.value();
        lswap::validate(h);
        return h;
    }

    /// Value-level encode in the plain mode: the full code stack only.
    WPlusLatent encode_wplus(const FaceImage& image) const {
        validate(image, cfg_.resolution);
        EncodedLatent g = encode_graph(ad::constant(image.pixels));
        WPlusLatent wp;
        wp.resolution = cfg_.resolution;
        wp.codes = merge_codes(g.low.value(), g.high.value());
        lswap::validate(wp);
        return wp;
    }

    void save(const std::filesystem::path& dir) const {
        io::Checkpoint ck;
        ck.meta["kind"] = "encoder";
        ck.meta["resolution"] = std::to_string(cfg_.resolution);
        ck.meta["code_width"] = std::to_string(cfg_.code_width);
        ck.meta["latent_space"] = cfg_.latent_space == LatentSpace::WPlusPlus ? "wpp" : "wplus";
        ck.meta["backbone_width"] = std::to_string(cfg_.backbone_width);
        ck.meta["pyramid_width"] = std::to_string(cfg_.effective_pyramid_width());
        std::ostringstream blocks;
        for (std::size_t i = 0; i < cfg_.stage_blocks.size(); ++i)
            blocks << (i ? "," : "") << cfg_.stage_blocks[i];
        ck.meta["stage_blocks"] = blocks.str();
        std::ostringstream split;
        bool first = true;
        for (const auto& r : cfg_.effective_code_split()) {
            split << (first ? "" : ",") << to_string(r.level) << ":" << r.begin << ":" << r.end;
            first = false;
        }
        ck.meta["code_split"] = split.str();
        ck.params = io::params_to_named(params_);
        io::save_checkpoint(dir, ck);
    }

private:
    int map_input_size(PyramidLevel level) const {
        switch (level) {
            case PyramidLevel::Small: return cfg_.resolution / 8;
            case PyramidLevel::Mid: return cfg_.resolution / 4;
            case PyramidLevel::Large: return cfg_.resolution / 2;
        }
        throw ArgumentError("unknown pyramid level");
    }

    EncoderConfig cfg_;
    ad::ParamSet params_;
    enc_detail::ConvNorm stem_;
    std::vector<enc_detail::ResBlock> stages_[4];
    enc_detail::ConvNorm lat_small_, lat_mid_, lat_large_;
    enc_detail::ConvNorm refine_small_, refine_mid_, refine_large_;
    std::vector<PyramidLevel> code_source_;
    std::vector<MappingNet> mapping_;
    std::vector<enc_detail::ConvNorm> const_head_;
    ad::Var const_out_w_, const_out_b_;
};

namespace enc_detail {

inline std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
    return out;
}

inline std::vector<CodeRange> parse_code_split(const std::string& s) {
    std::vector<CodeRange> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::istringstream part(item);
        std::string level, b, e;
        if (!std::getline(part, level, ':') || !std::getline(part, b, ':') || !std::getline(part, e))
            throw CheckpointError("malformed code_split entry: " + item);
        out.push_back({pyramid_level_from(level), std::stoi(b), std::stoi(e)});
    }
    return out;
}

} // namespace enc_detail

inline HierfeEncoder load_encoder(const std::filesystem::path& dir) {
    io::Checkpoint ck = io::load_checkpoint(dir);
    if (ck.meta_at("kind") != "encoder")
        throw CheckpointError("checkpoint at " + dir.string() + " is a " + ck.meta_at("kind") +
                              ", expected an encoder");
    EncoderConfig cfg;
    cfg.resolution = ck.meta_int("resolution");
    cfg.code_width = ck.meta_int("code_width");
    const std::string space = ck.meta_at("latent_space");
    if (space == "wpp") cfg.latent_space = LatentSpace::WPlusPlus;
    else if (space == "wplus") cfg.latent_space = LatentSpace::WPlus;
    else throw CheckpointError("unknown latent_space in encoder checkpoint: " + space);
    cfg.backbone_width = ck.meta_int("backbone_width");
    cfg.pyramid_width = ck.meta_int("pyramid_width");
    cfg.stage_blocks = enc_detail::parse_int_list(ck.meta_at("stage_blocks"));
    cfg.code_split = enc_detail::parse_code_split(ck.meta_at("code_split"));
    Rng rng(0);
    HierfeEncoder enc(cfg, rng);
    io::load_into_params(ck, enc.params());
    try {
        enc.params().check_finite("encoder");
    } catch (const ValidationError& e) {
        throw CheckpointError(e.what());
    }
    return enc;
}

} // namespace lswap
