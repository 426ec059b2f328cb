// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training. Stage 1 fits the encoder on the inversion objective
// with the generator frozen; stage 2 fits the face transfer module with both
// the encoder and the generator frozen. Reconstructions in stage 2 are
// routed through the transfer module as self-swaps (source = target), so the
// reconstruction term keeps a gradient path into the module; if they
// bypassed it, that term would be constant with respect to every trainable
// parameter.
//
// Pairing policy for stage 2: random source/target pairs with a 20% share of
// same-image pairs to anchor the reconstruction terms.

#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/encoder.hpp"
#include "latentswap/losses.hpp"
#include "latentswap/manipulators.hpp"
#include "latentswap/oracles.hpp"
#include "latentswap/synthesis.hpp"

namespace lswap {

struct TrainConfig {
    Real learning_rate = 0.01; // paper-scale default for Adam
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real adam_eps = 1e-8;
    int batch_size = 2;
    int steps = 500;
    std::uint64_t seed = 0;
    LossWeightsInv inv_weights;
    LossWeightsSwap swap_weights;
    Real same_pair_fraction = 0.2;

    void validate() const {
        if (!(learning_rate >= 0) || !std::isfinite(learning_rate))
            throw ValidationError("TrainConfig: learning_rate must be finite and >= 0");
        if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
        if (steps < 0) throw ValidationError("TrainConfig: steps must be >= 0");
        if (same_pair_fraction < 0 || same_pair_fraction > 1)
            throw ValidationError("TrainConfig: same_pair_fraction must be in [0,1]");
        inv_weights.validate();
        swap_weights.validate();
    }
};

struct StepRecord {
    int step = 0;
    LossReport report;
    double wall_ms = 0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::uint64_t seed = 0;
    double wall_clock_ms = 0;

    /// Newline-delimited records: "step=N wall_ms=T <term>=V ... total=V".
    std::string to_text() const {
        std::ostringstream out;
        out.precision(10);
        out << "seed=" << seed << " steps=" << steps.size() << " wall_ms=" << wall_clock_ms << "\n";
        for (const auto& s : steps) {
            out << "step=" << s.step << " wall_ms=" << s.wall_ms;
            for (const auto& [name, value] : s.report.terms) out << " " << name << "=" << value;
            out << " total=" << s.report.total << "\n";
        }
        return out.str();
    }
};

/// Mean composite loss over a window of steps at the start or end of a run.
inline Real smoothed_total(const TrainLog& log, int window, bool at_start) {
    if (log.steps.empty()) throw ArgumentError("smoothed_total: empty training log");
    int n = static_cast<int>(log.steps.size());
    int w = std::min(window, n);
    KahanSum s;
    for (int i = 0; i < w; ++i)
        s.add(log.steps[static_cast<std::size_t>(at_start ? i : n - w + i)].report.total);
    return s.value() / w;
}

inline Real smoothed_term(const TrainLog& log, const std::string& term, int window, bool at_start) {
    if (log.steps.empty()) throw ArgumentError("smoothed_term: empty training log");
    int n = static_cast<int>(log.steps.size());
    int w = std::min(window, n);
    KahanSum s;
    for (int i = 0; i < w; ++i)
        s.add(log.steps[static_cast<std::size_t>(at_start ? i : n - w + i)].report.term(term));
    return s.value() / w;
}

// ---------------------------------------------------------------------------
// optimizer

class Adam {
public:
    Adam(ad::ParamSet& params, Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& item : params.items()) {
            vars_.push_back(item.var);
            m_.push_back(Tensor::zeros(item.var.value().shape));
            v_.push_back(Tensor::zeros(item.var.value().shape));
        }
    }

    void step() {
        ++t_;
        Real bc1 = 1.0 - std::pow(beta1_, t_);
        Real bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t p = 0; p < vars_.size(); ++p) {
            const Tensor& g = vars_[p].grad();
            Tensor& val = vars_[p].value_mut();
            Tensor& m = m_[p];
            Tensor& v = v_[p];
            for (std::size_t i = 0; i < val.data.size(); ++i) {
                Real gi = g.data[i];
                m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
                v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
                Real mhat = m.data[i] / bc1;
                Real vhat = v.data[i] / bc2;
                val.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    std::vector<ad::Var> vars_;
    std::vector<Tensor> m_, v_;
    Real lr_, beta1_, beta2_, eps_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// stage drivers

namespace train_detail {

/// Runs one optimization step, converting any numeric failure (non-finite
/// loss term, activations, embeddings) into an abort naming the step.
template <typename Body>
inline void run_step(int step, Body&& body) {
    try {
        body();
    } catch (const NumericError& e) {
        throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
}

inline LossReport mean_reports(const std::vector<LossReport>& reports) {
    LossReport mean = reports.front();
    for (std::size_t t = 0; t < mean.terms.size(); ++t) {
        KahanSum s;
        for (const auto& r : reports) s.add(r.terms[t].second);
        mean.terms[t].second = s.value() / static_cast<Real>(reports.size());
    }
    mean.total = mean.weighted_sum();
    return mean;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace train_detail

/// Stage 1: fit the encoder on reconstruction-through-the-generator. The
/// generator stays frozen (verified bit-exactly by the caller's checksums).
inline TrainLog train_hierfe(const std::vector<FaceImage>& data, HierfeEncoder& encoder,
                             const ToyGenerator& generator, const PerceptualOracles& oracles,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw ArgumentError("train_hierfe: empty data set");
    if (!oracles.complete()) throw ConfigError("train_hierfe: oracle set incomplete");
    if (generator.config().resolution != encoder.config().resolution)
        throw DimensionError("train_hierfe: generator resolution " +
                             std::to_string(generator.config().resolution) +
                             " != encoder resolution " + std::to_string(encoder.config().resolution));
    if (generator.config().code_width != encoder.config().code_width)
        throw DimensionError("train_hierfe: code width mismatch between encoder and generator");
    for (const auto& img : data) validate(img, encoder.config().resolution);

    generator.params().set_requires_grad(false);
    encoder.params().set_requires_grad(true);

    auto run_start = std::chrono::steady_clock::now();
    TrainLog log;
    log.seed = cfg.seed;
    Rng rng(cfg.seed);
    Adam opt(encoder.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

    for (int step = 1; step <= cfg.steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        train_detail::run_step(step, [&] {
            encoder.params().zero_grads();
            ad::Var batch_total;
            std::vector<LossReport> reports;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const FaceImage& img = data[rng.uniform_index(data.size())];
                ad::Var x = ad::constant(img.pixels);
                EncodedLatent lat = encoder.encode_graph(x);
                ad::Var xhat = generator.synthesize_graph(lat.constant, lat.low, lat.high);
                auto [total, report] = l_inv(x, xhat, oracles, cfg.inv_weights);
                reports.push_back(std::move(report));
                batch_total = batch_total.defined() ? ad::add(batch_total, total) : total;
            }
            batch_total = ad::mul_scalar(batch_total, 1.0 / cfg.batch_size);
            ad::backward(batch_total);
            opt.step();
            log.steps.push_back({step, train_detail::mean_reports(reports), train_detail::ms_since(t0)});
        });
    }
    log.wall_clock_ms = train_detail::ms_since(run_start);
    return log;
}

/// Stage 2: fit the transfer module on the swap objective with the encoder
/// and generator frozen. Latents are precomputed once, which is valid
/// precisely because the encoder is frozen.
inline TrainLog train_ftm(const std::vector<FaceImage>& data, const HierfeEncoder& encoder,
                          const ToyGenerator& generator, FTMParams& ftm,
                          const PerceptualOracles& oracles, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() < 2) throw ArgumentError("train_ftm: need at least two images for pairing");
    if (!oracles.complete()) throw ConfigError("train_ftm: oracle set incomplete");
    if (encoder.config().latent_space != LatentSpace::WPlusPlus)
        throw CapabilityError("train_ftm: requires an encoder in the extended latent mode");
    if (ftm.block_count() != encoder.config().high_code_count() ||
        ftm.code_width() != encoder.config().code_width)
        throw DimensionError("train_ftm: transfer parameters (" + std::to_string(ftm.block_count()) +
                             "," + std::to_string(ftm.code_width()) +
                             ") do not match the encoder's high codes");

    encoder.params().set_requires_grad(false);
    generator.params().set_requires_grad(false);
    ftm.params.set_requires_grad(true);

    auto run_start = std::chrono::steady_clock::now();
    std::vector<HierLatent> latents;
    latents.reserve(data.size());
    for (const auto& img : data) latents.push_back(encoder.encode(img));

    TrainLog log;
    log.seed = cfg.seed;
    Rng rng(cfg.seed);
    Adam opt(ftm.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

    for (int step = 1; step <= cfg.steps; ++step) {
        auto t0 = std::chrono::steady_clock::now();
        train_detail::run_step(step, [&] {
            ftm.params.zero_grads();
            ad::Var batch_total;
            std::vector<LossReport> reports;
            for (int b = 0; b < cfg.batch_size; ++b) {
                std::size_t si = rng.uniform_index(data.size());
                std::size_t ti =
                    rng.uniform() < cfg.same_pair_fraction ? si : rng.uniform_index(data.size());
                const HierLatent& ls = latents[si];
                const HierLatent& lt = latents[ti];
                ad::Var s_high = ad::constant(ls.high_codes);
                ad::Var t_high = ad::constant(lt.high_codes);

                ad::Var xhat_s = generator.synthesize_graph(ad::constant(ls.constant_input),
                                                            ad::constant(ls.low_codes),
                                                            ftm_forward(s_high, s_high, ftm));
                ad::Var xhat_t = generator.synthesize_graph(ad::constant(lt.constant_input),
                                                            ad::constant(lt.low_codes),
                                                            ftm_forward(t_high, t_high, ftm));
                ad::Var l_s2t = ftm_forward(s_high, t_high, ftm);
                ad::Var y_s2t = generator.synthesize_graph(ad::constant(lt.constant_input),
                                                           ad::constant(lt.low_codes), l_s2t);
                auto [total, report] =
                    l_swap(ad::constant(data[si].pixels), ad::constant(data[ti].pixels), xhat_s,
                           xhat_t, y_s2t, s_high, l_s2t, oracles, cfg.swap_weights);
                reports.push_back(std::move(report));
                batch_total = batch_total.defined() ? ad::add(batch_total, total) : total;
            }
            batch_total = ad::mul_scalar(batch_total, 1.0 / cfg.batch_size);
            ad::backward(batch_total);
            opt.step();
            log.steps.push_back({step, train_detail::mean_reports(reports), train_detail::ms_since(t0)});
        });
    }
    log.wall_clock_ms = train_detail::ms_since(run_start);
    return log;
}

} // namespace lswap
