// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: configuration, the three-stage swap (encode,
// manipulate, synthesize), plain reconstruction, and batch generation with a
// manifest. The synthesis stage consumes only the target's constant input
// and low codes plus the manipulated high codes; the source's constant and
// low codes are never read past encoding.
//
// Config file: one "key value" pair per line, '#' starts a comment.
// Relative paths resolve against the config file's directory. Keys:
//   resolution, latent_space (wpp|wplus), encoder_dir, generator_dir,
//   manipulator (ftm|lcr|id_injection), manipulator_dir (checkpoint of the
//   learned manipulator; unused for lcr), oracles (toy), seed,
//   recognizer_size, feature_size, landmark_size.

#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "latentswap/encoder.hpp"
#include "latentswap/image_io.hpp"
#include "latentswap/manipulators.hpp"
#include "latentswap/oracles.hpp"
#include "latentswap/synthesis.hpp"

namespace lswap {

enum class Manipulator { FTM, LCR, IdInjection };

inline std::string to_string(Manipulator m) {
    switch (m) {
        case Manipulator::FTM: return "ftm";
        case Manipulator::LCR: return "lcr";
        case Manipulator::IdInjection: return "id_injection";
    }
    throw ArgumentError("unknown manipulator");
}

inline Manipulator manipulator_from(const std::string& s) {
    if (s == "ftm") return Manipulator::FTM;
    if (s == "lcr") return Manipulator::LCR;
    if (s == "id_injection") return Manipulator::IdInjection;
    throw ConfigError("unknown manipulator '" + s + "' (expected ftm, lcr, or id_injection)");
}

struct PipelineConfig {
    int resolution = 64;
    LatentSpace latent_space = LatentSpace::WPlusPlus;
    std::filesystem::path encoder_dir;
    std::filesystem::path generator_dir;
    std::filesystem::path manipulator_dir; // ftm / id_injection checkpoint
    Manipulator manipulator = Manipulator::FTM;
    std::string oracles_name = "toy";
    std::uint64_t seed = 0;
    int recognizer_size = 112;
    int feature_size = 256;
    int landmark_size = 256;

    void validate() const {
        total_codes_for(resolution);
        if (encoder_dir.empty() || generator_dir.empty())
            throw ConfigError("pipeline config: encoder_dir and generator_dir are required");
        if (!std::filesystem::exists(encoder_dir))
            throw IoError("pipeline config: encoder_dir does not exist: " + encoder_dir.string());
        if (!std::filesystem::exists(generator_dir))
            throw IoError("pipeline config: generator_dir does not exist: " + generator_dir.string());
        if (manipulator != Manipulator::LCR) {
            if (manipulator_dir.empty())
                throw ConfigError("pipeline config: manipulator_dir is required for " +
                                  to_string(manipulator));
            if (!std::filesystem::exists(manipulator_dir))
                throw IoError("pipeline config: manipulator_dir does not exist: " +
                              manipulator_dir.string());
        }
    }

    static PipelineConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config: " + path.string());
        const std::filesystem::path base = path.parent_path();
        auto resolve = [&base](const std::string& p) {
            std::filesystem::path fp(p);
            return fp.is_absolute() ? fp : base / fp;
        };
        PipelineConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string key;
            if (!(ls >> key)) continue;
            std::string value;
            std::getline(ls, value);
            std::size_t start = value.find_first_not_of(" \t");
            value = start == std::string::npos ? "" : value.substr(start);
            std::size_t last = value.find_last_not_of(" \t\r");
            if (last != std::string::npos) value.erase(last + 1);
            if (value.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                                  "' has no value");
            try {
                if (key == "resolution") cfg.resolution = std::stoi(value);
                else if (key == "latent_space") {
                    if (value == "wpp") cfg.latent_space = LatentSpace::WPlusPlus;
                    else if (value == "wplus") cfg.latent_space = LatentSpace::WPlus;
                    else throw ConfigError("latent_space must be wpp or wplus, got " + value);
                } else if (key == "encoder_dir") cfg.encoder_dir = resolve(value);
                else if (key == "generator_dir") cfg.generator_dir = resolve(value);
                else if (key == "manipulator_dir") cfg.manipulator_dir = resolve(value);
                else if (key == "manipulator") cfg.manipulator = manipulator_from(value);
                else if (key == "oracles") cfg.oracles_name = value;
                else if (key == "seed") cfg.seed = std::stoull(value);
                else if (key == "recognizer_size") cfg.recognizer_size = std::stoi(value);
                else if (key == "feature_size") cfg.feature_size = std::stoi(value);
                else if (key == "landmark_size") cfg.landmark_size = std::stoi(value);
                else throw ConfigError("unknown config key '" + key + "'");
            } catch (const std::invalid_argument&) {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" +
                                  key + "': " + value);
            } catch (const std::out_of_range&) {
                throw ConfigError("config line " + std::to_string(lineno) + ": value out of range for '" +
                                  key + "'");
            }
        }
        cfg.validate();
        return cfg;
    }
};

struct SwapResult {
    FaceImage image;
    HierLatent source_latent;
    HierLatent target_latent;
    Tensor transferred_codes; // (N_high, D)
    double encode_ms = 0;
    double manipulate_ms = 0;
    double synthesize_ms = 0;
    double total_ms = 0;
};

class Pipeline {
public:
    static Pipeline load(const PipelineConfig& cfg) {
        cfg.validate();
        Pipeline p(cfg);
        p.encoder_.emplace(load_encoder(cfg.encoder_dir));
        if (p.encoder_->config().resolution != cfg.resolution)
            throw CheckpointError("encoder checkpoint resolution " +
                                  std::to_string(p.encoder_->config().resolution) +
                                  " != configured " + std::to_string(cfg.resolution));
        if (p.encoder_->config().latent_space != cfg.latent_space)
            throw CheckpointError("encoder checkpoint latent space differs from the configured mode");
        p.generator_.emplace(load_generator(cfg.generator_dir, cfg.resolution));
        if (p.generator_->config().code_width != p.encoder_->config().code_width)
            throw CheckpointError("generator code width " +
                                  std::to_string(p.generator_->config().code_width) +
                                  " != encoder code width " +
                                  std::to_string(p.encoder_->config().code_width));
        if (cfg.manipulator == Manipulator::FTM) {
            p.ftm_ = load_ftm(cfg.manipulator_dir);
            if (p.ftm_->block_count() != p.encoder_->config().high_code_count() ||
                p.ftm_->code_width() != p.encoder_->config().code_width)
                throw CheckpointError("transfer-module checkpoint does not match the encoder's "
                                      "high-code layout");
        } else if (cfg.manipulator == Manipulator::IdInjection) {
            p.inject_ = load_id_inject(cfg.manipulator_dir);
            if (p.inject_->code_width() != p.encoder_->config().code_width)
                throw CheckpointError("identity-injection checkpoint code width mismatch");
        }
        p.oracles_ = make_oracles_by_name(cfg.oracles_name, cfg.seed, cfg.recognizer_size,
                                          cfg.feature_size, cfg.landmark_size);
        p.encoder_->params().set_requires_grad(false);
        p.generator_->params().set_requires_grad(false);
        if (p.ftm_) p.ftm_->params.set_requires_grad(false);
        if (p.inject_) p.inject_->params.set_requires_grad(false);
        return p;
    }

    const PipelineConfig& config() const { return cfg_; }
    const HierfeEncoder& encoder() const { return *encoder_; }
    const ToyGenerator& generator() const { return *generator_; }
    const PerceptualOracles& oracles() const { return oracles_; }

    HierLatent encode(const FaceImage& image) const { return encoder_->encode(image); }

    /// Manipulation + synthesis from already-encoded latents. Exposed so the
    /// discard property (source constant and low codes unused) is directly
    /// testable.
    SwapResult swap_from_latents(const HierLatent& src, const HierLatent& tgt) const {
        auto t1 = std::chrono::steady_clock::now();
        Tensor transferred = manipulate(src, tgt);
        auto t2 = std::chrono::steady_clock::now();
        FaceImage image = generator_->synthesize(tgt.constant_input, tgt.low_codes, transferred);
        auto t3 = std::chrono::steady_clock::now();

        SwapResult result;
        result.image = std::move(image);
        result.source_latent = src;
        result.target_latent = tgt;
        result.transferred_codes = std::move(transferred);
        result.manipulate_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        result.synthesize_ms = std::chrono::duration<double, std::milli>(t3 - t2).count();
        result.total_ms = result.manipulate_ms + result.synthesize_ms;
        return result;
    }

    SwapResult swap(const FaceImage& source, const FaceImage& target) const {
        if (cfg_.latent_space != LatentSpace::WPlusPlus)
            throw CapabilityError("swap requires the extended latent mode; the plain mode only "
                                  "supports reconstruction");
        validate(source, cfg_.resolution);
        validate(target, cfg_.resolution);
        auto t0 = std::chrono::steady_clock::now();
        HierLatent src = encoder_->encode(source);
        HierLatent tgt = encoder_->encode(target);
        auto t1 = std::chrono::steady_clock::now();
        SwapResult result = swap_from_latents(src, tgt);
        result.encode_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.total_ms += result.encode_ms;
        return result;
    }

    /// Plain reconstruction: encode, then synthesize the latent unchanged.
    FaceImage reconstruct(const FaceImage& image) const {
        validate(image, cfg_.resolution);
        if (cfg_.latent_space == LatentSpace::WPlusPlus)
            return generator_->synthesize(encoder_->encode(image));
        return generator_->synthesize(encoder_->encode_wplus(image));
    }

private:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

    Tensor manipulate(const HierLatent& src, const HierLatent& tgt) const {
        switch (cfg_.manipulator) {
            case Manipulator::FTM:
                return ftm_forward(src.high_codes, tgt.high_codes, *ftm_);
            case Manipulator::LCR:
                return lcr_compose(src, tgt).high_codes;
            case Manipulator::IdInjection:
                return id_inject(tgt.high_codes, mean_code(src.high_codes), *inject_);
        }
        throw ArgumentError("unknown manipulator");
    }

    PipelineConfig cfg_;
    std::optional<HierfeEncoder> encoder_;
    std::optional<ToyGenerator> generator_;
    std::optional<FTMParams> ftm_;
    std::optional<IdInjectParams> inject_;
    PerceptualOracles oracles_;
};

// ---------------------------------------------------------------------------
// batch generation

struct BatchRow {
    bool ok = false;
    std::string source;
    std::string target;
    std::string output;  // file name within out_dir
    std::uint64_t checksum = 0;
    std::string error;
};

struct BatchManifest {
    std::vector<BatchRow> rows;
    int ok_count = 0;
    int failed_count = 0;

    std::string to_text() const {
        std::ostringstream out;
        out << "latentswap-batch 1\n";
        for (const auto& r : rows) {
            if (r.ok)
                out << "ok " << r.source << " " << r.target << " " << r.output << " "
                    << io::hex64(r.checksum) << "\n";
            else
                out << "failed " << r.source << " " << r.target << " " << r.error << "\n";
        }
        return out.str();
    }
};

inline std::vector<std::pair<std::string, std::string>> read_pair_list(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pair list: " + path.string());
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string a, b, extra;
        if (!(ls >> a)) continue;
        if (!(ls >> b) || (ls >> extra))
            throw IoError("pair list line " + std::to_string(lineno) +
                          ": expected exactly two paths");
        pairs.emplace_back(a, b);
    }
    return pairs;
}

/// One output image per pair, named <source-stem>_to_<target-stem>.png.
/// Unreadable inputs become failed rows; processing continues. Pairs are
/// independent, so they may run on several workers; row order always follows
/// the input order.
inline BatchManifest batch_generate(const std::filesystem::path& pairs_file, const Pipeline& pipeline,
                                    const std::filesystem::path& out_dir, int workers = 1) {
    auto pairs = read_pair_list(pairs_file);
    if (pairs.empty()) throw ArgumentError("batch_generate: pair list is empty");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    const std::filesystem::path base = pairs_file.parent_path();
    auto resolve = [&base](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    BatchManifest manifest;
    manifest.rows.resize(pairs.size());
    auto process = [&](std::size_t i) {
        BatchRow row;
        row.source = pairs[i].first;
        row.target = pairs[i].second;
        try {
            FaceImage src = io::load_png(resolve(pairs[i].first));
            FaceImage tgt = io::load_png(resolve(pairs[i].second));
            SwapResult result = pipeline.swap(src, tgt);
            std::string name = resolve(pairs[i].first).stem().string() + "_to_" +
                               resolve(pairs[i].second).stem().string() + ".png";
            io::save_png(out_dir / name, result.image);
            row.output = name;
            row.checksum = io::fnv1a64(io::read_file(out_dir / name));
            row.ok = true;
        } catch (const Error& e) {
            row.error = e.what();
        }
        manifest.rows[i] = std::move(row);
    };

    int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(pairs.size())));
    if (n_workers == 1) {
        for (std::size_t i = 0; i < pairs.size(); ++i) process(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&]() {
                for (std::size_t i = next.fetch_add(1); i < pairs.size(); i = next.fetch_add(1))
                    process(i);
            });
        for (auto& t : pool) t.join();
    }

    for (const auto& r : manifest.rows) (r.ok ? manifest.ok_count : manifest.failed_count) += 1;
    const std::string text = manifest.to_text();
    io::write_file(out_dir / "manifest.txt", std::vector<unsigned char>(text.begin(), text.end()));
    return manifest;
}

} // namespace lswap
