// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: swap, batch, invert, train-encoder, train-ftm, eval,
// plus desk-scale utilities (init-generator, synth-data). Exit codes:
// 0 success, 1 usage, 2 I/O, 3 checkpoint, 4 numeric.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latentswap/evaluation.hpp"
#include "latentswap/pipeline.hpp"
#include "latentswap/synthetic.hpp"
#include "latentswap/trainer.hpp"

namespace fs = std::filesystem;
using namespace lswap;

namespace {

int exit_code_for(const Error& e) {
    if (dynamic_cast<const NumericError*>(&e)) return 4;
    if (dynamic_cast<const CheckpointError*>(&e)) return 3;
    if (dynamic_cast<const CapabilityError*>(&e)) return 3;
    if (dynamic_cast<const IoError*>(&e)) return 2;
    return 1; // argument / config / dimension / validation: caller misuse
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .png files in " + dir.string());
    return files;
}

std::vector<FaceImage> load_images(const std::vector<fs::path>& files) {
    std::vector<FaceImage> images;
    images.reserve(files.size());
    for (const auto& f : files) images.push_back(io::load_png(f));
    return images;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

/// Key-value training configuration; same comment and resolution rules as
/// the pipeline config. Architecture keys only matter when a fresh encoder
/// is initialized (no encoder_dir given).
struct TrainFileConfig {
    TrainConfig train;
    LatentSpace latent_space = LatentSpace::WPlusPlus;
    int backbone_width = 4;
    int pyramid_width = 0; // 0: derived from backbone_width
    std::vector<int> stage_blocks{1, 1, 1, 1};
    fs::path encoder_dir; // required for train-ftm; optional resume for train-encoder
    std::string oracles_name = "toy";
    std::uint64_t oracle_seed = 0;
    int recognizer_size = 112;
    int feature_size = 256;
    int landmark_size = 256;

    static TrainFileConfig from_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config: " + path.string());
        const fs::path base = path.parent_path();
        TrainFileConfig cfg;
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
                if (key == "steps") cfg.train.steps = std::stoi(value);
                else if (key == "seed") cfg.train.seed = std::stoull(value);
                else if (key == "learning_rate") cfg.train.learning_rate = std::stod(value);
                else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
                else if (key == "same_pair_fraction") cfg.train.same_pair_fraction = std::stod(value);
                else if (key == "beta1") cfg.train.beta1 = std::stod(value);
                else if (key == "beta2") cfg.train.beta2 = std::stod(value);
                else if (key == "latent_space") {
                    if (value == "wpp") cfg.latent_space = LatentSpace::WPlusPlus;
                    else if (value == "wplus") cfg.latent_space = LatentSpace::WPlus;
                    else throw ConfigError("latent_space must be wpp or wplus, got " + value);
                } else if (key == "backbone_width") cfg.backbone_width = std::stoi(value);
                else if (key == "pyramid_width") cfg.pyramid_width = std::stoi(value);
                else if (key == "stage_blocks") {
                    std::istringstream vs(value);
                    std::string tok;
                    cfg.stage_blocks.clear();
                    while (std::getline(vs, tok, ',')) cfg.stage_blocks.push_back(std::stoi(tok));
                    if (cfg.stage_blocks.size() != 4)
                        throw ConfigError("stage_blocks takes exactly four depths");
                } else if (key == "encoder_dir") {
                    fs::path p(value);
                    cfg.encoder_dir = p.is_absolute() ? p : base / p;
                } else if (key == "oracles") cfg.oracles_name = value;
                else if (key == "oracle_seed") cfg.oracle_seed = std::stoull(value);
                else if (key == "recognizer_size") cfg.recognizer_size = std::stoi(value);
                else if (key == "feature_size") cfg.feature_size = std::stoi(value);
                else if (key == "landmark_size") cfg.landmark_size = std::stoi(value);
                else throw ConfigError("unknown config key '" + key + "'");
            } catch (const std::invalid_argument&) {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" +
                                  key + "': " + value);
            } catch (const std::out_of_range&) {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": value out of range for '" + key + "'");
            }
        }
        return cfg;
    }

    PerceptualOracles make_oracles() const {
        return make_oracles_by_name(oracles_name, oracle_seed, recognizer_size, feature_size,
                                    landmark_size);
    }
};

int generator_checkpoint_resolution(const fs::path& dir) {
    return io::load_checkpoint(dir).meta_int("resolution");
}

// --------------------------------------------------------------------------
// subcommand bodies

int cmd_swap(const std::string& config, const std::string& source, const std::string& target,
             const std::string& out) {
    Pipeline pipeline = Pipeline::load(PipelineConfig::from_file(config));
    SwapResult result = pipeline.swap(io::load_png(source), io::load_png(target));
    io::save_png(out, result.image);
    std::printf("wrote %s (encode %.1f ms, manipulate %.1f ms, synthesize %.1f ms, total %.1f ms)\n",
                out.c_str(), result.encode_ms, result.manipulate_ms, result.synthesize_ms,
                result.total_ms);
    return 0;
}

int cmd_invert(const std::string& config, const std::string& image, const std::string& out) {
    Pipeline pipeline = Pipeline::load(PipelineConfig::from_file(config));
    FaceImage recon = pipeline.reconstruct(io::load_png(image));
    io::save_png(out, recon);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_batch(const std::string& config, const std::string& pairs, const std::string& out_dir,
              int workers) {
    Pipeline pipeline = Pipeline::load(PipelineConfig::from_file(config));
    BatchManifest manifest = batch_generate(pairs, pipeline, out_dir, workers);
    std::printf("batch: %d ok, %d failed; manifest at %s\n", manifest.ok_count,
                manifest.failed_count, (fs::path(out_dir) / "manifest.txt").string().c_str());
    for (const auto& row : manifest.rows)
        if (!row.ok) std::fprintf(stderr, "failed %s %s: %s\n", row.source.c_str(),
                                  row.target.c_str(), row.error.c_str());
    if (manifest.ok_count == 0) {
        std::fprintf(stderr, "error: every pair failed\n");
        return 2;
    }
    return 0;
}

int cmd_train_encoder(const std::string& config, const std::string& data,
                      const std::string& generator, const std::string& out, std::int64_t seed,
                      std::int64_t steps) {
    TrainFileConfig cfg = TrainFileConfig::from_file(config);
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    if (steps >= 0) cfg.train.steps = static_cast<int>(steps);

    ToyGenerator gen = load_generator(generator, generator_checkpoint_resolution(generator));
    HierfeEncoder encoder = [&]() {
        if (!cfg.encoder_dir.empty()) return load_encoder(cfg.encoder_dir);
        EncoderConfig ec;
        ec.resolution = gen.config().resolution;
        ec.code_width = gen.config().code_width;
        ec.latent_space = cfg.latent_space;
        ec.backbone_width = cfg.backbone_width;
        ec.pyramid_width = cfg.pyramid_width;
        ec.stage_blocks = cfg.stage_blocks;
        Rng rng(cfg.train.seed + 1);
        return HierfeEncoder(ec, rng);
    }();

    auto images = load_images(list_pngs(data));
    TrainLog log = train_hierfe(images, encoder, gen, cfg.make_oracles(), cfg.train);
    encoder.save(out);
    write_text_file(fs::path(out) / "train_log.txt", log.to_text());
    int window = std::min<int>(50, std::max<int>(1, static_cast<int>(log.steps.size()) / 4));
    std::printf("trained encoder for %zu steps on %zu images: smoothed total %.6g -> %.6g\n",
                log.steps.size(), images.size(), smoothed_total(log, window, true),
                smoothed_total(log, window, false));
    std::printf("checkpoint at %s\n", out.c_str());
    return 0;
}

int cmd_train_ftm(const std::string& config, const std::string& data, const std::string& generator,
                  const std::string& out, std::int64_t seed, std::int64_t steps) {
    TrainFileConfig cfg = TrainFileConfig::from_file(config);
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    if (steps >= 0) cfg.train.steps = static_cast<int>(steps);
    if (cfg.encoder_dir.empty())
        throw ConfigError("train config: encoder_dir is required for train-ftm");

    HierfeEncoder encoder = load_encoder(cfg.encoder_dir);
    ToyGenerator gen = load_generator(generator, encoder.config().resolution);
    Rng rng(cfg.train.seed + 2);
    FTMParams ftm =
        make_ftm_params(encoder.config().high_code_count(), encoder.config().code_width, rng);

    auto images = load_images(list_pngs(data));
    TrainLog log = train_ftm(images, encoder, gen, ftm, cfg.make_oracles(), cfg.train);
    save_ftm(out, ftm);
    write_text_file(fs::path(out) / "train_log.txt", log.to_text());
    int window = std::min<int>(50, std::max<int>(1, static_cast<int>(log.steps.size()) / 4));
    std::printf("trained transfer module for %zu steps on %zu images: smoothed total %.6g -> %.6g\n",
                log.steps.size(), images.size(), smoothed_total(log, window, true),
                smoothed_total(log, window, false));
    std::printf("checkpoint at %s\n", out.c_str());
    return 0;
}

int cmd_eval(const std::string& swapped_dir, const std::string& sources_dir,
             const std::string& targets_dir, const std::string& report_path,
             const std::string& oracles_name, std::uint64_t seed, int recognizer_size,
             int feature_size, int landmark_size, int estimator_size) {
    auto swapped_files = list_pngs(swapped_dir);
    auto source_files = list_pngs(sources_dir);
    auto target_files = list_pngs(targets_dir);
    if (swapped_files.size() != source_files.size() || swapped_files.size() != target_files.size())
        throw ArgumentError("eval: the three directories must hold the same number of images");

    auto swapped = load_images(swapped_files);
    auto sources = load_images(source_files);
    auto targets = load_images(target_files);
    PerceptualOracles oracles =
        make_oracles_by_name(oracles_name, seed, recognizer_size, feature_size, landmark_size);

    Tensor source_emb = fid_features(sources, oracles);
    Tensor swapped_emb = fid_features(swapped, oracles);
    IdentityGallery gallery;
    std::vector<std::pair<std::string, Tensor>> probes;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        Tensor se(Shape{source_emb.shape[1]});
        Tensor pe(Shape{source_emb.shape[1]});
        for (int c = 0; c < source_emb.shape[1]; ++c) {
            se.data[static_cast<std::size_t>(c)] = source_emb(static_cast<int>(i), c);
            pe.data[static_cast<std::size_t>(c)] = swapped_emb(static_cast<int>(i), c);
        }
        gallery.items.push_back({source_files[i].stem().string(), se});
        probes.emplace_back(source_files[i].stem().string(), pe);
    }

    MetricReport report;
    report.id_retrieval = id_retrieval(probes, gallery);
    report.id_similarity = id_similarity(swapped, sources, oracles);
    report.pose_error =
        pose_error(swapped, targets, make_toy_vector_estimator(seed * 7 + 1, 3), estimator_size);
    report.expression_error = expression_error(swapped, targets,
                                               make_toy_vector_estimator(seed * 7 + 2, 3),
                                               estimator_size);
    report.fid = fid(swapped_emb, fid_features(targets, oracles));
    report.inversion = inversion_metrics(sources, swapped, oracles);
    report.validate();

    std::string text = report.to_text();
    write_text_file(report_path, text);
    std::fputs(text.c_str(), stdout);
    std::printf("report written to %s\n", report_path.c_str());
    return 0;
}

int cmd_init_generator(const std::string& out, int resolution, int code_width, int base_width,
                       int min_width, int mapping_layers, std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.resolution = resolution;
    cfg.code_width = code_width;
    cfg.base_width = base_width;
    cfg.min_width = min_width;
    cfg.mapping_layers = mapping_layers;
    Rng rng(seed);
    ToyGenerator gen(cfg, rng);
    gen.save(out);
    std::printf("initialized generator (resolution %d, %d codes of width %d) at %s\n", resolution,
                cfg.total_codes(), code_width, out.c_str());
    return 0;
}

int cmd_synth_data(const std::string& out, int count, int resolution, std::uint64_t seed) {
    fs::create_directories(out);
    auto faces = make_synthetic_faces(count, resolution, seed);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "face%03zu.png", i);
        io::save_png(fs::path(out) / name, faces[i]);
    }
    std::printf("wrote %zu synthetic faces at resolution %d to %s\n", faces.size(), resolution,
                out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latentswap: hierarchical face encoding, latent identity transfer, and synthesis"};
    app.require_subcommand(1);

    std::string config, source, target, out, image, pairs, out_dir;
    std::string data, generator, swapped_dir, sources_dir, targets_dir, report_path;
    std::string oracles_name = "toy";
    int workers = 1;
    std::int64_t seed_flag = -1, steps_flag = -1;
    std::uint64_t eval_seed = 0, init_seed = 0, synth_seed = 0;
    int recognizer_size = 112, feature_size = 256, landmark_size = 256, estimator_size = 64;
    int resolution = 64, code_width = 64, base_width = 32, min_width = 8, mapping_layers = 2;
    int count = 8;

    CLI::App* swap_cmd = app.add_subcommand("swap", "swap one source identity onto one target");
    swap_cmd->add_option("--source", source, "source face image (PNG)")->required();
    swap_cmd->add_option("--target", target, "target face image (PNG)")->required();
    swap_cmd->add_option("--out", out, "output image path")->required();
    swap_cmd->add_option("--config", config, "pipeline config file")->required();

    CLI::App* batch_cmd = app.add_subcommand("batch", "swap every pair in a pair-list file");
    batch_cmd->add_option("--pairs", pairs, "pair list: one 'source target' per line")->required();
    batch_cmd->add_option("--out-dir", out_dir, "output directory")->required();
    batch_cmd->add_option("--config", config, "pipeline config file")->required();
    batch_cmd->add_option("--workers", workers, "worker thread count")->default_val(1);

    CLI::App* invert_cmd = app.add_subcommand("invert", "encode and reconstruct one image");
    invert_cmd->add_option("--image", image, "input image (PNG)")->required();
    invert_cmd->add_option("--out", out, "output image path")->required();
    invert_cmd->add_option("--config", config, "pipeline config file")->required();

    CLI::App* tenc_cmd = app.add_subcommand("train-encoder", "train the hierarchical encoder "
                                                             "against a frozen generator");
    tenc_cmd->add_option("--config", config, "training config file")->required();
    tenc_cmd->add_option("--data", data, "directory of training images")->required();
    tenc_cmd->add_option("--generator", generator, "frozen generator checkpoint")->required();
    tenc_cmd->add_option("--out", out, "output checkpoint directory")->required();
    tenc_cmd->add_option("--seed", seed_flag, "override the config seed");
    tenc_cmd->add_option("--steps", steps_flag, "override the config step count");

    CLI::App* tftm_cmd = app.add_subcommand("train-ftm", "train the identity-transfer module with "
                                                         "encoder and generator frozen");
    tftm_cmd->add_option("--config", config, "training config file (needs encoder_dir)")->required();
    tftm_cmd->add_option("--data", data, "directory of training images")->required();
    tftm_cmd->add_option("--generator", generator, "frozen generator checkpoint")->required();
    tftm_cmd->add_option("--out", out, "output checkpoint directory")->required();
    tftm_cmd->add_option("--seed", seed_flag, "override the config seed");
    tftm_cmd->add_option("--steps", steps_flag, "override the config step count");

    CLI::App* eval_cmd = app.add_subcommand("eval", "score swapped images against sources/targets");
    eval_cmd->add_option("--swapped", swapped_dir, "directory of swapped images")->required();
    eval_cmd->add_option("--sources", sources_dir, "directory of source images")->required();
    eval_cmd->add_option("--targets", targets_dir, "directory of target images")->required();
    eval_cmd->add_option("--report", report_path, "output report path")->required();
    eval_cmd->add_option("--oracles", oracles_name, "oracle plug-in name")->default_val("toy");
    eval_cmd->add_option("--seed", eval_seed, "oracle seed")->default_val(0);
    eval_cmd->add_option("--recognizer-size", recognizer_size)->default_val(112);
    eval_cmd->add_option("--feature-size", feature_size)->default_val(256);
    eval_cmd->add_option("--landmark-size", landmark_size)->default_val(256);
    eval_cmd->add_option("--estimator-size", estimator_size)->default_val(64);

    CLI::App* init_cmd = app.add_subcommand("init-generator", "write a fresh seeded generator "
                                                              "checkpoint");
    init_cmd->add_option("--out", out, "output checkpoint directory")->required();
    init_cmd->add_option("--resolution", resolution)->default_val(64);
    init_cmd->add_option("--code-width", code_width)->default_val(64);
    init_cmd->add_option("--base-width", base_width)->default_val(32);
    init_cmd->add_option("--min-width", min_width)->default_val(8);
    init_cmd->add_option("--mapping-layers", mapping_layers)->default_val(2);
    init_cmd->add_option("--seed", init_seed)->default_val(0);

    CLI::App* synth_cmd = app.add_subcommand("synth-data", "write deterministic synthetic faces");
    synth_cmd->add_option("--out", out, "output directory")->required();
    synth_cmd->add_option("--count", count)->default_val(8);
    synth_cmd->add_option("--resolution", resolution)->default_val(64);
    synth_cmd->add_option("--seed", synth_seed)->default_val(0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (swap_cmd->parsed()) return cmd_swap(config, source, target, out);
        if (batch_cmd->parsed()) return cmd_batch(config, pairs, out_dir, workers);
        if (invert_cmd->parsed()) return cmd_invert(config, image, out);
        if (tenc_cmd->parsed())
            return cmd_train_encoder(config, data, generator, out, seed_flag, steps_flag);
        if (tftm_cmd->parsed())
            return cmd_train_ftm(config, data, generator, out, seed_flag, steps_flag);
        if (eval_cmd->parsed())
            return cmd_eval(swapped_dir, sources_dir, targets_dir, report_path, oracles_name,
                            eval_seed, recognizer_size, feature_size, landmark_size,
                            estimator_size);
        if (init_cmd->parsed())
            return cmd_init_generator(out, resolution, code_width, base_width, min_width,
                                      mapping_layers, init_seed);
        if (synth_cmd->parsed()) return cmd_synth_data(out, count, resolution, synth_seed);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
