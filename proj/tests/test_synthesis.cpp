// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "latentswap/manipulators.hpp"
#include "latentswap/synthesis.hpp"
#include "support/gradcheck.hpp"
#include "support/test_util.hpp"

using namespace lswap;
namespace lt = lswap::testing;

namespace {

GeneratorConfig micro_config() {
    GeneratorConfig cfg;
    cfg.resolution = 16;
    cfg.code_width = 4;
    cfg.base_width = 8;
    cfg.min_width = 4;
    cfg.mapping_layers = 2;
    return cfg;
}

HierLatent random_latent(const GeneratorConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    HierLatent h;
    h.resolution = cfg.resolution;
    h.constant_input = rng.normal_tensor(Shape{kConstantSize, kConstantSize, cfg.code_width});
    h.low_codes = rng.normal_tensor(Shape{kLowCodeCount, cfg.code_width});
    h.high_codes = rng.normal_tensor(Shape{cfg.high_codes(), cfg.code_width});
    return h;
}

} // namespace

TEST_CASE("generator config derives level and code counts", "[synthesis]") {
    GeneratorConfig cfg = lt::tiny_generator_config();
    REQUIRE(cfg.resolution == 32);
    REQUIRE(cfg.total_codes() == 8);
    REQUIRE(cfg.high_codes() == 4);
    REQUIRE(cfg.levels() == 4);

    GeneratorConfig full;
    full.resolution = 1024;
    REQUIRE(full.total_codes() == 18);
    REQUIRE(full.high_codes() == 14);
    REQUIRE(full.levels() == 9);

    GeneratorConfig bad = cfg;
    bad.resolution = 48;
    REQUIRE_THROWS_AS(bad.validate(), DimensionError);
    bad = cfg;
    bad.base_width = 0;
    REQUIRE_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("channel schedule honors the floor", "[synthesis]") {
    GeneratorConfig cfg = lt::tiny_generator_config(); // base 8, min 4
    REQUIRE(cfg.channels_at(0) == 8);
    REQUIRE(cfg.channels_at(1) == 4);
    REQUIRE(cfg.channels_at(2) == 4);
    REQUIRE(cfg.channels_at(3) == 4);
}

TEST_CASE("synthesis produces full-range images at the configured sizes", "[synthesis]") {
    for (int res : {32, 64}) {
        GeneratorConfig cfg = lt::tiny_generator_config();
        cfg.resolution = res;
        Rng rng(1);
        ToyGenerator gen(cfg, rng);
        HierLatent h = random_latent(cfg, 2);
        FaceImage img = gen.synthesize(h);
        REQUIRE(img.pixels.shape == Shape{res, res, 3});
        for (Real v : img.pixels.data) {
            REQUIRE(v >= -1.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("synthesis is a pure function of codes and weights", "[synthesis]") {
    GeneratorConfig cfg = lt::tiny_generator_config();
    Rng r1(7);
    ToyGenerator g1(cfg, r1);
    Rng r2(7);
    ToyGenerator g2(cfg, r2);
    HierLatent h = random_latent(cfg, 3);

    FaceImage a = g1.synthesize(h);
    FaceImage b = g1.synthesize(h);
    FaceImage c = g2.synthesize(h);
    REQUIRE(lt::bit_equal(a.pixels, b.pixels));
    REQUIRE(lt::bit_equal(a.pixels, c.pixels));

    // a different seed gives different weights, hence a different image
    Rng r3(8);
    ToyGenerator g3(cfg, r3);
    REQUIRE_FALSE(lt::bit_equal(a.pixels, g3.synthesize(h).pixels));
}

TEST_CASE("external constant input is a declared capability", "[synthesis]") {
    GeneratorConfig cfg = micro_config();
    cfg.accepts_external_constant = false;
    Rng rng(4);
    ToyGenerator gen(cfg, rng);
    HierLatent h = random_latent(cfg, 5);

    REQUIRE_THROWS_AS(gen.synthesize(h), CapabilityError);
    // the learned-constant path still works
    FaceImage img = gen.synthesize(std::nullopt, h.low_codes, h.high_codes);
    REQUIRE(img.pixels.shape == Shape{16, 16, 3});

    // with the capability on, the external constant actually participates
    cfg.accepts_external_constant = true;
    Rng rng2(4);
    ToyGenerator gen2(cfg, rng2);
    FaceImage with_c = gen2.synthesize(h);
    FaceImage without_c = gen2.synthesize(std::nullopt, h.low_codes, h.high_codes);
    REQUIRE_FALSE(lt::bit_equal(with_c.pixels, without_c.pixels));
}

TEST_CASE("synthesis validates code stack shapes", "[synthesis]") {
    GeneratorConfig cfg = micro_config(); // high count 2 at 16
    Rng rng(6);
    ToyGenerator gen(cfg, rng);
    HierLatent h = random_latent(cfg, 7);

    SECTION("wrong high-code count") {
        Tensor high = Tensor::zeros(Shape{cfg.high_codes() + 1, cfg.code_width});
        REQUIRE_THROWS_AS(gen.synthesize(h.constant_input, h.low_codes, high), DimensionError);
    }
    SECTION("wrong low-code count") {
        Tensor low = Tensor::zeros(Shape{3, cfg.code_width});
        REQUIRE_THROWS_AS(gen.synthesize(h.constant_input, low, h.high_codes), DimensionError);
    }
    SECTION("wrong constant shape") {
        Tensor c = Tensor::zeros(Shape{2, 2, cfg.code_width});
        REQUIRE_THROWS_AS(gen.synthesize(c, h.low_codes, h.high_codes), DimensionError);
    }
    SECTION("latent resolution mismatch") {
        HierLatent other = h;
        other.resolution = 32;
        other.high_codes = Tensor::zeros(Shape{high_codes_for(32), cfg.code_width});
        REQUIRE_THROWS_AS(gen.synthesize(other), DimensionError);
    }
}

TEST_CASE("w-plus synthesis broadcasts the stacked codes", "[synthesis]") {
    GeneratorConfig cfg = micro_config();
    Rng rng(8);
    ToyGenerator gen(cfg, rng);
    Rng drng(9);

    WPlusLatent wp;
    wp.resolution = cfg.resolution;
    wp.codes = drng.normal_tensor(Shape{cfg.total_codes(), cfg.code_width});
    FaceImage a = gen.synthesize(wp);

    auto [low, high] = split_codes(wp.codes);
    FaceImage b = gen.synthesize(std::nullopt, low, high);
    REQUIRE(lt::bit_equal(a.pixels, b.pixels));

    wp.resolution = 32;
    REQUIRE_THROWS_AS(gen.synthesize(wp), DimensionError);
}

TEST_CASE("auxiliary sampling is seeded and regenerable", "[synthesis]") {
    GeneratorConfig cfg = micro_config();
    Rng rng(10);
    ToyGenerator gen(cfg, rng);

    auto batch1 = gen.sample_auxiliary(2, 42);
    auto batch2 = gen.sample_auxiliary(2, 42);
    REQUIRE(batch1.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(lt::bit_equal(batch1[i].image.pixels, batch2[i].image.pixels));
        REQUIRE(lt::bit_equal(batch1[i].codes, batch2[i].codes));
    }
    REQUIRE_FALSE(lt::bit_equal(batch1[0].image.pixels, batch1[1].image.pixels));

    // stored codes regenerate the image bit-exactly
    auto [low, high] = split_codes(batch1[0].codes);
    FaceImage again = gen.synthesize(std::nullopt, low, high);
    REQUIRE(lt::bit_equal(again.pixels, batch1[0].image.pixels));

    REQUIRE_THROWS_AS(gen.sample_auxiliary(0, 1), ArgumentError);
}

TEST_CASE("mapping network validates its input", "[synthesis]") {
    GeneratorConfig cfg = micro_config();
    Rng rng(11);
    ToyGenerator gen(cfg, rng);
    Rng drng(12);
    Tensor z = drng.normal_tensor(Shape{cfg.code_width});
    Tensor w = gen.map_prior(z);
    REQUIRE(w.shape == Shape{cfg.code_width});
    REQUIRE_THROWS_AS(gen.map_prior(Tensor::zeros(Shape{cfg.code_width + 1})), DimensionError);
}

TEST_CASE("generator checkpoints round-trip", "[synthesis]") {
    lt::TempDir tmp("gen-ckpt");
    GeneratorConfig cfg = micro_config();
    Rng rng(13);
    ToyGenerator gen(cfg, rng);
    gen.save(tmp.path / "gen");

    SECTION("reload preserves config and behavior") {
        ToyGenerator back = load_generator(tmp.path / "gen", cfg.resolution);
        REQUIRE(back.config().code_width == cfg.code_width);
        REQUIRE(back.config().base_width == cfg.base_width);
        HierLatent h = random_latent(cfg, 14);
        // storage is f32, so reloaded output agrees to float precision
        Real diff = lt::max_abs_diff(gen.synthesize(h).pixels, back.synthesize(h).pixels);
        REQUIRE(diff < 1e-5);
        // the first save quantizes to f32; after that the state is bit-stable
        // across further save/load cycles
        lt::TempDir tmp2("gen-ckpt-2");
        back.save(tmp2.path / "gen");
        ToyGenerator again = load_generator(tmp2.path / "gen", cfg.resolution);
        REQUIRE(io::param_state_checksum(again.params()) == io::param_state_checksum(back.params()));
    }
    SECTION("resolution mismatch is a capability error") {
        REQUIRE_THROWS_AS(load_generator(tmp.path / "gen", 32), CapabilityError);
    }
    SECTION("wrong checkpoint kind is rejected") {
        Rng frng(15);
        FTMParams ftm = make_ftm_params(2, 4, frng);
        save_ftm(tmp.path / "ftm", ftm);
        REQUIRE_THROWS_AS(load_generator(tmp.path / "ftm", cfg.resolution), CheckpointError);
    }
}

TEST_CASE("gradients flow into all three latent inputs", "[synthesis][gradients]") {
    GeneratorConfig cfg = micro_config();
    Rng rng(16);
    ToyGenerator gen(cfg, rng);
    gen.params().set_requires_grad(false);
    HierLatent h = random_latent(cfg, 17);

    ad::Var c(h.constant_input, true);
    ad::Var low(h.low_codes, true);
    ad::Var high(h.high_codes, true);
    ad::Var img = gen.synthesize_graph(c, low, high);
    ad::backward(ad::sum(ad::mul(img, img)));

    auto norm = [](const Tensor& g) {
        Real s = 0;
        for (Real v : g.data) s += v * v;
        return std::sqrt(s);
    };
    REQUIRE(norm(c.grad()) > 0);
    REQUIRE(norm(low.grad()) > 0);
    REQUIRE(norm(high.grad()) > 0);
}

TEST_CASE("synthesis gradients match finite differences", "[synthesis][gradients]") {
    GeneratorConfig cfg = micro_config();
    Rng rng(18);
    ToyGenerator gen(cfg, rng);
    gen.params().set_requires_grad(false);
    HierLatent h = random_latent(cfg, 19);
    Rng prng(20);
    Tensor probe = prng.normal_tensor(Shape{cfg.resolution, cfg.resolution, 3}, 0.3);

    auto r = lt::grad_check([&](const std::vector<ad::Var>& v) {
        ad::Var img = gen.synthesize_graph(v[0], v[1], v[2]);
        int n = cfg.resolution * cfg.resolution * 3;
        return ad::dot(ad::reshape(img, Shape{n}), ad::reshape(ad::constant(probe), Shape{n}));
    }, {h.constant_input, h.low_codes, h.high_codes}, rng, 10);
    INFO(r.worst);
    REQUIRE(r.ok(1e-4));
}
