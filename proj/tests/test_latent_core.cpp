// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "latentswap/latent.hpp"
#include "latentswap/rng.hpp"
#include "support/test_util.hpp"

using namespace lswap;

TEST_CASE("code counts follow 2*log2(resolution) - 2", "[latent_core]") {
    const std::pair<int, int> expected[] = {
        {32, 8}, {64, 10}, {128, 12}, {256, 14}, {512, 16}, {1024, 18}};
    for (auto [res, total] : expected) {
        REQUIRE(total_codes_for(res) == total);
        REQUIRE(high_codes_for(res) == total - 4);
    }
    REQUIRE(total_codes_for(1024) == 18);
    REQUIRE(high_codes_for(1024) == 14);

    REQUIRE_THROWS_AS(total_codes_for(48), DimensionError);
    REQUIRE_THROWS_AS(total_codes_for(8), DimensionError);
    REQUIRE_THROWS_AS(total_codes_for(0), DimensionError);
    REQUIRE_THROWS_AS(total_codes_for(-64), DimensionError);
}

TEST_CASE("split yields 4 low rows and the rest high", "[latent_core]") {
    SECTION("full-scale stack: 18x512 -> (4x512, 14x512)") {
        Tensor codes(Shape{18, 512});
        auto [low, high] = split_codes(codes);
        REQUIRE(low.shape == Shape{4, 512});
        REQUIRE(high.shape == Shape{14, 512});
    }
    SECTION("resolution-64 stack: 10x512 -> (4x512, 6x512)") {
        REQUIRE(total_codes_for(64) == 10);
        Tensor codes(Shape{10, 512});
        auto [low, high] = split_codes(codes);
        REQUIRE(low.shape == Shape{4, 512});
        REQUIRE(high.shape == Shape{6, 512});
    }
    SECTION("merge(split(M)) = M bit-exactly") {
        Rng rng(7);
        for (int n : {5, 8, 18}) {
            Tensor codes = rng.normal_tensor(Shape{n, 16});
            auto [low, high] = split_codes(codes);
            REQUIRE(lswap::testing::bit_equal(merge_codes(low, high), codes));
            // rows land where the definition places them
            REQUIRE(low(0, 0) == codes(0, 0));
            REQUIRE(high(0, 0) == codes(4, 0));
        }
    }
    SECTION("fewer than 5 rows is a dimension error") {
        REQUIRE_THROWS_AS(split_codes(Tensor(Shape{4, 8})), DimensionError);
        REQUIRE_THROWS_AS(split_codes(Tensor(Shape{8})), DimensionError);
    }
}

TEST_CASE("hierarchical latent validation", "[latent_core]") {
    SECTION("zero-filled latent at resolution 1024 passes") {
        REQUIRE_NOTHROW(validate(zero_hier_latent(1024)));
    }
    SECTION("one NaN in high_codes names the field") {
        HierLatent h = zero_hier_latent(1024);
        h.high_codes(3, 100) = std::numeric_limits<Real>::quiet_NaN();
        try {
            validate(h);
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            REQUIRE(std::string(e.what()).find("high_codes") != std::string::npos);
        }
    }
    SECTION("13 high rows at resolution 1024 is a dimension error") {
        HierLatent h = zero_hier_latent(1024);
        h.high_codes = Tensor::zeros(Shape{13, kDefaultCodeWidth});
        REQUIRE_THROWS_AS(validate(h), DimensionError);
    }
    SECTION("constant input shape is enforced") {
        HierLatent h = zero_hier_latent(64, 8);
        h.constant_input = Tensor::zeros(Shape{4, 4, 9});
        REQUIRE_THROWS_AS(validate(h), DimensionError);
    }
    SECTION("NaN in constant_input and low_codes name their fields") {
        HierLatent h = zero_hier_latent(64, 8);
        h.constant_input(0, 0, 0) = std::numeric_limits<Real>::infinity();
        try {
            validate(h);
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            REQUIRE(std::string(e.what()).find("constant_input") != std::string::npos);
        }
        HierLatent h2 = zero_hier_latent(64, 8);
        h2.low_codes(1, 1) = std::numeric_limits<Real>::quiet_NaN();
        try {
            validate(h2);
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            REQUIRE(std::string(e.what()).find("low_codes") != std::string::npos);
        }
    }
}

TEST_CASE("plain latent and image validation", "[latent_core]") {
    WPlusLatent wp;
    wp.resolution = 64;
    wp.codes = Tensor::zeros(Shape{10, 8});
    REQUIRE_NOTHROW(validate(wp));
    wp.codes = Tensor::zeros(Shape{9, 8});
    REQUIRE_THROWS_AS(validate(wp), DimensionError);

    FaceImage img(Tensor::zeros(Shape{32, 32, 3}));
    REQUIRE_NOTHROW(validate(img, 32));
    REQUIRE_THROWS_AS(validate(img, 64), DimensionError);

    img.pixels(0, 0, 0) = 1.5;
    REQUIRE_THROWS_AS(validate(img, 32), ValidationError);
    img.pixels(0, 0, 0) = std::numeric_limits<Real>::quiet_NaN();
    REQUIRE_THROWS_AS(validate(img, 32), ValidationError);
}

TEST_CASE("latent code wrapper enforces rank", "[latent_core]") {
    REQUIRE_NOTHROW(LatentCode(Tensor::zeros(Shape{16})));
    REQUIRE(LatentCode(Tensor::zeros(Shape{16})).width() == 16);
    REQUIRE_THROWS_AS(LatentCode(Tensor::zeros(Shape{4, 4})), DimensionError);
}
