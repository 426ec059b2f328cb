// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "latentswap/manipulators.hpp"
#include "support/gradcheck.hpp"
#include "support/scalar_ref.hpp"
#include "support/test_util.hpp"

using namespace lswap;
namespace lt = lswap::testing;

namespace {

FTMParams zero_ftm(int n_high, int d) {
    Rng rng(0);
    FTMParams ftm = make_ftm_params(n_high, d, rng);
    for (auto& item : ftm.params.items())
        std::fill(item.var.value_mut().data.begin(), item.var.value_mut().data.end(), 0.0);
    return ftm;
}

} // namespace

TEST_CASE("transfer cell with zero parameters halves both codes", "[manipulators]") {
    FTMParams ftm = zero_ftm(1, 6);
    Rng rng(1);
    Tensor l_s = rng.normal_tensor(Shape{6});
    Tensor l_t = rng.normal_tensor(Shape{6});
    auto [s_hat, t_hat] = transfer_cell(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0].cells[0]);
    for (int i = 0; i < 6; ++i) {
        REQUIRE(s_hat.value()(i) == Catch::Approx(0.5 * l_s(i)).epsilon(1e-12));
        REQUIRE(t_hat.value()(i) == Catch::Approx(0.5 * l_t(i)).epsilon(1e-12));
    }
}

TEST_CASE("zero source code with zero shift branch stays zero", "[manipulators]") {
    Rng rng(2);
    FTMParams ftm = make_ftm_params(1, 6, rng);
    // zero the source branch K2 of cell 0; K1 may be anything
    auto& cell = ftm.blocks[0].cells[0];
    std::fill(cell.source.k2_w.value_mut().data.begin(), cell.source.k2_w.value_mut().data.end(), 0.0);
    std::fill(cell.source.k2_b.value_mut().data.begin(), cell.source.k2_b.value_mut().data.end(), 0.0);
    Tensor zero = Tensor::zeros(Shape{6});
    Tensor l_t = rng.normal_tensor(Shape{6});
    auto [s_hat, t_hat] = transfer_cell(ad::constant(zero), ad::constant(l_t), cell);
    for (int i = 0; i < 6; ++i) REQUIRE(s_hat.value()(i) == 0.0);
}

TEST_CASE("transfer cell matches the scalar oracle", "[manipulators]") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Rng prng = rng.fork(static_cast<std::uint64_t>(trial));
        FTMParams ftm = make_ftm_params(1, 4, prng);
        Rng drng(100 + trial);
        Tensor l_s = drng.normal_tensor(Shape{4});
        Tensor l_t = drng.normal_tensor(Shape{4});
        auto [s_hat, t_hat] = transfer_cell(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0].cells[0]);

        lt::RefCell ref{lt::ref_branch_of(ftm.blocks[0].cells[0].source),
                        lt::ref_branch_of(ftm.blocks[0].cells[0].target)};
        auto [rs, rt] = lt::ref_transfer_cell(lt::as_vector(l_s), lt::as_vector(l_t), ref);
        REQUIRE(lt::max_abs_diff(rs, s_hat.value()) < 1e-6);
        REQUIRE(lt::max_abs_diff(rt, t_hat.value()) < 1e-6);
    }
}

TEST_CASE("transfer cell rejects width mismatches", "[manipulators]") {
    Rng rng(4);
    FTMParams ftm = make_ftm_params(1, 4, rng);
    REQUIRE_THROWS_AS(transfer_cell(ad::constant(Tensor::zeros(Shape{5})),
                                    ad::constant(Tensor::zeros(Shape{4})), ftm.blocks[0].cells[0]),
                      DimensionError);
}

TEST_CASE("block blend: omega zero averages, omega large selects the target", "[manipulators]") {
    Rng rng(5);
    FTMParams ftm = make_ftm_params(1, 8, rng);
    Rng drng(6);
    Tensor l_s = drng.normal_tensor(Shape{8});
    Tensor l_t = drng.normal_tensor(Shape{8});

    // run the three cells by hand to get the final refined pair
    ad::Var s = ad::constant(l_s), t = ad::constant(l_t);
    for (const auto& cell : ftm.blocks[0].cells) {
        auto pair = transfer_cell(s, t, cell);
        s = pair.first;
        t = pair.second;
    }

    SECTION("omega = 0 gives the elementwise mean (fresh parameters)") {
        Tensor out = transfer_block(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0]).value();
        for (int i = 0; i < 8; ++i)
            REQUIRE(out(i) == Catch::Approx(0.5 * (s.value()(i) + t.value()(i))).epsilon(1e-12));
    }
    SECTION("omega = +100 selects the refined target within 1e-10") {
        std::fill(ftm.blocks[0].omega.value_mut().data.begin(),
                  ftm.blocks[0].omega.value_mut().data.end(), 100.0);
        Tensor out = transfer_block(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0]).value();
        for (int i = 0; i < 8; ++i) REQUIRE(std::abs(out(i) - t.value()(i)) < 1e-10);
    }
    SECTION("omega = -100 selects the refined source within 1e-10") {
        std::fill(ftm.blocks[0].omega.value_mut().data.begin(),
                  ftm.blocks[0].omega.value_mut().data.end(), -100.0);
        Tensor out = transfer_block(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0]).value();
        for (int i = 0; i < 8; ++i) REQUIRE(std::abs(out(i) - s.value()(i)) < 1e-10);
    }
}

TEST_CASE("transfer block matches the scalar oracle chained over 3 cells", "[manipulators]") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Rng prng = rng.fork(static_cast<std::uint64_t>(trial));
        FTMParams ftm = make_ftm_params(1, 4, prng);
        // random omega so the blend is exercised too
        for (auto& v : ftm.blocks[0].omega.value_mut().data) v = rng.normal();
        Rng drng(200 + trial);
        Tensor l_s = drng.normal_tensor(Shape{4});
        Tensor l_t = drng.normal_tensor(Shape{4});

        Tensor out = transfer_block(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0]).value();
        lt::Vec ref = lt::ref_transfer_block(lt::as_vector(l_s), lt::as_vector(l_t),
                                             lt::ref_block_of(ftm.blocks[0]));
        REQUIRE(lt::max_abs_diff(ref, out) < 1e-6);
    }
}

TEST_CASE("ftm_forward applies block i to row i and matches the oracle", "[manipulators]") {
    Rng rng(8);
    FTMParams ftm = make_ftm_params(6, 4, rng);
    for (auto& block : ftm.blocks)
        for (auto& v : block.omega.value_mut().data) v = rng.normal();
    Rng drng(9);
    Tensor s_high = drng.normal_tensor(Shape{6, 4});
    Tensor t_high = drng.normal_tensor(Shape{6, 4});

    Tensor out = ftm_forward(s_high, t_high, ftm);
    REQUIRE(out.shape == Shape{6, 4});

    lt::Mat ref = lt::ref_ftm_forward(lt::as_matrix(s_high), lt::as_matrix(t_high), ftm);
    REQUIRE(lt::max_abs_diff(ref, out) < 1e-6);
}

TEST_CASE("ftm rows are independent", "[manipulators]") {
    Rng rng(10);
    FTMParams ftm = make_ftm_params(4, 4, rng);
    Rng drng(11);
    Tensor s_high = drng.normal_tensor(Shape{4, 4});
    Tensor t_high = drng.normal_tensor(Shape{4, 4});
    Tensor base = ftm_forward(s_high, t_high, ftm);

    SECTION("zeroing row j of both inputs changes only row j") {
        for (int j = 0; j < 4; ++j) {
            Tensor s2 = s_high, t2 = t_high;
            for (int c = 0; c < 4; ++c) {
                s2(j, c) = 0.0;
                t2(j, c) = 0.0;
            }
            Tensor out = ftm_forward(s2, t2, ftm);
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) {
                    if (r == j) continue;
                    REQUIRE(out(r, c) == base(r, c));
                }
        }
    }
    SECTION("permuting rows and blocks together permutes the output") {
        const int perm[4] = {2, 0, 3, 1};
        Tensor s2(Shape{4, 4}), t2(Shape{4, 4});
        FTMParams permuted;
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                s2(r, c) = s_high(perm[r], c);
                t2(r, c) = t_high(perm[r], c);
            }
            permuted.blocks.push_back(ftm.blocks[static_cast<std::size_t>(perm[r])]);
        }
        Tensor out = ftm_forward(s2, t2, permuted);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) REQUIRE(out(r, c) == base(perm[r], c));
    }
    SECTION("shape mismatches raise dimension errors") {
        REQUIRE_THROWS_AS(ftm_forward(Tensor::zeros(Shape{3, 4}), Tensor::zeros(Shape{4, 4}), ftm),
                          DimensionError);
        REQUIRE_THROWS_AS(ftm_forward(Tensor::zeros(Shape{4, 5}), Tensor::zeros(Shape{4, 5}), ftm),
                          DimensionError);
    }
}

TEST_CASE("cell coefficients stay in their analytic ranges", "[manipulators]") {
    // first step's multiplicative coefficient in (0,1); additive term in (-1,1)
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        Rng prng = rng.fork(static_cast<std::uint64_t>(trial));
        FTMParams ftm = make_ftm_params(1, 4, prng);
        Rng drng(300 + trial);
        Tensor l_s = drng.normal_tensor(Shape{4});
        Tensor l_t = drng.normal_tensor(Shape{4});
        lt::RefCell ref{lt::ref_branch_of(ftm.blocks[0].cells[0].source),
                        lt::ref_branch_of(ftm.blocks[0].cells[0].target)};
        lt::Vec l_c = lt::as_vector(l_s);
        lt::Vec tv = lt::as_vector(l_t);
        l_c.insert(l_c.end(), tv.begin(), tv.end());
        for (const auto* br : {&ref.src, &ref.tgt}) {
            lt::Vec gate = lt::ref_affine(br->k1_w, br->k1_b, l_c);
            lt::Vec shift = lt::ref_affine(br->k2_w, br->k2_b, l_c);
            for (double g : gate) {
                double s = lt::ref_sigmoid(g);
                REQUIRE(s > 0.0);
                REQUIRE(s < 1.0);
            }
            for (double s : shift) {
                double t = std::tanh(s);
                REQUIRE(t > -1.0);
                REQUIRE(t < 1.0);
            }
        }
    }
}

TEST_CASE("block output is a per-dimension convex blend of the refined pair", "[manipulators]") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Rng prng = rng.fork(static_cast<std::uint64_t>(trial));
        FTMParams ftm = make_ftm_params(1, 6, prng);
        for (auto& v : ftm.blocks[0].omega.value_mut().data) v = rng.normal() * 3.0;
        Rng drng(400 + trial);
        Tensor l_s = drng.normal_tensor(Shape{6});
        Tensor l_t = drng.normal_tensor(Shape{6});

        ad::Var s = ad::constant(l_s), t = ad::constant(l_t);
        for (const auto& cell : ftm.blocks[0].cells) {
            auto pair = transfer_cell(s, t, cell);
            s = pair.first;
            t = pair.second;
        }
        Tensor out = transfer_block(ad::constant(l_s), ad::constant(l_t), ftm.blocks[0]).value();
        for (int i = 0; i < 6; ++i) {
            Real lo = std::min(s.value()(i), t.value()(i));
            Real hi = std::max(s.value()(i), t.value()(i));
            REQUIRE(out(i) >= lo - 1e-12);
            REQUIRE(out(i) <= hi + 1e-12);
        }
    }
}

TEST_CASE("ftm parameter gradients match finite differences", "[manipulators][gradients]") {
    Rng rng(14);
    FTMParams ftm = make_ftm_params(2, 8, rng);
    Rng drng(15);
    Tensor s_high = drng.normal_tensor(Shape{2, 8});
    Tensor t_high = drng.normal_tensor(Shape{2, 8});
    Tensor probe = drng.normal_tensor(Shape{2, 8});

    auto r = lswap::testing::grad_check_params([&]() {
        ad::Var out = ftm_forward(ad::constant(s_high), ad::constant(t_high), ftm);
        return ad::dot(ad::reshape(out, Shape{16}), ad::reshape(ad::constant(probe), Shape{16}));
    }, ftm.params, rng, 6);
    INFO(r.worst);
    REQUIRE(r.ok(1e-4));
}

TEST_CASE("ftm input gradients match finite differences", "[manipulators][gradients]") {
    Rng rng(16);
    FTMParams ftm = make_ftm_params(2, 6, rng);
    ftm.params.set_requires_grad(false);
    Rng drng(17);
    auto r = lswap::testing::grad_check([&ftm](const std::vector<ad::Var>& v) {
        ad::Var out = ftm_forward(v[0], v[1], ftm);
        return ad::sum(ad::mul(out, out));
    }, {drng.normal_tensor(Shape{2, 6}), drng.normal_tensor(Shape{2, 6})}, rng, -1);
    INFO(r.worst);
    REQUIRE(r.ok(1e-4));
}

TEST_CASE("latent code replacement", "[manipulators]") {
    Rng rng(18);
    auto random_latent = [&rng](int resolution, int d) {
        HierLatent h;
        h.resolution = resolution;
        h.constant_input = rng.normal_tensor(Shape{4, 4, d});
        h.low_codes = rng.normal_tensor(Shape{4, d});
        h.high_codes = rng.normal_tensor(Shape{high_codes_for(resolution), d});
        return h;
    };
    HierLatent a = random_latent(64, 8);
    HierLatent b = random_latent(64, 8);

    SECTION("self-swap is the identity bit-exactly") {
        HierLatent out = lcr_compose(a, a);
        REQUIRE(lt::bit_equal(out.constant_input, a.constant_input));
        REQUIRE(lt::bit_equal(out.low_codes, a.low_codes));
        REQUIRE(lt::bit_equal(out.high_codes, a.high_codes));
    }
    SECTION("fields come from the documented sides") {
        HierLatent out = lcr_compose(a, b);
        REQUIRE(lt::bit_equal(out.constant_input, b.constant_input));
        REQUIRE(lt::bit_equal(out.low_codes, b.low_codes));
        REQUIRE(lt::bit_equal(out.high_codes, a.high_codes));
    }
    SECTION("lcr(b, lcr(a,b)) restores b's high codes") {
        HierLatent mixed = lcr_compose(a, b);
        HierLatent restored = lcr_compose(b, mixed);
        REQUIRE(lt::bit_equal(restored.high_codes, b.high_codes));
        REQUIRE(lt::bit_equal(restored.constant_input, b.constant_input));
        REQUIRE(lt::bit_equal(restored.low_codes, b.low_codes));
    }
    SECTION("resolution mismatch raises") {
        HierLatent c = random_latent(32, 8);
        REQUIRE_THROWS_AS(lcr_compose(a, c), DimensionError);
    }
}

TEST_CASE("identity injection starts as the identity", "[manipulators]") {
    Rng rng(19);
    IdInjectParams p = make_id_inject_params(8, rng);
    Rng drng(20);
    Tensor rows = drng.normal_tensor(Shape{5, 8});
    Tensor id = drng.normal_tensor(Shape{8});

    SECTION("zero-initialized modulation heads pass rows through") {
        Tensor out = id_inject(rows, id, p);
        REQUIRE(lt::max_abs_diff(out, rows) < 1e-12);
    }
    SECTION("zero id code with zero hidden bias is also the identity for any heads") {
        for (auto& v : p.gamma_w.value_mut().data) v = drng.normal();
        for (auto& v : p.beta_w.value_mut().data) v = drng.normal();
        // gamma_b/beta_b stay zero, hidden_b is zero by construction
        Tensor out = id_inject(rows, Tensor::zeros(Shape{8}), p);
        REQUIRE(lt::max_abs_diff(out, rows) < 1e-12);
    }
    SECTION("shape mismatches raise") {
        REQUIRE_THROWS_AS(id_inject(Tensor::zeros(Shape{5, 7}), id, p), DimensionError);
        REQUIRE_THROWS_AS(id_inject(rows, Tensor::zeros(Shape{7}), p), DimensionError);
    }
}

TEST_CASE("identity injection matches the scalar oracle", "[manipulators]") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Rng prng = rng.fork(static_cast<std::uint64_t>(trial));
        IdInjectParams p = make_id_inject_params(4, prng, 6);
        // randomize every head so the residual path is fully exercised
        Rng wrng(500 + trial);
        for (auto& item : p.params.items())
            for (auto& v : item.var.value_mut().data) v = wrng.normal() * 0.5;
        Rng drng(600 + trial);
        Tensor rows = drng.normal_tensor(Shape{3, 4});
        Tensor id = drng.normal_tensor(Shape{4});

        Tensor out = id_inject(rows, id, p);
        lt::Mat ref = lt::ref_id_inject(lt::as_matrix(rows), lt::as_vector(id), p);
        REQUIRE(lt::max_abs_diff(ref, out) < 1e-6);
    }
}

TEST_CASE("identity injection gradients match finite differences", "[manipulators][gradients]") {
    Rng rng(22);
    IdInjectParams p = make_id_inject_params(6, rng);
    // non-zero heads so gradients flow everywhere
    Rng wrng(23);
    for (auto& item : p.params.items())
        for (auto& v : item.var.value_mut().data) v = wrng.normal() * 0.3;
    Rng drng(24);
    Tensor rows = drng.normal_tensor(Shape{3, 6});
    Tensor id = drng.normal_tensor(Shape{6});

    auto r = lswap::testing::grad_check_params([&]() {
        ad::Var out = id_inject(ad::constant(rows), ad::constant(id), p);
        return ad::sum(ad::mul(out, out));
    }, p.params, rng, 8);
    INFO(r.worst);
    REQUIRE(r.ok(1e-4));
}

TEST_CASE("mean_code averages the rows", "[manipulators]") {
    Tensor m(Shape{2, 3});
    m(0, 0) = 1; m(0, 1) = 2; m(0, 2) = 3;
    m(1, 0) = 3; m(1, 1) = 6; m(1, 2) = 9;
    Tensor mean = mean_code(m);
    REQUIRE(mean.shape == Shape{3});
    REQUIRE(mean(0) == Catch::Approx(2.0));
    REQUIRE(mean(1) == Catch::Approx(4.0));
    REQUIRE(mean(2) == Catch::Approx(6.0));
    REQUIRE_THROWS_AS(mean_code(Tensor::zeros(Shape{3})), DimensionError);
}

TEST_CASE("manipulator checkpoints round-trip", "[manipulators]") {
    lt::TempDir tmp("manip-ckpt");
    Rng rng(25);

    SECTION("transfer module") {
        FTMParams ftm = make_ftm_params(3, 4, rng);
        for (auto& block : ftm.blocks)
            for (auto& v : block.omega.value_mut().data) v = rng.normal();
        save_ftm(tmp.path / "ftm", ftm);
        FTMParams back = load_ftm(tmp.path / "ftm");
        REQUIRE(back.block_count() == 3);
        REQUIRE(back.code_width() == 4);

        Rng drng(26);
        Tensor s = drng.normal_tensor(Shape{3, 4});
        Tensor t = drng.normal_tensor(Shape{3, 4});
        // f32 storage: agreement to float precision
        REQUIRE(lt::max_abs_diff(ftm_forward(s, t, ftm), ftm_forward(s, t, back)) < 1e-6);

        REQUIRE_THROWS_AS(load_id_inject(tmp.path / "ftm"), CheckpointError);
    }
    SECTION("identity injection") {
        IdInjectParams p = make_id_inject_params(5, rng, 7);
        for (auto& v : p.gamma_w.value_mut().data) v = rng.normal();
        save_id_inject(tmp.path / "inj", p);
        IdInjectParams back = load_id_inject(tmp.path / "inj");
        REQUIRE(back.code_width() == 5);
        REQUIRE(back.hidden_w.value().shape == Shape{7, 5});

        Rng drng(27);
        Tensor rows = drng.normal_tensor(Shape{2, 5});
        Tensor id = drng.normal_tensor(Shape{5});
        REQUIRE(lt::max_abs_diff(id_inject(rows, id, p), id_inject(rows, id, back)) < 1e-6);

        REQUIRE_THROWS_AS(load_ftm(tmp.path / "inj"), CheckpointError);
    }
}
