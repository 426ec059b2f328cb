// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "latentswap/serialize.hpp"
#include "support/test_util.hpp"

using namespace lswap;
using lswap::testing::TempDir;

TEST_CASE("tensor block layout is rank, dims, f32 data, little endian", "[serialize]") {
    Tensor t(Shape{2, 3});
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) t(r, c) = r * 3 + c;
    std::vector<unsigned char> block = io::tensor_to_block(t);

    // header: u64 rank=2, u64 dims 2 and 3
    REQUIRE(block.size() == 8 + 16 + 6 * 4);
    REQUIRE(block[0] == 2);
    for (int i = 1; i < 8; ++i) REQUIRE(block[static_cast<std::size_t>(i)] == 0);
    REQUIRE(block[8] == 2);
    REQUIRE(block[16] == 3);

    // payload: f32 little endian, first value 0.0f, second 1.0f
    std::size_t off = 24;
    REQUIRE(io::detail::get_f32(block, off) == 0.0f);
    REQUIRE(io::detail::get_f32(block, off) == 1.0f);
}

TEST_CASE("tensor block round-trips through f32", "[serialize]") {
    Rng rng(17);
    Tensor t = rng.normal_tensor(Shape{3, 4, 5});
    Tensor back = io::block_to_tensor(io::tensor_to_block(t));
    REQUIRE(back.shape == t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i)
        REQUIRE(back.data[i] == Catch::Approx(t.data[i]).margin(1e-6));

    // f32-representable values survive bit-exactly
    Tensor exact(Shape{4});
    exact(0) = 0.5; exact(1) = -2.0; exact(2) = 1024.0; exact(3) = 0.0;
    REQUIRE(lswap::testing::bit_equal(io::block_to_tensor(io::tensor_to_block(exact)), exact));
}

TEST_CASE("malformed tensor blocks are rejected", "[serialize]") {
    std::vector<unsigned char> truncated = io::tensor_to_block(Tensor::zeros(Shape{4}));
    truncated.resize(truncated.size() - 3);
    REQUIRE_THROWS_AS(io::block_to_tensor(truncated), CheckpointError);

    std::vector<unsigned char> huge_rank;
    io::detail::put_u64(huge_rank, 9);
    REQUIRE_THROWS_AS(io::block_to_tensor(huge_rank), CheckpointError);

    std::vector<unsigned char> zero_dim;
    io::detail::put_u64(zero_dim, 1);
    io::detail::put_u64(zero_dim, 0);
    REQUIRE_THROWS_AS(io::block_to_tensor(zero_dim), CheckpointError);
}

TEST_CASE("fnv1a64 matches reference vectors", "[serialize]") {
    // published reference values for the 64-bit FNV-1a function
    auto of = [](const std::string& s) {
        return io::fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
    };
    REQUIRE(of("") == 0xcbf29ce484222325ULL);
    REQUIRE(of("a") == 0xaf63dc4c8601ec8cULL);
    REQUIRE(of("foobar") == 0x85944171f73967e8ULL);
    REQUIRE(io::hex64(0xcbf29ce484222325ULL) == "cbf29ce484222325");
}

TEST_CASE("file io round trip and errors", "[serialize]") {
    TempDir tmp("serialize-io");
    std::vector<unsigned char> payload{1, 2, 3, 250};
    io::write_file(tmp.path / "x.bin", payload);
    REQUIRE(io::read_file(tmp.path / "x.bin") == payload);
    REQUIRE_THROWS_AS(io::read_file(tmp.path / "missing.bin"), IoError);

    Rng rng(3);
    Tensor t = rng.normal_tensor(Shape{2, 2});
    io::write_tensor(tmp.path / "t.bin", t);
    Tensor back = io::read_tensor(tmp.path / "t.bin");
    REQUIRE(back.shape == t.shape);
}

TEST_CASE("checkpoint directory round trip", "[serialize]") {
    TempDir tmp("serialize-ckpt");
    Rng rng(23);
    io::Checkpoint ck;
    ck.meta["kind"] = "generator";
    ck.meta["resolution"] = "64";
    ck.params.push_back({"alpha.w", rng.normal_tensor(Shape{3, 2})});
    ck.params.push_back({"alpha.b", Tensor::zeros(Shape{3})});
    io::save_checkpoint(tmp.path / "ck", ck);

    io::Checkpoint back = io::load_checkpoint(tmp.path / "ck");
    REQUIRE(back.meta_at("kind") == "generator");
    REQUIRE(back.meta_int("resolution") == 64);
    REQUIRE(back.params.size() == 2);
    REQUIRE(back.find("alpha.w").shape == Shape{3, 2});
    REQUIRE_THROWS_AS(back.find("missing"), CheckpointError);
    REQUIRE_THROWS_AS(back.meta_at("missing"), CheckpointError);
}

TEST_CASE("checkpoint rejects corruption", "[serialize]") {
    TempDir tmp("serialize-corrupt");
    Rng rng(29);
    io::Checkpoint ck;
    ck.meta["kind"] = "test";
    ck.params.push_back({"p", rng.normal_tensor(Shape{4})});
    io::save_checkpoint(tmp.path / "ck", ck);

    SECTION("flipped payload byte fails the checksum") {
        auto file = tmp.path / "ck" / "param_0000.bin";
        auto bytes = io::read_file(file);
        bytes[bytes.size() - 1] ^= 0xff;
        io::write_file(file, bytes);
        REQUIRE_THROWS_AS(io::load_checkpoint(tmp.path / "ck"), CheckpointError);
    }

    SECTION("missing weight file") {
        std::filesystem::remove(tmp.path / "ck" / "param_0000.bin");
        REQUIRE_THROWS_AS(io::load_checkpoint(tmp.path / "ck"), IoError);
    }

    SECTION("corrupted shape header names the file") {
        auto file = tmp.path / "ck" / "param_0000.bin";
        auto bytes = io::read_file(file);
        bytes[0] = 200; // rank far out of range
        io::write_file(file, bytes);
        try {
            io::load_checkpoint(tmp.path / "ck");
            FAIL("expected a checkpoint error");
        } catch (const CheckpointError& e) {
            REQUIRE(std::string(e.what()).find("param_0000.bin") != std::string::npos);
        }
        // the standalone reader also reports the offending path
        try {
            io::read_tensor(file);
            FAIL("expected a checkpoint error");
        } catch (const CheckpointError& e) {
            REQUIRE(std::string(e.what()).find("param_0000.bin") != std::string::npos);
        }
    }

    SECTION("bad manifest header") {
        std::ofstream out(tmp.path / "ck" / "manifest.txt", std::ios::trunc);
        out << "not-a-checkpoint 1\n";
        out.close();
        REQUIRE_THROWS_AS(io::load_checkpoint(tmp.path / "ck"), CheckpointError);
    }

    SECTION("parameter names with spaces are rejected at save") {
        io::Checkpoint bad;
        bad.params.push_back({"has space", Tensor::zeros(Shape{1})});
        REQUIRE_THROWS_AS(io::save_checkpoint(tmp.path / "bad", bad), ArgumentError);
    }
}

TEST_CASE("param state checksum is order and value sensitive", "[serialize]") {
    ad::ParamSet a;
    a.add("w", Tensor::full(Shape{2}, 1.0));
    a.add("b", Tensor::full(Shape{2}, 2.0));
    std::uint64_t c1 = io::param_state_checksum(a);

    ad::ParamSet b;
    b.add("w", Tensor::full(Shape{2}, 1.0));
    b.add("b", Tensor::full(Shape{2}, 2.0));
    REQUIRE(io::param_state_checksum(b) == c1);

    b.items()[0].var.value_mut()(0) += 1e-12;
    REQUIRE(io::param_state_checksum(b) != c1);

    ad::ParamSet c;
    c.add("b", Tensor::full(Shape{2}, 2.0));
    c.add("w", Tensor::full(Shape{2}, 1.0));
    REQUIRE(io::param_state_checksum(c) != c1);
}

TEST_CASE("load_into_params enforces name and shape agreement", "[serialize]") {
    TempDir tmp("serialize-load-params");
    ad::ParamSet ps;
    Rng rng(31);
    ps.add("w", rng.normal_tensor(Shape{2, 2}));

    io::Checkpoint ck;
    ck.meta["kind"] = "test";
    ck.params.push_back({"w", Tensor::full(Shape{2, 2}, 0.25)});
    io::load_into_params(ck, ps);
    REQUIRE(ps.find("w").value()(0, 0) == 0.25);

    io::Checkpoint wrong_shape;
    wrong_shape.params.push_back({"w", Tensor::zeros(Shape{3})});
    REQUIRE_THROWS_AS(io::load_into_params(wrong_shape, ps), CheckpointError);

    io::Checkpoint missing;
    missing.params.push_back({"other", Tensor::zeros(Shape{2, 2})});
    REQUIRE_THROWS_AS(io::load_into_params(missing, ps), CheckpointError);
}
