// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor blocks and checkpoint directories.
//
// Tensor block layout (little-endian):
//   u64 rank, u64 dim[rank], f32 data[numel] in row-major order.
//
// Checkpoint directory layout:
//   manifest.txt   "latentswap-checkpoint 1" header, "meta <key> <value>"
//                  lines, then one "param <name> <file> <rank> <dims...>
//                  <fnv1a64-hex>" line per tensor.
//   param_NNNN.bin one tensor block per parameter, in manifest order.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentswap/autodiff.hpp"
#include "latentswap/errors.hpp"
#include "latentswap/tensor.hpp"

namespace lswap::io {

// ---------------------------------------------------------------------------
// FNV-1a 64-bit checksum

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n,
                             std::uint64_t state = 0xcbf29ce484222325ull) {
    for (std::size_t i = 0; i < n; ++i) {
        state ^= data[i];
        state *= 0x100000001b3ull;
    }
    return state;
}

inline std::uint64_t fnv1a64(const std::vector<unsigned char>& bytes,
                             std::uint64_t state = 0xcbf29ce484222325ull) {
    return fnv1a64(bytes.data(), bytes.size(), state);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// ---------------------------------------------------------------------------
// little-endian primitives

namespace detail {

inline void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<unsigned char>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::vector<unsigned char>& buf, std::size_t& off) {
    if (off + 8 > buf.size()) throw CheckpointError("tensor block truncated in shape header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[off + static_cast<std::size_t>(i)]) << (8 * i);
    off += 8;
    return v;
}

inline float get_f32(const std::vector<unsigned char>& buf, std::size_t& off) {
    if (off + 4 > buf.size()) throw CheckpointError("tensor block truncated in data section");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(buf[off + static_cast<std::size_t>(i)]) << (8 * i);
    off += 4;
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// tensor blocks

inline std::vector<unsigned char> tensor_to_block(const Tensor& t) {
    std::vector<unsigned char> buf;
    buf.reserve(8 + 8 * static_cast<std::size_t>(t.shape.rank()) + 4 * t.data.size());
    detail::put_u64(buf, static_cast<std::uint64_t>(t.shape.rank()));
    for (int d : t.shape.dims) detail::put_u64(buf, static_cast<std::uint64_t>(d));
    for (Real v : t.data) detail::put_f32(buf, static_cast<float>(v));
    return buf;
}

inline Tensor block_to_tensor(const std::vector<unsigned char>& buf) {
    std::size_t off = 0;
    std::uint64_t rank = detail::get_u64(buf, off);
    if (rank > 8) throw CheckpointError("tensor block rank " + std::to_string(rank) + " is implausible");
    Shape s;
    std::size_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        std::uint64_t d = detail::get_u64(buf, off);
        if (d == 0 || d > (1ull << 32)) throw CheckpointError("tensor block has invalid dimension");
        s.dims.push_back(static_cast<int>(d));
        numel *= d;
    }
    if (buf.size() != off + 4 * numel)
        throw CheckpointError("tensor block size mismatch: header promises " + std::to_string(numel) +
                              " floats, file holds " + std::to_string((buf.size() - off) / 4));
    Tensor t(s);
    for (std::size_t i = 0; i < numel; ++i) t.data[i] = static_cast<Real>(detail::get_f32(buf, off));
    return t;
}

inline std::uint64_t tensor_checksum(const Tensor& t) {
    return fnv1a64(tensor_to_block(t));
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path.string());
    f.seekg(0, std::ios::end);
    std::streamsize n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!f) throw IoError("read failed: " + path.string());
    return bytes;
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    write_file(path, tensor_to_block(t));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
    try {
        return block_to_tensor(read_file(path));
    } catch (const CheckpointError& e) {
        throw CheckpointError(std::string(e.what()) + " (file " + path.string() + ")");
    }
}

// ---------------------------------------------------------------------------
// checkpoint directories

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<NamedTensor> params;

    const Tensor& find(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p.tensor;
        throw CheckpointError("checkpoint has no parameter named " + name);
    }

    std::string meta_at(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw CheckpointError("checkpoint manifest missing key " + key);
        return it->second;
    }

    int meta_int(const std::string& key) const {
        const std::string v = meta_at(key);
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw CheckpointError("checkpoint key " + key + " is not an integer: " + v);
        }
    }
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

    std::ostringstream manifest;
    manifest << "latentswap-checkpoint 1\n";
    for (const auto& [k, v] : ck.meta) {
        if (k.find(' ') != std::string::npos)
            throw ArgumentError("checkpoint meta key may not contain spaces: " + k);
        manifest << "meta " << k << " " << v << "\n";
    }
    int idx = 0;
    for (const auto& p : ck.params) {
        if (p.name.find(' ') != std::string::npos)
            throw ArgumentError("parameter name may not contain spaces: " + p.name);
        char file[32];
        std::snprintf(file, sizeof file, "param_%04d.bin", idx++);
        auto block = tensor_to_block(p.tensor);
        write_file(dir / file, block);
        manifest << "param " << p.name << " " << file << " " << p.tensor.shape.rank();
        for (int d : p.tensor.shape.dims) manifest << " " << d;
        manifest << " " << hex64(fnv1a64(block)) << "\n";
    }
    const std::string text = manifest.str();
    std::vector<unsigned char> bytes(text.begin(), text.end());
    write_file(dir / "manifest.txt", bytes);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    if (!std::filesystem::exists(manifest_path))
        throw IoError("checkpoint manifest not found: " + manifest_path.string());
    auto bytes = read_file(manifest_path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));

    std::string header;
    std::getline(in, header);
    if (header != "latentswap-checkpoint 1")
        throw CheckpointError("unrecognized manifest header in " + manifest_path.string());

    Checkpoint ck;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string k, v;
            ls >> k;
            std::getline(ls, v);
            if (!v.empty() && v.front() == ' ') v.erase(0, 1);
            ck.meta[k] = v;
        } else if (tag == "param") {
            std::string name, file;
            std::size_t rank = 0;
            ls >> name >> file >> rank;
            if (!ls || rank > 8)
                throw CheckpointError("malformed param line " + std::to_string(lineno) +
                                      " in " + manifest_path.string());
            Shape s;
            for (std::size_t d = 0; d < rank; ++d) {
                int dim = 0;
                ls >> dim;
                if (!ls || dim <= 0)
                    throw CheckpointError("malformed shape on line " + std::to_string(lineno) +
                                          " in " + manifest_path.string());
                s.dims.push_back(dim);
            }
            std::string want_sum;
            ls >> want_sum;
            auto block = read_file(dir / file);
            if (!want_sum.empty() && hex64(fnv1a64(block)) != want_sum)
                throw CheckpointError("checksum mismatch for " + (dir / file).string());
            Tensor t = block_to_tensor(block);
            if (t.shape != s)
                throw CheckpointError("shape mismatch for " + name + ": manifest says " + s.str() +
                                      ", file " + file + " holds " + t.shape.str());
            ck.params.push_back({std::move(name), std::move(t)});
        } else {
            throw CheckpointError("unknown manifest line tag '" + tag + "' on line " +
                                  std::to_string(lineno));
        }
    }
    return ck;
}

// ---------------------------------------------------------------------------
// parameter-set bridging

/// Checksum over names plus exact in-memory doubles; detects any drift in a
/// frozen module down to the last bit.
inline std::uint64_t param_state_checksum(const ad::ParamSet& ps) {
    std::uint64_t state = 0xcbf29ce484222325ull;
    for (const auto& item : ps.items()) {
        state = fnv1a64(reinterpret_cast<const unsigned char*>(item.name.data()), item.name.size(), state);
        const auto& t = item.var.value();
        state = fnv1a64(reinterpret_cast<const unsigned char*>(t.data.data()),
                        t.data.size() * sizeof(Real), state);
    }
    return state;
}

inline std::vector<NamedTensor> params_to_named(const ad::ParamSet& ps) {
    std::vector<NamedTensor> out;
    out.reserve(ps.size());
    for (const auto& item : ps.items()) out.push_back({item.name, item.var.value()});
    return out;
}

/// Copies checkpoint tensors into an already-constructed parameter set.
/// Every parameter must be present with a matching shape.
inline void load_into_params(const Checkpoint& ck, ad::ParamSet& ps) {
    for (auto& item : ps.items()) {
        const Tensor& src = ck.find(item.name);
        if (src.shape != item.var.value().shape)
            throw CheckpointError("parameter " + item.name + " shape mismatch: model wants " +
                                  item.var.value().shape.str() + ", checkpoint holds " + src.shape.str());
        item.var.value_mut() = src;
    }
}

} // namespace lswap::io
