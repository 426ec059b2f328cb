// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "latentswap/errors.hpp"

namespace lswap {

/// All in-memory arithmetic runs in double precision; the on-disk tensor
/// format quantizes to 32-bit floats (see serialize.hpp).
using Real = double;

struct Shape {
    std::vector<int> dims;

    Shape() = default;
    Shape(std::initializer_list<int> d) : dims(d) {}
    explicit Shape(std::vector<int> d) : dims(std::move(d)) {}

    int rank() const { return static_cast<int>(dims.size()); }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : dims) n *= d;
        return n;
    }

    int operator[](int i) const { return dims[static_cast<std::size_t>(i)]; }

    bool operator==(const Shape& o) const { return dims == o.dims; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) os << 'x';
            os << dims[i];
        }
        if (dims.empty()) os << "scalar";
        return os.str();
    }
};

/// Dense row-major tensor of Real, rank 0..4.
class Tensor {
public:
    Shape shape;
    std::vector<Real> data;

    Tensor() = default;
    explicit Tensor(Shape s, Real fill = 0)
        : shape(std::move(s)), data(static_cast<std::size_t>(shape.numel()), fill) {}

    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0); }
    static Tensor full(Shape s, Real v) { return Tensor(std::move(s), v); }
    static Tensor scalar(Real v) {
        Tensor t(Shape{1});
        t.data[0] = v;
        return t;
    }

    std::size_t numel() const { return data.size(); }
    bool empty() const { return data.empty(); }

    // rank-1
    Real& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
    Real operator()(int i) const { return data[static_cast<std::size_t>(i)]; }

    // rank-2 (rows, cols)
    Real& operator()(int r, int c) {
        return data[static_cast<std::size_t>(r) * shape[1] + c];
    }
    Real operator()(int r, int c) const {
        return data[static_cast<std::size_t>(r) * shape[1] + c];
    }

    // rank-3 (h, w, c)
    Real& operator()(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + c];
    }
    Real operator()(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + c];
    }

    // rank-4 (i, j, k, l); used for conv kernels laid out (kh, kw, cin, cout)
    Real& operator()(int i, int j, int k, int l) {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    Real operator()(int i, int j, int k, int l) const {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Real min() const {
        Real m = data.empty() ? 0 : data[0];
        for (Real v : data) m = std::min(m, v);
        return m;
    }
    Real max() const {
        Real m = data.empty() ? 0 : data[0];
        for (Real v : data) m = std::max(m, v);
        return m;
    }
};

inline void require_shape(const Tensor& t, const Shape& want, const std::string& what) {
    if (t.shape != want)
        throw DimensionError(what + ": expected shape " + want.str() + ", got " + t.shape.str());
}

inline void require_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite())
        throw ValidationError(what + ": contains a non-finite entry");
}

/// Compensated (Kahan) summation; keeps aggregate metrics independent of
/// accumulation order to well below 1e-9.
class KahanSum {
public:
    void add(Real v) {
        Real y = v - comp_;
        Real t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    Real value() const { return sum_; }

private:
    Real sum_ = 0;
    Real comp_ = 0;
};

} // namespace lswap
