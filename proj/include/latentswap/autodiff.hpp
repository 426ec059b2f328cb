// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense tensors.
// A Var wraps a graph node; ops build the graph eagerly and backward()
// propagates gradients to every reachable leaf that asked for them.
// Single-threaded and allocation-per-op: built for desk-scale models where
// bit-reproducibility and auditable gradients matter more than throughput.

#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "latentswap/tensor.hpp"

namespace lswap::ad {

struct Node {
    Tensor val;
    Tensor grad;                       // allocated lazily, same shape as val
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward; // reads this->grad, accumulates into parents

    Tensor& grad_buffer() {
        if (grad.numel() != val.numel()) grad = Tensor::zeros(val.shape);
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    /// Leaf variable. Parameters pass requires_grad=true, inputs usually false.
    explicit Var(Tensor value, bool requires_grad = false) {
        node_ = std::make_shared<Node>();
        node_->val = std::move(value);
        node_->needs_grad = requires_grad;
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->val; }
    Tensor& value_mut() { return node_->val; } // optimizer use; invalidates built graphs
    const Tensor& grad() const { return node_->grad_buffer(); }
    bool requires_grad() const { return node_->needs_grad; }
    void set_requires_grad(bool r) const { node_->needs_grad = r; }
    void zero_grad() const {
        if (node_->grad.numel()) std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
    }
    const NodePtr& node() const { return node_; }
    NodePtr& node() { return node_; }

private:
    NodePtr node_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }

inline Var make_op(Tensor out, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->val = std::move(out);
    for (const auto& p : parents)
        if (p.node()->needs_grad) { n->needs_grad = true; break; }
    if (n->needs_grad) {
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(bwd);
    }
    return Var(std::move(n));
}

/// Backpropagate from a scalar root. Interior gradients are fresh per graph;
/// leaf gradients accumulate until zeroed by the caller.
inline void backward(const Var& root) {
    if (root.value().numel() != 1)
        throw ArgumentError("backward: root must be a scalar, got shape " + root.value().shape.str());
    if (!root.node()->needs_grad) return;

    // Post-order DFS over nodes that require gradients.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame { Node* n; std::size_t next; };
    std::vector<Frame> stack;
    stack.push_back({root.node().get(), 0});
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->needs_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer().data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace detail {
inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.value().shape != b.value().shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape.str() +
                             " vs " + b.value().shape.str());
}
} // namespace detail

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    auto pa = a.node(); auto pb = b.node();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->needs_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
        if (pb->needs_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    auto pa = a.node(); auto pb = b.node();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->needs_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
        if (pb->needs_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= self.grad.data[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    auto pa = a.node(); auto pb = b.node();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->needs_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += self.grad.data[i] * pb->val.data[i];
        }
        if (pb->needs_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] += self.grad.data[i] * pa->val.data[i];
        }
    });
}

inline Var add_scalar(const Var& a, Real c) {
    Tensor out = a.value();
    for (auto& v : out.data) v += c;
    auto pa = a.node();
    return make_op(std::move(out), {a}, [pa](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

inline Var mul_scalar(const Var& a, Real c) {
    Tensor out = a.value();
    for (auto& v : out.data) v *= c;
    auto pa = a.node();
    return make_op(std::move(out), {a}, [pa, c](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += c * self.grad.data[i];
    });
}

inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

inline Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    auto pa = a.node();
    Tensor saved = out;
    return make_op(std::move(out), {a}, [pa, saved = std::move(saved)](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            Real y = saved.data[i];
            g.data[i] += self.grad.data[i] * y * (1.0 - y);
        }
    });
}

inline Var tanh_op(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data) v = std::tanh(v);
    auto pa = a.node();
    Tensor saved = out;
    return make_op(std::move(out), {a}, [pa, saved = std::move(saved)](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            Real y = saved.data[i];
            g.data[i] += self.grad.data[i] * (1.0 - y * y);
        }
    });
}

inline Var leaky_relu(const Var& a, Real slope = 0.2) {
    Tensor out = a.value();
    for (auto& v : out.data) v = v > 0 ? v : slope * v;
    auto pa = a.node();
    return make_op(std::move(out), {a}, [pa, slope](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += self.grad.data[i] * (pa->val.data[i] > 0 ? 1.0 : slope);
    });
}

inline Var sqrt_op(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data) v = std::sqrt(v);
    auto pa = a.node();
    Tensor saved = out;
    return make_op(std::move(out), {a}, [pa, saved = std::move(saved)](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] += self.grad.data[i] * 0.5 / saved.data[i];
    });
}

// ---------------------------------------------------------------------------
// reductions

inline Var sum(const Var& a) {
    Real s = 0;
    for (Real v : a.value().data) s += v;
    auto pa = a.node();
    return make_op(Tensor::scalar(s), {a}, [pa](Node& self) {
        Real g = self.grad.data[0];
        auto& gb = pa->grad_buffer();
        for (auto& v : gb.data) v += g;
    });
}

inline Var mean(const Var& a) {
    return mul_scalar(sum(a), 1.0 / static_cast<Real>(a.value().numel()));
}

inline Var dot(const Var& a, const Var& b) {
    if (a.value().numel() != b.value().numel())
        throw DimensionError("dot: element count mismatch");
    Real s = 0;
    for (std::size_t i = 0; i < a.value().data.size(); ++i)
        s += a.value().data[i] * b.value().data[i];
    auto pa = a.node(); auto pb = b.node();
    return make_op(Tensor::scalar(s), {a, b}, [pa, pb](Node& self) {
        Real g = self.grad.data[0];
        if (pa->needs_grad) {
            auto& gb = pa->grad_buffer();
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g * pb->val.data[i];
        }
        if (pb->needs_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g * pa->val.data[i];
        }
    });
}

// ---------------------------------------------------------------------------
// structure ops

inline Var reshape(const Var& a, Shape s) {
    if (s.numel() != static_cast<std::int64_t>(a.value().numel()))
        throw DimensionError("reshape: element count mismatch " + a.value().shape.str() +
                             " -> " + s.str());
    Tensor out = a.value();
    out.shape = std::move(s);
    auto pa = a.node();
    return make_op(std::move(out), {a}, [pa](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
    });
}

inline Var concat(const Var& a, const Var& b) {
    if (a.value().shape.rank() != 1 || b.value().shape.rank() != 1)
        throw DimensionError("concat: expects rank-1 inputs");
    int na = a.value().shape[0], nb = b.value().shape[0];
    Tensor out(Shape{na + nb});
    std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
    std::copy(b.value().data.begin(), b.value().data.end(), out.data.begin() + na);
    auto pa = a.node(); auto pb = b.node();
    return make_op(std::move(out), {a, b}, [pa, pb, na, nb](Node& self) {
        if (pa->needs_grad) {
            auto& g = pa->grad_buffer();
            for (int i = 0; i < na; ++i) g.data[i] += self.grad.data[i];
        }
        if (pb->needs_grad) {
            auto& g = pb->grad_buffer();
            for (int i = 0; i < nb; ++i) g.data[i] += self.grad.data[na + i];
        }
    });
}

/// Extracts row i of a rank-2 matrix as a vector.
inline Var slice_row(const Var& a, int i) {
    const Tensor& av = a.value();
    if (av.shape.rank() != 2) throw DimensionError("slice_row: expects a rank-2 input");
    int rows = av.shape[0], cols = av.shape[1];
    if (i < 0 || i >= rows) throw DimensionError("slice_row: index " + std::to_string(i) + " out of range");
    Tensor out(Shape{cols});
    std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(i) * cols,
              av.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * cols, out.data.begin());
    auto pa = a.node();
    return make_op(std::move(out), {a}, [pa, i, cols](Node& self) {
        auto& g = pa->grad_buffer();
        for (int j = 0; j < cols; ++j)
            g.data[static_cast<std::size_t>(i) * cols + j] += self.grad.data[static_cast<std::size_t>(j)];
    });
}

/// Stacks equal-length vectors into a rank-2 matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw ArgumentError("stack_rows: no rows given");
    int cols = rows[0].value().shape[0];
    for (const auto& r : rows)
        if (r.value().shape.rank() != 1 || r.value().shape[0] != cols)
            throw DimensionError("stack_rows: all rows must be vectors of equal length");
    int n = static_cast<int>(rows.size());
    Tensor out(Shape{n, cols});
    for (int i = 0; i < n; ++i)
        std::copy(rows[static_cast<std::size_t>(i)].value().data.begin(),
                  rows[static_cast<std::size_t>(i)].value().data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i) * cols);
    std::vector<NodePtr> parents;
    parents.reserve(rows.size());
    for (const auto& r : rows) parents.push_back(r.node());
    return make_op(std::move(out), rows, [parents, cols](Node& self) {
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (!parents[i]->needs_grad) continue;
            auto& g = parents[i]->grad_buffer();
            for (int j = 0; j < cols; ++j)
                g.data[static_cast<std::size_t>(j)] += self.grad.data[i * static_cast<std::size_t>(cols) + j];
        }
    });
}

/// Extracts channel ci of a rank-3 feature map as an (h, w, 1) map.
inline Var slice_channel(const Var& a, int ci) {
    const Tensor& av = a.value();
    if (av.shape.rank() != 3) throw DimensionError("slice_channel: expects a rank-3 input");
    int h = av.shape[0], w = av.shape[1], c = av.shape[2];
    if (ci < 0 || ci >= c) throw DimensionError("slice_channel: index out of range");
    Tensor out(Shape{h, w, 1});
    for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
        out.data[p] = av.data[p * c + ci];
    auto pa = a.node();
    return make_op(std::move(out), {a}, [pa, h, w, c, ci](Node& self) {
        auto& g = pa->grad_buffer();
        for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p)
            g.data[p * c + ci] += self.grad.data[p];
    });
}

// ---------------------------------------------------------------------------
// dense / conv layers

/// y = W x + b with x:(n), W:(m,n), b:(m).
inline Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.shape.rank() != 1 || wv.shape.rank() != 2 || wv.shape[1] != xv.shape[0])
        throw DimensionError("linear: incompatible shapes x=" + xv.shape.str() +
                             " w=" + wv.shape.str());
    int m = wv.shape[0], n = wv.shape[1];
    if (b.value().shape != Shape{m})
        throw DimensionError("linear: bias shape " + b.value().shape.str() + " != m");
    Tensor out(Shape{m});
    for (int i = 0; i < m; ++i) {
        Real acc = b.value().data[static_cast<std::size_t>(i)];
        const Real* wrow = &wv.data[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) acc += wrow[j] * xv.data[static_cast<std::size_t>(j)];
        out.data[static_cast<std::size_t>(i)] = acc;
    }
    auto px = x.node(); auto pw = w.node(); auto pb = b.node();
    return make_op(std::move(out), {x, w, b}, [px, pw, pb, m, n](Node& self) {
        const Real* gy = self.grad.data.data();
        if (px->needs_grad) {
            auto& gx = px->grad_buffer();
            for (int i = 0; i < m; ++i) {
                const Real* wrow = &pw->val.data[static_cast<std::size_t>(i) * n];
                Real g = gy[i];
                for (int j = 0; j < n; ++j) gx.data[static_cast<std::size_t>(j)] += g * wrow[j];
            }
        }
        if (pw->needs_grad) {
            auto& gw = pw->grad_buffer();
            for (int i = 0; i < m; ++i) {
                Real g = gy[i];
                Real* grow = &gw.data[static_cast<std::size_t>(i) * n];
                for (int j = 0; j < n; ++j) grow[j] += g * px->val.data[static_cast<std::size_t>(j)];
            }
        }
        if (pb->needs_grad) {
            auto& gb = pb->grad_buffer();
            for (int i = 0; i < m; ++i) gb.data[static_cast<std::size_t>(i)] += gy[i];
        }
    });
}

/// 2-D convolution. x:(h,w,cin), w:(kh,kw,cin,cout), b:(cout) or empty Var.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.shape.rank() != 3 || wv.shape.rank() != 4)
        throw DimensionError("conv2d: expects x rank 3 and w rank 4");
    int h = xv.shape[0], wd = xv.shape[1], cin = xv.shape[2];
    int kh = wv.shape[0], kw = wv.shape[1], cout = wv.shape[3];
    if (wv.shape[2] != cin)
        throw DimensionError("conv2d: input channels " + std::to_string(cin) +
                             " != kernel channels " + std::to_string(wv.shape[2]));
    bool has_bias = b.defined();
    if (has_bias && b.value().shape != Shape{cout})
        throw DimensionError("conv2d: bias shape mismatch");
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor out(Shape{oh, ow, cout});

    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            Real* orow = &out.data[(static_cast<std::size_t>(oy) * ow + ox) * cout];
            if (has_bias)
                for (int co = 0; co < cout; ++co) orow[co] = b.value().data[static_cast<std::size_t>(co)];
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= wd) continue;
                    const Real* xrow = &xv.data[(static_cast<std::size_t>(iy) * wd + ix) * cin];
                    const Real* wrow = &wv.data[((static_cast<std::size_t>(ky) * kw + kx) * cin) * cout];
                    for (int ci = 0; ci < cin; ++ci) {
                        Real xval = xrow[ci];
                        const Real* wk = wrow + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) orow[co] += xval * wk[co];
                    }
                }
            }
        }
    }

    std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    auto px = x.node(); auto pw = w.node();
    NodePtr pb = has_bias ? b.node() : nullptr;
    return make_op(std::move(out), std::move(parents),
                   [px, pw, pb, h, wd, cin, kh, kw, cout, stride, pad, oh, ow](Node& self) {
        const Real* gy = self.grad.data.data();
        bool need_x = px->needs_grad;
        bool need_w = pw->needs_grad;
        bool need_b = pb && pb->needs_grad;
        Tensor* gx = need_x ? &px->grad_buffer() : nullptr;
        Tensor* gw = need_w ? &pw->grad_buffer() : nullptr;
        Tensor* gb = need_b ? &pb->grad_buffer() : nullptr;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const Real* grow = &gy[(static_cast<std::size_t>(oy) * ow + ox) * cout];
                if (need_b)
                    for (int co = 0; co < cout; ++co) gb->data[static_cast<std::size_t>(co)] += grow[co];
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= wd) continue;
                        std::size_t xoff = (static_cast<std::size_t>(iy) * wd + ix) * cin;
                        std::size_t woff = (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
                        for (int ci = 0; ci < cin; ++ci) {
                            const Real* wk = &pw->val.data[woff + static_cast<std::size_t>(ci) * cout];
                            if (need_x) {
                                Real acc = 0;
                                for (int co = 0; co < cout; ++co) acc += grow[co] * wk[co];
                                gx->data[xoff + static_cast<std::size_t>(ci)] += acc;
                            }
                            if (need_w) {
                                Real xval = px->val.data[xoff + static_cast<std::size_t>(ci)];
                                Real* gwk = &gw->data[woff + static_cast<std::size_t>(ci) * cout];
                                for (int co = 0; co < cout; ++co) gwk[co] += grow[co] * xval;
                            }
                        }
                    }
                }
            }
        }
    });
}

inline Var conv2d(const Var& x, const Var& w, int stride, int pad) {
    return conv2d(x, w, Var(), stride, pad);
}

// ---------------------------------------------------------------------------
// resampling

inline Var upsample2x_nearest(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.shape.rank() != 3) throw DimensionError("upsample2x: expects rank-3 input");
    int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
    Tensor out(Shape{2 * h, 2 * w, c});
    for (int y = 0; y < 2 * h; ++y)
        for (int xw = 0; xw < 2 * w; ++xw) {
            const Real* src = &xv.data[(static_cast<std::size_t>(y / 2) * w + xw / 2) * c];
            Real* dst = &out.data[(static_cast<std::size_t>(y) * 2 * w + xw) * c];
            for (int ci = 0; ci < c; ++ci) dst[ci] = src[ci];
        }
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, h, w, c](Node& self) {
        auto& g = px->grad_buffer();
        for (int y = 0; y < 2 * h; ++y)
            for (int xw = 0; xw < 2 * w; ++xw) {
                Real* dst = &g.data[(static_cast<std::size_t>(y / 2) * w + xw / 2) * c];
                const Real* src = &self.grad.data[(static_cast<std::size_t>(y) * 2 * w + xw) * c];
                for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
            }
    });
}

/// Non-overlapping k x k average pooling; spatial dims must divide by k.
inline Var avg_pool(const Var& x, int k) {
    const Tensor& xv = x.value();
    if (xv.shape.rank() != 3) throw DimensionError("avg_pool: expects rank-3 input");
    int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
    if (h % k || w % k)
        throw DimensionError("avg_pool: size " + xv.shape.str() + " not divisible by " + std::to_string(k));
    int oh = h / k, ow = w / k;
    Real inv = 1.0 / (static_cast<Real>(k) * k);
    Tensor out(Shape{oh, ow, c});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ci = 0; ci < c; ++ci) {
                Real acc = 0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        acc += xv(oy * k + dy, ox * k + dx, ci);
                out(oy, ox, ci) = acc * inv;
            }
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, k, oh, ow, c, w, inv](Node& self) {
        auto& g = px->grad_buffer();
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ci = 0; ci < c; ++ci) {
                    Real gv = self.grad.data[(static_cast<std::size_t>(oy) * ow + ox) * c + ci] * inv;
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            g.data[(static_cast<std::size_t>(oy * k + dy) * w + (ox * k + dx)) * c + ci] += gv;
                }
    });
}

/// Mean over the spatial extent, yielding the channel vector (c).
inline Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.shape.rank() != 3) throw DimensionError("global_avg_pool: expects rank-3 input");
    int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
    Real inv = 1.0 / (static_cast<Real>(h) * w);
    Tensor out(Shape{c});
    for (int y = 0; y < h; ++y)
        for (int xw = 0; xw < w; ++xw)
            for (int ci = 0; ci < c; ++ci) out.data[static_cast<std::size_t>(ci)] += xv(y, xw, ci);
    for (auto& v : out.data) v *= inv;
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, h, w, c, inv](Node& self) {
        auto& g = px->grad_buffer();
        for (int y = 0; y < h; ++y)
            for (int xw = 0; xw < w; ++xw)
                for (int ci = 0; ci < c; ++ci)
                    g.data[(static_cast<std::size_t>(y) * w + xw) * c + ci] +=
                        self.grad.data[static_cast<std::size_t>(ci)] * inv;
    });
}

/// Bilinear resize with half-pixel sample centers. Exact identity when the
/// output size equals the input size.
inline Var bilinear_resize(const Var& x, int oh, int ow) {
    const Tensor& xv = x.value();
    if (xv.shape.rank() != 3) throw DimensionError("bilinear_resize: expects rank-3 input");
    int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
    if (oh == h && ow == w) return x;

    struct Tap { int i0, i1; Real w0, w1; };
    auto make_taps = [](int in, int out) {
        std::vector<Tap> taps(static_cast<std::size_t>(out));
        Real scale = static_cast<Real>(in) / out;
        for (int o = 0; o < out; ++o) {
            Real src = (o + 0.5) * scale - 0.5;
            Real f = std::floor(src);
            int i0 = static_cast<int>(f);
            Real t = src - f;
            int i1 = i0 + 1;
            i0 = std::clamp(i0, 0, in - 1);
            i1 = std::clamp(i1, 0, in - 1);
            taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - t, t};
        }
        return taps;
    };
    auto ty = make_taps(h, oh);
    auto tx = make_taps(w, ow);

    Tensor out(Shape{oh, ow, c});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const Tap& a = ty[static_cast<std::size_t>(oy)];
            const Tap& bb = tx[static_cast<std::size_t>(ox)];
            Real* dst = &out.data[(static_cast<std::size_t>(oy) * ow + ox) * c];
            for (int ci = 0; ci < c; ++ci)
                dst[ci] = a.w0 * (bb.w0 * xv(a.i0, bb.i0, ci) + bb.w1 * xv(a.i0, bb.i1, ci)) +
                          a.w1 * (bb.w0 * xv(a.i1, bb.i0, ci) + bb.w1 * xv(a.i1, bb.i1, ci));
        }
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, ty, tx, oh, ow, c, w](Node& self) {
        auto& g = px->grad_buffer();
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const Tap& a = ty[static_cast<std::size_t>(oy)];
                const Tap& bb = tx[static_cast<std::size_t>(ox)];
                const Real* src = &self.grad.data[(static_cast<std::size_t>(oy) * ow + ox) * c];
                for (int ci = 0; ci < c; ++ci) {
                    Real gv = src[ci];
                    g.data[(static_cast<std::size_t>(a.i0) * w + bb.i0) * c + ci] += a.w0 * bb.w0 * gv;
                    g.data[(static_cast<std::size_t>(a.i0) * w + bb.i1) * c + ci] += a.w0 * bb.w1 * gv;
                    g.data[(static_cast<std::size_t>(a.i1) * w + bb.i0) * c + ci] += a.w1 * bb.w0 * gv;
                    g.data[(static_cast<std::size_t>(a.i1) * w + bb.i1) * c + ci] += a.w1 * bb.w1 * gv;
                }
            }
    });
}

// ---------------------------------------------------------------------------
// normalization

/// Normalizes over every element of x, then applies a per-channel affine
/// (channel = last axis). Batch-size independent stand-in for batchnorm.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps = 1e-5) {
    const Tensor& xv = x.value();
    int c = xv.shape[xv.shape.rank() - 1];
    if (gamma.value().shape != Shape{c} || beta.value().shape != Shape{c})
        throw DimensionError("layer_norm: affine parameters must have shape (channels)");
    std::size_t n = xv.numel();
    Real mu = 0;
    for (Real v : xv.data) mu += v;
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (Real v : xv.data) var += (v - mu) * (v - mu);
    var /= static_cast<Real>(n);
    Real inv_s = 1.0 / std::sqrt(var + eps);

    Tensor xhat(xv.shape);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < n; ++i) {
        Real xh = (xv.data[i] - mu) * inv_s;
        xhat.data[i] = xh;
        int ci = static_cast<int>(i % static_cast<std::size_t>(c));
        out.data[i] = xh * gamma.value().data[static_cast<std::size_t>(ci)] +
                      beta.value().data[static_cast<std::size_t>(ci)];
    }
    auto px = x.node(); auto pg = gamma.node(); auto pb = beta.node();
    return make_op(std::move(out), {x, gamma, beta},
                   [px, pg, pb, xhat = std::move(xhat), inv_s, c, n](Node& self) {
        const Real* gy = self.grad.data.data();
        if (pg->needs_grad) {
            auto& gg = pg->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                gg.data[i % static_cast<std::size_t>(c)] += gy[i] * xhat.data[i];
        }
        if (pb->needs_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) gb.data[i % static_cast<std::size_t>(c)] += gy[i];
        }
        if (px->needs_grad) {
            // dxhat = gy * gamma; dx = inv_s * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            Real m1 = 0, m2 = 0;
            std::vector<Real> dxhat(n);
            for (std::size_t i = 0; i < n; ++i) {
                dxhat[i] = gy[i] * pg->val.data[i % static_cast<std::size_t>(c)];
                m1 += dxhat[i];
                m2 += dxhat[i] * xhat.data[i];
            }
            m1 /= static_cast<Real>(n);
            m2 /= static_cast<Real>(n);
            auto& gx = px->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                gx.data[i] += inv_s * (dxhat[i] - m1 - xhat.data[i] * m2);
        }
    });
}

/// Parameter-free normalization over all elements of a vector.
inline Var normalize_all(const Var& x, Real eps = 1e-5) {
    std::size_t n = x.value().numel();
    Real mu = 0;
    for (Real v : x.value().data) mu += v;
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (Real v : x.value().data) var += (v - mu) * (v - mu);
    var /= static_cast<Real>(n);
    Real inv_s = 1.0 / std::sqrt(var + eps);
    Tensor out(x.value().shape);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = (x.value().data[i] - mu) * inv_s;
    Tensor xhat = out;
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, xhat = std::move(xhat), inv_s, n](Node& self) {
        const Real* gy = self.grad.data.data();
        Real m1 = 0, m2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            m1 += gy[i];
            m2 += gy[i] * xhat.data[i];
        }
        m1 /= static_cast<Real>(n);
        m2 /= static_cast<Real>(n);
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            gx.data[i] += inv_s * (gy[i] - m1 - xhat.data[i] * m2);
    });
}

/// Style modulation: per-channel normalization over the spatial extent
/// followed by y = xn * (1 + g[c]) + b[c]. g and b come from a style affine.
inline Var instance_modulate(const Var& x, const Var& g, const Var& b, Real eps = 1e-5) {
    const Tensor& xv = x.value();
    if (xv.shape.rank() != 3) throw DimensionError("instance_modulate: expects rank-3 input");
    int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
    if (g.value().shape != Shape{c} || b.value().shape != Shape{c})
        throw DimensionError("instance_modulate: style vectors must have shape (channels)");
    std::size_t m = static_cast<std::size_t>(h) * w;
    std::vector<Real> inv_s(static_cast<std::size_t>(c));
    Tensor xhat(xv.shape);
    for (int ci = 0; ci < c; ++ci) {
        Real mu = 0;
        for (std::size_t p = 0; p < m; ++p) mu += xv.data[p * c + ci];
        mu /= static_cast<Real>(m);
        Real var = 0;
        for (std::size_t p = 0; p < m; ++p) {
            Real d = xv.data[p * c + ci] - mu;
            var += d * d;
        }
        var /= static_cast<Real>(m);
        Real is = 1.0 / std::sqrt(var + eps);
        inv_s[static_cast<std::size_t>(ci)] = is;
        for (std::size_t p = 0; p < m; ++p)
            xhat.data[p * c + ci] = (xv.data[p * c + ci] - mu) * is;
    }
    Tensor out(xv.shape);
    for (std::size_t p = 0; p < m; ++p)
        for (int ci = 0; ci < c; ++ci)
            out.data[p * c + ci] = xhat.data[p * c + ci] * (1.0 + g.value().data[static_cast<std::size_t>(ci)]) +
                                   b.value().data[static_cast<std::size_t>(ci)];
    auto px = x.node(); auto pg = g.node(); auto pb = b.node();
    return make_op(std::move(out), {x, g, b},
                   [px, pg, pb, xhat = std::move(xhat), inv_s = std::move(inv_s), m, c](Node& self) {
        const Real* gy = self.grad.data.data();
        if (pg->needs_grad) {
            auto& gg = pg->grad_buffer();
            for (std::size_t p = 0; p < m; ++p)
                for (int ci = 0; ci < c; ++ci)
                    gg.data[static_cast<std::size_t>(ci)] += gy[p * c + ci] * xhat.data[p * c + ci];
        }
        if (pb->needs_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t p = 0; p < m; ++p)
                for (int ci = 0; ci < c; ++ci) gb.data[static_cast<std::size_t>(ci)] += gy[p * c + ci];
        }
        if (px->needs_grad) {
            auto& gx = px->grad_buffer();
            for (int ci = 0; ci < c; ++ci) {
                Real scale = 1.0 + pg->val.data[static_cast<std::size_t>(ci)];
                Real m1 = 0, m2 = 0;
                for (std::size_t p = 0; p < m; ++p) {
                    Real dxh = gy[p * c + ci] * scale;
                    m1 += dxh;
                    m2 += dxh * xhat.data[p * c + ci];
                }
                m1 /= static_cast<Real>(m);
                m2 /= static_cast<Real>(m);
                Real is = inv_s[static_cast<std::size_t>(ci)];
                for (std::size_t p = 0; p < m; ++p) {
                    Real dxh = gy[p * c + ci] * scale;
                    gx.data[p * c + ci] += is * (dxh - m1 - xhat.data[p * c + ci] * m2);
                }
            }
        }
    });
}

/// y = x / ||x||_2. Raises NumericError on (near-)zero norm.
inline Var l2_normalize(const Var& x) {
    Real ss = 0;
    for (Real v : x.value().data) ss += v * v;
    Real nrm = std::sqrt(ss);
    if (!(nrm > 1e-12))
        throw NumericError("l2_normalize: zero-norm vector");
    Tensor out = x.value();
    for (auto& v : out.data) v /= nrm;
    Tensor y = out;
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, y = std::move(y), nrm](Node& self) {
        const Real* gy = self.grad.data.data();
        Real proj = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) proj += gy[i] * y.data[i];
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < y.data.size(); ++i)
            gx.data[i] += (gy[i] - y.data[i] * proj) / nrm;
    });
}

/// Softmax over all elements (any shape).
inline Var softmax_flat(const Var& x) {
    Tensor out = x.value();
    Real mx = out.max();
    Real z = 0;
    for (auto& v : out.data) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : out.data) v /= z;
    Tensor y = out;
    auto px = x.node();
    return make_op(std::move(out), {x}, [px, y = std::move(y)](Node& self) {
        const Real* gy = self.grad.data.data();
        Real s = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += gy[i] * y.data[i];
        auto& gx = px->grad_buffer();
        for (std::size_t i = 0; i < y.data.size(); ++i)
            gx.data[i] += y.data[i] * (gy[i] - s);
    });
}

// ---------------------------------------------------------------------------
// parameter bookkeeping

struct NamedParam {
    std::string name;
    Var var;
};

/// Ordered collection of named trainable tensors owned by a module.
class ParamSet {
public:
    Var add(std::string name, Tensor init, bool requires_grad = true) {
        for (const auto& it : items_)
            if (it.name == name) throw ArgumentError("ParamSet: duplicate parameter " + name);
        Var v(std::move(init), requires_grad);
        items_.push_back({std::move(name), v});
        return v;
    }

    const std::vector<NamedParam>& items() const { return items_; }
    std::vector<NamedParam>& items() { return items_; }

    const Var& find(const std::string& name) const {
        for (const auto& it : items_)
            if (it.name == name) return it.var;
        throw ArgumentError("ParamSet: no parameter named " + name);
    }

    void set_requires_grad(bool r) const {
        for (const auto& it : items_) it.var.set_requires_grad(r);
    }

    void zero_grads() const {
        for (const auto& it : items_) it.var.zero_grad();
    }

    std::size_t size() const { return items_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& it : items_) n += it.var.value().numel();
        return n;
    }

    void check_finite(const std::string& owner) const {
        for (const auto& it : items_)
            if (!it.var.value().all_finite())
                throw ValidationError(owner + ": parameter " + it.name + " contains a non-finite entry");
    }

private:
    std::vector<NamedParam> items_;
};

} // namespace lswap::ad
