#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "floc/common.hpp"
#include "floc/image.hpp"
#include "floc/losses.hpp"
#include "floc/rng.hpp"
#include "floc/sampler.hpp"

namespace floc {

// ---------------------------------------------------------------------------
// Dense row-major tensor

struct Tensor {
    std::vector<int> shape;
    std::vector<real> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, real fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    real* ptr() { return data.data(); }
    const real* ptr() const { return data.data(); }
};

namespace blas {

// C(m x n) = A(m x k) * B(k x n), optionally accumulating into C.
inline void matmul(const real* A, const real* B, real* C, int m, int k, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        real* __restrict crow = C + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = 0;
        const real* arow = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const real a = arow[p];
            if (a == 0) continue;
            const real* __restrict brow = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C(m x n) = A(m x k) * B(n x k)^T  — rows dotted with rows.
inline void matmul_abt(const real* A, const real* B, real* C, int m, int k, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        const real* arow = A + static_cast<size_t>(i) * k;
        real* crow = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const real* brow = B + static_cast<size_t>(j) * k;
            real s = 0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

} // namespace blas

// ---------------------------------------------------------------------------
// Autograd

class Var;
using VarPtr = std::shared_ptr<Var>;

class Var {
public:
    Tensor value;
    Tensor grad; // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<VarPtr> parents;
    std::function<void(Var&)> backward_fn; // scatter this->grad into parents

    static VarPtr make(Tensor v, bool needs_grad = false) {
        auto p = std::make_shared<Var>();
        p->value = std::move(v);
        p->requires_grad = needs_grad;
        return p;
    }

    void ensure_grad() {
        if (grad.data.size() != value.data.size()) grad = Tensor(value.shape);
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }

    void accumulate_grad(const real* g, size_t n) {
        ensure_grad();
        real* dst = grad.ptr();
        for (size_t i = 0; i < n; ++i) dst[i] += g[i];
    }
};

inline bool any_requires(const std::vector<VarPtr>& vars) {
    for (const auto& v : vars)
        if (v->requires_grad) return true;
    return false;
}

// Reverse-mode sweep from a scalar root.
inline void backward(const VarPtr& root) {
    FLOC_CHECK(root->value.numel() == 1, "backward: root must be a scalar");
    // Iterative topological order.
    std::vector<Var*> order;
    std::unordered_set<Var*> visited;
    std::vector<std::pair<Var*, size_t>> stack{{root.get(), 0}};
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx == 0 && !visited.insert(node).second) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            Var* next = node->parents[idx++].get();
            if (!visited.count(next)) stack.push_back({next, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var* node = *it;
        if (node->backward_fn && node->grad.data.size() == node->value.data.size()) node->backward_fn(*node);
    }
}

// ---------------------------------------------------------------------------
// Ops. Values are computed eagerly; closures capture what backward needs.

enum class PadMode { zero, reflect };

// x: [Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout]. Square stride. Reflect
// padding avoids the implicit position encoding zero borders leak into deep
// feature stacks.
inline VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& b, int stride, int pad,
                     PadMode pad_mode = PadMode::zero) {
    FLOC_CHECK(x->value.ndim() == 3 && w->value.ndim() == 4, "conv2d: bad ranks");
    const int cin = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    FLOC_CHECK(w->value.dim(1) == cin, "conv2d: channel mismatch (x has ", cin, ", w expects ", w->value.dim(1), ")");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    FLOC_CHECK(oh > 0 && ow > 0, "conv2d: output would be empty");
    const bool reflect = pad_mode == PadMode::reflect;

    const int K = cin * kh * kw;
    const int N = oh * ow;
    auto cols = std::make_shared<Tensor>(std::vector<int>{K, N});
    {
        real* cp = cols->ptr();
        const real* xp = x->value.ptr();
        for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    real* row = cp + (static_cast<size_t>(c) * kh * kw + static_cast<size_t>(ky) * kw + kx) * N;
                    for (int oy = 0; oy < oh; ++oy) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) {
                            if (!reflect) {
                                for (int ox = 0; ox < ow; ++ox) row[oy * ow + ox] = 0;
                                continue;
                            }
                            iy = detail::reflect101(iy, h);
                        }
                        const real* xrow = xp + (static_cast<size_t>(c) * h + iy) * wd;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < wd)
                                row[oy * ow + ox] = xrow[ix];
                            else
                                row[oy * ow + ox] = reflect ? xrow[detail::reflect101(ix, wd)] : 0;
                        }
                    }
                }
    }

    Tensor out({cout, oh, ow});
    blas::matmul(w->value.ptr(), cols->ptr(), out.ptr(), cout, K, N);
    if (b) {
        real* op = out.ptr();
        for (int o = 0; o < cout; ++o) {
            const real bv = b->value.data[static_cast<size_t>(o)];
            for (int i = 0; i < N; ++i) op[static_cast<size_t>(o) * N + i] += bv;
        }
    }

    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    if (!node->requires_grad) return node;
    node->parents = {x, w};
    if (b) node->parents.push_back(b);
    // cols are only needed for dW.
    if (!w->requires_grad) cols.reset();

    node->backward_fn = [x, w, b, cols, cin, h, wd, cout, kh, kw, oh, ow, stride, pad, K, N, reflect](Var& self) {
        const real* go = self.grad.ptr();
        if (w->requires_grad) {
            w->ensure_grad();
            blas::matmul_abt(go, cols->ptr(), w->grad.ptr(), cout, N, K, /*accumulate=*/true);
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            for (int o = 0; o < cout; ++o) {
                real s = 0;
                for (int i = 0; i < N; ++i) s += go[static_cast<size_t>(o) * N + i];
                b->grad.data[static_cast<size_t>(o)] += s;
            }
        }
        if (x->requires_grad) {
            x->ensure_grad();
            // dcols = w^T * gOut, then col2im accumulate.
            Tensor wt({K, cout});
            for (int o = 0; o < cout; ++o)
                for (int k = 0; k < K; ++k)
                    wt.data[static_cast<size_t>(k) * cout + o] = w->value.data[static_cast<size_t>(o) * K + k];
            Tensor dcols({K, N});
            blas::matmul(wt.ptr(), go, dcols.ptr(), K, cout, N);
            real* gx = x->grad.ptr();
            const real* dc = dcols.ptr();
            for (int c = 0; c < cin; ++c)
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const real* row = dc + (static_cast<size_t>(c) * kh * kw + static_cast<size_t>(ky) * kw + kx) * N;
                        for (int oy = 0; oy < oh; ++oy) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) {
                                if (!reflect) continue;
                                iy = detail::reflect101(iy, h);
                            }
                            real* gxrow = gx + (static_cast<size_t>(c) * h + iy) * wd;
                            for (int ox = 0; ox < ow; ++ox) {
                                int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= wd) {
                                    if (!reflect) continue;
                                    ix = detail::reflect101(ix, wd);
                                }
                                gxrow[ix] += row[oy * ow + ox];
                            }
                        }
                    }
        }
    };
    return node;
}

inline VarPtr relu(const VarPtr& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = v > 0 ? v : 0;
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        const real* ov = self.value.ptr();
        real* gx = x->grad.ptr();
        for (size_t i = 0; i < self.value.data.size(); ++i)
            if (ov[i] > 0) gx[i] += go[i];
    };
    return node;
}

inline VarPtr sigmoid(const VarPtr& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        const real* y = self.value.ptr();
        real* gx = x->grad.ptr();
        for (size_t i = 0; i < self.value.data.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
    };
    return node;
}

// Channel-wise (spatial) dropout on [C,H,W]; kept channels scale by 1/(1-p).
inline VarPtr dropout2d(const VarPtr& x, real rate, Rng& rng) {
    FLOC_CHECK(rate >= 0 && rate < 1, "dropout2d: rate must be in [0,1), got ", rate);
    if (rate == 0) return x;
    const int c = x->value.dim(0);
    const size_t plane = x->value.data.size() / static_cast<size_t>(c);
    auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) (*mask)[static_cast<size_t>(i)] = rng.bernoulli(rate) ? 0 : 1;
    const real scale = 1.0 / (1.0 - rate);

    Tensor out = x->value;
    for (int i = 0; i < c; ++i) {
        real* row = out.ptr() + static_cast<size_t>(i) * plane;
        const real f = (*mask)[static_cast<size_t>(i)] ? scale : 0.0;
        for (size_t j = 0; j < plane; ++j) row[j] *= f;
    }
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x, mask, c, plane, scale](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        real* gx = x->grad.ptr();
        for (int i = 0; i < c; ++i) {
            if (!(*mask)[static_cast<size_t>(i)]) continue;
            const real* grow = go + static_cast<size_t>(i) * plane;
            real* gxrow = gx + static_cast<size_t>(i) * plane;
            for (size_t j = 0; j < plane; ++j) gxrow[j] += scale * grow[j];
        }
    };
    return node;
}

// Bilinear resize on [C,h,w] (same half-pixel convention as image resizing).
inline VarPtr upsample_bilinear(const VarPtr& x, int oh, int ow) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (oh == h && ow == w) return x;
    auto ty = std::make_shared<std::vector<detail::LinearTap>>(detail::bilinear_taps(h, oh));
    auto tx = std::make_shared<std::vector<detail::LinearTap>>(detail::bilinear_taps(w, ow));
    Tensor out({c, oh, ow});
    for (int ci = 0; ci < c; ++ci) {
        const real* xp = x->value.ptr() + static_cast<size_t>(ci) * h * w;
        real* op = out.ptr() + static_cast<size_t>(ci) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const auto& ry = (*ty)[static_cast<size_t>(y)];
            for (int xx = 0; xx < ow; ++xx) {
                const auto& rx = (*tx)[static_cast<size_t>(xx)];
                op[static_cast<size_t>(y) * ow + xx] =
                    ry.w0 * (rx.w0 * xp[static_cast<size_t>(ry.i0) * w + rx.i0] +
                             rx.w1 * xp[static_cast<size_t>(ry.i0) * w + rx.i1]) +
                    ry.w1 * (rx.w0 * xp[static_cast<size_t>(ry.i1) * w + rx.i0] +
                             rx.w1 * xp[static_cast<size_t>(ry.i1) * w + rx.i1]);
            }
        }
    }
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x, ty, tx, c, h, w, oh, ow](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        real* gx = x->grad.ptr();
        for (int ci = 0; ci < c; ++ci) {
            const real* grow = go + static_cast<size_t>(ci) * oh * ow;
            real* gxp = gx + static_cast<size_t>(ci) * h * w;
            for (int y = 0; y < oh; ++y) {
                const auto& ry = (*ty)[static_cast<size_t>(y)];
                for (int xx = 0; xx < ow; ++xx) {
                    const auto& rx = (*tx)[static_cast<size_t>(xx)];
                    const real g = grow[static_cast<size_t>(y) * ow + xx];
                    gxp[static_cast<size_t>(ry.i0) * w + rx.i0] += ry.w0 * rx.w0 * g;
                    gxp[static_cast<size_t>(ry.i0) * w + rx.i1] += ry.w0 * rx.w1 * g;
                    gxp[static_cast<size_t>(ry.i1) * w + rx.i0] += ry.w1 * rx.w0 * g;
                    gxp[static_cast<size_t>(ry.i1) * w + rx.i1] += ry.w1 * rx.w1 * g;
                }
            }
        }
    };
    return node;
}

// Per-cell RMS normalization across channels on [C,h,w]; keeps branch
// feature scales bounded through training (the contrastive stage leaves raw
// norms unconstrained otherwise).
inline VarPtr rms_norm_cells(const VarPtr& x, real eps = 1e-6) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int cells = h * w;
    Tensor out({c, h, w});
    auto inv_r = std::make_shared<std::vector<real>>(static_cast<size_t>(cells));
    const real* xp = x->value.ptr();
    real* op = out.ptr();
    for (int i = 0; i < cells; ++i) {
        real m = 0;
        for (int ci = 0; ci < c; ++ci) {
            const real v = xp[static_cast<size_t>(ci) * cells + i];
            m += v * v;
        }
        m /= static_cast<real>(c);
        const real inv = 1.0 / std::sqrt(m + eps);
        (*inv_r)[static_cast<size_t>(i)] = inv;
        for (int ci = 0; ci < c; ++ci)
            op[static_cast<size_t>(ci) * cells + i] = xp[static_cast<size_t>(ci) * cells + i] * inv;
    }
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x, inv_r, c, cells](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        const real* xp2 = x->value.ptr();
        real* gx = x->grad.ptr();
        for (int i = 0; i < cells; ++i) {
            const real inv = (*inv_r)[static_cast<size_t>(i)];
            real gx_dot = 0;
            for (int ci = 0; ci < c; ++ci)
                gx_dot += go[static_cast<size_t>(ci) * cells + i] * xp2[static_cast<size_t>(ci) * cells + i];
            const real coef = gx_dot * inv * inv * inv / static_cast<real>(c);
            for (int ci = 0; ci < c; ++ci)
                gx[static_cast<size_t>(ci) * cells + i] +=
                    go[static_cast<size_t>(ci) * cells + i] * inv - coef * xp2[static_cast<size_t>(ci) * cells + i];
        }
    };
    return node;
}

inline VarPtr concat_channels(const std::vector<VarPtr>& xs) {
    FLOC_CHECK(!xs.empty(), "concat_channels: empty input list");
    const int h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
    int ctot = 0;
    for (const auto& x : xs) {
        FLOC_CHECK(x->value.dim(1) == h && x->value.dim(2) == w, "concat_channels: spatial mismatch");
        ctot += x->value.dim(0);
    }
    Tensor out({ctot, h, w});
    size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data.begin(), x->value.data.end(), out.data.begin() + static_cast<long>(off));
        off += x->value.data.size();
    }
    auto node = Var::make(std::move(out));
    node->requires_grad = any_requires(xs);
    if (!node->requires_grad) return node;
    node->parents = xs;
    node->backward_fn = [xs](Var& self) {
        size_t off2 = 0;
        for (const auto& x : xs) {
            if (x->requires_grad) x->accumulate_grad(self.grad.ptr() + off2, x->value.data.size());
            off2 += x->value.data.size();
        }
    };
    return node;
}

// [C,h,w] -> [h*w, C]: cell-major embeddings for projections and the head.
inline VarPtr to_cells(const VarPtr& x) {
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int cells = h * w;
    Tensor out({cells, c});
    const real* xp = x->value.ptr();
    real* op = out.ptr();
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < cells; ++i) op[static_cast<size_t>(i) * c + ci] = xp[static_cast<size_t>(ci) * cells + i];
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x, c, cells](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        real* gx = x->grad.ptr();
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < cells; ++i)
                gx[static_cast<size_t>(ci) * cells + i] += go[static_cast<size_t>(i) * c + ci];
    };
    return node;
}

// [h*w, 1] -> [1, h, w]; the layouts coincide, so this is a shape change.
inline VarPtr cells_to_plane(const VarPtr& x, int h, int w) {
    FLOC_CHECK(x->value.ndim() == 2 && x->value.dim(1) == 1 && x->value.dim(0) == h * w,
               "cells_to_plane: expected [h*w,1]");
    Tensor out({1, h, w});
    out.data = x->value.data;
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x](Var& self) { x->accumulate_grad(self.grad.ptr(), self.grad.data.size()); };
    return node;
}

// x: [N,K], w: [M,K], b: [M] -> [N,M].
inline VarPtr linear(const VarPtr& x, const VarPtr& w, const VarPtr& b) {
    const int n = x->value.dim(0), k = x->value.dim(1);
    const int m = w->value.dim(0);
    FLOC_CHECK(w->value.dim(1) == k, "linear: inner dimension mismatch");
    Tensor out({n, m});
    blas::matmul_abt(x->value.ptr(), w->value.ptr(), out.ptr(), n, k, m);
    if (b) {
        FLOC_CHECK(b->value.numel() == m, "linear: bias size mismatch");
        real* op = out.ptr();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) op[static_cast<size_t>(i) * m + j] += b->value.data[static_cast<size_t>(j)];
    }
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    if (!node->requires_grad) return node;
    node->parents = {x, w};
    if (b) node->parents.push_back(b);
    node->backward_fn = [x, w, b, n, k, m](Var& self) {
        const real* go = self.grad.ptr();
        if (x->requires_grad) {
            x->ensure_grad();
            blas::matmul(go, w->value.ptr(), x->grad.ptr(), n, m, k, /*accumulate=*/true);
        }
        if (w->requires_grad) {
            w->ensure_grad();
            real* gw = w->grad.ptr();
            const real* xp = x->value.ptr();
            for (int i = 0; i < n; ++i) {
                const real* grow = go + static_cast<size_t>(i) * m;
                const real* xrow = xp + static_cast<size_t>(i) * k;
                for (int j = 0; j < m; ++j) {
                    const real g = grow[j];
                    if (g == 0) continue;
                    real* gwrow = gw + static_cast<size_t>(j) * k;
                    for (int p = 0; p < k; ++p) gwrow[p] += g * xrow[p];
                }
            }
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) b->grad.data[static_cast<size_t>(j)] += go[static_cast<size_t>(i) * m + j];
        }
    };
    return node;
}

// Elementwise sum of same-shaped inputs.
inline VarPtr addn(const std::vector<VarPtr>& xs) {
    FLOC_CHECK(!xs.empty(), "addn: empty input list");
    Tensor out = xs[0]->value;
    for (size_t i = 1; i < xs.size(); ++i) {
        FLOC_CHECK(xs[i]->value.data.size() == out.data.size(), "addn: shape mismatch");
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += xs[i]->value.data[j];
    }
    auto node = Var::make(std::move(out));
    node->requires_grad = any_requires(xs);
    if (!node->requires_grad) return node;
    node->parents = xs;
    node->backward_fn = [xs](Var& self) {
        for (const auto& x : xs)
            if (x->requires_grad) x->accumulate_grad(self.grad.ptr(), self.grad.data.size());
    };
    return node;
}

inline VarPtr scale(const VarPtr& x, real c) {
    Tensor out = x->value;
    for (auto& v : out.data) v *= c;
    auto node = Var::make(std::move(out));
    node->requires_grad = x->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {x};
    node->backward_fn = [x, c](Var& self) {
        x->ensure_grad();
        const real* go = self.grad.ptr();
        real* gx = x->grad.ptr();
        for (size_t i = 0; i < self.grad.data.size(); ++i) gx[i] += c * go[i];
    };
    return node;
}

// ---------------------------------------------------------------------------
// Loss nodes

// Scalar node: mean pair_contrast over a drawn sample set. Gradients for the
// cell grids are materialized during the forward pass (grids may alias, e.g.
// the within-image loss pools from the anchor grid itself).
inline VarPtr contrast_loss_node(const PixelSampleSet& set, const VarPtr& anchor_cells,
                                 const std::vector<VarPtr>& pool_cells, const ContrastConfig& cfg,
                                 ContrastLossResult* result_out = nullptr) {
    EmbeddingGrid anchor{anchor_cells->value.dim(0), 1, anchor_cells->value.dim(1), anchor_cells->value.ptr()};
    std::vector<EmbeddingGrid> pools;
    for (const auto& p : pool_cells)
        pools.push_back({p->value.dim(0), 1, p->value.dim(1), p->value.ptr()});

    // One gradient buffer per distinct var.
    std::vector<VarPtr> distinct{anchor_cells};
    for (const auto& p : pool_cells)
        if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
    auto buffers = std::make_shared<std::vector<Tensor>>();
    std::unordered_map<Var*, real*> buf_of;
    const bool want_grad = any_requires(distinct);
    if (want_grad) {
        buffers->reserve(distinct.size());
        for (const auto& v : distinct) {
            buffers->emplace_back(v->value.shape);
            buf_of[v.get()] = buffers->back().ptr();
        }
    }
    std::vector<real*> pool_bufs;
    for (const auto& p : pool_cells) pool_bufs.push_back(want_grad ? buf_of[p.get()] : nullptr);

    const auto res = contrast_loss_from_sets(set, anchor, pools, cfg, want_grad ? buf_of[anchor_cells.get()] : nullptr,
                                             want_grad ? pool_bufs : std::vector<real*>{});
    if (result_out) *result_out = res;

    Tensor out({1});
    out.data[0] = res.value;
    auto node = Var::make(std::move(out));
    node->requires_grad = want_grad;
    if (!want_grad) return node;
    node->parents = distinct;
    node->backward_fn = [distinct, buffers](Var& self) {
        const real g = self.grad.data[0];
        for (size_t i = 0; i < distinct.size(); ++i) {
            if (!distinct[i]->requires_grad) continue;
            distinct[i]->ensure_grad();
            const real* buf = (*buffers)[i].ptr();
            real* dst = distinct[i]->grad.ptr();
            for (size_t j = 0; j < (*buffers)[i].data.size(); ++j) dst[j] += g * buf[j];
        }
    };
    return node;
}

// Scalar node: focal cross-entropy of a [1,H,W] probability map against a mask.
inline VarPtr focal_loss_node(const VarPtr& probs, const Mask& mask, const FocalConfig& cfg) {
    FLOC_CHECK(probs->value.ndim() == 3 && probs->value.dim(0) == 1, "focal_loss_node: expected [1,H,W] probs");
    const int h = probs->value.dim(1), w = probs->value.dim(2);
    auto buf = std::make_shared<Tensor>(probs->value.shape);
    const real v = focal_ce_raw(probs->value.ptr(), h, w, mask, cfg, probs->requires_grad ? buf->ptr() : nullptr);
    Tensor out({1});
    out.data[0] = v;
    auto node = Var::make(std::move(out));
    node->requires_grad = probs->requires_grad;
    if (!node->requires_grad) return node;
    node->parents = {probs};
    node->backward_fn = [probs, buf](Var& self) {
        probs->ensure_grad();
        const real g = self.grad.data[0];
        real* dst = probs->grad.ptr();
        const real* src = buf->ptr();
        for (size_t i = 0; i < buf->data.size(); ++i) dst[i] += g * src[i];
    };
    return node;
}

// ---------------------------------------------------------------------------

inline Tensor image_to_tensor(const Image& img) {
    Tensor t({img.c, img.h, img.w});
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t.data[(static_cast<size_t>(ch) * img.h + y) * img.w + x] = img.at(y, x, ch);
    return t;
}

} // namespace floc
