#ifndef PIXELDIFF_AUTOGRAD_HPP
#define PIXELDIFF_AUTOGRAD_HPP

// Reverse-mode autodiff on a per-step tape. Image tensors are BHWC
// throughout: im2col rows are contiguous channel runs, the conv GEMM output
// lands directly in BHWC, and channel norms reuse the last-dim layer norm.
// conv2d recomputes im2col in the backward pass instead of caching it; the
// tape would otherwise hold every column buffer alive at once.

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "pixeldiff/tensor.hpp"

namespace pxd {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
class GraphT;

template <typename T>
struct VarT {
    int id = -1;
    GraphT<T>* g = nullptr;
    bool valid() const { return id >= 0; }
    const TensorT<T>& val() const;
    const std::vector<int>& shape() const;
};

template <typename T>
class GraphT {
public:
    struct Node {
        TensorT<T> value;                // owned result (empty for external leaves)
        const TensorT<T>* external = nullptr;
        TensorT<T> grad;
        std::function<void()> backward;
        bool needs_grad = false;
    };

    using Var = VarT<T>;

    // trainable leaf; the tensor must outlive the graph
    Var param(const TensorT<T>& t) { return param_with_grad(t, true); }

    // leaf with explicit gradient requirement (frozen weights skip their
    // weight gradients while activations still propagate)
    Var param_with_grad(const TensorT<T>& t, bool needs_grad) {
        Node n;
        n.external = &t;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return Var{(int)nodes_.size() - 1, this};
    }

    // non-trainable input
    Var input(TensorT<T> t) {
        Node n;
        n.value = std::move(t);
        nodes_.push_back(std::move(n));
        return Var{(int)nodes_.size() - 1, this};
    }

    Var make(TensorT<T> value, bool needs_grad) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return Var{(int)nodes_.size() - 1, this};
    }

    void set_backward(int id, std::function<void()> fn) { nodes_[id].backward = std::move(fn); }

    const TensorT<T>& value(int id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }

    // grad tensor, allocated on demand
    TensorT<T>& grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = TensorT<T>::zeros(value(id).shape);
        return n.grad;
    }
    bool has_grad(int id) const { return !nodes_[id].grad.empty(); }
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    void accum(int id, const T* g, int64_t n) {
        if (!nodes_[id].needs_grad) return;
        TensorT<T>& dst = grad(id);
        T* d = dst.data();
        for (int64_t i = 0; i < n; i++) d[i] += g[i];
    }
    void accum(int id, const TensorT<T>& g) { accum(id, g.data(), g.numel()); }

    void backward(Var loss) {
        TensorT<T>& g = grad(loss.id);
        for (int64_t i = 0; i < g.numel(); i++) g.at(i) = (T)1;
        for (int id = loss.id; id >= 0; id--) {
            Node& n = nodes_[id];
            if (n.backward && !n.grad.empty() && n.needs_grad) n.backward();
        }
    }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

template <typename T>
const TensorT<T>& VarT<T>::val() const {
    return g->value(id);
}
template <typename T>
const std::vector<int>& VarT<T>::shape() const {
    return g->value(id).shape;
}

namespace ag {

template <typename T>
using Var = VarT<T>;

// C[M,N] = op(A) * op(B), row-major buffers
template <typename T>
void gemm(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N, bool trans_a = false,
          bool trans_b = false, bool accumulate = false) {
    MatMap<T> c(C, M, N);
    if (!trans_a && !trans_b) {
        CMatMap<T> a(A, M, K), b(B, K, N);
        if (accumulate) c.noalias() += a * b; else c.noalias() = a * b;
    } else if (!trans_a && trans_b) {
        CMatMap<T> a(A, M, K), b(B, N, K);
        if (accumulate) c.noalias() += a * b.transpose(); else c.noalias() = a * b.transpose();
    } else if (trans_a && !trans_b) {
        CMatMap<T> a(A, K, M), b(B, K, N);
        if (accumulate) c.noalias() += a.transpose() * b; else c.noalias() = a.transpose() * b;
    } else {
        CMatMap<T> a(A, K, M), b(B, N, K);
        if (accumulate) c.noalias() += a.transpose() * b.transpose();
        else c.noalias() = a.transpose() * b.transpose();
    }
}

// ---- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    const TensorT<T>& vb = b.val();
    if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); i++) out.at(i) = va.at(i) + vb.at(i);
    bool ng = g->needs_grad(a.id) || g->needs_grad(b.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id, yi = y.id;
        g->set_backward(yi, [g, ai, bi, yi] {
            const TensorT<T>& gy = g->grad(yi);
            g->accum(ai, gy);
            g->accum(bi, gy);
        });
    }
    return y;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    const TensorT<T>& vb = b.val();
    if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape mismatch");
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); i++) out.at(i) = va.at(i) - vb.at(i);
    bool ng = g->needs_grad(a.id) || g->needs_grad(b.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id, yi = y.id;
        g->set_backward(yi, [g, ai, bi, yi] {
            const TensorT<T>& gy = g->grad(yi);
            g->accum(ai, gy);
            if (g->needs_grad(bi)) {
                TensorT<T>& gb = g->grad(bi);
                for (int64_t i = 0; i < gy.numel(); i++) gb.at(i) -= gy.at(i);
            }
        });
    }
    return y;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    const TensorT<T>& vb = b.val();
    if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); i++) out.at(i) = va.at(i) * vb.at(i);
    bool ng = g->needs_grad(a.id) || g->needs_grad(b.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id, yi = y.id;
        g->set_backward(yi, [g, ai, bi, yi] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& va2 = g->value(ai);
            const TensorT<T>& vb2 = g->value(bi);
            if (g->needs_grad(ai)) {
                TensorT<T>& ga = g->grad(ai);
                for (int64_t i = 0; i < gy.numel(); i++) ga.at(i) += gy.at(i) * vb2.at(i);
            }
            if (g->needs_grad(bi)) {
                TensorT<T>& gb = g->grad(bi);
                for (int64_t i = 0; i < gy.numel(); i++) gb.at(i) += gy.at(i) * va2.at(i);
            }
        });
    }
    return y;
}

template <typename T>
Var<T> scale(Var<T> a, double s) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); i++) out.at(i) = (T)(va.at(i) * s);
    bool ng = g->needs_grad(a.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, yi = y.id;
        g->set_backward(yi, [g, ai, yi, s] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T>& ga = g->grad(ai);
            for (int64_t i = 0; i < gy.numel(); i++) ga.at(i) += (T)(gy.at(i) * s);
        });
    }
    return y;
}

template <typename T>
Var<T> swish(Var<T> a) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); i++) {
        T x = va.at(i);
        T s = (T)(1.0 / (1.0 + std::exp((double)-x)));
        out.at(i) = x * s;
    }
    bool ng = g->needs_grad(a.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, yi = y.id;
        g->set_backward(yi, [g, ai, yi] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& va2 = g->value(ai);
            TensorT<T>& ga = g->grad(ai);
            for (int64_t i = 0; i < gy.numel(); i++) {
                T x = va2.at(i);
                T s = (T)(1.0 / (1.0 + std::exp((double)-x)));
                ga.at(i) += gy.at(i) * (s + x * s * (1 - s));
            }
        });
    }
    return y;
}

// ---- shape ------------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
    GraphT<T>* g = a.g;
    TensorT<T> out = a.val().reshaped(std::move(shape));  // shares the buffer
    bool ng = g->needs_grad(a.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, yi = y.id;
        g->set_backward(yi, [g, ai, yi] { g->accum(ai, g->grad(yi)); });
    }
    return y;
}

inline void permute_strides(const std::vector<int>& shape, std::vector<int64_t>& strides) {
    strides.resize(shape.size());
    int64_t s = 1;
    for (int i = (int)shape.size() - 1; i >= 0; i--) {
        strides[i] = s;
        s *= shape[i];
    }
}

template <typename T>
void permute_copy(const TensorT<T>& src, TensorT<T>& dst, const std::vector<int>& perm) {
    int nd = src.ndim();
    std::vector<int64_t> sstr, dstr;
    permute_strides(src.shape, sstr);
    permute_strides(dst.shape, dstr);
    std::vector<int64_t> map(nd);  // dst axis -> src stride
    for (int i = 0; i < nd; i++) map[i] = sstr[perm[i]];
    const T* sp = src.data();
    T* dp = dst.data();
    int64_t n = src.numel();
    std::vector<int> idx(nd, 0);
    // innermost dst axis iterated tightly
    int64_t inner = dst.shape[nd - 1];
    int64_t istride = map[nd - 1];
    for (int64_t base = 0; base < n; base += inner) {
        int64_t soff = 0;
        for (int i = 0; i < nd - 1; i++) soff += idx[i] * map[i];
        for (int64_t j = 0; j < inner; j++) dp[base + j] = sp[soff + j * istride];
        for (int i = nd - 2; i >= 0; i--) {
            if (++idx[i] < dst.shape[i]) break;
            idx[i] = 0;
        }
    }
}

template <typename T>
Var<T> permute(Var<T> a, const std::vector<int>& perm) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    std::vector<int> oshape(perm.size());
    for (size_t i = 0; i < perm.size(); i++) oshape[i] = va.shape[perm[i]];
    TensorT<T> out(oshape);
    permute_copy(va, out, perm);
    bool ng = g->needs_grad(a.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, yi = y.id;
        std::vector<int> inv(perm.size());
        for (size_t i = 0; i < perm.size(); i++) inv[perm[i]] = (int)i;
        g->set_backward(yi, [g, ai, yi, inv] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T> gx(g->value(ai).shape);
            permute_copy(gy, gx, inv);
            g->accum(ai, gx);
        });
    }
    return y;
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: empty");
    GraphT<T>* g = parts[0].g;
    const std::vector<int>& s0 = parts[0].val().shape;
    int nd = (int)s0.size();
    if (axis < 0) axis += nd;
    std::vector<int> oshape = s0;
    int total = 0;
    for (const auto& p : parts) total += p.val().shape[axis];
    oshape[axis] = total;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; i++) outer *= s0[i];
    for (int i = axis + 1; i < nd; i++) inner *= s0[i];

    TensorT<T> out(oshape);
    bool ng = false;
    int64_t off = 0;
    for (const auto& p : parts) {
        const TensorT<T>& v = p.val();
        int64_t chunk = (int64_t)v.shape[axis] * inner;
        const T* sp = v.data();
        T* dp = out.data();
        for (int64_t o = 0; o < outer; o++)
            std::copy(sp + o * chunk, sp + (o + 1) * chunk, dp + o * (int64_t)total * inner + off);
        off += chunk;
        ng = ng || g->needs_grad(p.id);
    }
    auto y = g->make(std::move(out), ng);
    if (ng) {
        std::vector<int> ids;
        std::vector<int64_t> chunks;
        for (const auto& p : parts) {
            ids.push_back(p.id);
            chunks.push_back((int64_t)p.val().shape[axis] * inner);
        }
        int yi = y.id;
        int64_t row = (int64_t)total * inner;
        g->set_backward(yi, [g, ids, chunks, yi, outer, row] {
            const TensorT<T>& gy = g->grad(yi);
            int64_t off2 = 0;
            for (size_t k = 0; k < ids.size(); k++) {
                if (g->needs_grad(ids[k])) {
                    TensorT<T>& gp = g->grad(ids[k]);
                    T* dp = gp.data();
                    const T* sp = gy.data();
                    for (int64_t o = 0; o < outer; o++) {
                        const T* src = sp + o * row + off2;
                        T* dst = dp + o * chunks[k];
                        for (int64_t i = 0; i < chunks[k]; i++) dst[i] += src[i];
                    }
                }
                off2 += chunks[k];
            }
        });
    }
    return y;
}

template <typename T>
Var<T> slice(Var<T> a, int axis, int start, int len) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    int nd = va.ndim();
    if (axis < 0) axis += nd;
    std::vector<int> oshape = va.shape;
    oshape[axis] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; i++) outer *= va.shape[i];
    for (int i = axis + 1; i < nd; i++) inner *= va.shape[i];
    int64_t srow = (int64_t)va.shape[axis] * inner;
    int64_t drow = (int64_t)len * inner;
    TensorT<T> out(oshape);
    for (int64_t o = 0; o < outer; o++)
        std::copy(va.data() + o * srow + start * inner, va.data() + o * srow + (start + len) * inner,
                  out.data() + o * drow);
    bool ng = g->needs_grad(a.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, yi = y.id;
        int64_t so = (int64_t)start * inner;
        g->set_backward(yi, [g, ai, yi, outer, srow, drow, so] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T>& ga = g->grad(ai);
            for (int64_t o = 0; o < outer; o++) {
                const T* sp = gy.data() + o * drow;
                T* dp = ga.data() + o * srow + so;
                for (int64_t i = 0; i < drow; i++) dp[i] += sp[i];
            }
        });
    }
    return y;
}

// ---- dense / matmul ---------------------------------------------------------

// x [..., din] @ w [din, dout] + b
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    const TensorT<T>& vw = w.val();
    int din = vw.shape[0], dout = vw.shape[1];
    if (vx.shape.back() != din) throw std::invalid_argument("linear: dim mismatch");
    int64_t rows = vx.numel() / din;
    std::vector<int> oshape = vx.shape;
    oshape.back() = dout;
    TensorT<T> out(oshape);
    gemm(vx.data(), vw.data(), out.data(), rows, din, dout);
    if (b.valid()) {
        const TensorT<T>& vb = b.val();
        T* po = out.data();
        for (int64_t r = 0; r < rows; r++)
            for (int c = 0; c < dout; c++) po[r * dout + c] += vb.at(c);
    }
    bool ng = g->needs_grad(x.id) || g->needs_grad(w.id) || (b.valid() && g->needs_grad(b.id));
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, wi = w.id, bi = b.valid() ? b.id : -1, yi = y.id;
        g->set_backward(yi, [g, xi, wi, bi, yi, rows, din, dout] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& vx2 = g->value(xi);
            const TensorT<T>& vw2 = g->value(wi);
            if (g->needs_grad(xi)) {
                TensorT<T>& gx = g->grad(xi);
                gemm(gy.data(), vw2.data(), gx.data(), rows, dout, din, false, true, true);
            }
            if (g->needs_grad(wi)) {
                TensorT<T>& gw = g->grad(wi);
                gemm(vx2.data(), gy.data(), gw.data(), din, rows, dout, true, false, true);
            }
            if (bi >= 0 && g->needs_grad(bi)) {
                TensorT<T>& gb = g->grad(bi);
                const T* p = gy.data();
                for (int64_t r = 0; r < rows; r++)
                    for (int c = 0; c < dout; c++) gb.at(c) += p[r * dout + c];
            }
        });
    }
    return y;
}

// batched matmul: a [G,M,K] @ b [G,K,N] (or b transposed: [G,N,K])
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool trans_b = false) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    const TensorT<T>& vb = b.val();
    int G = va.shape[0], M = va.shape[1], K = va.shape[2];
    int N = trans_b ? vb.shape[1] : vb.shape[2];
    int Kb = trans_b ? vb.shape[2] : vb.shape[1];
    if (vb.shape[0] != G || Kb != K) throw std::invalid_argument("bmm: shape mismatch");
    TensorT<T> out({G, M, N});
    const int64_t sa = (int64_t)M * K, sb = (int64_t)vb.shape[1] * vb.shape[2], so = (int64_t)M * N;
    for (int i = 0; i < G; i++)
        gemm(va.data() + i * sa, vb.data() + i * sb, out.data() + i * so, M, K, N, false, trans_b);
    bool ng = g->needs_grad(a.id) || g->needs_grad(b.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, bi = b.id, yi = y.id;
        g->set_backward(yi, [g, ai, bi, yi, G, M, K, N, sa, sb, so, trans_b] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& va2 = g->value(ai);
            const TensorT<T>& vb2 = g->value(bi);
            if (g->needs_grad(ai)) {
                TensorT<T>& ga = g->grad(ai);
                // dA = dY @ B^T   (or dY @ B when B was transposed)
                for (int i = 0; i < G; i++)
                    gemm(gy.data() + i * so, vb2.data() + i * sb, ga.data() + i * sa, M, N, K, false,
                         !trans_b, true);
            }
            if (g->needs_grad(bi)) {
                TensorT<T>& gb = g->grad(bi);
                for (int i = 0; i < G; i++) {
                    if (!trans_b)  // dB = A^T @ dY
                        gemm(va2.data() + i * sa, gy.data() + i * so, gb.data() + i * sb, K, M, N, true,
                             false, true);
                    else  // dB = dY^T @ A
                        gemm(gy.data() + i * so, va2.data() + i * sa, gb.data() + i * sb, N, M, K, true,
                             false, true);
                }
            }
        });
    }
    return y;
}

// ---- softmax / norms --------------------------------------------------------

template <typename T>
Var<T> softmax_last(Var<T> a) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    int C = va.shape.back();
    int64_t rows = va.numel() / C;
    TensorT<T> out(va.shape);
    const T* sp = va.data();
    T* dp = out.data();
    for (int64_t r = 0; r < rows; r++) {
        const T* x = sp + r * C;
        T* o = dp + r * C;
        T mx = x[0];
        for (int c = 1; c < C; c++) mx = std::max(mx, x[c]);
        double sum = 0;
        for (int c = 0; c < C; c++) {
            o[c] = (T)std::exp((double)(x[c] - mx));
            sum += o[c];
        }
        T inv = (T)(1.0 / sum);
        for (int c = 0; c < C; c++) o[c] *= inv;
    }
    bool ng = g->needs_grad(a.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, yi = y.id;
        g->set_backward(yi, [g, ai, yi, rows, C] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& vy = g->value(yi);
            TensorT<T>& ga = g->grad(ai);
            for (int64_t r = 0; r < rows; r++) {
                const T* dy = gy.data() + r * C;
                const T* yv = vy.data() + r * C;
                T* dx = ga.data() + r * C;
                double dot = 0;
                for (int c = 0; c < C; c++) dot += (double)dy[c] * yv[c];
                for (int c = 0; c < C; c++) dx[c] += yv[c] * (dy[c] - (T)dot);
            }
        });
    }
    return y;
}

// additive bias on attention scores from a per-batch key mask; mask is data,
// not a differentiable input. scores [B*heads, Q, K], bias [B, K].
template <typename T>
Var<T> add_key_bias(Var<T> scores, const TensorT<T>& bias, int heads) {
    GraphT<T>* g = scores.g;
    const TensorT<T>& vs = scores.val();
    int BH = vs.shape[0], Q = vs.shape[1], K = vs.shape[2];
    TensorT<T> out(vs.shape);
    const T* sp = vs.data();
    const T* bp = bias.data();
    T* dp = out.data();
    for (int bh = 0; bh < BH; bh++) {
        int b = bh / heads;
        for (int q = 0; q < Q; q++) {
            int64_t off = ((int64_t)bh * Q + q) * K;
            for (int k = 0; k < K; k++) dp[off + k] = sp[off + k] + bp[(int64_t)b * K + k];
        }
    }
    bool ng = g->needs_grad(scores.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int si = scores.id, yi = y.id;
        g->set_backward(yi, [g, si, yi] { g->accum(si, g->grad(yi)); });
    }
    return y;
}

// layer norm over the last dim
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-6) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    int C = vx.shape.back();
    int64_t rows = vx.numel() / C;
    TensorT<T> out(vx.shape);
    auto xhat = std::make_shared<TensorT<T>>(vx.shape);
    auto istd = std::make_shared<std::vector<T>>(rows);
    const TensorT<T>& vg = gamma.val();
    const TensorT<T>& vb = beta.val();
    for (int64_t r = 0; r < rows; r++) {
        const T* xp = vx.data() + r * C;
        T* hp = xhat->data() + r * C;
        T* op = out.data() + r * C;
        double mu = 0;
        for (int c = 0; c < C; c++) mu += xp[c];
        mu /= C;
        double var = 0;
        for (int c = 0; c < C; c++) {
            double d = xp[c] - mu;
            var += d * d;
        }
        var /= C;
        T is = (T)(1.0 / std::sqrt(var + eps));
        (*istd)[r] = is;
        for (int c = 0; c < C; c++) {
            hp[c] = (T)((xp[c] - mu) * is);
            op[c] = hp[c] * vg.at(c) + vb.at(c);
        }
    }
    bool ng = g->needs_grad(x.id) || g->needs_grad(gamma.id) || g->needs_grad(beta.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, gi = gamma.id, bi = beta.id, yi = y.id;
        g->set_backward(yi, [g, xi, gi, bi, yi, rows, C, xhat, istd] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& vg2 = g->value(gi);
            if (g->needs_grad(gi) || g->needs_grad(bi)) {
                TensorT<T>& gg = g->grad(gi);
                TensorT<T>& gb = g->grad(bi);
                for (int64_t r = 0; r < rows; r++) {
                    const T* dy = gy.data() + r * C;
                    const T* hp = xhat->data() + r * C;
                    for (int c = 0; c < C; c++) {
                        gg.at(c) += dy[c] * hp[c];
                        gb.at(c) += dy[c];
                    }
                }
            }
            if (g->needs_grad(xi)) {
                TensorT<T>& gx = g->grad(xi);
                for (int64_t r = 0; r < rows; r++) {
                    const T* dy = gy.data() + r * C;
                    const T* hp = xhat->data() + r * C;
                    T* dx = gx.data() + r * C;
                    double m1 = 0, m2 = 0;
                    for (int c = 0; c < C; c++) {
                        double dh = (double)dy[c] * vg2.at(c);
                        m1 += dh;
                        m2 += dh * hp[c];
                    }
                    m1 /= C;
                    m2 /= C;
                    T is = (*istd)[r];
                    for (int c = 0; c < C; c++) {
                        double dh = (double)dy[c] * vg2.at(c);
                        dx[c] += (T)(is * (dh - m1 - hp[c] * m2));
                    }
                }
            }
        });
    }
    return y;
}

// x viewed as [B, R, C]; y = x * (1 + sc) + sh with sc, sh [B, C]
template <typename T>
Var<T> film(Var<T> x, Var<T> sc, Var<T> sh) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    const TensorT<T>& vs = sc.val();
    int B = vs.shape[0], C = vs.shape[1];
    if (vx.shape.back() != C || vx.shape[0] != B) throw std::invalid_argument("film: shape mismatch");
    int64_t R = vx.numel() / ((int64_t)B * C);
    TensorT<T> out(vx.shape);
    const TensorT<T>& vt = sh.val();
    for (int b = 0; b < B; b++) {
        const T* sp = vs.data() + (int64_t)b * C;
        const T* tp = vt.data() + (int64_t)b * C;
        for (int64_t r = 0; r < R; r++) {
            int64_t off = ((int64_t)b * R + r) * C;
            for (int c = 0; c < C; c++) out.at(off + c) = vx.at(off + c) * (1 + sp[c]) + tp[c];
        }
    }
    bool ng = g->needs_grad(x.id) || g->needs_grad(sc.id) || g->needs_grad(sh.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, si = sc.id, ti = sh.id, yi = y.id;
        g->set_backward(yi, [g, xi, si, ti, yi, B, R, C] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& vx2 = g->value(xi);
            const TensorT<T>& vs2 = g->value(si);
            if (g->needs_grad(xi)) {
                TensorT<T>& gx = g->grad(xi);
                for (int b = 0; b < B; b++) {
                    const T* sp = vs2.data() + (int64_t)b * C;
                    for (int64_t r = 0; r < R; r++) {
                        int64_t off = ((int64_t)b * R + r) * C;
                        for (int c = 0; c < C; c++) gx.at(off + c) += gy.at(off + c) * (1 + sp[c]);
                    }
                }
            }
            if (g->needs_grad(si)) {
                TensorT<T>& gs = g->grad(si);
                for (int b = 0; b < B; b++)
                    for (int64_t r = 0; r < R; r++) {
                        int64_t off = ((int64_t)b * R + r) * C;
                        for (int c = 0; c < C; c++)
                            gs.at((int64_t)b * C + c) += gy.at(off + c) * vx2.at(off + c);
                    }
            }
            if (g->needs_grad(ti)) {
                TensorT<T>& gt = g->grad(ti);
                for (int b = 0; b < B; b++)
                    for (int64_t r = 0; r < R; r++) {
                        int64_t off = ((int64_t)b * R + r) * C;
                        for (int c = 0; c < C; c++) gt.at((int64_t)b * C + c) += gy.at(off + c);
                    }
            }
        });
    }
    return y;
}

// ---- conv / resampling ------------------------------------------------------

template <typename T>
void im2col(const TensorT<T>& x, int kh, int kw, int stride, int pad, TensorT<T>& col) {
    int B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    const T* xp = x.data();
    T* cp = col.data();
    int64_t row_len = (int64_t)kh * kw * C;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; b++) {
        for (int oy = 0; oy < Ho; oy++)
            for (int ox = 0; ox < Wo; ox++) {
                T* dst = cp + (((int64_t)b * Ho + oy) * Wo + ox) * row_len;
                for (int ky = 0; ky < kh; ky++) {
                    int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < kw; kx++) {
                        int ix = ox * stride - pad + kx;
                        T* d = dst + ((int64_t)ky * kw + kx) * C;
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                            const T* s = xp + (((int64_t)b * H + iy) * W + ix) * C;
                            std::copy(s, s + C, d);
                        } else {
                            std::fill(d, d + C, (T)0);
                        }
                    }
                }
            }
    }
}

template <typename T>
void col2im(const TensorT<T>& col, int kh, int kw, int stride, int pad, TensorT<T>& gx) {
    int B = gx.shape[0], H = gx.shape[1], W = gx.shape[2], C = gx.shape[3];
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    const T* cp = col.data();
    T* xp = gx.data();
    int64_t row_len = (int64_t)kh * kw * C;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; b++) {
        for (int oy = 0; oy < Ho; oy++)
            for (int ox = 0; ox < Wo; ox++) {
                const T* src = cp + (((int64_t)b * Ho + oy) * Wo + ox) * row_len;
                for (int ky = 0; ky < kh; ky++) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < kw; kx++) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        const T* s = src + ((int64_t)ky * kw + kx) * C;
                        T* d = xp + (((int64_t)b * H + iy) * W + ix) * C;
                        for (int c = 0; c < C; c++) d[c] += s[c];
                    }
                }
            }
    }
}

// x [B,H,W,Ci], w [kh,kw,Ci,Co], b [Co]
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    const TensorT<T>& vw = w.val();
    int B = vx.shape[0], H = vx.shape[1], W = vx.shape[2], Ci = vx.shape[3];
    int kh = vw.shape[0], kw = vw.shape[1], Co = vw.shape[3];
    if (vw.shape[2] != Ci) throw std::invalid_argument("conv2d: channel mismatch");
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    int64_t rows = (int64_t)B * Ho * Wo;
    int64_t rl = (int64_t)kh * kw * Ci;

    TensorT<T> col({(int)rows, (int)rl});
    im2col(vx, kh, kw, stride, pad, col);
    TensorT<T> out({B, Ho, Wo, Co});
    gemm(col.data(), vw.data(), out.data(), rows, rl, Co);
    if (b.valid()) {
        const TensorT<T>& vb = b.val();
        T* po = out.data();
        for (int64_t r = 0; r < rows; r++)
            for (int c = 0; c < Co; c++) po[r * Co + c] += vb.at(c);
    }
    bool ng = g->needs_grad(x.id) || g->needs_grad(w.id) || (b.valid() && g->needs_grad(b.id));
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, wi = w.id, bi = b.valid() ? b.id : -1, yi = y.id;
        g->set_backward(yi, [g, xi, wi, bi, yi, kh, kw, stride, pad, rows, rl, Co] {
            const TensorT<T>& gy = g->grad(yi);
            const TensorT<T>& vx2 = g->value(xi);
            const TensorT<T>& vw2 = g->value(wi);
            // im2col is recomputed here rather than cached on the tape
            TensorT<T> col2({(int)rows, (int)rl});
            im2col(vx2, kh, kw, stride, pad, col2);
            if (g->needs_grad(wi)) {
                TensorT<T>& gw = g->grad(wi);
                gemm(col2.data(), gy.data(), gw.data(), rl, rows, Co, true, false, true);
            }
            if (bi >= 0 && g->needs_grad(bi)) {
                TensorT<T>& gb = g->grad(bi);
                const T* p = gy.data();
                for (int64_t r = 0; r < rows; r++)
                    for (int c = 0; c < Co; c++) gb.at(c) += p[r * Co + c];
            }
            if (g->needs_grad(xi)) {
                TensorT<T>& dcol = col2;  // reuse the buffer
                gemm(gy.data(), vw2.data(), dcol.data(), rows, Co, rl, false, true);
                TensorT<T>& gx = g->grad(xi);
                col2im(dcol, kh, kw, stride, pad, gx);
            }
        });
    }
    return y;
}

template <typename T>
Var<T> avg_pool2(Var<T> x) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    int B = vx.shape[0], H = vx.shape[1], W = vx.shape[2], C = vx.shape[3];
    int Ho = H / 2, Wo = W / 2;
    TensorT<T> out({B, Ho, Wo, C});
    const T* xp = vx.data();
    T* op = out.data();
    for (int b = 0; b < B; b++)
        for (int oy = 0; oy < Ho; oy++)
            for (int ox = 0; ox < Wo; ox++) {
                T* d = op + (((int64_t)b * Ho + oy) * Wo + ox) * C;
                const T* s00 = xp + (((int64_t)b * H + 2 * oy) * W + 2 * ox) * C;
                const T* s01 = s00 + C;
                const T* s10 = s00 + (int64_t)W * C;
                const T* s11 = s10 + C;
                for (int c = 0; c < C; c++) d[c] = (T)0.25 * (s00[c] + s01[c] + s10[c] + s11[c]);
            }
    bool ng = g->needs_grad(x.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, yi = y.id;
        g->set_backward(yi, [g, xi, yi, B, H, W, C, Ho, Wo] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T>& gx = g->grad(xi);
            const T* sp = gy.data();
            T* dp = gx.data();
            for (int b = 0; b < B; b++)
                for (int oy = 0; oy < Ho; oy++)
                    for (int ox = 0; ox < Wo; ox++) {
                        const T* s = sp + (((int64_t)b * Ho + oy) * Wo + ox) * C;
                        T* d00 = dp + (((int64_t)b * H + 2 * oy) * W + 2 * ox) * C;
                        T* d10 = d00 + (int64_t)W * C;
                        for (int c = 0; c < C; c++) {
                            T v = (T)0.25 * s[c];
                            d00[c] += v;
                            d00[C + c] += v;
                            d10[c] += v;
                            d10[C + c] += v;
                        }
                    }
        });
    }
    return y;
}

template <typename T>
Var<T> upsample_nn2(Var<T> x) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    int B = vx.shape[0], H = vx.shape[1], W = vx.shape[2], C = vx.shape[3];
    TensorT<T> out({B, H * 2, W * 2, C});
    const T* xp = vx.data();
    T* op = out.data();
    for (int b = 0; b < B; b++)
        for (int yy = 0; yy < H; yy++)
            for (int xx = 0; xx < W; xx++) {
                const T* s = xp + (((int64_t)b * H + yy) * W + xx) * C;
                for (int dy = 0; dy < 2; dy++)
                    for (int dx = 0; dx < 2; dx++) {
                        T* d = op + (((int64_t)b * 2 * H + 2 * yy + dy) * 2 * W + 2 * xx + dx) * C;
                        std::copy(s, s + C, d);
                    }
            }
    bool ng = g->needs_grad(x.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, yi = y.id;
        g->set_backward(yi, [g, xi, yi, B, H, W, C] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T>& gx = g->grad(xi);
            const T* sp = gy.data();
            T* dp = gx.data();
            for (int b = 0; b < B; b++)
                for (int yy = 0; yy < H; yy++)
                    for (int xx = 0; xx < W; xx++) {
                        T* d = dp + (((int64_t)b * H + yy) * W + xx) * C;
                        for (int dy = 0; dy < 2; dy++)
                            for (int dx = 0; dx < 2; dx++) {
                                const T* s =
                                    sp + (((int64_t)b * 2 * H + 2 * yy + dy) * 2 * W + 2 * xx + dx) * C;
                                for (int c = 0; c < C; c++) d[c] += s[c];
                            }
                    }
        });
    }
    return y;
}

// ---- broadcast helpers ------------------------------------------------------

// x [B,N,C] + e [N,C]
template <typename T>
Var<T> add_rows(Var<T> x, Var<T> e) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    const TensorT<T>& ve = e.val();
    int B = vx.shape[0];
    int64_t rc = ve.numel();
    if (vx.numel() != (int64_t)B * rc) throw std::invalid_argument("add_rows: shape mismatch");
    TensorT<T> out(vx.shape);
    for (int b = 0; b < B; b++)
        for (int64_t i = 0; i < rc; i++) out.at((int64_t)b * rc + i) = vx.at((int64_t)b * rc + i) + ve.at(i);
    bool ng = g->needs_grad(x.id) || g->needs_grad(e.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, ei = e.id, yi = y.id;
        g->set_backward(yi, [g, xi, ei, yi, B, rc] {
            const TensorT<T>& gy = g->grad(yi);
            if (g->needs_grad(xi)) g->accum(xi, gy);
            if (g->needs_grad(ei)) {
                TensorT<T>& ge = g->grad(ei);
                for (int b = 0; b < B; b++)
                    for (int64_t i = 0; i < rc; i++) ge.at(i) += gy.at((int64_t)b * rc + i);
            }
        });
    }
    return y;
}

// per-sample select between a [B,L,C] and a shared row block nb [L,C];
// sel[b] == 1 picks nb (used for classifier-free null conditioning)
template <typename T>
Var<T> mix_rows(Var<T> a, Var<T> nb, const std::vector<uint8_t>& sel) {
    GraphT<T>* g = a.g;
    const TensorT<T>& va = a.val();
    const TensorT<T>& vn = nb.val();
    int B = va.shape[0];
    int64_t rc = vn.numel();
    TensorT<T> out(va.shape);
    for (int b = 0; b < B; b++) {
        const T* s = sel[b] ? vn.data() : va.data() + (int64_t)b * rc;
        std::copy(s, s + rc, out.data() + (int64_t)b * rc);
    }
    bool ng = g->needs_grad(a.id) || g->needs_grad(nb.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int ai = a.id, ni = nb.id, yi = y.id;
        auto selc = sel;
        g->set_backward(yi, [g, ai, ni, yi, selc, B, rc] {
            const TensorT<T>& gy = g->grad(yi);
            if (g->needs_grad(ai)) {
                TensorT<T>& ga = g->grad(ai);
                for (int b = 0; b < B; b++)
                    if (!selc[b])
                        for (int64_t i = 0; i < rc; i++)
                            ga.at((int64_t)b * rc + i) += gy.at((int64_t)b * rc + i);
            }
            if (g->needs_grad(ni)) {
                TensorT<T>& gn = g->grad(ni);
                for (int b = 0; b < B; b++)
                    if (selc[b])
                        for (int64_t i = 0; i < rc; i++) gn.at(i) += gy.at((int64_t)b * rc + i);
            }
        });
    }
    return y;
}

// ---- reductions -------------------------------------------------------------

// mean over axis 1 of [B,P,C] -> [B,C]
template <typename T>
Var<T> mean_axis1(Var<T> x) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    int B = vx.shape[0], P = vx.shape[1], C = vx.shape[2];
    TensorT<T> out({B, C}, (T)0);
    for (int b = 0; b < B; b++)
        for (int p = 0; p < P; p++)
            for (int c = 0; c < C; c++) out.at((int64_t)b * C + c) += vx.at(((int64_t)b * P + p) * C + c);
    for (int64_t i = 0; i < out.numel(); i++) out.at(i) /= (T)P;
    bool ng = g->needs_grad(x.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, yi = y.id;
        g->set_backward(yi, [g, xi, yi, B, P, C] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T>& gx = g->grad(xi);
            T inv = (T)(1.0 / P);
            for (int b = 0; b < B; b++)
                for (int p = 0; p < P; p++)
                    for (int c = 0; c < C; c++)
                        gx.at(((int64_t)b * P + p) * C + c) += gy.at((int64_t)b * C + c) * inv;
        });
    }
    return y;
}

// scalar mean of all elements; reduction accumulates in double
template <typename T>
Var<T> mean_all(Var<T> x) {
    GraphT<T>* g = x.g;
    const TensorT<T>& vx = x.val();
    int64_t n = vx.numel();
    double sum = 0;
    for (int64_t i = 0; i < n; i++) sum += (double)vx.at(i);
    TensorT<T> out({1});
    out.at(0) = (T)(sum / (double)n);
    bool ng = g->needs_grad(x.id);
    auto y = g->make(std::move(out), ng);
    if (ng) {
        int xi = x.id, yi = y.id;
        g->set_backward(yi, [g, xi, yi, n] {
            const TensorT<T>& gy = g->grad(yi);
            TensorT<T>& gx = g->grad(xi);
            T v = (T)((double)gy.at(0) / (double)n);
            for (int64_t i = 0; i < n; i++) gx.at(i) += v;
        });
    }
    return y;
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

}  // namespace ag

}  // namespace pxd

#endif
