#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "trace/common.hpp"
#include "trace/rng.hpp"

namespace trace {

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += " x ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

// Gradient recording can be suspended (evaluation passes, analysis).
namespace detail {
inline thread_local int nograd_depth = 0;
inline std::atomic<uint64_t> node_counter{1};
} // namespace detail

struct NoGradGuard {
    NoGradGuard() { ++detail::nograd_depth; }
    ~NoGradGuard() { --detail::nograd_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::nograd_depth == 0; }

template <class T>
struct StorageT;

template <class T>
class TensorT;

// One executed-operation record. Records form the tape: ids are assigned in
// execution order, so sorting reachable records by id gives a topological
// order for the reverse sweep.
template <class T>
struct NodeT {
    uint64_t id = 0;
    std::vector<TensorT<T>> inputs;
    std::weak_ptr<StorageT<T>> out;
    std::function<void(StorageT<T>&)> vjp;
    bool consumed = false;
};

template <class T>
struct StorageT {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<NodeT<T>> node;
};

template <class T>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(std::vector<int> shape) { return filled(std::move(shape), T(0)); }

    static TensorT filled(std::vector<int> shape, T value) {
        TensorT t;
        t.s_ = std::make_shared<StorageT<T>>();
        t.s_->data.assign(shape_numel(shape), value);
        t.s_->shape = std::move(shape);
        return t;
    }

    static TensorT from_data(std::vector<int> shape, std::vector<T> data) {
        if (shape_numel(shape) != data.size())
            throw DimError("data size " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
        TensorT t;
        t.s_ = std::make_shared<StorageT<T>>();
        t.s_->shape = std::move(shape);
        t.s_->data = std::move(data);
        return t;
    }

    static TensorT randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        TensorT t = zeros(std::move(shape));
        for (auto& v : t.s_->data) v = static_cast<T>(rng.normal() * stddev);
        return t;
    }

    static TensorT rand_uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
        TensorT t = zeros(std::move(shape));
        for (auto& v : t.s_->data) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<int>& shape() const { return s_->shape; }
    size_t numel() const { return s_->data.size(); }
    int dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(s_->shape.size()); }

    const std::vector<T>& data() const { return s_->data; }
    std::vector<T>& data() { return s_->data; }
    const std::vector<T>& grad() const { return s_->grad; }

    TensorT& set_requires_grad(bool flag = true) {
        s_->requires_grad = flag;
        return *this;
    }
    bool requires_grad() const { return s_->requires_grad; }

    void zero_grad() { s_->grad.clear(); }

    T item() const {
        if (numel() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape()));
        return s_->data[0];
    }

    std::shared_ptr<StorageT<T>> storage() const { return s_; }

private:
    std::shared_ptr<StorageT<T>> s_;
};

namespace detail {

template <class T>
void check_finite(const StorageT<T>& s, const char* opname) {
    if (!debug_checks()) return;
    for (const T v : s.data)
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError(std::string("non-finite value produced by ") + opname);
}

template <class T>
std::vector<T>& ensure_grad(StorageT<T>& s) {
    if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
    return s.grad;
}

template <class T, class F>
TensorT<T> make_output(const char* opname, std::vector<int> shape, std::vector<T> data,
                       std::vector<TensorT<T>> inputs, F vjp) {
    TensorT<T> out = TensorT<T>::from_data(std::move(shape), std::move(data));
    check_finite(*out.storage(), opname);
    bool needs = false;
    if (grad_enabled())
        for (const auto& in : inputs)
            if (in.requires_grad()) needs = true;
    if (needs) {
        auto node = std::make_shared<NodeT<T>>();
        node->id = node_counter.fetch_add(1);
        node->inputs = std::move(inputs);
        node->out = out.storage();
        node->vjp = std::move(vjp);
        out.storage()->node = node;
        out.storage()->requires_grad = true;
    }
    return out;
}

// ---- dense kernels (double accumulation) -------------------------------

template <class T>
void kernel_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    std::vector<double> row(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = static_cast<double>(arow[kk]);
            const T* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) row[static_cast<size_t>(j)] += av * static_cast<double>(brow[j]);
        }
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] = static_cast<T>(row[static_cast<size_t>(j)]);
    }
}

// C(m x n) = A^T B from A (k x m), B (k x n): accumulated as rank-1 updates.
template <class T>
void kernel_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    std::vector<double> acc(static_cast<size_t>(m) * n, 0.0);
    for (int kk = 0; kk < k; ++kk) {
        const T* arow = a + static_cast<size_t>(kk) * m;
        const T* brow = b + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            const double av = static_cast<double>(arow[i]);
            double* crow = acc.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * static_cast<double>(brow[j]);
        }
    }
    for (size_t i = 0; i < acc.size(); ++i) c[i] = static_cast<T>(acc[i]);
}

template <class T>
std::vector<T> transpose_copy(const T* a, int rows, int cols) {
    std::vector<T> out(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
    return out;
}

struct AxisSpan {
    size_t outer, len, inner;
};

inline AxisSpan axis_span(const std::vector<int>& shape, int axis) {
    if (axis < 0) axis += static_cast<int>(shape.size());
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw UsageError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape));
    AxisSpan s{1, static_cast<size_t>(shape[static_cast<size_t>(axis)]), 1};
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<size_t>(shape[static_cast<size_t>(i)]);
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i)
        s.inner *= static_cast<size_t>(shape[i]);
    return s;
}

} // namespace detail

// ---- operations ---------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b, bool trans_a = false,
                  bool trans_b = false) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw DimError("matmul expects 2-d tensors, got " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    const int m = trans_a ? a.dim(1) : a.dim(0);
    const int ka = trans_a ? a.dim(0) : a.dim(1);
    const int kb = trans_b ? b.dim(1) : b.dim(0);
    const int n = trans_b ? b.dim(0) : b.dim(1);
    if (ka != kb)
        throw DimError("matmul inner dimensions differ: " + shape_str(a.shape()) +
                       (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                       (trans_b ? "^T" : ""));

    std::vector<T> av, bv;
    const T* ap = a.data().data();
    const T* bp = b.data().data();
    if (trans_a) {
        av = detail::transpose_copy(ap, a.dim(0), a.dim(1));
        ap = av.data();
    }
    if (trans_b) {
        bv = detail::transpose_copy(bp, b.dim(0), b.dim(1));
        bp = bv.data();
    }
    std::vector<T> out(static_cast<size_t>(m) * n);
    detail::kernel_nn(ap, bp, out.data(), m, ka, n);

    auto vjp = [a, b, trans_a, trans_b, m, k = ka, n](StorageT<T>& o) {
        const std::vector<T>& g = o.grad;
        // Gradients of C = opA(A) opB(B): route through the same kernels.
        auto add_into = [](std::vector<T>& dst, const std::vector<T>& src) {
            for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        };
        if (a.requires_grad()) {
            std::vector<T> da(a.numel());
            if (!trans_a) {
                // dA = G · opB(B)^T
                std::vector<T> bt;
                const T* bp2;
                if (!trans_b) {
                    bt = detail::transpose_copy(b.data().data(), b.dim(0), b.dim(1));
                    bp2 = bt.data();
                } else {
                    bp2 = b.data().data();
                }
                detail::kernel_nn(g.data(), bp2, da.data(), m, n, k);
            } else {
                // A is (k x m): dA = opB(B) · G^T -> computed transposed via TN.
                std::vector<T> bt;
                const T* bp2;
                if (!trans_b) {
                    bp2 = b.data().data();
                } else {
                    bt = detail::transpose_copy(b.data().data(), b.dim(0), b.dim(1));
                    bp2 = bt.data();
                }
                // dA(k x m) with dA[kk][i] = sum_j B[kk][j] G[i][j] = B · G^T
                std::vector<T> gt = detail::transpose_copy(g.data(), m, n);
                detail::kernel_nn(bp2, gt.data(), da.data(), k, n, m);
            }
            add_into(detail::ensure_grad(*a.storage()), da);
        }
        if (b.requires_grad()) {
            std::vector<T> db(b.numel());
            if (!trans_b) {
                // dB = opA(A)^T · G (k x n)
                std::vector<T> at;
                const T* ap2;
                if (!trans_a) {
                    ap2 = a.data().data(); // (m x k), kernel_tn handles the transpose
                    detail::kernel_tn(ap2, g.data(), db.data(), k, m, n);
                } else {
                    at = detail::transpose_copy(a.data().data(), a.dim(0), a.dim(1)); // (m x k)
                    detail::kernel_tn(at.data(), g.data(), db.data(), k, m, n);
                }
            } else {
                // B is (n x k): dB = G^T · opA(A) -> (n x k)
                std::vector<T> aeff;
                const T* ap2;
                if (!trans_a) {
                    ap2 = a.data().data();
                } else {
                    aeff = detail::transpose_copy(a.data().data(), a.dim(0), a.dim(1));
                    ap2 = aeff.data();
                }
                detail::kernel_tn(g.data(), ap2, db.data(), n, m, k);
            }
            add_into(detail::ensure_grad(*b.storage()), db);
        }
    };
    return detail::make_output("matmul", {m, n}, std::move(out), {a, b}, std::move(vjp));
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    const bool rowvec = (b.ndim() == 1 && a.ndim() == 2 && b.dim(0) == a.dim(1));
    if (!rowvec && a.shape() != b.shape())
        throw DimError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    std::vector<T> out(a.numel());
    if (rowvec) {
        const int rows = a.dim(0), cols = a.dim(1);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                out[static_cast<size_t>(i) * cols + j] =
                    a.data()[static_cast<size_t>(i) * cols + j] + b.data()[static_cast<size_t>(j)];
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    }
    auto vjp = [a, b, rowvec](StorageT<T>& o) {
        const auto& g = o.grad;
        if (a.requires_grad()) {
            auto& ga = detail::ensure_grad(*a.storage());
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = detail::ensure_grad(*b.storage());
            if (rowvec) {
                const int rows = a.dim(0), cols = a.dim(1);
                for (int j = 0; j < cols; ++j) {
                    double acc = static_cast<double>(gb[static_cast<size_t>(j)]);
                    for (int i = 0; i < rows; ++i)
                        acc += static_cast<double>(g[static_cast<size_t>(i) * cols + j]);
                    gb[static_cast<size_t>(j)] = static_cast<T>(acc);
                }
            } else {
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        }
    };
    return detail::make_output("add", a.shape(), std::move(out), {a, b}, std::move(vjp));
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, double factor) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(static_cast<double>(a.data()[i]) * factor);
    auto vjp = [a, factor](StorageT<T>& o) {
        if (!a.requires_grad()) return;
        auto& ga = detail::ensure_grad(*a.storage());
        for (size_t i = 0; i < o.grad.size(); ++i)
            ga[i] += static_cast<T>(static_cast<double>(o.grad[i]) * factor);
    };
    return detail::make_output("scale", a.shape(), std::move(out), {a}, std::move(vjp));
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw DimError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto vjp = [a, b](StorageT<T>& o) {
        const auto& g = o.grad;
        if (a.requires_grad()) {
            auto& ga = detail::ensure_grad(*a.storage());
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& gb = detail::ensure_grad(*b.storage());
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
        }
    };
    return detail::make_output("mul", a.shape(), std::move(out), {a, b}, std::move(vjp));
}

template <class T>
TensorT<T> relu(const TensorT<T>& a) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    auto vjp = [a](StorageT<T>& o) {
        if (!a.requires_grad()) return;
        auto& ga = detail::ensure_grad(*a.storage());
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (a.data()[i] > T(0)) ga[i] += o.grad[i];
    };
    return detail::make_output("relu", a.shape(), std::move(out), {a}, std::move(vjp));
}

template <class T>
TensorT<T> softmax(const TensorT<T>& a, int axis = -1) {
    const auto span = detail::axis_span(a.shape(), axis);
    std::vector<T> out(a.numel());
    for (size_t o = 0; o < span.outer; ++o) {
        for (size_t in = 0; in < span.inner; ++in) {
            const size_t base = o * span.len * span.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t l = 0; l < span.len; ++l)
                mx = std::max(mx, static_cast<double>(a.data()[base + l * span.inner]));
            double sum = 0.0;
            for (size_t l = 0; l < span.len; ++l) {
                const double e = std::exp(static_cast<double>(a.data()[base + l * span.inner]) - mx);
                out[base + l * span.inner] = static_cast<T>(e);
                sum += e;
            }
            for (size_t l = 0; l < span.len; ++l)
                out[base + l * span.inner] =
                    static_cast<T>(static_cast<double>(out[base + l * span.inner]) / sum);
        }
    }
    auto vjp = [a, span](StorageT<T>& o) {
        if (!a.requires_grad()) return;
        auto& ga = detail::ensure_grad(*a.storage());
        const auto& y = o.data;
        const auto& g = o.grad;
        for (size_t ot = 0; ot < span.outer; ++ot) {
            for (size_t in = 0; in < span.inner; ++in) {
                const size_t base = ot * span.len * span.inner + in;
                double dot = 0.0;
                for (size_t l = 0; l < span.len; ++l) {
                    const size_t idx = base + l * span.inner;
                    dot += static_cast<double>(g[idx]) * static_cast<double>(y[idx]);
                }
                for (size_t l = 0; l < span.len; ++l) {
                    const size_t idx = base + l * span.inner;
                    ga[idx] += static_cast<T>(static_cast<double>(y[idx]) *
                                              (static_cast<double>(g[idx]) - dot));
                }
            }
        }
    };
    return detail::make_output("softmax", a.shape(), std::move(out), {a}, std::move(vjp));
}

// Normalizes over the last axis; gain/bias are 1-d of that length.
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gain, const TensorT<T>& bias,
                      int axis = -1, double eps = 1e-5) {
    if (axis != -1 && axis != x.ndim() - 1)
        throw UsageError("layer_norm supports only the last axis");
    const auto span = detail::axis_span(x.shape(), -1);
    if (gain.ndim() != 1 || static_cast<size_t>(gain.dim(0)) != span.len ||
        bias.ndim() != 1 || static_cast<size_t>(bias.dim(0)) != span.len)
        throw DimError("layer_norm gain/bias shape mismatch: " + shape_str(gain.shape()) +
                       ", " + shape_str(bias.shape()) + " for " + shape_str(x.shape()));
    const size_t rows = span.outer;
    const size_t n = span.len;
    std::vector<T> out(x.numel());
    std::vector<T> xhat(x.numel());
    std::vector<double> inv_sigma(rows);
    for (size_t r = 0; r < rows; ++r) {
        const size_t base = r * n;
        double mean = 0.0;
        for (size_t j = 0; j < n; ++j) mean += static_cast<double>(x.data()[base + j]);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(x.data()[base + j]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        for (size_t j = 0; j < n; ++j) {
            const double h = (static_cast<double>(x.data()[base + j]) - mean) * inv;
            xhat[base + j] = static_cast<T>(h);
            out[base + j] = static_cast<T>(h * static_cast<double>(gain.data()[j]) +
                                           static_cast<double>(bias.data()[j]));
        }
    }
    auto vjp = [x, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma),
                rows, n](StorageT<T>& o) {
        const auto& g = o.grad;
        if (gain.requires_grad()) {
            auto& gg = detail::ensure_grad(*gain.storage());
            for (size_t j = 0; j < n; ++j) {
                double acc = static_cast<double>(gg[j]);
                for (size_t r = 0; r < rows; ++r)
                    acc += static_cast<double>(g[r * n + j]) * static_cast<double>(xhat[r * n + j]);
                gg[j] = static_cast<T>(acc);
            }
        }
        if (bias.requires_grad()) {
            auto& gb = detail::ensure_grad(*bias.storage());
            for (size_t j = 0; j < n; ++j) {
                double acc = static_cast<double>(gb[j]);
                for (size_t r = 0; r < rows; ++r) acc += static_cast<double>(g[r * n + j]);
                gb[j] = static_cast<T>(acc);
            }
        }
        if (x.requires_grad()) {
            auto& gx = detail::ensure_grad(*x.storage());
            for (size_t r = 0; r < rows; ++r) {
                const size_t base = r * n;
                double m1 = 0.0, m2 = 0.0;
                for (size_t j = 0; j < n; ++j) {
                    const double gy =
                        static_cast<double>(g[base + j]) * static_cast<double>(gain.data()[j]);
                    m1 += gy;
                    m2 += gy * static_cast<double>(xhat[base + j]);
                }
                m1 /= static_cast<double>(n);
                m2 /= static_cast<double>(n);
                for (size_t j = 0; j < n; ++j) {
                    const double gy =
                        static_cast<double>(g[base + j]) * static_cast<double>(gain.data()[j]);
                    gx[base + j] += static_cast<T>(
                        inv_sigma[r] * (gy - m1 - static_cast<double>(xhat[base + j]) * m2));
                }
            }
        }
    };
    return detail::make_output("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                               std::move(vjp));
}

template <class T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw DimError("embedding table must be 2-d, got " + shape_str(table.shape()));
    const int v = table.dim(0), d = table.dim(1);
    std::vector<T> out(ids.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || id >= v)
            throw UsageError("embedding id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(v) + ")");
        std::copy_n(table.data().data() + static_cast<size_t>(id) * d, d,
                    out.data() + i * static_cast<size_t>(d));
    }
    auto vjp = [table, ids, d](StorageT<T>& o) {
        if (!table.requires_grad()) return;
        auto& gt = detail::ensure_grad(*table.storage());
        for (size_t i = 0; i < ids.size(); ++i) {
            T* dst = gt.data() + static_cast<size_t>(ids[i]) * d;
            const T* src = o.grad.data() + i * static_cast<size_t>(d);
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    };
    return detail::make_output("embedding_lookup", {static_cast<int>(ids.size()), d},
                               std::move(out), {table}, std::move(vjp));
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int dim) {
    if (parts.empty()) throw UsageError("concat of zero tensors");
    if (dim != 0 && dim != 1) throw UsageError("concat supports 2-d tensors on dim 0 or 1");
    const int other = 1 - dim;
    for (const auto& p : parts) {
        if (p.ndim() != 2) throw DimError("concat expects 2-d tensors, got " + shape_str(p.shape()));
        if (p.dim(other) != parts[0].dim(other))
            throw DimError("concat shape mismatch: " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
    }
    int total = 0;
    for (const auto& p : parts) total += p.dim(dim);
    std::vector<int> shape(2);
    shape[static_cast<size_t>(dim)] = total;
    shape[static_cast<size_t>(other)] = parts[0].dim(other);
    std::vector<T> out(shape_numel(shape));
    const int rows = shape[0], cols = shape[1];
    int off = 0;
    for (const auto& p : parts) {
        if (dim == 0) {
            std::copy(p.data().begin(), p.data().end(),
                      out.begin() + static_cast<size_t>(off) * cols);
            off += p.dim(0);
        } else {
            const int pc = p.dim(1);
            for (int i = 0; i < rows; ++i)
                std::copy_n(p.data().data() + static_cast<size_t>(i) * pc, pc,
                            out.data() + static_cast<size_t>(i) * cols + off);
            off += pc;
        }
    }
    auto vjp = [parts, dim, rows, cols](StorageT<T>& o) {
        int off = 0;
        for (const auto& p : parts) {
            const int span = p.dim(dim);
            if (p.requires_grad()) {
                auto& gp = detail::ensure_grad(*p.storage());
                if (dim == 0) {
                    const size_t base = static_cast<size_t>(off) * cols;
                    for (size_t i = 0; i < gp.size(); ++i) gp[i] += o.grad[base + i];
                } else {
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < span; ++j)
                            gp[static_cast<size_t>(i) * span + j] +=
                                o.grad[static_cast<size_t>(i) * cols + off + j];
                }
            }
            off += span;
        }
    };
    std::vector<TensorT<T>> inputs = parts;
    return detail::make_output("concat", shape, std::move(out), std::move(inputs), std::move(vjp));
}

template <class T>
TensorT<T> slice(const TensorT<T>& a, int dim, int start, int len) {
    if (a.ndim() != 2) throw DimError("slice expects a 2-d tensor, got " + shape_str(a.shape()));
    if (dim != 0 && dim != 1) throw UsageError("slice supports dim 0 or 1");
    if (start < 0 || len <= 0 || start + len > a.dim(dim))
        throw DimError("slice range [" + std::to_string(start) + ", " +
                       std::to_string(start + len) + ") out of bounds for " +
                       shape_str(a.shape()));
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<int> shape = a.shape();
    shape[static_cast<size_t>(dim)] = len;
    std::vector<T> out(shape_numel(shape));
    if (dim == 0) {
        std::copy_n(a.data().data() + static_cast<size_t>(start) * cols,
                    static_cast<size_t>(len) * cols, out.data());
    } else {
        for (int i = 0; i < rows; ++i)
            std::copy_n(a.data().data() + static_cast<size_t>(i) * cols + start, len,
                        out.data() + static_cast<size_t>(i) * len);
    }
    auto vjp = [a, dim, start, len, rows, cols](StorageT<T>& o) {
        if (!a.requires_grad()) return;
        auto& ga = detail::ensure_grad(*a.storage());
        if (dim == 0) {
            const size_t base = static_cast<size_t>(start) * cols;
            for (size_t i = 0; i < o.grad.size(); ++i) ga[base + i] += o.grad[i];
        } else {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < len; ++j)
                    ga[static_cast<size_t>(i) * cols + start + j] +=
                        o.grad[static_cast<size_t>(i) * len + j];
        }
    };
    return detail::make_output("slice", shape, std::move(out), {a}, std::move(vjp));
}

// Inverted dropout: survivors scaled by 1/(1-p); p = 0 is the identity.
template <class T>
TensorT<T> dropout(const TensorT<T>& a, double p, uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw UsageError("dropout probability must lie in [0, 1)");
    if (p == 0.0) return a;
    Rng rng(seed);
    std::vector<uint8_t> keep(a.numel());
    const double inv = 1.0 / (1.0 - p);
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        keep[i] = rng.uniform() >= p ? 1 : 0;
        out[i] = keep[i] ? static_cast<T>(static_cast<double>(a.data()[i]) * inv) : T(0);
    }
    auto vjp = [a, keep = std::move(keep), inv](StorageT<T>& o) {
        if (!a.requires_grad()) return;
        auto& ga = detail::ensure_grad(*a.storage());
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (keep[i]) ga[i] += static_cast<T>(static_cast<double>(o.grad[i]) * inv);
    };
    return detail::make_output("dropout", a.shape(), std::move(out), {a}, std::move(vjp));
}

// Mean cross-entropy over rows whose target is not ignore_index.
template <class T>
TensorT<T> cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets,
                         int ignore_index = -1) {
    if (logits.ndim() != 2)
        throw DimError("cross_entropy expects 2-d logits, got " + shape_str(logits.shape()));
    const int n = logits.dim(0), v = logits.dim(1);
    if (static_cast<size_t>(n) != targets.size())
        throw DimError("cross_entropy target count " + std::to_string(targets.size()) +
                       " does not match logits rows " + std::to_string(n));
    long long count = 0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (t == ignore_index) continue;
        if (t < 0 || t >= v)
            throw UsageError("cross_entropy target " + std::to_string(t) + " out of range");
        const T* row = logits.data().data() + static_cast<size_t>(i) * v;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        total += std::log(sum) + mx - static_cast<double>(row[t]);
        ++count;
    }
    if (count == 0) throw UsageError("cross_entropy: all positions ignored");
    const double loss = total / static_cast<double>(count);
    auto vjp = [logits, targets, ignore_index, n, v, count](StorageT<T>& o) {
        if (!logits.requires_grad()) return;
        const double gscale = static_cast<double>(o.grad[0]) / static_cast<double>(count);
        auto& gl = detail::ensure_grad(*logits.storage());
        for (int i = 0; i < n; ++i) {
            const int t = targets[static_cast<size_t>(i)];
            if (t == ignore_index) continue;
            const T* row = logits.data().data() + static_cast<size_t>(i) * v;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double sum = 0.0;
            for (int j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
            T* grow = gl.data() + static_cast<size_t>(i) * v;
            for (int j = 0; j < v; ++j) {
                const double p = std::exp(static_cast<double>(row[j]) - mx) / sum;
                const double delta = (j == t) ? 1.0 : 0.0;
                grow[j] += static_cast<T>((p - delta) * gscale);
            }
        }
    };
    return detail::make_output("cross_entropy", {1}, std::vector<T>{static_cast<T>(loss)},
                               {logits}, std::move(vjp));
}

template <class T>
TensorT<T> sum(const TensorT<T>& a) {
    double total = 0.0;
    for (const T v : a.data()) total += static_cast<double>(v);
    auto vjp = [a](StorageT<T>& o) {
        if (!a.requires_grad()) return;
        auto& ga = detail::ensure_grad(*a.storage());
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[0];
    };
    return detail::make_output("sum", {1}, std::vector<T>{static_cast<T>(total)}, {a},
                               std::move(vjp));
}

// Reverse sweep from a scalar loss. Each recording may be swept once unless
// retain is set; a second sweep raises UsageError.
template <class T>
void backward(const TensorT<T>& loss, bool retain = false) {
    if (loss.numel() != 1)
        throw UsageError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    auto root = loss.storage();
    if (!root->node) {
        detail::ensure_grad(*root);
        root->grad[0] += T(1);
        return;
    }

    // Iterative DFS to collect reachable records.
    std::vector<std::shared_ptr<NodeT<T>>> nodes;
    std::unordered_set<const NodeT<T>*> seen;
    std::vector<std::shared_ptr<NodeT<T>>> stack{root->node};
    seen.insert(root->node.get());
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (n->consumed)
            throw UsageError("backward called twice on the same recording (use retain)");
        nodes.push_back(n);
        for (const auto& in : n->inputs) {
            const auto& s = in.storage();
            if (s->node && seen.insert(s->node.get()).second) stack.push_back(s->node);
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& x, const auto& y) { return x->id > y->id; });

    // Gradients of op outputs are per-sweep temporaries; only leaves keep
    // accumulating across sweeps.
    for (const auto& n : nodes)
        if (auto out = n->out.lock()) out->grad.clear();
    detail::ensure_grad(*root);
    root->grad[0] = T(1);
    for (const auto& n : nodes) {
        auto out = n->out.lock();
        if (!out || out->grad.empty()) continue;
        n->vjp(*out);
    }
    if (!retain) {
        for (const auto& n : nodes) {
            n->consumed = true;
            n->vjp = nullptr;
            n->inputs.clear();
        }
    }
}

// ---- named parameter registry -------------------------------------------

template <class T>
struct NamedParam {
    std::string name;
    std::string component;
    TensorT<T> tensor;
};

template <class T>
class ParameterSetT {
public:
    void add(std::string name, std::string component, TensorT<T> tensor) {
        tensor.set_requires_grad(true);
        offsets_.push_back(total_);
        total_ += tensor.numel();
        items_.push_back({std::move(name), std::move(component), std::move(tensor)});
    }

    size_t total_size() const { return total_; }
    const std::vector<NamedParam<T>>& items() const { return items_; }
    std::vector<NamedParam<T>>& items() { return items_; }

    std::vector<T> param_vector() const {
        std::vector<T> out;
        out.reserve(total_);
        for (const auto& p : items_)
            out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
        return out;
    }

    void set_params(const std::vector<T>& flat) {
        if (flat.size() != total_)
            throw DimError("parameter vector length " + std::to_string(flat.size()) +
                           " does not match registry size " + std::to_string(total_));
        size_t off = 0;
        for (auto& p : items_) {
            std::copy_n(flat.data() + off, p.tensor.numel(), p.tensor.data().data());
            off += p.tensor.numel();
        }
    }

    std::vector<T> grad_vector() const {
        std::vector<T> out(total_, T(0));
        size_t off = 0;
        for (const auto& p : items_) {
            const auto& g = p.tensor.grad();
            if (!g.empty()) std::copy(g.begin(), g.end(), out.begin() + off);
            off += p.tensor.numel();
        }
        return out;
    }

    void zero_grad() {
        for (auto& p : items_) p.tensor.zero_grad();
    }

    std::vector<std::string> component_labels() const {
        std::vector<std::string> out;
        for (const auto& p : items_)
            if (std::find(out.begin(), out.end(), p.component) == out.end())
                out.push_back(p.component);
        return out;
    }

    // Flat [begin, end) index ranges covered by a component label.
    std::vector<std::pair<size_t, size_t>> component_ranges(const std::string& label) const {
        std::vector<std::pair<size_t, size_t>> out;
        bool known = false;
        for (size_t i = 0; i < items_.size(); ++i) {
            if (items_[i].component != label) continue;
            known = true;
            const size_t b = offsets_[i];
            const size_t e = b + items_[i].tensor.numel();
            if (!out.empty() && out.back().second == b)
                out.back().second = e;
            else
                out.emplace_back(b, e);
        }
        if (!known) throw UsageError("unknown component label: " + label);
        return out;
    }

    std::vector<uint8_t> component_mask(const std::string& label) const {
        std::vector<uint8_t> mask(total_, 0);
        for (const auto& [b, e] : component_ranges(label))
            std::fill(mask.begin() + static_cast<long>(b), mask.begin() + static_cast<long>(e), 1);
        return mask;
    }

private:
    std::vector<NamedParam<T>> items_;
    std::vector<size_t> offsets_;
    size_t total_ = 0;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

} // namespace trace
