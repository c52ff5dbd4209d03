#pragma once

// Minimal dense-tensor engine with reverse-mode differentiation.
//
// Tensors are 64-bit real, row-major, and immutable once produced by an
// operation; only leaves (parameters, inputs) expose mutable storage. Every
// op validates its output for NaN/Inf and raises NumericError on the first
// non-finite value, so a diverging model fails loudly at the op that broke.
// Gradients accumulate (+=) into leaf .grad buffers until zero_grad().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ovfs/core/error.hpp"
#include "ovfs/core/gemm.hpp"
#include "ovfs/core/rng.hpp"

namespace ovfs {

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) {
        if (d <= 0) throw ShapeError("dimensions must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

class Tensor;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward;

    long numel() const { return long(data.size()); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// When set, ops produce graph-free leaves regardless of input flags. Used
// for frozen-encoder caching and inference.
inline thread_local int no_grad_depth = 0;

}  // namespace detail

struct NoGradGuard {
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
public:
    Tensor() = default;

    // ---- factories ----

    static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return filled(std::move(shape), 1.0); }

    static Tensor filled(Shape shape, double v) {
        long n = shape_numel(shape);
        return from_vec(std::move(shape), std::vector<double>(std::size_t(n), v));
    }

    static Tensor scalar(double v) { return from_vec({}, {v}); }

    static Tensor from_vec(Shape shape, std::vector<double> values) {
        if (shape_numel(shape) != long(values.size()))
            throw ShapeError("from_vec: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
        auto node = std::make_shared<detail::TensorNode>();
        node->shape = std::move(shape);
        node->data = std::move(values);
        return Tensor(std::move(node));
    }

    static Tensor randn(Shape shape, RngState& rng, double mean = 0.0, double stddev = 1.0) {
        long n = shape_numel(shape);
        std::vector<double> v(std::size_t(n));
        for (auto& x : v) x = rng.normal(mean, stddev);
        return from_vec(std::move(shape), std::move(v));
    }

    static Tensor rand_uniform(Shape shape, RngState& rng, double lo = 0.0, double hi = 1.0) {
        long n = shape_numel(shape);
        std::vector<double> v(std::size_t(n));
        for (auto& x : v) x = rng.uniform(lo, hi);
        return from_vec(std::move(shape), std::move(v));
    }

    // ---- structure ----

    bool defined() const { return bool(n_); }
    const Shape& shape() const { return node().shape; }
    int ndim() const { return int(node().shape.size()); }
    long numel() const { return node().numel(); }
    long size(int axis) const { return node().shape.at(std::size_t(axis)); }

    const std::vector<double>& data() const { return node().data; }

    // Mutable leaf storage, for parameter init / optimizer updates /
    // finite-difference probing. Op outputs stay immutable.
    std::vector<double>& data_mut() {
        if (!node().leaf) throw ValueError("data_mut: only leaves are mutable");
        return node().data;
    }

    double item() const {
        if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
        return node().data[0];
    }

    double at(std::initializer_list<long> idx) const {
        const auto& s = node().shape;
        if (idx.size() != s.size()) throw ShapeError("at: rank mismatch");
        long flat = 0;
        std::size_t k = 0;
        for (long i : idx) {
            if (i < 0 || i >= s[k]) throw ValueError("at: index out of range");
            flat = flat * s[k] + i;
            ++k;
        }
        return node().data[std::size_t(flat)];
    }

    // ---- autograd ----

    bool requires_grad() const { return node().requires_grad; }

    Tensor& set_requires_grad(bool v) {
        if (!node().leaf) throw ValueError("set_requires_grad: only valid on leaves");
        node().requires_grad = v;
        return *this;
    }

    bool has_grad() const { return node().grad.size() == node().data.size(); }

    const std::vector<double>& grad() const {
        if (!has_grad()) throw ValueError("grad: no gradient recorded (run backward first)");
        return node().grad;
    }

    void zero_grad() { node().grad.assign(node().data.size(), 0.0); }

    // Reverse-mode pass from a one-element tensor. Accumulates into .grad of
    // every reachable tensor with requires_grad set.
    void backward() const {
        auto& root = node();
        if (root.numel() != 1) throw ShapeError("backward: root must be a single element");
        if (!root.requires_grad) return;

        std::vector<detail::TensorNode*> order;
        topo_sort(&root, order);

        root.ensure_grad();
        root.grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::TensorNode* n = *it;
            if (n->backward) n->backward(*n);
        }
    }

    // Graph-free copy of the values.
    Tensor detach() const { return from_vec(node().shape, node().data); }

    // ---- escape hatch for custom ops (also used by tests) ----

    using BackwardFn = std::function<void(detail::TensorNode&)>;

    static Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                          BackwardFn backward, const char* op_name) {
        if (shape_numel(shape) != long(values.size())) throw ShapeError(std::string(op_name) + ": bad output shape");
        for (double v : values) {
            if (!std::isfinite(v))
                throw NumericError(std::string(op_name) + ": non-finite value in forward output");
        }
        auto out = std::make_shared<detail::TensorNode>();
        out->shape = std::move(shape);
        out->data = std::move(values);
        out->op = op_name;
        bool track = detail::no_grad_depth == 0;
        if (track) {
            bool needs = false;
            for (const auto& p : parents) needs = needs || p.node().requires_grad;
            if (needs) {
                out->requires_grad = true;
                out->leaf = false;
                out->parents.reserve(parents.size());
                for (auto& p : parents) out->parents.push_back(p.n_);
                out->backward = std::move(backward);
            }
        }
        return Tensor(std::move(out));
    }

    detail::TensorNode& node() const {
        if (!n_) throw ValueError("use of undefined tensor");
        return *n_;
    }

    std::shared_ptr<detail::TensorNode> handle() const { return n_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : n_(std::move(n)) {}

    static void topo_sort(detail::TensorNode* root, std::vector<detail::TensorNode*>& order) {
        // Iterative post-order over grad-requiring ancestors.
        std::unordered_set<detail::TensorNode*> seen;
        std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
        stack.emplace_back(root, 0);
        seen.insert(root);
        while (!stack.empty()) {
            auto& [n, i] = stack.back();
            if (i < n->parents.size()) {
                detail::TensorNode* p = n->parents[i++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<detail::TensorNode> n_;
};

namespace detail {

inline void accum_into(TensorNode& dst, const std::vector<double>& g) {
    dst.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

// (outer, len, inner) decomposition of a shape around one axis.
struct AxisView {
    long outer, len, inner;
};

inline AxisView axis_view(const Shape& s, int axis) {
    if (axis < 0 || axis >= int(s.size())) throw ShapeError("axis out of range");
    AxisView v{1, s[std::size_t(axis)], 1};
    for (int i = 0; i < axis; ++i) v.outer *= s[std::size_t(i)];
    for (int i = axis + 1; i < int(s.size()); ++i) v.inner *= s[std::size_t(i)];
    return v;
}

// Right-aligned broadcast: b's shape must be a suffix of a's (or b a single
// element). Returns the repeat count of b inside a.
inline long suffix_repeat(const Shape& a, const Shape& b, const char* op) {
    if (b.size() > a.size()) throw ShapeError(std::string(op) + ": cannot broadcast larger onto smaller");
    std::size_t off = a.size() - b.size();
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (a[off + i] != b[i]) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    long rep = 1;
    for (std::size_t i = 0; i < off; ++i) rep *= a[i];
    return rep;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool b_small = b.numel() <= a.numel();
    const Tensor& big = b_small ? a : b;
    const Tensor& small = b_small ? b : a;
    if (small.numel() == 1 && small.ndim() == 0) {
        // scalar broadcast
        double sv = small.data()[0];
        std::vector<double> out(big.data());
        for (auto& x : out) x += sv;
        return Tensor::make_op(big.shape(), std::move(out), {big, small},
                               [](detail::TensorNode& self) {
                                   detail::accum_into(*self.parents[0], self.grad);
                                   self.parents[1]->ensure_grad();
                                   double s = 0;
                                   for (double g : self.grad) s += g;
                                   self.parents[1]->grad[0] += s;
                               },
                               "add");
    }
    long rep = detail::suffix_repeat(big.shape(), small.shape(), "add");
    long bn = small.numel();
    std::vector<double> out(big.data());
    for (long r = 0; r < rep; ++r)
        for (long i = 0; i < bn; ++i) out[std::size_t(r * bn + i)] += small.data()[std::size_t(i)];
    return Tensor::make_op(big.shape(), std::move(out), {big, small},
                           [rep, bn](detail::TensorNode& self) {
                               detail::accum_into(*self.parents[0], self.grad);
                               auto& p = *self.parents[1];
                               p.ensure_grad();
                               for (long r = 0; r < rep; ++r)
                                   for (long i = 0; i < bn; ++i) p.grad[std::size_t(i)] += self.grad[std::size_t(r * bn + i)];
                           },
                           "add");
}

inline Tensor neg(const Tensor& a) {
    std::vector<double> out(a.data());
    for (auto& x : out) x = -x;
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] -= self.grad[i];
                           },
                           "neg");
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

inline Tensor mul(const Tensor& a, const Tensor& b) {
    const bool b_small = b.numel() <= a.numel();
    const Tensor& big = b_small ? a : b;
    const Tensor& small = b_small ? b : a;
    long rep, bn;
    if (small.numel() == 1 && small.ndim() == 0) {
        rep = big.numel();
        bn = 1;
    } else {
        rep = detail::suffix_repeat(big.shape(), small.shape(), "mul");
        bn = small.numel();
    }
    std::vector<double> out(std::size_t(big.numel()));
    for (long r = 0; r < rep; ++r)
        for (long i = 0; i < bn; ++i)
            out[std::size_t(r * bn + i)] = big.data()[std::size_t(r * bn + i)] * small.data()[std::size_t(i)];
    return Tensor::make_op(big.shape(), std::move(out), {big, small},
                           [rep, bn](detail::TensorNode& self) {
                               auto& pb = *self.parents[0];
                               auto& ps = *self.parents[1];
                               pb.ensure_grad();
                               ps.ensure_grad();
                               for (long r = 0; r < rep; ++r)
                                   for (long i = 0; i < bn; ++i) {
                                       std::size_t k = std::size_t(r * bn + i);
                                       pb.grad[k] += self.grad[k] * ps.data[std::size_t(i)];
                                       ps.grad[std::size_t(i)] += self.grad[k] * pb.data[k];
                                   }
                           },
                           "mul");
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (auto& x : out) x += c;
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) { detail::accum_into(*self.parents[0], self.grad); },
                           "add_scalar");
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (auto& x : out) x *= c;
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [c](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
                           },
                           "mul_scalar");
}

inline Tensor reciprocal(const Tensor& a) {
    std::vector<double> out(a.data());
    for (auto& x : out) {
        if (x == 0.0) throw NumericError("reciprocal: division by zero");
        x = 1.0 / x;
    }
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                   p.grad[i] -= self.grad[i] * self.data[i] * self.data[i];
                           },
                           "reciprocal");
}

inline Tensor div(const Tensor& a, const Tensor& b) { return mul(a, reciprocal(b)); }

// ---------------------------------------------------------------------------
// unary maps
// ---------------------------------------------------------------------------

inline Tensor exp(const Tensor& a) {
    std::vector<double> out(a.data());
    for (auto& x : out) x = std::exp(x);
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * self.data[i];
                           },
                           "exp");
}

inline Tensor log(const Tensor& a) {
    std::vector<double> out(a.data());
    for (auto& x : out) {
        if (x <= 0.0) throw NumericError("log: non-positive input");
        x = std::log(x);
    }
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] / p.data[i];
                           },
                           "log");
}

inline Tensor sqrt(const Tensor& a) {
    std::vector<double> out(a.data());
    for (auto& x : out) {
        if (x < 0.0) throw NumericError("sqrt: negative input");
        x = std::sqrt(x);
    }
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                   p.grad[i] += self.grad[i] * 0.5 / self.data[i];
                           },
                           "sqrt");
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.data());
    for (auto& x : out) x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                   double y = self.data[i];
                                   p.grad[i] += self.grad[i] * y * (1.0 - y);
                               }
                           },
                           "sigmoid");
}

inline Tensor gelu(const Tensor& a) {
    // Exact erf form; derivative is Phi(x) + x*phi(x).
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    std::vector<double> out(a.data());
    for (auto& x : out) x = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [=](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                   double x = p.data[i];
                                   double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                                   double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                                   p.grad[i] += self.grad[i] * (cdf + x * pdf);
                               }
                           },
                           "gelu");
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) throw ShapeError("reshape: element count mismatch");
    std::vector<double> out(a.data());
    return Tensor::make_op(std::move(shape), std::move(out), {a},
                           [](detail::TensorNode& self) { detail::accum_into(*self.parents[0], self.grad); },
                           "reshape");
}

inline Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose: expects a matrix");
    long m = a.size(0), n = a.size(1);
    std::vector<double> out(std::size_t(m * n));
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) out[std::size_t(j * m + i)] = a.data()[std::size_t(i * n + j)];
    return Tensor::make_op({n, m}, std::move(out), {a},
                           [m, n](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (long i = 0; i < m; ++i)
                                   for (long j = 0; j < n; ++j)
                                       p.grad[std::size_t(i * n + j)] += self.grad[std::size_t(j * m + i)];
                           },
                           "transpose");
}

inline Tensor slice(const Tensor& a, int axis, long start, long len) {
    auto v = detail::axis_view(a.shape(), axis);
    if (start < 0 || len <= 0 || start + len > v.len) throw ShapeError("slice: range out of bounds");
    Shape out_shape = a.shape();
    out_shape[std::size_t(axis)] = len;
    std::vector<double> out(std::size_t(v.outer * len * v.inner));
    for (long o = 0; o < v.outer; ++o)
        for (long l = 0; l < len; ++l)
            std::copy_n(a.data().begin() + (o * v.len + start + l) * v.inner, v.inner,
                        out.begin() + (o * len + l) * v.inner);
    return Tensor::make_op(std::move(out_shape), std::move(out), {a},
                           [v, start, len](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (long o = 0; o < v.outer; ++o)
                                   for (long l = 0; l < len; ++l)
                                       for (long i = 0; i < v.inner; ++i)
                                           p.grad[std::size_t((o * v.len + start + l) * v.inner + i)] +=
                                               self.grad[std::size_t((o * len + l) * v.inner + i)];
                           },
                           "slice");
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape out_shape = parts[0].shape();
    if (axis < 0 || axis >= int(out_shape.size())) throw ShapeError("concat: axis out of range");
    long total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != int(out_shape.size())) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < p.ndim(); ++i)
            if (i != axis && p.size(i) != out_shape[std::size_t(i)]) throw ShapeError("concat: shape mismatch");
        total += p.size(axis);
    }
    out_shape[std::size_t(axis)] = total;
    auto v = detail::axis_view(out_shape, axis);
    std::vector<double> out(std::size_t(v.outer * v.len * v.inner));
    std::vector<long> lens;
    long off = 0;
    for (const auto& p : parts) {
        long plen = p.size(axis);
        lens.push_back(plen);
        for (long o = 0; o < v.outer; ++o)
            std::copy_n(p.data().begin() + o * plen * v.inner, plen * v.inner,
                        out.begin() + (o * v.len + off) * v.inner);
        off += plen;
    }
    return Tensor::make_op(std::move(out_shape), std::move(out), parts,
                           [v, lens](detail::TensorNode& self) {
                               long off = 0;
                               for (std::size_t k = 0; k < lens.size(); ++k) {
                                   auto& p = *self.parents[k];
                                   p.ensure_grad();
                                   for (long o = 0; o < v.outer; ++o)
                                       for (long i = 0; i < lens[k] * v.inner; ++i)
                                           p.grad[std::size_t(o * lens[k] * v.inner + i)] +=
                                               self.grad[std::size_t((o * v.len + off) * v.inner + i)];
                                   off += lens[k];
                               }
                           },
                           "concat");
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul: expects matrices");
    long m = a.size(0), k = a.size(1), k2 = b.size(0), n = b.size(1);
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(std::size_t(m * n), 0.0);
    gemm::nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Tensor::make_op({m, n}, std::move(out), {a, b},
                           [m, k, n](detail::TensorNode& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               pa.ensure_grad();
                               pb.ensure_grad();
                               // dA += dC * B^T ; dB += A^T * dC
                               gemm::nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
                               gemm::tn(pa.data.data(), self.grad.data(), pb.grad.data(), m, k, n);
                           },
                           "matmul");
}

// a[m,k] * b[n,k]^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul_nt: expects matrices");
    long m = a.size(0), k = a.size(1), n = b.size(0);
    if (b.size(1) != k)
        throw ShapeError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    std::vector<double> out(std::size_t(m * n), 0.0);
    gemm::nt(a.data().data(), b.data().data(), out.data(), m, k, n);
    return Tensor::make_op({m, n}, std::move(out), {a, b},
                           [m, k, n](detail::TensorNode& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               pa.ensure_grad();
                               pb.ensure_grad();
                               // C = A B^T : dA += dC * B ; dB += dC^T * A
                               gemm::nn(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
                               gemm::tn(self.grad.data(), pa.data.data(), pb.grad.data(), m, n, k);
                           },
                           "matmul_nt");
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0;
    for (double x : a.data()) s += x;
    return Tensor::make_op({}, {s}, {a},
                           [](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (auto& g : p.grad) g += self.grad[0];
                           },
                           "sum");
}

inline Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / double(a.numel())); }

inline Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (int i = 0; i < int(s.size()); ++i)
        if (i != axis) out.push_back(s[std::size_t(i)]);
    return out;
}

inline Tensor sum_axis(const Tensor& a, int axis) {
    auto v = detail::axis_view(a.shape(), axis);
    std::vector<double> out(std::size_t(v.outer * v.inner), 0.0);
    for (long o = 0; o < v.outer; ++o)
        for (long l = 0; l < v.len; ++l)
            for (long i = 0; i < v.inner; ++i)
                out[std::size_t(o * v.inner + i)] += a.data()[std::size_t((o * v.len + l) * v.inner + i)];
    return Tensor::make_op(drop_axis(a.shape(), axis), std::move(out), {a},
                           [v](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (long o = 0; o < v.outer; ++o)
                                   for (long l = 0; l < v.len; ++l)
                                       for (long i = 0; i < v.inner; ++i)
                                           p.grad[std::size_t((o * v.len + l) * v.inner + i)] +=
                                               self.grad[std::size_t(o * v.inner + i)];
                           },
                           "sum_axis");
}

inline Tensor mean_axis(const Tensor& a, int axis) {
    return mul_scalar(sum_axis(a, axis), 1.0 / double(a.size(axis)));
}

// Max along an axis; gradient routes to the first-argmax element per lane,
// which keeps ties deterministic.
inline Tensor max_axis(const Tensor& a, int axis) {
    auto v = detail::axis_view(a.shape(), axis);
    std::vector<double> out(std::size_t(v.outer * v.inner));
    std::vector<long> arg(std::size_t(v.outer * v.inner));
    for (long o = 0; o < v.outer; ++o)
        for (long i = 0; i < v.inner; ++i) {
            long best = 0;
            double bv = a.data()[std::size_t(o * v.len * v.inner + i)];
            for (long l = 1; l < v.len; ++l) {
                double x = a.data()[std::size_t((o * v.len + l) * v.inner + i)];
                if (x > bv) {
                    bv = x;
                    best = l;
                }
            }
            out[std::size_t(o * v.inner + i)] = bv;
            arg[std::size_t(o * v.inner + i)] = best;
        }
    return Tensor::make_op(drop_axis(a.shape(), axis), std::move(out), {a},
                           [v, arg](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (long o = 0; o < v.outer; ++o)
                                   for (long i = 0; i < v.inner; ++i) {
                                       long l = arg[std::size_t(o * v.inner + i)];
                                       p.grad[std::size_t((o * v.len + l) * v.inner + i)] +=
                                           self.grad[std::size_t(o * v.inner + i)];
                                   }
                           },
                           "max_axis");
}

// ---------------------------------------------------------------------------
// softmax / indexing / losses
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& a, int axis) {
    auto v = detail::axis_view(a.shape(), axis);
    std::vector<double> out(a.data().size());
    for (long o = 0; o < v.outer; ++o)
        for (long i = 0; i < v.inner; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (long l = 0; l < v.len; ++l) mx = std::max(mx, a.data()[std::size_t((o * v.len + l) * v.inner + i)]);
            double z = 0;
            for (long l = 0; l < v.len; ++l) {
                double e = std::exp(a.data()[std::size_t((o * v.len + l) * v.inner + i)] - mx);
                out[std::size_t((o * v.len + l) * v.inner + i)] = e;
                z += e;
            }
            for (long l = 0; l < v.len; ++l) out[std::size_t((o * v.len + l) * v.inner + i)] /= z;
        }
    return Tensor::make_op(a.shape(), std::move(out), {a},
                           [v](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (long o = 0; o < v.outer; ++o)
                                   for (long i = 0; i < v.inner; ++i) {
                                       double dot = 0;
                                       for (long l = 0; l < v.len; ++l) {
                                           std::size_t k = std::size_t((o * v.len + l) * v.inner + i);
                                           dot += self.grad[k] * self.data[k];
                                       }
                                       for (long l = 0; l < v.len; ++l) {
                                           std::size_t k = std::size_t((o * v.len + l) * v.inner + i);
                                           p.grad[k] += (self.grad[k] - dot) * self.data[k];
                                       }
                                   }
                           },
                           "softmax");
}

// Single element by flat index, as a scalar tensor.
inline Tensor take(const Tensor& a, long flat_index) {
    if (flat_index < 0 || flat_index >= a.numel()) throw ValueError("take: index out of range");
    return Tensor::make_op({}, {a.data()[std::size_t(flat_index)]}, {a},
                           [flat_index](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               p.grad[std::size_t(flat_index)] += self.grad[0];
                           },
                           "take");
}

// Rows of an embedding table, by id. Gradient scatter-adds into the table.
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw ShapeError("embedding: table must be [vocab, dim]");
    long vocab = table.size(0), dim = table.size(1);
    std::vector<double> out(ids.size() * std::size_t(dim));
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || ids[r] >= vocab) throw ValueError("embedding: id out of range");
        std::copy_n(table.data().begin() + long(ids[r]) * dim, dim, out.begin() + long(r) * dim);
    }
    return Tensor::make_op({long(ids.size()), dim}, std::move(out), {table},
                           [ids, dim](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t r = 0; r < ids.size(); ++r)
                                   for (long j = 0; j < dim; ++j)
                                       p.grad[std::size_t(long(ids[r]) * dim + j)] +=
                                           self.grad[std::size_t(long(r) * dim + j)];
                           },
                           "embedding");
}

// -log(probs[target]) for an explicit probability vector. The caller is
// responsible for probs forming a distribution; tolerance matches the
// contract of the losses built on top.
inline Tensor cross_entropy(const Tensor& probs, long target) {
    if (probs.ndim() != 1) throw ShapeError("cross_entropy: expects a probability vector");
    if (target < 0 || target >= probs.numel()) throw ValueError("cross_entropy: target out of range");
    double s = 0;
    for (double p : probs.data()) {
        if (p < 0) throw NumericError("cross_entropy: negative probability");
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw NumericError("cross_entropy: probabilities sum to " + std::to_string(s));
    return neg(log(take(probs, target)));
}

inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.ndim() != 1) throw ShapeError("cosine_similarity: expects equal-length vectors");
    Tensor na2 = sum(mul(a, a));
    Tensor nb2 = sum(mul(b, b));
    if (na2.item() <= 0.0 || nb2.item() <= 0.0) throw NumericError("cosine_similarity: zero-norm input");
    return div(sum(mul(a, b)), mul(sqrt(na2), sqrt(nb2)));
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

// Bilinear upsample of [n,h,w] (or [h,w]) maps to out_h x out_w, half-pixel
// centers, clamped at borders. Linear in the input, so the backward pass is
// the transposed scatter of the same weights.
inline Tensor upsample_bilinear(const Tensor& a, long out_h, long out_w) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("upsample_bilinear: expects [h,w] or [n,h,w]");
    bool batched = a.ndim() == 3;
    long n = batched ? a.size(0) : 1;
    long h = a.size(batched ? 1 : 0), w = a.size(batched ? 2 : 1);
    if (out_h <= 0 || out_w <= 0) throw ShapeError("upsample_bilinear: bad output size");

    struct Tap {
        long y0, y1, x0, x1;
        double wy, wx;
    };
    std::vector<Tap> taps(std::size_t(out_h * out_w));
    for (long y = 0; y < out_h; ++y) {
        double fy = (double(y) + 0.5) * double(h) / double(out_h) - 0.5;
        double cy = std::clamp(fy, 0.0, double(h - 1));
        long y0 = long(std::floor(cy)), y1 = std::min(y0 + 1, h - 1);
        for (long x = 0; x < out_w; ++x) {
            double fx = (double(x) + 0.5) * double(w) / double(out_w) - 0.5;
            double cx = std::clamp(fx, 0.0, double(w - 1));
            long x0 = long(std::floor(cx)), x1 = std::min(x0 + 1, w - 1);
            taps[std::size_t(y * out_w + x)] = {y0, y1, x0, x1, cy - double(y0), cx - double(x0)};
        }
    }
    std::vector<double> out(std::size_t(n * out_h * out_w));
    for (long b = 0; b < n; ++b) {
        const double* src = a.data().data() + b * h * w;
        double* dst = out.data() + b * out_h * out_w;
        for (long i = 0; i < out_h * out_w; ++i) {
            const Tap& t = taps[std::size_t(i)];
            double top = (1 - t.wx) * src[t.y0 * w + t.x0] + t.wx * src[t.y0 * w + t.x1];
            double bot = (1 - t.wx) * src[t.y1 * w + t.x0] + t.wx * src[t.y1 * w + t.x1];
            dst[i] = (1 - t.wy) * top + t.wy * bot;
        }
    }
    Shape out_shape = batched ? Shape{n, out_h, out_w} : Shape{out_h, out_w};
    return Tensor::make_op(std::move(out_shape), std::move(out), {a},
                           [taps, n, h, w, out_h, out_w](detail::TensorNode& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (long b = 0; b < n; ++b) {
                                   double* gsrc = p.grad.data() + b * h * w;
                                   const double* g = self.grad.data() + b * out_h * out_w;
                                   for (long i = 0; i < out_h * out_w; ++i) {
                                       const Tap& t = taps[std::size_t(i)];
                                       gsrc[t.y0 * w + t.x0] += g[i] * (1 - t.wy) * (1 - t.wx);
                                       gsrc[t.y0 * w + t.x1] += g[i] * (1 - t.wy) * t.wx;
                                       gsrc[t.y1 * w + t.x0] += g[i] * t.wy * (1 - t.wx);
                                       gsrc[t.y1 * w + t.x1] += g[i] * t.wy * t.wx;
                                   }
                               }
                           },
                           "upsample_bilinear");
}

}  // namespace ovfs
