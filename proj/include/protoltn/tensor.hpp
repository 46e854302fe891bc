#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tape records every differentiable operation in execution order; running
// backward() from a scalar root replays the records in reverse and
// accumulates gradients into every requires-grad ancestor.  Tensors are
// value-semantic handles onto shared storage; recorded tensors are never
// mutated, so a tape stays valid until it is cleared.  A tape is confined to
// one thread during forward/backward; constants (requires_grad == false) are
// immutable and safe to share.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "protoltn/errors.hpp"

namespace protoltn {

class Tape;
class Tensor;

using Shape = std::vector<std::size_t>;

namespace detail {

struct OpBuilder;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily by Tape::backward
    bool requires_grad = false;
    bool is_leaf = true;  // false for op outputs
    Tape* tape = nullptr;

    std::size_t size() const { return data.size(); }
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    // Constant (non-differentiable) tensors.
    static Tensor constant(Shape shape, std::vector<double> data) {
        check_shape(shape, data.size());
        auto impl = std::make_shared<detail::TensorImpl>();
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        return Tensor(std::move(impl));
    }

    static Tensor scalar(double v) { return constant({}, {v}); }

    static Tensor zeros(Shape shape) {
        std::size_t n = detail::numel(shape);
        return constant(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(Shape shape, double v) {
        std::size_t n = detail::numel(shape);
        return constant(std::move(shape), std::vector<double>(n, v));
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl().shape; }
    std::size_t rank() const { return impl().shape.size(); }
    std::size_t size() const { return impl().data.size(); }
    bool requires_grad() const { return impl().requires_grad; }
    bool is_leaf() const { return impl().is_leaf; }

    std::span<const double> data() const { return impl().data; }

    // Mutable access is restricted to leaves (parameter updates between
    // episodes); recorded intermediate results are immutable.
    std::span<double> mutable_data() {
        if (!impl().is_leaf)
            throw ContractError("mutable_data: only leaf tensors may be mutated");
        return impl().data;
    }

    double item() const {
        if (size() != 1)
            throw ContractError("item: tensor is not scalar, shape " + detail::shape_str(shape()));
        return impl().data[0];
    }

    double at(std::size_t i) const { return impl().data.at(i); }

    double at(std::size_t row, std::size_t col) const {
        if (rank() != 2) throw DimensionError("at(i,j): tensor is not rank 2");
        return impl().data.at(row * shape()[1] + col);
    }

    // Gradient populated by the owning tape's backward(); tensors that did
    // not participate report an empty span.
    std::span<const double> grad() const { return impl().grad; }
    bool has_grad() const { return !impl().grad.empty(); }

    Tape* tape() const { return impl().tape; }

private:
    friend class Tape;
    friend struct detail::OpBuilder;

    explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

    static void check_shape(const Shape& shape, std::size_t data_len) {
        for (std::size_t d : shape)
            if (d == 0) throw DimensionError("tensor dimensions must be positive");
        if (detail::numel(shape) != data_len)
            throw DimensionError("data length " + std::to_string(data_len) +
                                 " does not match shape " + detail::shape_str(shape));
    }

    detail::TensorImpl& impl() const {
        if (!impl_) throw ContractError("use of undefined tensor");
        return *impl_;
    }

    detail::ImplPtr impl_;
};

namespace detail {

struct Record {
    std::vector<ImplPtr> inputs;
    ImplPtr output;
    // Reads output->grad, accumulates into the grads of requires-grad inputs.
    std::function<void()> backprop;
};

}  // namespace detail

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad = true) {
        Tensor t = Tensor::constant(std::move(shape), std::move(data));
        t.impl_->requires_grad = requires_grad;
        t.impl_->tape = this;
        if (requires_grad) leaves_.push_back(t.impl_);
        return t;
    }

    // Reverse sweep from a scalar root.  All leaf gradients and all record
    // outputs are zeroed first, so repeated calls on the same tape are
    // independent and bit-deterministic, and leaves that did not participate
    // in this episode end with an all-zero gradient rather than a stale one.
    void backward(const Tensor& root) {
        if (!root.defined() || root.size() != 1)
            throw ContractError("backward: root must be a defined scalar tensor");
        if (root.tape() != this)
            throw ContractError("backward: root is not on this tape");
        for (auto& leaf_impl : leaves_) leaf_impl->grad.assign(leaf_impl->size(), 0.0);
        for (auto& rec : records_) {
            rec.output->grad.assign(rec.output->size(), 0.0);
            for (auto& in : rec.inputs)
                if (in->requires_grad && in->grad.size() != in->size())
                    in->grad.assign(in->size(), 0.0);
        }
        root.impl_->grad.assign(1, 1.0);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backprop();
    }

    // Drop all recorded operations.  Leaves stay bound to the tape and can be
    // reused by the next forward pass.
    void clear() { records_.clear(); }

    std::size_t num_records() const { return records_.size(); }
    std::size_t num_leaves() const { return leaves_.size(); }

private:
    friend struct detail::OpBuilder;
    std::vector<detail::Record> records_;
    std::vector<detail::ImplPtr> leaves_;
};

// A named learnable leaf.  weight_decay controls membership in the L2
// penalty of the training objective (weights yes, biases no).
struct Parameter {
    std::string name;
    Tensor value;
    bool weight_decay = true;
};

namespace detail {

// Shared machinery for defining ops: figures out the destination tape,
// creates the output tensor and registers the backward rule.
struct OpBuilder {
    static ImplPtr impl(const Tensor& t) { return t.impl_; }

    static void mark_output(const Tensor& t, Tape* tape) {
        t.impl_->requires_grad = true;
        t.impl_->is_leaf = false;
        t.impl_->tape = tape;
    }

    static void push(Tape* tape, Record rec) { tape->records_.push_back(std::move(rec)); }

    static Tape* common_tape(const char* op, std::initializer_list<const Tensor*> ins) {
        Tape* tape = nullptr;
        bool needs_grad = false;
        for (const Tensor* t : ins) {
            if (!t->defined()) throw ContractError(std::string(op) + ": undefined input tensor");
            needs_grad = needs_grad || t->requires_grad();
            Tape* tt = t->tape();
            if (tt == nullptr) continue;
            if (tape == nullptr)
                tape = tt;
            else if (tape != tt)
                throw ContractError(std::string(op) + ": inputs belong to different tapes");
        }
        return needs_grad ? tape : nullptr;
    }

    // When `tape` is null the result is an untracked constant.
    static Tensor make(Tape* tape, Shape shape, std::vector<double> data,
                       std::initializer_list<const Tensor*> ins,
                       std::function<void()> (*bind)(const std::vector<ImplPtr>&,
                                                     const ImplPtr&)) {
        Tensor out = Tensor::constant(std::move(shape), std::move(data));
        if (tape == nullptr) return out;
        mark_output(out, tape);
        Record rec;
        rec.inputs.reserve(ins.size());
        for (const Tensor* t : ins) rec.inputs.push_back(t->impl_);
        rec.output = out.impl_;
        rec.backprop = bind(rec.inputs, rec.output);
        push(tape, std::move(rec));
        return out;
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

// Bias broadcast: a is [n x m], b is [m].
inline bool bias_broadcast(const Tensor& a, const Tensor& b) {
    return a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    Tape* tape = detail::OpBuilder::common_tape("add", {&a, &b});
    if (detail::same_shape(a, b)) {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
        return detail::OpBuilder::make(
            tape, a.shape(), std::move(out), {&a, &b},
            +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
                return std::function<void()>([in, out_impl] {
                    const auto& g = out_impl->grad;
                    for (int k = 0; k < 2; ++k)
                        if (in[k]->requires_grad)
                            for (std::size_t i = 0; i < g.size(); ++i) in[k]->grad[i] += g[i];
                });
            });
    }
    if (detail::bias_broadcast(a, b)) {
        const std::size_t n = a.shape()[0], m = a.shape()[1];
        std::vector<double> out(n * m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.data()[i * m + j] + b.data()[j];
        return detail::OpBuilder::make(
            tape, a.shape(), std::move(out), {&a, &b},
            +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
                return std::function<void()>([in, out_impl] {
                    const auto& g = out_impl->grad;
                    const std::size_t m = in[1]->shape[0];
                    const std::size_t n = in[0]->shape[0];
                    if (in[0]->requires_grad)
                        for (std::size_t i = 0; i < g.size(); ++i) in[0]->grad[i] += g[i];
                    if (in[1]->requires_grad)
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < m; ++j) in[1]->grad[j] += g[i * m + j];
                });
            });
    }
    throw DimensionError("add: incompatible shapes " + detail::shape_str(a.shape()) + " and " +
                         detail::shape_str(b.shape()));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (!detail::same_shape(a, b))
        throw DimensionError("sub: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                             detail::shape_str(b.shape()));
    Tape* tape = detail::OpBuilder::common_tape("sub", {&a, &b});
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return detail::OpBuilder::make(
        tape, a.shape(), std::move(out), {&a, &b},
        +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl] {
                const auto& g = out_impl->grad;
                if (in[0]->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) in[0]->grad[i] += g[i];
                if (in[1]->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i) in[1]->grad[i] -= g[i];
            });
        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (!detail::same_shape(a, b))
        throw DimensionError("mul: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                             detail::shape_str(b.shape()));
    Tape* tape = detail::OpBuilder::common_tape("mul", {&a, &b});
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return detail::OpBuilder::make(
        tape, a.shape(), std::move(out), {&a, &b},
        +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl] {
                const auto& g = out_impl->grad;
                if (in[0]->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i)
                        in[0]->grad[i] += g[i] * in[1]->data[i];
                if (in[1]->requires_grad)
                    for (std::size_t i = 0; i < g.size(); ++i)
                        in[1]->grad[i] += g[i] * in[0]->data[i];
            });
        });
}

namespace detail {

// Elementwise unary op: forward value plus local derivative at each entry.
template <typename Fwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd&& fwd) {
    Tape* tape = OpBuilder::common_tape(name, {&a});
    std::vector<double> out(a.size());
    std::vector<double> deriv(tape ? a.size() : 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [v, d] = fwd(a.data()[i]);
        out[i] = v;
        if (tape) deriv[i] = d;
    }
    Tensor result = Tensor::constant(a.shape(), std::move(out));
    if (tape == nullptr) return result;
    OpBuilder::mark_output(result, tape);
    Record rec;
    rec.inputs = {OpBuilder::impl(a)};
    rec.output = OpBuilder::impl(result);
    rec.backprop = [in = OpBuilder::impl(a), out_impl = OpBuilder::impl(result),
                    deriv = std::move(deriv)] {
        if (!in->requires_grad) return;
        const auto& g = out_impl->grad;
        for (std::size_t i = 0; i < g.size(); ++i) in->grad[i] += g[i] * deriv[i];
    };
    OpBuilder::push(tape, std::move(rec));
    return result;
}

}  // namespace detail

inline Tensor exp(const Tensor& a) {
    return detail::unary_op("exp", a, [](double x) {
        double v = std::exp(x);
        return std::pair{v, v};
    });
}

inline Tensor log(const Tensor& a) {
    for (double x : a.data())
        if (!(x > 0.0))
            throw DomainError("log: input must be strictly positive, got " + std::to_string(x));
    return detail::unary_op("log", a, [](double x) { return std::pair{std::log(x), 1.0 / x}; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        "relu", a, [](double x) { return std::pair{x > 0.0 ? x : 0.0, x > 0.0 ? 1.0 : 0.0}; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op("sigmoid", a, [](double x) {
        double s = 1.0 / (1.0 + std::exp(-x));
        return std::pair{s, s * (1.0 - s)};
    });
}

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary_op("scale", a, [c](double x) { return std::pair{c * x, c}; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    return detail::unary_op("add_scalar", a, [c](double x) { return std::pair{x + c, 1.0}; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// x^p with scalar exponent.  Fractional exponents require non-negative input;
// the gradient at x == 0 with p < 1 is defined as 0 to keep backward finite.
inline Tensor pow_scalar(const Tensor& a, double p) {
    const bool integer_exp = p == std::floor(p);
    if (!integer_exp)
        for (double x : a.data())
            if (x < 0.0)
                throw DomainError("pow_scalar: fractional exponent needs non-negative input");
    return detail::unary_op("pow_scalar", a, [p](double x) {
        double v = std::pow(x, p);
        double d;
        if (x == 0.0 && p < 1.0)
            d = 0.0;
        else
            d = p * std::pow(x, p - 1.0);
        return std::pair{v, d};
    });
}

// Clamp to [lo, hi]; gradient passes through inside the (closed) interval.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    return detail::unary_op("clamp", a, [lo, hi](double x) {
        double v = std::min(std::max(x, lo), hi);
        return std::pair{v, (x >= lo && x <= hi) ? 1.0 : 0.0};
    });
}

// ---------------------------------------------------------------------------
// Matrix operations
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: both operands must be rank 2");
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    if (b.shape()[0] != k)
        throw DimensionError("matmul: inner dimensions differ, " + detail::shape_str(a.shape()) +
                             " vs " + detail::shape_str(b.shape()));
    Tape* tape = detail::OpBuilder::common_tape("matmul", {&a, &b});
    std::vector<double> out(n * m, 0.0);
    const auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * bd[kk * m + j];
        }
    return detail::OpBuilder::make(
        tape, {n, m}, std::move(out), {&a, &b},
        +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl] {
                const std::size_t n = in[0]->shape[0], k = in[0]->shape[1], m = in[1]->shape[1];
                const auto& g = out_impl->grad;
                if (in[0]->requires_grad) {  // dA = G * B^T
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < m; ++j)
                                acc += g[i * m + j] * in[1]->data[kk * m + j];
                            in[0]->grad[i * k + kk] += acc;
                        }
                }
                if (in[1]->requires_grad) {  // dB = A^T * G
                    for (std::size_t kk = 0; kk < k; ++kk)
                        for (std::size_t i = 0; i < n; ++i) {
                            const double av = in[0]->data[i * k + kk];
                            for (std::size_t j = 0; j < m; ++j)
                                in[1]->grad[kk * m + j] += av * g[i * m + j];
                        }
                }
            });
        });
}

// dist[i][j] = sum_d (Q[i][d] - P[j][d])^2.
inline Tensor pairwise_sqdist(const Tensor& q, const Tensor& p) {
    if (q.rank() != 2 || p.rank() != 2)
        throw DimensionError("pairwise_sqdist: both operands must be rank 2");
    const std::size_t n = q.shape()[0], m = q.shape()[1], k = p.shape()[0];
    if (p.shape()[1] != m)
        throw DimensionError("pairwise_sqdist: trailing dimensions differ, " +
                             detail::shape_str(q.shape()) + " vs " + detail::shape_str(p.shape()));
    Tape* tape = detail::OpBuilder::common_tape("pairwise_sqdist", {&q, &p});
    std::vector<double> out(n * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::size_t d = 0; d < m; ++d) {
                const double diff = q.data()[i * m + d] - p.data()[j * m + d];
                acc += diff * diff;
            }
            out[i * k + j] = acc;
        }
    return detail::OpBuilder::make(
        tape, {n, k}, std::move(out), {&q, &p},
        +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl] {
                const std::size_t n = in[0]->shape[0], m = in[0]->shape[1], k = in[1]->shape[0];
                const auto& g = out_impl->grad;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double gij = g[i * k + j];
                        if (gij == 0.0) continue;
                        for (std::size_t d = 0; d < m; ++d) {
                            const double diff = in[0]->data[i * m + d] - in[1]->data[j * m + d];
                            if (in[0]->requires_grad) in[0]->grad[i * m + d] += 2.0 * gij * diff;
                            if (in[1]->requires_grad) in[1]->grad[j * m + d] -= 2.0 * gij * diff;
                        }
                    }
            });
        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class Reduce { sum, mean };

inline Tensor reduce(const Tensor& a, Reduce kind) {
    Tape* tape = detail::OpBuilder::common_tape("reduce", {&a});
    double acc = 0.0;
    for (double x : a.data()) acc += x;
    if (kind == Reduce::mean) acc /= static_cast<double>(a.size());
    return detail::OpBuilder::make(
        tape, {}, {acc}, {&a},
        kind == Reduce::mean
            ? +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
                  return std::function<void()>([in, out_impl] {
                      if (!in[0]->requires_grad) return;
                      const double g = out_impl->grad[0] / static_cast<double>(in[0]->size());
                      for (auto& gi : in[0]->grad) gi += g;
                  });
              }
            : +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
                  return std::function<void()>([in, out_impl] {
                      if (!in[0]->requires_grad) return;
                      const double g = out_impl->grad[0];
                      for (auto& gi : in[0]->grad) gi += g;
                  });
              });
}

inline Tensor reduce(const Tensor& a, Reduce kind, std::size_t axis) {
    if (axis >= a.rank())
        throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(a.rank()));
    const Shape& s = a.shape();
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    const double norm = kind == Reduce::mean ? 1.0 / static_cast<double>(len) : 1.0;

    Tape* tape = detail::OpBuilder::common_tape("reduce", {&a});
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i)
                out[o * inner + i] += a.data()[(o * len + l) * inner + i];
    if (kind == Reduce::mean)
        for (auto& x : out) x *= norm;

    Tensor result = Tensor::constant(std::move(out_shape), std::move(out));
    if (tape == nullptr) return result;
    detail::OpBuilder::mark_output(result, tape);
    detail::Record rec;
    rec.inputs = {detail::OpBuilder::impl(a)};
    rec.output = detail::OpBuilder::impl(result);
    rec.backprop = [in = detail::OpBuilder::impl(a), out_impl = detail::OpBuilder::impl(result),
                    outer, inner, len, norm] {
        if (!in->requires_grad) return;
        const auto& g = out_impl->grad;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t l = 0; l < len; ++l)
                for (std::size_t i = 0; i < inner; ++i)
                    in->grad[(o * len + l) * inner + i] += g[o * inner + i] * norm;
    };
    detail::OpBuilder::push(tape, std::move(rec));
    return result;
}

inline Tensor sum(const Tensor& a) { return reduce(a, Reduce::sum); }
inline Tensor mean(const Tensor& a) { return reduce(a, Reduce::mean); }
inline Tensor sum(const Tensor& a, std::size_t axis) { return reduce(a, Reduce::sum, axis); }
inline Tensor mean(const Tensor& a, std::size_t axis) { return reduce(a, Reduce::mean, axis); }

// ---------------------------------------------------------------------------
// Indexing and layout
// ---------------------------------------------------------------------------

namespace detail {

template <typename BuildFwd, typename BuildBwd>
Tensor indexed_op(const char* name, const Tensor& a, Shape out_shape, BuildFwd&& fwd,
                  BuildBwd&& bwd) {
    Tape* tape = OpBuilder::common_tape(name, {&a});
    std::vector<double> out = fwd();
    Tensor result = Tensor::constant(std::move(out_shape), std::move(out));
    if (tape == nullptr) return result;
    OpBuilder::mark_output(result, tape);
    Record rec;
    rec.inputs = {OpBuilder::impl(a)};
    rec.output = OpBuilder::impl(result);
    rec.backprop = bwd(OpBuilder::impl(a), OpBuilder::impl(result));
    OpBuilder::push(tape, std::move(rec));
    return result;
}

}  // namespace detail

// Select rows of a rank-2 tensor; indices may repeat.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    if (a.rank() != 2) throw DimensionError("gather_rows: input must be rank 2");
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    for (std::size_t r : idx)
        if (r >= rows) throw DimensionError("gather_rows: row index out of range");
    return detail::indexed_op(
        "gather_rows", a, {idx.size(), cols},
        [&] {
            std::vector<double> out(idx.size() * cols);
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    out[i * cols + j] = a.data()[idx[i] * cols + j];
            return out;
        },
        [idx, cols](const detail::ImplPtr& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl, idx, cols] {
                if (!in->requires_grad) return;
                const auto& g = out_impl->grad;
                for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        in->grad[idx[i] * cols + j] += g[i * cols + j];
            });
        });
}

// Select entries by flattened (row-major) index, producing a rank-1 tensor.
inline Tensor take(const Tensor& a, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw ContractError("take: empty index list");
    for (std::size_t i : idx)
        if (i >= a.size()) throw DimensionError("take: flat index out of range");
    return detail::indexed_op(
        "take", a, {idx.size()},
        [&] {
            std::vector<double> out(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) out[i] = a.data()[idx[i]];
            return out;
        },
        [idx](const detail::ImplPtr& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl, idx] {
                if (!in->requires_grad) return;
                const auto& g = out_impl->grad;
                for (std::size_t i = 0; i < idx.size(); ++i) in->grad[idx[i]] += g[i];
            });
        });
}

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    if (detail::numel(new_shape) != a.size())
        throw DimensionError("reshape: element count mismatch");
    return detail::indexed_op(
        "reshape", a, std::move(new_shape),
        [&] { return std::vector<double>(a.data().begin(), a.data().end()); },
        [](const detail::ImplPtr& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl] {
                if (!in->requires_grad) return;
                const auto& g = out_impl->grad;
                for (std::size_t i = 0; i < g.size(); ++i) in->grad[i] += g[i];
            });
        });
}

// Concatenate two matrices with equal row counts along columns.
inline Tensor hconcat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
        throw DimensionError("hconcat: operands must be rank 2 with equal row counts");
    const std::size_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    Tape* tape = detail::OpBuilder::common_tape("hconcat", {&a, &b});
    std::vector<double> out(n * (ca + cb));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.data()[i * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.data()[i * cb + j];
    }
    return detail::OpBuilder::make(
        tape, {n, ca + cb}, std::move(out), {&a, &b},
        +[](const std::vector<detail::ImplPtr>& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl] {
                const std::size_t n = in[0]->shape[0], ca = in[0]->shape[1], cb = in[1]->shape[1];
                const auto& g = out_impl->grad;
                for (std::size_t i = 0; i < n; ++i) {
                    if (in[0]->requires_grad)
                        for (std::size_t j = 0; j < ca; ++j)
                            in[0]->grad[i * ca + j] += g[i * (ca + cb) + j];
                    if (in[1]->requires_grad)
                        for (std::size_t j = 0; j < cb; ++j)
                            in[1]->grad[i * cb + j] += g[i * (ca + cb) + ca + j];
                }
            });
        });
}

// Pack scalar tensors into a rank-1 tensor.
inline Tensor stack_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ContractError("stack_scalars: empty input list");
    Tape* tape = nullptr;
    bool needs_grad = false;
    for (const Tensor& x : xs) {
        if (x.size() != 1) throw DimensionError("stack_scalars: all inputs must be scalar");
        needs_grad = needs_grad || x.requires_grad();
        if (x.tape() != nullptr) {
            if (tape != nullptr && tape != x.tape())
                throw ContractError("stack_scalars: inputs belong to different tapes");
            tape = x.tape();
        }
    }
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i].item();
    Tensor result = Tensor::constant({xs.size()}, std::move(out));
    if (!needs_grad) return result;

    detail::OpBuilder::mark_output(result, tape);
    detail::Record rec;
    for (const Tensor& x : xs) rec.inputs.push_back(detail::OpBuilder::impl(x));
    rec.output = detail::OpBuilder::impl(result);
    rec.backprop = [inputs = rec.inputs, out_impl = rec.output] {
        const auto& g = out_impl->grad;
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (inputs[i]->requires_grad) inputs[i]->grad[0] += g[i];
    };
    detail::OpBuilder::push(tape, std::move(rec));
    return result;
}

// Per-group mean of matrix rows.  Accumulation runs over values sorted
// ascending per column, so the result is independent of row order within a
// group (bit-identical under support permutations).
inline Tensor group_mean_rows(const Tensor& a,
                              const std::vector<std::vector<std::size_t>>& groups) {
    if (a.rank() != 2) throw DimensionError("group_mean_rows: input must be rank 2");
    const std::size_t cols = a.shape()[1];
    for (const auto& grp : groups) {
        if (grp.empty()) throw ContractError("group_mean_rows: empty group");
        for (std::size_t r : grp)
            if (r >= a.shape()[0]) throw DimensionError("group_mean_rows: row index out of range");
    }
    return detail::indexed_op(
        "group_mean_rows", a, {groups.size(), cols},
        [&] {
            std::vector<double> out(groups.size() * cols);
            std::vector<double> scratch;
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                const auto& grp = groups[gi];
                for (std::size_t j = 0; j < cols; ++j) {
                    scratch.clear();
                    for (std::size_t r : grp) scratch.push_back(a.data()[r * cols + j]);
                    std::sort(scratch.begin(), scratch.end());
                    double acc = 0.0;
                    for (double v : scratch) acc += v;
                    out[gi * cols + j] = acc / static_cast<double>(grp.size());
                }
            }
            return out;
        },
        [groups, cols](const detail::ImplPtr& in, const detail::ImplPtr& out_impl) {
            return std::function<void()>([in, out_impl, groups, cols] {
                if (!in->requires_grad) return;
                const auto& g = out_impl->grad;
                for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                    const double inv = 1.0 / static_cast<double>(groups[gi].size());
                    for (std::size_t r : groups[gi])
                        for (std::size_t j = 0; j < cols; ++j)
                            in->grad[r * cols + j] += g[gi * cols + j] * inv;
                }
            });
        });
}

// Constant copy detached from any tape.
inline Tensor detach(const Tensor& a) {
    return Tensor::constant(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace protoltn
