#include "aml/tensor.hpp"

#include <cmath>
#include <cstring>

#include "aml/errors.hpp"
#include "aml/kernels.hpp"

namespace aml::ad {

namespace {
const kern::Ops& K() { return kern::ops(); }
}

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
    std::vector<double> v(static_cast<std::size_t>(numel(s)), 0.0);
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tape::Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

Tape::~Tape() = default;

void Tape::track_alloc(std::size_t bytes) {
    live_bytes_ += bytes;
    if (live_bytes_ > peak_bytes_) peak_bytes_ = live_bytes_;
}

void Tape::track_free(std::size_t bytes) {
    live_bytes_ -= bytes < live_bytes_ ? bytes : live_bytes_;
}

Var Tape::push(Tensor t, bool requires_grad, bool is_leaf, BackFn back) {
    if (spent_) throw ContractError("tape already consumed by backward(); call clear() first");
    Node n;
    track_alloc(t.values.size() * sizeof(double));
    n.val = std::move(t);
    n.requires_grad = grad_enabled_ && requires_grad;
    n.is_leaf = is_leaf;
    if (n.requires_grad && !is_leaf) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
        throw ContractError("invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.idx)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
        throw ContractError("invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.idx)];
}

std::vector<double>& Tape::grad_buf(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) {
        n.grad.assign(n.val.values.size(), 0.0);
        track_alloc(n.grad.size() * sizeof(double));
    }
    n.grad_touched = true;
    return n.grad;
}

void Tape::check_same_shape(const char* op, Var a, Var b) const {
    if (node(a).val.shape != node(b).val.shape)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(node(a).val.shape) +
                         " vs " + shape_str(node(b).val.shape));
}

Var Tape::constant(Tensor t) { return push(std::move(t), false, false, nullptr); }

Var Tape::leaf(Tensor t) { return push(std::move(t), true, true, nullptr); }

const Tensor& Tape::value(Var v) const { return node(v).val; }

double Tape::scalar_value(Var v) const {
    const Tensor& t = node(v).val;
    if (t.values.size() != 1)
        throw ContractError("scalar_value on non-scalar tensor " + shape_str(t.shape));
    return t.values[0];
}

std::span<const double> Tape::grad(Var leaf) const {
    const Node& n = node(leaf);
    if (!n.is_leaf) throw ContractError("grad() is only defined for leaves");
    return {n.grad.data(), n.grad.size()};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(ta.shape) + " vs " +
                         shape_str(tb.shape));
    const auto m = static_cast<std::size_t>(ta.shape[0]);
    const auto k = static_cast<std::size_t>(ta.shape[1]);
    const auto n = static_cast<std::size_t>(tb.shape[1]);
    Tensor out = Tensor::zeros({ta.shape[0], tb.shape[1]});
    K().matmul_nn(out.values.data(), ta.values.data(), tb.values.data(), m, k, n);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg, false, [a, b, m, k, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (t.node(a).requires_grad) {
            std::vector<double> tmp(m * k);
            // dA = dC * B^T
            K().matmul_nt(tmp.data(), g.data(), t.node(b).val.values.data(), m, n, k);
            K().axpy(t.grad_buf(a).data(), tmp.data(), 1.0, m * k);
        }
        if (t.node(b).requires_grad) {
            std::vector<double> tmp(k * n);
            // dB = A^T * dC
            K().matmul_tn(tmp.data(), t.node(a).val.values.data(), g.data(), m, k, n);
            K().axpy(t.grad_buf(b).data(), tmp.data(), 1.0, k * n);
        }
    });
}

Var Tape::add(Var a, Var b) {
    check_same_shape("add", a, b);
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    K().add(out.values.data(), ta.values.data(), node(b).val.values.data(), ta.values.size());
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg, false, [a, b](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (t.node(a).requires_grad) K().axpy(t.grad_buf(a).data(), g.data(), 1.0, g.size());
        if (t.node(b).requires_grad) K().axpy(t.grad_buf(b).data(), g.data(), 1.0, g.size());
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape("sub", a, b);
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    K().sub(out.values.data(), ta.values.data(), node(b).val.values.data(), ta.values.size());
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg, false, [a, b](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (t.node(a).requires_grad) K().axpy(t.grad_buf(a).data(), g.data(), 1.0, g.size());
        if (t.node(b).requires_grad) K().axpy(t.grad_buf(b).data(), g.data(), -1.0, g.size());
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape("mul", a, b);
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    K().mul(out.values.data(), ta.values.data(), node(b).val.values.data(), ta.values.size());
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg, false, [a, b](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (t.node(a).requires_grad)
            K().mul_acc(t.grad_buf(a).data(), g.data(), t.node(b).val.values.data(), g.size());
        if (t.node(b).requires_grad)
            K().mul_acc(t.grad_buf(b).data(), g.data(), t.node(a).val.values.data(), g.size());
    });
}

Var Tape::div(Var a, Var b) {
    check_same_shape("div", a, b);
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(b).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = ta.values[i] / tb.values[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg, false, [a, b](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& c = t.nodes_[self].val.values;
        const auto& bv = t.node(b).val.values;
        if (t.node(a).requires_grad) {
            auto& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (t.node(b).requires_grad) {
            auto& gb = t.grad_buf(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * c[i] / bv[i];
        }
    });
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
    bool rg = false;
    std::int64_t rows0 = node(parts[0]).val.rows();
    std::int64_t cols0 = node(parts[0]).val.cols();
    std::int64_t total = 0;
    for (Var p : parts) {
        const Tensor& tp = node(p).val;
        if (tp.shape.size() != 2)
            throw ShapeError("concat: rank-2 tensors required, got " + shape_str(tp.shape));
        if (axis == 1 && tp.rows() != rows0)
            throw ShapeError("concat axis 1: row mismatch " + shape_str(tp.shape) + " vs " +
                             shape_str(node(parts[0]).val.shape));
        if (axis == 0 && tp.cols() != cols0)
            throw ShapeError("concat axis 0: column mismatch " + shape_str(tp.shape) + " vs " +
                             shape_str(node(parts[0]).val.shape));
        total += (axis == 1) ? tp.cols() : tp.rows();
        rg = rg || node(p).requires_grad;
    }
    Tensor out = (axis == 1) ? Tensor::zeros({rows0, total}) : Tensor::zeros({total, cols0});
    if (axis == 1) {
        std::int64_t off = 0;
        for (Var p : parts) {
            const Tensor& tp = node(p).val;
            for (std::int64_t r = 0; r < rows0; ++r)
                std::memcpy(out.values.data() + r * total + off,
                            tp.values.data() + r * tp.cols(),
                            static_cast<std::size_t>(tp.cols()) * sizeof(double));
            off += tp.cols();
        }
    } else {
        std::int64_t off = 0;
        for (Var p : parts) {
            const Tensor& tp = node(p).val;
            std::memcpy(out.values.data() + off * cols0, tp.values.data(),
                        tp.values.size() * sizeof(double));
            off += tp.rows();
        }
    }
    auto parts_copy = std::make_shared<std::vector<Var>>(parts);
    return push(std::move(out), rg, false,
                [parts_copy, axis, rows0, cols0, total](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        std::int64_t off = 0;
        for (Var p : *parts_copy) {
            const Tensor& tp = t.node(p).val;
            if (axis == 1) {
                if (t.node(p).requires_grad) {
                    auto& gp = t.grad_buf(p);
                    for (std::int64_t r = 0; r < rows0; ++r)
                        K().axpy(gp.data() + r * tp.cols(), g.data() + r * total + off, 1.0,
                                 static_cast<std::size_t>(tp.cols()));
                }
                off += tp.cols();
            } else {
                if (t.node(p).requires_grad) {
                    auto& gp = t.grad_buf(p);
                    K().axpy(gp.data(), g.data() + off * cols0, 1.0, gp.size());
                }
                off += tp.rows();
            }
        }
    });
}

Var Tape::mean_axis0(Var a) {
    const Tensor& ta = node(a).val;
    if (ta.shape.size() != 2)
        throw ShapeError("mean_axis0: rank-2 tensor required, got " + shape_str(ta.shape));
    const std::int64_t m = ta.shape[0], n = ta.shape[1];
    if (m == 0) throw ShapeError("mean_axis0: zero rows");
    Tensor out = Tensor::zeros({n});
    for (std::int64_t r = 0; r < m; ++r)
        K().axpy(out.values.data(), ta.values.data() + r * n, 1.0, static_cast<std::size_t>(n));
    K().scale(out.values.data(), out.values.data(), 1.0 / static_cast<double>(m),
              static_cast<std::size_t>(n));
    return push(std::move(out), node(a).requires_grad, false, [a, m, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        const double inv = 1.0 / static_cast<double>(m);
        for (std::int64_t r = 0; r < m; ++r)
            K().axpy(ga.data() + r * n, g.data(), inv, static_cast<std::size_t>(n));
    });
}

Var Tape::sum_all(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::scalar(K().sum(ta.values.data(), ta.values.size()));
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const double g = t.nodes_[self].grad[0];
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (double& x : ga) x += g;
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = node(a).val;
    const double inv = 1.0 / static_cast<double>(ta.values.size());
    Tensor out = Tensor::scalar(K().sum(ta.values.data(), ta.values.size()) * inv);
    return push(std::move(out), node(a).requires_grad, false, [a, inv](Tape& t, std::int32_t self) {
        const double g = t.nodes_[self].grad[0] * inv;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (double& x : ga) x += g;
    });
}

Var Tape::sigmoid(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double x = ta.values[i];
        if (x >= 0.0) {
            out.values[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            out.values[i] = e / (1.0 + e);
        }
    }
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& s = t.nodes_[self].val.values;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0 - s[i]);
    });
}

Var Tape::tanh(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::tanh(ta.values[i]);
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& y = t.nodes_[self].val.values;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var Tape::relu(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    K().relu(out.values.data(), ta.values.data(), ta.values.size());
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        K().relu_backward(t.grad_buf(a).data(), t.node(a).val.values.data(), g.data(), g.size());
    });
}

Var Tape::slice_rows(Var a, std::int64_t start, std::int64_t len) {
    const Tensor& ta = node(a).val;
    if (ta.shape.size() != 2)
        throw ShapeError("slice_rows: rank-2 tensor required, got " + shape_str(ta.shape));
    if (start < 0 || len < 0 || start + len > ta.shape[0])
        throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + shape_str(ta.shape));
    const std::int64_t n = ta.shape[1];
    Tensor out = Tensor::zeros({len, n});
    std::memcpy(out.values.data(), ta.values.data() + start * n,
                static_cast<std::size_t>(len * n) * sizeof(double));
    return push(std::move(out), node(a).requires_grad, false,
                [a, start, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        K().axpy(t.grad_buf(a).data() + start * n, g.data(), 1.0, g.size());
    });
}

Var Tape::broadcast_add(Var a, Var bias) {
    const Tensor& ta = node(a).val;
    const Tensor& tb = node(bias).val;
    if (ta.shape.size() != 2 || tb.shape.size() != 1 || tb.shape[0] != ta.shape[1])
        throw ShapeError("broadcast_add: shapes " + shape_str(ta.shape) + " vs " +
                         shape_str(tb.shape));
    const std::int64_t m = ta.shape[0], n = ta.shape[1];
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t r = 0; r < m; ++r)
        K().add(out.values.data() + r * n, ta.values.data() + r * n, tb.values.data(),
                static_cast<std::size_t>(n));
    bool rg = node(a).requires_grad || node(bias).requires_grad;
    return push(std::move(out), rg, false, [a, bias, m, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (t.node(a).requires_grad)
            K().axpy(t.grad_buf(a).data(), g.data(), 1.0, g.size());
        if (t.node(bias).requires_grad) {
            auto& gb = t.grad_buf(bias);
            for (std::int64_t r = 0; r < m; ++r)
                K().axpy(gb.data(), g.data() + r * n, 1.0, static_cast<std::size_t>(n));
        }
    });
}

Var Tape::log(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::log(ta.values[i]);
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& av = t.node(a).val.values;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
    });
}

Var Tape::sqrt(Var a) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::sqrt(ta.values[i]);
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& y = t.nodes_[self].val.values;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
    });
}

Var Tape::pow_const(Var a, double exponent) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = std::pow(ta.values[i], exponent);
    return push(std::move(out), node(a).requires_grad, false,
                [a, exponent](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& av = t.node(a).val.values;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * exponent * std::pow(av[i], exponent - 1.0);
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double x = ta.values[i];
        out.values[i] = x < lo ? lo : (x > hi ? hi : x);
    }
    return push(std::move(out), node(a).requires_grad, false,
                [a, lo, hi](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        const auto& av = t.node(a).val.values;
        if (!t.node(a).requires_grad) return;
        auto& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > lo && av[i] < hi) ga[i] += g[i];
    });
}

Var Tape::scale(Var a, double c) {
    const Tensor& ta = node(a).val;
    Tensor out = Tensor::zeros(ta.shape);
    K().scale(out.values.data(), ta.values.data(), c, ta.values.size());
    return push(std::move(out), node(a).requires_grad, false, [a, c](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        K().axpy(t.grad_buf(a).data(), g.data(), c, g.size());
    });
}

Var Tape::add_const(Var a, double c) {
    const Tensor& ta = node(a).val;
    Tensor out = ta;
    for (double& x : out.values) x += c;
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        K().axpy(t.grad_buf(a).data(), g.data(), 1.0, g.size());
    });
}

Var Tape::reshape(Var a, Shape s) {
    const Tensor& ta = node(a).val;
    if (numel(s) != static_cast<std::int64_t>(ta.values.size()))
        throw ShapeError("reshape: " + shape_str(ta.shape) + " to " + shape_str(s));
    Tensor out(std::move(s), ta.values);
    return push(std::move(out), node(a).requires_grad, false, [a](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        K().axpy(t.grad_buf(a).data(), g.data(), 1.0, g.size());
    });
}

Var Tape::group_mean_rows(Var src, std::shared_ptr<const GroupIndex> groups) {
    const Tensor& ts = node(src).val;
    if (ts.shape.size() != 2)
        throw ShapeError("group_mean_rows: rank-2 tensor required, got " + shape_str(ts.shape));
    const std::int64_t n = ts.shape[1];
    const std::int64_t g_count = groups->groups();
    Tensor out = Tensor::zeros({g_count, n});
    for (std::int64_t g = 0; g < g_count; ++g) {
        const std::int64_t b = groups->offsets[g], e = groups->offsets[g + 1];
        if (b == e) continue;  // empty neighborhood contributes a zero vector
        double* orow = out.values.data() + g * n;
        for (std::int64_t i = b; i < e; ++i)
            K().axpy(orow, ts.values.data() + groups->members[i] * n, 1.0,
                     static_cast<std::size_t>(n));
        K().scale(orow, orow, 1.0 / static_cast<double>(e - b), static_cast<std::size_t>(n));
    }
    return push(std::move(out), node(src).requires_grad, false,
                [src, groups, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(src).requires_grad) return;
        auto& gs = t.grad_buf(src);
        const std::int64_t g_count = groups->groups();
        for (std::int64_t gi = 0; gi < g_count; ++gi) {
            const std::int64_t b = groups->offsets[gi], e = groups->offsets[gi + 1];
            if (b == e) continue;
            const double inv = 1.0 / static_cast<double>(e - b);
            for (std::int64_t i = b; i < e; ++i)
                K().axpy(gs.data() + groups->members[i] * n, g.data() + gi * n, inv,
                         static_cast<std::size_t>(n));
        }
    });
}

Var Tape::gather_rows(Var src, std::shared_ptr<const std::vector<std::int64_t>> idx) {
    const Tensor& ts = node(src).val;
    if (ts.shape.size() != 2)
        throw ShapeError("gather_rows: rank-2 tensor required, got " + shape_str(ts.shape));
    const std::int64_t n = ts.shape[1];
    const auto rows = static_cast<std::int64_t>(idx->size());
    Tensor out = Tensor::zeros({rows, n});
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t s = (*idx)[static_cast<std::size_t>(r)];
        if (s < 0 || s >= ts.shape[0]) throw ContractError("gather_rows: index out of range");
        std::memcpy(out.values.data() + r * n, ts.values.data() + s * n,
                    static_cast<std::size_t>(n) * sizeof(double));
    }
    return push(std::move(out), node(src).requires_grad, false,
                [src, idx, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(src).requires_grad) return;
        auto& gs = t.grad_buf(src);
        for (std::size_t r = 0; r < idx->size(); ++r)
            K().axpy(gs.data() + (*idx)[r] * n, g.data() + static_cast<std::int64_t>(r) * n, 1.0,
                     static_cast<std::size_t>(n));
    });
}

Var Tape::scatter_rows(std::int64_t num_rows, Var src,
                       std::shared_ptr<const std::vector<std::int64_t>> idx) {
    const Tensor& ts = node(src).val;
    if (ts.shape.size() != 2)
        throw ShapeError("scatter_rows: rank-2 tensor required, got " + shape_str(ts.shape));
    if (ts.shape[0] != static_cast<std::int64_t>(idx->size()))
        throw ShapeError("scatter_rows: row count " + shape_str(ts.shape) + " vs " +
                         std::to_string(idx->size()) + " indices");
    const std::int64_t n = ts.shape[1];
    Tensor out = Tensor::zeros({num_rows, n});
    for (std::size_t r = 0; r < idx->size(); ++r) {
        const std::int64_t d = (*idx)[r];
        if (d < 0 || d >= num_rows) throw ContractError("scatter_rows: index out of range");
        std::memcpy(out.values.data() + d * n,
                    ts.values.data() + static_cast<std::int64_t>(r) * n,
                    static_cast<std::size_t>(n) * sizeof(double));
    }
    return push(std::move(out), node(src).requires_grad, false,
                [src, idx, n](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(src).requires_grad) return;
        auto& gs = t.grad_buf(src);
        for (std::size_t r = 0; r < idx->size(); ++r)
            K().axpy(gs.data() + static_cast<std::int64_t>(r) * n, g.data() + (*idx)[r] * n, 1.0,
                     static_cast<std::size_t>(n));
    });
}

Var Tape::dropout(Var a, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
    const Tensor& ta = node(a).val;
    auto mask = std::make_shared<std::vector<double>>(ta.values.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& mi : *mask) mi = rng.next_unit() >= p ? keep_scale : 0.0;
    Tensor out = Tensor::zeros(ta.shape);
    K().mul(out.values.data(), ta.values.data(), mask->data(), ta.values.size());
    return push(std::move(out), node(a).requires_grad, false,
                [a, mask](Tape& t, std::int32_t self) {
        const auto& g = t.nodes_[self].grad;
        if (!t.node(a).requires_grad) return;
        K().mul_acc(t.grad_buf(a).data(), g.data(), mask->data(), g.size());
    });
}

void Tape::backward(Var root) {
    if (!grad_enabled_) throw ContractError("backward() on a gradient-disabled tape");
    if (spent_) throw ContractError("backward() called twice without clear()");
    Node& r = node(root);
    if (r.val.values.size() != 1)
        throw ContractError("backward root must be scalar, got " + shape_str(r.val.shape));
    if (!r.requires_grad)
        throw ContractError("backward root does not depend on any leaf");
    grad_buf(root)[0] = 1.0;
    for (std::int32_t i = root.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || !n.grad_touched || !n.back) continue;
        n.back(*this, i);
    }
    // Drop everything except leaf gradients and the root value.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = nodes_[i];
        n.back = nullptr;
        if (n.is_leaf) continue;
        if (i != static_cast<std::size_t>(root.idx)) {
            track_free(n.val.values.size() * sizeof(double));
            n.val.values.clear();
            n.val.values.shrink_to_fit();
        }
        track_free(n.grad.size() * sizeof(double));
        n.grad.clear();
        n.grad.shrink_to_fit();
    }
    spent_ = true;
}

void Tape::clear() {
    for (Node& n : nodes_) {
        track_free(n.val.values.size() * sizeof(double));
        track_free(n.grad.size() * sizeof(double));
    }
    nodes_.clear();
    spent_ = false;
}

LstmState lstm_cell(Tape& t, Var x, LstmState prev, const LstmCellVars& p) {
    Var i_gate = t.sigmoid(t.add(affine(t, x, p.wi, p.bi), t.matmul(prev.h, p.ui)));
    Var f_gate = t.sigmoid(t.add(affine(t, x, p.wf, p.bf), t.matmul(prev.h, p.uf)));
    Var g_cand = t.tanh(t.add(affine(t, x, p.wg, p.bg), t.matmul(prev.h, p.ug)));
    Var o_gate = t.sigmoid(t.add(affine(t, x, p.wo, p.bo), t.matmul(prev.h, p.uo)));
    Var c = t.add(t.mul(f_gate, prev.c), t.mul(i_gate, g_cand));
    Var h = t.mul(o_gate, t.tanh(c));
    return {h, c};
}

Var affine(Tape& t, Var x, Var w, Var b) { return t.broadcast_add(t.matmul(x, w), b); }

}  // namespace aml::ad
