#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aml/rng.hpp"

namespace aml::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Plain value: shape + row-major 64-bit data.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> v);
    static Tensor zeros(Shape s);
    static Tensor scalar(double v);

    std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

// Handle into a Tape.
struct Var {
    std::int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

// Row-group index for graph-structured mean aggregation: out[g] is the mean
// of src rows listed for group g (empty group -> zero row). Shared between
// forward and backward, and typically cached per graph.
struct GroupIndex {
    std::vector<std::int64_t> offsets;  // size = groups + 1
    std::vector<std::int64_t> members;  // concatenated row ids

    std::int64_t groups() const { return static_cast<std::int64_t>(offsets.size()) - 1; }
};

// Reverse-mode tape over dense tensors. Single-threaded by contract; run
// independent tapes on separate threads. Records are appended in topological
// order, so backward() is a reverse sweep. Gradients accumulate (a value used
// twice receives the sum of both path gradients).
class Tape {
public:
    explicit Tape(bool grad_enabled = true);
    ~Tape();

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Tensor t);
    Var leaf(Tensor t);  // requires_grad when the tape records gradients

    // Primitives.
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var concat(const std::vector<Var>& parts, int axis);
    Var mean_axis0(Var a);
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var slice_rows(Var a, std::int64_t start, std::int64_t len);
    Var broadcast_add(Var a, Var bias);
    Var log(Var a);
    Var sqrt(Var a);
    Var pow_const(Var a, double exponent);
    Var clamp(Var a, double lo, double hi);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var reshape(Var a, Shape s);
    Var group_mean_rows(Var src, std::shared_ptr<const GroupIndex> groups);
    Var gather_rows(Var src, std::shared_ptr<const std::vector<std::int64_t>> idx);
    Var scatter_rows(std::int64_t num_rows, Var src,
                     std::shared_ptr<const std::vector<std::int64_t>> idx);
    Var dropout(Var a, double p, Rng& rng);

    const Tensor& value(Var v) const;
    double scalar_value(Var v) const;

    // Reverse sweep from a scalar root. Populates leaf gradients, then frees
    // intermediate values, gradients and closures; leaf gradients and the
    // root value stay readable until clear().
    void backward(Var root);

    std::span<const double> grad(Var leaf) const;

    void clear();

    // Allocation accounting (logical tensor bytes). Peak is the phase-1
    // memory evidence for the batched training claim.
    std::size_t live_bytes() const { return live_bytes_; }
    std::size_t peak_bytes() const { return peak_bytes_; }
    void reset_peak() { peak_bytes_ = live_bytes_; }

    std::size_t size() const { return nodes_.size(); }

private:
    using BackFn = std::function<void(Tape&, std::int32_t self)>;

    struct Node {
        Tensor val;
        std::vector<double> grad;
        bool requires_grad = false;
        bool is_leaf = false;
        bool grad_touched = false;
        BackFn back;
    };

    Var push(Tensor t, bool requires_grad, bool is_leaf, BackFn back);
    Node& node(Var v);
    const Node& node(Var v) const;
    std::vector<double>& grad_buf(Var v);  // lazily allocated, zero-filled
    void check_same_shape(const char* op, Var a, Var b) const;
    void track_alloc(std::size_t bytes);
    void track_free(std::size_t bytes);

    std::vector<Node> nodes_;
    bool grad_enabled_;
    bool spent_ = false;
    std::size_t live_bytes_ = 0;
    std::size_t peak_bytes_ = 0;
};

// One LSTM cell step built from primitives; backpropagation through time
// falls out of chaining it on one tape.
struct LstmCellVars {
    Var wi, ui, bi;
    Var wf, uf, bf;
    Var wg, ug, bg;
    Var wo, uo, bo;
};

struct LstmState {
    Var h, c;
};

LstmState lstm_cell(Tape& tape, Var x, LstmState prev, const LstmCellVars& p);

// affine(X, W, b) = X*W + b (bias broadcast over rows)
Var affine(Tape& tape, Var x, Var w, Var b);

}  // namespace aml::ad
