#pragma once

// Central finite-difference gradient oracle for tape operations. Independent
// of the backward rules it checks: the forward pass is re-run at x +/- h and
// the slope is compared against the recorded gradient.

#include <cmath>
#include <functional>
#include <vector>

#include "aml/tensor.hpp"

namespace fd {

using aml::ad::Tape;
using aml::ad::Tensor;
using aml::ad::Var;

// Builds a scalar expression from leaves; called many times with fresh tapes.
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct Result {
    double max_rel_err = 0.0;
    std::size_t checks = 0;
};

inline double eval_scalar(const Builder& build, const std::vector<Tensor>& inputs) {
    Tape tape(false);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    return tape.scalar_value(build(tape, vars));
}

// Relative error with an absolute floor so near-zero gradients compare on an
// absolute scale.
inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({1.0, std::abs(got), std::abs(want)});
}

inline Result check_gradients(const Builder& build, std::vector<Tensor> inputs,
                              double h = 1e-5) {
    Result res;

    Tape tape(true);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var root = build(tape, vars);
    tape.backward(root);
    std::vector<std::vector<double>> grads;
    for (Var v : vars) {
        auto g = tape.grad(v);
        grads.emplace_back(g.begin(), g.end());
    }

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].values.size(); ++j) {
            const double orig = inputs[i].values[j];
            inputs[i].values[j] = orig + h;
            const double fp = eval_scalar(build, inputs);
            inputs[i].values[j] = orig - h;
            const double fm = eval_scalar(build, inputs);
            inputs[i].values[j] = orig;
            const double want = (fp - fm) / (2.0 * h);
            const double got = grads[i].empty() ? 0.0 : grads[i][j];
            res.max_rel_err = std::max(res.max_rel_err, rel_err(got, want));
            ++res.checks;
        }
    }
    return res;
}

}  // namespace fd
