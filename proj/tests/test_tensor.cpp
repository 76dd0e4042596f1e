#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>

#include "aml/errors.hpp"
#include "aml/params.hpp"
#include "aml/rng.hpp"
#include "aml/tensor.hpp"
#include "fd_check.hpp"

using namespace aml;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(Rng& rng, Shape s, double lo = -1.5, double hi = 1.5) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& x : t.values) x = rng.next_uniform(lo, hi);
    return t;
}

// Keeps relu/clamp inputs away from their kinks so the FD slope is valid.
Tensor random_tensor_off_kinks(Rng& rng, Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& x : t.values) {
        double v = rng.next_uniform(0.1, 1.5);
        x = rng.next_unit() < 0.5 ? -v : v;
    }
    return t;
}

}  // namespace

TEST_CASE("analytic spot values") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(0.0));
    Var s = t.sigmoid(x);
    CHECK(t.scalar_value(s) == doctest::Approx(0.5));
    t.backward(s);
    CHECK(t.grad(x)[0] == doctest::Approx(0.25));

    Tape t2;
    Var m = t2.constant(Tensor({2, 2}, {1, 3, 3, 5}));
    Var mean = t2.mean_axis0(m);
    CHECK(t2.value(mean).values == std::vector<double>{2, 4});
}

TEST_CASE("backward identity and quadratic") {
    {
        Tape t;
        Var x = t.leaf(Tensor::scalar(3.25));
        Var y = t.add_const(x, 0.0);
        t.backward(y);
        CHECK(t.grad(x)[0] == doctest::Approx(1.0));
    }
    {
        Tape t;
        Var x = t.leaf(Tensor({2}, {1, 2}));
        Var y = t.sum_all(t.mul(x, x));
        CHECK(t.scalar_value(y) == doctest::Approx(5.0));
        t.backward(y);
        CHECK(t.grad(x)[0] == doctest::Approx(2.0));
        CHECK(t.grad(x)[1] == doctest::Approx(4.0));
    }
}

TEST_CASE("gradient accumulation when a value is used twice") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(1.5));
    // y = x*x + x: dy/dx = 2x + 1 = 4
    Var y = t.add(t.mul(x, x), x);
    t.backward(y);
    CHECK(t.grad(x)[0] == doctest::Approx(4.0));
}

TEST_CASE("non-scalar backward root is a contract error") {
    Tape t;
    Var x = t.leaf(Tensor({2}, {1, 2}));
    CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("shape errors name both shapes") {
    Tape t;
    Var a = t.constant(Tensor::zeros({2, 3}));
    Var b = t.constant(Tensor::zeros({4, 2}));
    try {
        t.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient vs central finite differences") {
    Rng rng(11, 0);
    auto build = [](Tape& t, const std::vector<Var>& v) {
        return t.sum_all(t.matmul(v[0], v[1]));
    };
    auto res = fd::check_gradients(build, {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("every differentiable primitive passes randomized FD checks") {
    // 100 randomized trials per op, rel err < 1e-4 at 64-bit.
    struct OpCase {
        const char* name;
        fd::Builder build;
        std::function<std::vector<Tensor>(Rng&)> inputs;
    };

    auto groups = std::make_shared<ad::GroupIndex>();
    groups->offsets = {0, 2, 2, 5};
    groups->members = {0, 2, 1, 1, 3};
    auto gather_idx = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{2, 0, 3, 1, 2});
    auto scatter_idx = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{4, 1, 0, 6});

    std::vector<OpCase> cases = {
        {"matmul",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.matmul(v[0], v[1])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; }},
        {"add",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.mul(t.add(v[0], v[1]), v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; }},
        {"sub",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.mul(t.sub(v[0], v[1]), v[1])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; }},
        {"mul",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.mul(v[0], v[1])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {5}), random_tensor(r, {5})}; }},
        {"div",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.div(v[0], v[1])); },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor(r, {4}), random_tensor(r, {4}, 0.5, 2.0)};
         }},
        {"concat_axis1",
         [](Tape& t, const std::vector<Var>& v) {
             return t.sum_all(t.mul(t.concat({v[0], v[1]}, 1), t.concat({v[1], v[0]}, 1)));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 2}), random_tensor(r, {3, 2})}; }},
        {"concat_axis0",
         [](Tape& t, const std::vector<Var>& v) {
             Var c = t.concat({v[0], v[1]}, 0);
             return t.sum_all(t.mul(c, c));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {1, 3})}; }},
        {"mean_axis0",
         [](Tape& t, const std::vector<Var>& v) {
             Var m = t.mean_axis0(v[0]);
             return t.sum_all(t.mul(m, m));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {4, 3})}; }},
        {"mean_all",
         [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.mul(v[0], v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 3})}; }},
        {"sigmoid",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.sigmoid(v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {6})}; }},
        {"tanh",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.tanh(v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {6})}; }},
        {"relu",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.relu(v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor_off_kinks(r, {7})}; }},
        {"slice_rows",
         [](Tape& t, const std::vector<Var>& v) {
             Var s = t.slice_rows(v[0], 1, 2);
             return t.sum_all(t.mul(s, s));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {4, 3})}; }},
        {"broadcast_add",
         [](Tape& t, const std::vector<Var>& v) {
             Var s = t.broadcast_add(v[0], v[1]);
             return t.sum_all(t.mul(s, s));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 4}), random_tensor(r, {4})}; }},
        {"log",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.log(v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {5}, 0.2, 3.0)}; }},
        {"sqrt",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.sqrt(v[0])); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {5}, 0.2, 3.0)}; }},
        {"pow_const",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.pow_const(v[0], 2.5)); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {5}, 0.2, 2.0)}; }},
        {"clamp",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.clamp(v[0], -1.0, 1.0)); },
         [](Rng& r) {
             Tensor x = random_tensor(r, {6}, -2.0, 2.0);
             for (double& v : x.values)
                 if (std::abs(std::abs(v) - 1.0) < 0.05) v *= 1.2;
             return std::vector<Tensor>{x};
         }},
        {"scale",
         [](Tape& t, const std::vector<Var>& v) { return t.sum_all(t.scale(v[0], -2.5)); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {5})}; }},
        {"add_const",
         [](Tape& t, const std::vector<Var>& v) {
             Var s = t.add_const(v[0], 0.7);
             return t.sum_all(t.mul(s, s));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {5})}; }},
        {"reshape",
         [](Tape& t, const std::vector<Var>& v) {
             Var s = t.reshape(v[0], {6});
             return t.sum_all(t.mul(s, s));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"group_mean_rows",
         [groups](Tape& t, const std::vector<Var>& v) {
             Var m = t.group_mean_rows(v[0], groups);
             return t.sum_all(t.mul(m, m));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {4, 3})}; }},
        {"gather_rows",
         [gather_idx](Tape& t, const std::vector<Var>& v) {
             Var m = t.gather_rows(v[0], gather_idx);
             return t.sum_all(t.mul(m, m));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {4, 3})}; }},
        {"scatter_rows",
         [scatter_idx](Tape& t, const std::vector<Var>& v) {
             Var m = t.scatter_rows(8, v[0], scatter_idx);
             return t.sum_all(t.mul(m, m));
         },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {4, 3})}; }},
    };

    Rng seed_rng(2024, 1);
    for (const auto& c : cases) {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            Rng r(seed_rng.next_u64(), 0);
            auto res = fd::check_gradients(c.build, c.inputs(r));
            worst = std::max(worst, res.max_rel_err);
        }
        INFO(c.name);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("dropout gradient matches its mask") {
    // Same rng seed for forward and FD re-evaluations via captured mask: the
    // op stores the mask, so checking y = dropout(x) * x is deterministic.
    Tape t;
    Rng rng(5, 9);
    Var x = t.leaf(Tensor({8}, {1, -2, 3, -4, 5, -6, 7, -8}));
    Var y = t.dropout(x, 0.5, rng);
    const auto yv = t.value(y).values;
    Var loss = t.sum_all(y);
    t.backward(loss);
    auto g = t.grad(x);
    for (std::size_t i = 0; i < 8; ++i) {
        if (yv[i] == 0.0) {
            CHECK(g[i] == 0.0);
        } else {
            CHECK(g[i] == doctest::Approx(2.0));  // 1 / (1 - p)
        }
    }
}

TEST_CASE("lstm cell zero fixed point") {
    Tape t;
    const std::int64_t in = 3, hid = 2;
    ad::LstmCellVars p;
    auto zeros = [&](Shape s) { return t.leaf(Tensor::zeros(std::move(s))); };
    p.wi = zeros({in, hid}); p.ui = zeros({hid, hid}); p.bi = zeros({hid});
    p.wf = zeros({in, hid}); p.uf = zeros({hid, hid}); p.bf = zeros({hid});
    p.wg = zeros({in, hid}); p.ug = zeros({hid, hid}); p.bg = zeros({hid});
    p.wo = zeros({in, hid}); p.uo = zeros({hid, hid}); p.bo = zeros({hid});
    Var x = t.constant(Tensor::zeros({1, in}));
    ad::LstmState st{t.constant(Tensor::zeros({1, hid})), t.constant(Tensor::zeros({1, hid}))};
    auto out = ad::lstm_cell(t, x, st, p);
    for (double v : t.value(out.h).values) CHECK(v == doctest::Approx(0.0));
    for (double v : t.value(out.c).values) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("forget bias scales previous cell state by sigmoid(1)") {
    Tape t;
    const std::int64_t in = 2, hid = 2;
    ad::LstmCellVars p;
    auto zeros = [&](Shape s) { return t.constant(Tensor::zeros(std::move(s))); };
    p.wi = zeros({in, hid}); p.ui = zeros({hid, hid}); p.bi = zeros({hid});
    p.wf = zeros({in, hid}); p.uf = zeros({hid, hid});
    p.bf = t.constant(Tensor({hid}, {1.0, 1.0}));
    p.wg = zeros({in, hid}); p.ug = zeros({hid, hid}); p.bg = zeros({hid});
    p.wo = zeros({in, hid}); p.uo = zeros({hid, hid}); p.bo = zeros({hid});
    Var x = t.constant(Tensor::zeros({1, in}));
    ad::LstmState st{t.constant(Tensor::zeros({1, hid})),
                     t.constant(Tensor({1, hid}, {1.0, -2.0}))};
    auto out = ad::lstm_cell(t, x, st, p);
    const double f = 1.0 / (1.0 + std::exp(-1.0));  // 0.7311
    CHECK(t.value(out.c).values[0] == doctest::Approx(f * 1.0));
    CHECK(t.value(out.c).values[1] == doctest::Approx(f * -2.0));
}

TEST_CASE("lstm BPTT gradient over a length-3 sequence") {
    const std::int64_t in = 3, hid = 2, batch = 2;
    Rng rng(31, 0);
    std::vector<Tensor> inputs;
    for (int i = 0; i < 12; ++i) {
        bool is_w = i % 3 == 0;
        bool is_u = i % 3 == 1;
        inputs.push_back(random_tensor(rng, is_w ? Shape{in, hid} : is_u ? Shape{hid, hid} : Shape{hid},
                                       -0.6, 0.6));
    }
    for (int s = 0; s < 3; ++s) inputs.push_back(random_tensor(rng, {batch, in}));

    auto build = [=](Tape& t, const std::vector<Var>& v) {
        ad::LstmCellVars p{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]};
        ad::LstmState st{t.constant(Tensor::zeros({batch, hid})),
                         t.constant(Tensor::zeros({batch, hid}))};
        for (int s = 0; s < 3; ++s) st = ad::lstm_cell(t, v[12 + s], st, p);
        return t.sum_all(st.h);
    };
    auto res = fd::check_gradients(build, inputs);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("adam first step and zero-grad fixed point") {
    ParameterStore store;
    store.add("w.p", Tensor::scalar(1.0));
    store.zero_grads();
    store.accumulate_grad("w.p", std::vector<double>{1.0});
    store.adam_step("w", 0.001, AdamConfig{});
    // Bias-corrected first step moves by ~lr regardless of gradient scale.
    CHECK(store.values("w.p")[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-7));

    ParameterStore store2;
    store2.add("w.p", Tensor::scalar(1.0));
    store2.zero_grads();
    store2.adam_step("w", 0.001, AdamConfig{});
    CHECK(store2.values("w.p")[0] == doctest::Approx(1.0));
}

TEST_CASE("adam step isolation between groups") {
    ParameterStore store;
    store.add_glorot("lstm.w", 4, 4, 1);
    store.add_glorot("encoder.w", 4, 4, 2);
    const std::uint64_t before = store.group_hash("encoder");
    store.zero_grads();
    std::vector<double> g(16, 0.5);
    store.accumulate_grad("lstm.w", g);
    store.accumulate_grad("encoder.w", g);  // gradient exists but group not stepped
    store.adam_step("lstm", 0.01, AdamConfig{});
    CHECK(store.group_hash("encoder") == before);
    CHECK(store.group_hash("lstm") != store.group_hash("encoder"));
}

TEST_CASE("checkpoint round-trip is bitwise") {
    ParameterStore store;
    store.add_glorot("encoder.0.weight", 5, 7, 42);
    store.add_zeros("encoder.0.bias", {7});
    store.add_glorot("lstm.0.wi", 7, 4, 42);
    store.zero_grads();
    std::vector<double> g(35, 0.25);
    store.accumulate_grad("encoder.0.weight", g);
    store.adam_step("encoder", 0.001, AdamConfig{});

    auto path = std::filesystem::temp_directory_path() / "aml_test_ckpt.bin";
    store.save(path);
    ParameterStore loaded = ParameterStore::load(path);
    for (const auto& name : store.names()) {
        REQUIRE(loaded.has(name));
        CHECK(loaded.shape(name) == store.shape(name));
        CHECK(std::memcmp(loaded.values(name).data(), store.values(name).data(),
                          store.values(name).size() * sizeof(double)) == 0);
    }
    // Moments and step counters survive, so a further step matches exactly.
    store.zero_grads();
    loaded.zero_grads();
    store.accumulate_grad("encoder.0.weight", g);
    loaded.accumulate_grad("encoder.0.weight", g);
    store.adam_step("encoder", 0.001, AdamConfig{});
    loaded.adam_step("encoder", 0.001, AdamConfig{});
    CHECK(store.group_hash("encoder") == loaded.group_hash("encoder"));
    std::filesystem::remove(path);
}

TEST_CASE("tape memory accounting rises and falls") {
    Tape t;
    CHECK(t.live_bytes() == 0);
    Var a = t.leaf(Tensor::zeros({64, 64}));
    Var b = t.leaf(Tensor::zeros({64, 64}));
    Var c = t.matmul(a, b);
    Var s = t.sum_all(c);
    const std::size_t at_peak = t.live_bytes();
    CHECK(at_peak >= 3 * 64 * 64 * sizeof(double));
    t.backward(s);
    CHECK(t.peak_bytes() >= at_peak);
    CHECK(t.live_bytes() < t.peak_bytes());
    t.clear();
    CHECK(t.live_bytes() == 0);
}

TEST_CASE("forward determinism on one platform") {
    Rng rng(99, 0);
    Tensor a = random_tensor(rng, {6, 5});
    Tensor b = random_tensor(rng, {5, 4});
    auto run = [&]() {
        Tape t(false);
        Var r = t.sigmoid(t.matmul(t.constant(a), t.constant(b)));
        return t.value(r).values;
    };
    auto r1 = run();
    auto r2 = run();
    CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}
