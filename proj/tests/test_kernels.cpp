#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "aml/kernels.hpp"
#include "aml/rng.hpp"

using aml::Rng;
namespace kern = aml::kern;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_uniform(-2.0, 2.0);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    }
    return true;
}

#if defined(__x86_64__)
bool have_avx2() { return kern::cpu_has_avx2(); }
#else
bool have_avx2() { return false; }
#endif

}  // namespace

#if defined(__x86_64__)

// Sizes chosen to exercise full vector lanes plus every remainder length.
static const std::size_t k_sizes[] = {1, 2, 3, 4, 5, 7, 8, 15, 16, 33, 100, 257};

TEST_CASE("elementwise kernels are bitwise equal across backends") {
    if (!have_avx2()) return;
    const auto& s = kern::scalar_ops();
    const auto& v = kern::avx2_ops();
    Rng rng(71, 0);
    for (std::size_t n : k_sizes) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        std::vector<double> rs(n), rv(n);

        s.add(rs.data(), a.data(), b.data(), n);
        v.add(rv.data(), a.data(), b.data(), n);
        CHECK(bitwise_equal(rs, rv));

        s.sub(rs.data(), a.data(), b.data(), n);
        v.sub(rv.data(), a.data(), b.data(), n);
        CHECK(bitwise_equal(rs, rv));

        s.mul(rs.data(), a.data(), b.data(), n);
        v.mul(rv.data(), a.data(), b.data(), n);
        CHECK(bitwise_equal(rs, rv));

        s.scale(rs.data(), a.data(), 1.7, n);
        v.scale(rv.data(), a.data(), 1.7, n);
        CHECK(bitwise_equal(rs, rv));

        s.relu(rs.data(), a.data(), n);
        v.relu(rv.data(), a.data(), n);
        CHECK(bitwise_equal(rs, rv));

        rs = b;
        rv = b;
        s.axpy(rs.data(), a.data(), -0.3, n);
        v.axpy(rv.data(), a.data(), -0.3, n);
        CHECK(bitwise_equal(rs, rv));

        rs = b;
        rv = b;
        s.mul_acc(rs.data(), a.data(), b.data(), n);
        v.mul_acc(rv.data(), a.data(), b.data(), n);
        CHECK(bitwise_equal(rs, rv));

        rs = b;
        rv = b;
        s.relu_backward(rs.data(), a.data(), b.data(), n);
        v.relu_backward(rv.data(), a.data(), b.data(), n);
        CHECK(bitwise_equal(rs, rv));
    }
}

TEST_CASE("matmul kernels are bitwise equal across backends") {
    if (!have_avx2()) return;
    const auto& s = kern::scalar_ops();
    const auto& v = kern::avx2_ops();
    Rng rng(72, 0);
    const std::size_t dims[][3] = {
        {1, 1, 1}, {2, 3, 4}, {3, 5, 2}, {4, 4, 4}, {7, 9, 5}, {16, 8, 12}, {13, 17, 11},
    };
    for (const auto& d : dims) {
        const std::size_t m = d[0], k = d[1], n = d[2];
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        std::vector<double> rs(m * n), rv(m * n);
        s.matmul_nn(rs.data(), a.data(), b.data(), m, k, n);
        v.matmul_nn(rv.data(), a.data(), b.data(), m, k, n);
        CHECK(bitwise_equal(rs, rv));

        auto bt = random_vec(rng, m * n);
        std::vector<double> ts(k * n), tv(k * n);
        s.matmul_tn(ts.data(), a.data(), bt.data(), m, k, n);
        v.matmul_tn(tv.data(), a.data(), bt.data(), m, k, n);
        CHECK(bitwise_equal(ts, tv));
    }
}

TEST_CASE("reduction kernels agree to rounding across backends") {
    if (!have_avx2()) return;
    const auto& s = kern::scalar_ops();
    const auto& v = kern::avx2_ops();
    Rng rng(73, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.next_below(300);
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        const double ds = s.dot(a.data(), b.data(), n);
        const double dv = v.dot(a.data(), b.data(), n);
        CHECK(std::abs(ds - dv) <= 1e-12 * (1.0 + std::abs(ds)));
        const double ss = s.sum(a.data(), n);
        const double sv = v.sum(a.data(), n);
        CHECK(std::abs(ss - sv) <= 1e-12 * (1.0 + std::abs(ss)));
    }

    // matmul_nt rows are dot products, so it inherits the dot tolerance.
    const std::size_t m = 9, k = 37, n = 6;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, n * k);
    std::vector<double> rs(m * n), rv(m * n);
    s.matmul_nt(rs.data(), a.data(), b.data(), m, k, n);
    v.matmul_nt(rv.data(), a.data(), b.data(), m, k, n);
    for (std::size_t i = 0; i < m * n; ++i)
        CHECK(std::abs(rs[i] - rv[i]) <= 1e-12 * (1.0 + std::abs(rs[i])));
}

TEST_CASE("adam kernel is bitwise equal across backends") {
    if (!have_avx2()) return;
    const auto& s = kern::scalar_ops();
    const auto& v = kern::avx2_ops();
    Rng rng(74, 0);
    for (std::size_t n : k_sizes) {
        auto g = random_vec(rng, n);
        auto p0 = random_vec(rng, n);
        std::vector<double> ps = p0, pv = p0;
        std::vector<double> ms(n, 0.1), mv(n, 0.1), vs(n, 0.2), vv(n, 0.2);
        s.adam_update(ps.data(), g.data(), ms.data(), vs.data(), n, 1e-3, 0.9, 0.999, 1e-8,
                      0.1, 0.001999);
        v.adam_update(pv.data(), g.data(), mv.data(), vv.data(), n, 1e-3, 0.9, 0.999, 1e-8,
                      0.1, 0.001999);
        CHECK(bitwise_equal(ps, pv));
        CHECK(bitwise_equal(ms, mv));
        CHECK(bitwise_equal(vs, vv));
    }
}

#endif  // __x86_64__

TEST_CASE("backend selection is explicit and reversible") {
    kern::set_backend(kern::Backend::scalar);
    CHECK(kern::active_backend() == kern::Backend::scalar);
    CHECK(kern::backend_name(kern::active_backend()) == "scalar");
#if defined(__x86_64__)
    if (have_avx2()) {
        kern::set_backend(kern::Backend::avx2);
        CHECK(kern::active_backend() == kern::Backend::avx2);
        kern::set_backend(kern::Backend::scalar);
    }
#endif
}

TEST_CASE("scalar reference values") {
    const auto& s = kern::scalar_ops();
    std::vector<double> a = {1.0, 2.0, 3.0};
    std::vector<double> b = {4.0, 5.0, 6.0};
    CHECK(s.dot(a.data(), b.data(), 3) == doctest::Approx(32.0));
    CHECK(s.sum(a.data(), 3) == doctest::Approx(6.0));

    // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
    std::vector<double> A = {1, 2, 3, 4}, B = {5, 6, 7, 8}, C(4);
    s.matmul_nn(C.data(), A.data(), B.data(), 2, 2, 2);
    CHECK(C == std::vector<double>{19, 22, 43, 50});
    s.matmul_tn(C.data(), A.data(), B.data(), 2, 2, 2);
    CHECK(C == std::vector<double>{26, 30, 38, 44});
    s.matmul_nt(C.data(), A.data(), B.data(), 2, 2, 2);
    CHECK(C == std::vector<double>{17, 23, 39, 53});
}
