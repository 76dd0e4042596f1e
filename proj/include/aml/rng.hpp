#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace aml {

// Counter-based deterministic RNG. Every draw is a pure function of
// (seed, stream, counter), so results are reproducible across platforms and
// independent of call interleaving as long as streams are assigned stably.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) : base_(mix(seed + k_gamma * stream)) {}

    // Derive a stream id from a string label (e.g. a parameter name).
    static std::uint64_t stream_of(std::string_view label) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    std::uint64_t next_u64() { return mix(base_ + k_gamma * ++counter_); }

    // Uniform in [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Unbiased-enough integer in [0, n); n > 0. Multiply-shift keeps it branch-free.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller.
    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double next_lognormal(double mu, double sigma) {
        return std::exp(mu + sigma * next_normal());
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static constexpr std::uint64_t k_gamma = 0x9e3779b97f4a7c15ull;

    // splitmix64 finalizer.
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

}  // namespace aml
