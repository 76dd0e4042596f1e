#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aml/tensor.hpp"

namespace aml {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Named, shaped parameter arrays partitioned into trainable groups. The group
// is the prefix before the first '.' in the name ("lstm.0.wi" -> "lstm"),
// which is what the two-phase trainer freezes and unfreezes. Optimizer moments
// live here too so a checkpoint restores training exactly.
class ParameterStore {
public:
    void add(const std::string& name, ad::Tensor init);
    void add_glorot(const std::string& name, std::int64_t fan_in, std::int64_t fan_out,
                    std::uint64_t seed);
    void add_zeros(const std::string& name, ad::Shape shape);
    void add_fill(const std::string& name, ad::Shape shape, double value);

    bool has(const std::string& name) const;
    const ad::Tensor& tensor(const std::string& name) const;
    std::vector<double>& values(const std::string& name);
    const std::vector<double>& values(const std::string& name) const;
    const ad::Shape& shape(const std::string& name) const;

    std::vector<std::string> names() const;           // sorted
    std::vector<std::string> names_in_group(const std::string& group) const;
    std::vector<std::string> groups() const;          // sorted, distinct
    static std::string group_of(const std::string& name);

    // Gradient buffers (same shapes as values, zero-initialized).
    void zero_grads();
    void accumulate_grad(const std::string& name, std::span<const double> g);
    std::span<const double> grad(const std::string& name) const;

    // One Adam step over every parameter of `group`; other groups untouched.
    // Keeps a per-group step counter for bias correction.
    void adam_step(const std::string& group, double lr, const AdamConfig& cfg);

    std::uint64_t group_hash(const std::string& group) const;  // values only
    std::size_t total_parameters() const;

    // Checkpoint: magic, version, then (name, rank, dims, f64 data) records,
    // little-endian. Optimizer moments ride along under suffixed names.
    void save(const std::filesystem::path& path) const;
    static ParameterStore load(const std::filesystem::path& path);

    ParameterStore snapshot() const { return *this; }

private:
    struct Entry {
        ad::Tensor value;
        std::vector<double> grad;
        std::vector<double> m;
        std::vector<double> v;
    };

    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    std::map<std::string, Entry> entries_;
    std::map<std::string, std::int64_t> group_steps_;
};

}  // namespace aml
