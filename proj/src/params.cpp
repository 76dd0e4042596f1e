#include "aml/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "aml/errors.hpp"
#include "aml/kernels.hpp"
#include "aml/rng.hpp"
#include "aml/util.hpp"

namespace aml {

namespace {
constexpr char k_magic[8] = {'A', 'M', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t k_version = 1;
const std::string k_moment_m = "#adam_m";
const std::string k_moment_v = "#adam_v";
const std::string k_group_step = "#adam_t";
}  // namespace

void ParameterStore::add(const std::string& name, ad::Tensor init) {
    if (entries_.count(name)) throw ContractError("parameter already exists: " + name);
    if (name.find('#') != std::string::npos)
        throw ContractError("parameter names may not contain '#': " + name);
    Entry e;
    const std::size_t n = init.values.size();
    e.value = std::move(init);
    e.grad.assign(n, 0.0);
    e.m.assign(n, 0.0);
    e.v.assign(n, 0.0);
    entries_.emplace(name, std::move(e));
}

void ParameterStore::add_glorot(const std::string& name, std::int64_t fan_in,
                                std::int64_t fan_out, std::uint64_t seed) {
    // Stream keyed by name: init is independent of creation order.
    Rng rng(seed, Rng::stream_of(name));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    ad::Tensor t = ad::Tensor::zeros({fan_in, fan_out});
    for (double& x : t.values) x = rng.next_uniform(-limit, limit);
    add(name, std::move(t));
}

void ParameterStore::add_zeros(const std::string& name, ad::Shape shape) {
    add(name, ad::Tensor::zeros(std::move(shape)));
}

void ParameterStore::add_fill(const std::string& name, ad::Shape shape, double value) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    for (double& x : t.values) x = value;
    add(name, std::move(t));
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

bool ParameterStore::has(const std::string& name) const { return entries_.count(name) != 0; }

const ad::Tensor& ParameterStore::tensor(const std::string& name) const {
    return entry(name).value;
}

std::vector<double>& ParameterStore::values(const std::string& name) {
    return entry(name).value.values;
}

const std::vector<double>& ParameterStore::values(const std::string& name) const {
    return entry(name).value.values;
}

const ad::Shape& ParameterStore::shape(const std::string& name) const {
    return entry(name).value.shape;
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

std::vector<std::string> ParameterStore::names_in_group(const std::string& group) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_)
        if (group_of(name) == group) out.push_back(name);
    return out;
}

std::vector<std::string> ParameterStore::groups() const {
    std::set<std::string> g;
    for (const auto& [name, _] : entries_) g.insert(group_of(name));
    return {g.begin(), g.end()};
}

std::string ParameterStore::group_of(const std::string& name) {
    std::size_t dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

void ParameterStore::zero_grads() {
    for (auto& [_, e] : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

void ParameterStore::accumulate_grad(const std::string& name, std::span<const double> g) {
    Entry& e = entry(name);
    if (g.size() != e.grad.size())
        throw ContractError("gradient size mismatch for " + name + ": " +
                            std::to_string(g.size()) + " vs " + std::to_string(e.grad.size()));
    kern::ops().axpy(e.grad.data(), g.data(), 1.0, g.size());
}

std::span<const double> ParameterStore::grad(const std::string& name) const {
    const Entry& e = entry(name);
    return {e.grad.data(), e.grad.size()};
}

void ParameterStore::adam_step(const std::string& group, double lr, const AdamConfig& cfg) {
    const std::int64_t t = ++group_steps_[group];
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    bool any = false;
    for (auto& [name, e] : entries_) {
        if (group_of(name) != group) continue;
        any = true;
        kern::ops().adam_update(e.value.values.data(), e.grad.data(), e.m.data(), e.v.data(),
                                e.value.values.size(), lr, cfg.beta1, cfg.beta2, cfg.epsilon,
                                bc1, bc2);
    }
    if (!any) throw ContractError("adam_step: empty parameter group '" + group + "'");
}

std::uint64_t ParameterStore::group_hash(const std::string& group) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, e] : entries_) {
        if (group_of(name) != group) continue;
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a_doubles(e.value.values, h);
    }
    return h;
}

std::size_t ParameterStore::total_parameters() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.values.size();
    return n;
}

namespace {

void write_record(std::ostream& os, const std::string& name, const ad::Shape& shape,
                  const std::vector<double>& data) {
    le::write_string(os, name);
    le::write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) le::write_u64(os, static_cast<std::uint64_t>(d));
    for (double x : data) le::write_f64(os, x);
}

}  // namespace

void ParameterStore::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path.string());
    os.write(k_magic, sizeof(k_magic));
    le::write_u32(os, k_version);
    std::uint64_t records = entries_.size() * 3 + group_steps_.size();
    le::write_u64(os, records);
    for (const auto& [name, e] : entries_) {
        write_record(os, name, e.value.shape, e.value.values);
        write_record(os, name + k_moment_m, e.value.shape, e.m);
        write_record(os, name + k_moment_v, e.value.shape, e.v);
    }
    for (const auto& [group, t] : group_steps_)
        write_record(os, group + k_group_step, {1}, {static_cast<double>(t)});
    if (!os) throw DataError("checkpoint write failed: " + path.string());
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, k_magic, sizeof(k_magic)) != 0)
        throw DataError("not a checkpoint file: " + path.string());
    const std::uint32_t version = le::read_u32(is);
    if (version != k_version)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t records = le::read_u64(is);

    ParameterStore store;
    struct Raw {
        ad::Shape shape;
        std::vector<double> data;
    };
    std::map<std::string, Raw> raw;
    for (std::uint64_t r = 0; r < records; ++r) {
        std::string name = le::read_string(is);
        const std::uint32_t rank = le::read_u32(is);
        ad::Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d)
            shape[d] = static_cast<std::int64_t>(le::read_u64(is));
        std::vector<double> data(static_cast<std::size_t>(ad::numel(shape)));
        for (double& x : data) x = le::read_f64(is);
        raw.emplace(std::move(name), Raw{std::move(shape), std::move(data)});
    }
    for (auto& [name, rec] : raw) {
        if (name.find('#') != std::string::npos) continue;
        store.add(name, ad::Tensor(rec.shape, rec.data));
        auto mit = raw.find(name + k_moment_m);
        auto vit = raw.find(name + k_moment_v);
        Entry& e = store.entry(name);
        if (mit != raw.end()) e.m = mit->second.data;
        if (vit != raw.end()) e.v = vit->second.data;
    }
    for (auto& [name, rec] : raw) {
        const std::size_t pos = name.find(k_group_step);
        if (pos == std::string::npos) continue;
        store.group_steps_[name.substr(0, pos)] =
            static_cast<std::int64_t>(rec.data.at(0));
    }
    return store;
}

}  // namespace aml
