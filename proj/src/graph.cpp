#include "aml/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "aml/errors.hpp"
#include "aml/rng.hpp"
#include "aml/util.hpp"

namespace aml {

namespace {

constexpr char k_magic[8] = {'A', 'M', 'L', 'G', 'R', 'P', 'H', '\0'};
constexpr std::uint32_t k_version = 1;

auto edge_sort_key(const Edge& e) {
    return std::tie(e.time_step, e.src, e.dst, e.amount_paid_cents, e.amount_received_cents,
                    e.payment_currency, e.receiving_currency, e.payment_format, e.is_laundering);
}

void finalize(TemporalGraph& g) {
    std::sort(g.edges.begin(), g.edges.end(),
              [](const Edge& a, const Edge& b) { return edge_sort_key(a) < edge_sort_key(b); });
    g.in_edges.assign(g.num_nodes(), {});
    g.out_edges.assign(g.num_nodes(), {});
    for (std::uint32_t e = 0; e < g.edges.size(); ++e) {
        g.out_edges[g.edges[e].src].push_back(e);
        g.in_edges[g.edges[e].dst].push_back(e);
    }
}

}  // namespace

std::size_t TemporalGraph::count_label(Label l) const {
    std::size_t n = 0;
    for (Label x : labels)
        if (x == l) ++n;
    return n;
}

TemporalGraph build_graph(const std::vector<TransactionRecord>& transactions,
                          const std::vector<AccountRecord>& accounts,
                          std::uint32_t total_steps,
                          std::vector<std::string> currencies,
                          std::vector<std::string> formats) {
    if (accounts.empty()) throw DataError("build_graph: empty account list");
    if (transactions.empty()) throw DataError("build_graph: empty transaction list");

    TemporalGraph g;
    g.total_steps = total_steps;
    g.currencies = std::move(currencies);
    g.formats = std::move(formats);
    g.node_bank.reserve(accounts.size());
    g.node_account.reserve(accounts.size());
    g.labels.reserve(accounts.size());
    for (const AccountRecord& a : accounts) {
        g.node_bank.push_back(a.bank);
        g.node_account.push_back(a.account);
        g.labels.push_back(a.label);
    }

    g.edges.reserve(transactions.size());
    for (const TransactionRecord& tx : transactions) {
        if (tx.src_account >= accounts.size() || tx.dst_account >= accounts.size())
            throw ConsistencyError("transaction references unknown account index " +
                                   std::to_string(std::max(tx.src_account, tx.dst_account)));
        if (tx.time_step >= total_steps)
            throw ConsistencyError("transaction time step " + std::to_string(tx.time_step) +
                                   " outside total_steps " + std::to_string(total_steps));
        Edge e;
        e.src = tx.src_account;
        e.dst = tx.dst_account;
        e.time_step = tx.time_step;
        e.amount_paid_cents = tx.amount_paid_cents;
        e.amount_received_cents = tx.amount_received_cents;
        e.payment_currency = tx.payment_currency;
        e.receiving_currency = tx.receiving_currency;
        e.payment_format = tx.payment_format;
        e.is_laundering = tx.is_laundering;
        g.edges.push_back(e);
    }
    finalize(g);
    return g;
}

TemporalGraph build_graph(const Intermediate& ir) {
    return build_graph(ir.transactions, ir.accounts, ir.total_steps, ir.currencies, ir.formats);
}

namespace {

std::vector<std::vector<std::uint32_t>> dedup(std::vector<std::set<std::uint32_t>>& sets) {
    std::vector<std::vector<std::uint32_t>> out(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) out[i].assign(sets[i].begin(), sets[i].end());
    return out;
}

}  // namespace

std::vector<std::vector<std::uint32_t>> undirected_neighbors(const TemporalGraph& g) {
    std::vector<std::set<std::uint32_t>> sets(g.num_nodes());
    for (const Edge& e : g.edges) {
        if (e.src == e.dst) continue;
        sets[e.src].insert(e.dst);
        sets[e.dst].insert(e.src);
    }
    return dedup(sets);
}

std::vector<std::vector<std::uint32_t>> in_neighbors(const TemporalGraph& g) {
    std::vector<std::set<std::uint32_t>> sets(g.num_nodes());
    for (const Edge& e : g.edges) {
        if (e.src == e.dst) continue;
        sets[e.dst].insert(e.src);
    }
    return dedup(sets);
}

std::vector<std::vector<std::uint32_t>> out_neighbors(const TemporalGraph& g) {
    std::vector<std::set<std::uint32_t>> sets(g.num_nodes());
    for (const Edge& e : g.edges) {
        if (e.src == e.dst) continue;
        sets[e.src].insert(e.dst);
    }
    return dedup(sets);
}

TemporalGraph induced_subgraph(const TemporalGraph& g, const std::vector<std::uint32_t>& nodes) {
    std::vector<std::uint32_t> sorted = nodes;
    std::sort(sorted.begin(), sorted.end());
    const std::uint32_t absent = UINT32_MAX;
    std::vector<std::uint32_t> remap(g.num_nodes(), absent);
    for (std::uint32_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] >= g.num_nodes())
            throw ContractError("induced_subgraph: node id out of range");
        if (i > 0 && sorted[i] == sorted[i - 1])
            throw ContractError("induced_subgraph: duplicate node id");
        remap[sorted[i]] = i;
    }

    TemporalGraph out;
    out.total_steps = g.total_steps;
    out.currencies = g.currencies;
    out.formats = g.formats;
    out.node_bank.reserve(sorted.size());
    out.node_account.reserve(sorted.size());
    out.labels.reserve(sorted.size());
    for (std::uint32_t old : sorted) {
        out.node_bank.push_back(g.node_bank[old]);
        out.node_account.push_back(g.node_account[old]);
        out.labels.push_back(g.labels[old]);
    }
    for (const Edge& e : g.edges) {
        if (remap[e.src] == absent || remap[e.dst] == absent) continue;
        Edge copy = e;
        copy.src = remap[e.src];
        copy.dst = remap[e.dst];
        out.edges.push_back(copy);
    }
    finalize(out);
    return out;
}

std::vector<TemporalGraph> stratified_split(const TemporalGraph& g, const SplitSpec& spec) {
    const std::size_t parts = spec.fractions.size();
    if (parts < 2) throw ConfigError("split: need at least two fractions");
    double sum = 0.0;
    for (double f : spec.fractions) {
        if (f <= 0.0 || f >= 1.0)
            throw ConfigError("split: every fraction must lie in (0, 1)");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

    // Per-label shuffle with a label-keyed stream, then largest-remainder
    // apportionment of the label's nodes across parts.
    std::vector<std::vector<std::uint32_t>> part_nodes(parts);
    for (Label label : {Label::lawful, Label::launderer}) {
        std::vector<std::uint32_t> ids;
        for (std::uint32_t i = 0; i < g.num_nodes(); ++i)
            if (g.labels[i] == label) ids.push_back(i);
        if (ids.empty()) throw SplitError("split: a label class is empty");
        if (ids.size() < parts)
            throw SplitError("split: label class with " + std::to_string(ids.size()) +
                             " nodes is smaller than " + std::to_string(parts) + " parts");
        // Sort by account key before shuffling: the assignment depends on the
        // key set, not on node input order.
        std::sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
            return std::tie(g.node_bank[a], g.node_account[a]) <
                   std::tie(g.node_bank[b], g.node_account[b]);
        });
        Rng rng(spec.seed, Rng::stream_of(label == Label::launderer ? "split.launderer"
                                                                    : "split.lawful"));
        rng.shuffle(ids);

        const double n = static_cast<double>(ids.size());
        std::vector<std::size_t> counts(parts);
        std::vector<std::pair<double, std::size_t>> remainders(parts);
        std::size_t assigned = 0;
        for (std::size_t p = 0; p < parts; ++p) {
            const double exact = spec.fractions[p] * n;
            counts[p] = static_cast<std::size_t>(exact);
            remainders[p] = {exact - static_cast<double>(counts[p]), p};
            assigned += counts[p];
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < ids.size(); ++r, ++assigned)
            ++counts[remainders[r % parts].second];

        std::size_t cursor = 0;
        for (std::size_t p = 0; p < parts; ++p) {
            for (std::size_t k = 0; k < counts[p]; ++k)
                part_nodes[p].push_back(ids[cursor++]);
        }
    }

    std::vector<TemporalGraph> out;
    out.reserve(parts);
    for (auto& nodes : part_nodes) out.push_back(induced_subgraph(g, nodes));
    return out;
}

void save_graph_cache(const TemporalGraph& g, const std::filesystem::path& path,
                      const GraphCacheInfo& info) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write graph cache: " + path.string());
    os.write(k_magic, sizeof(k_magic));
    le::write_u32(os, k_version);
    le::write_u64(os, info.source_digest);
    le::write_string(os, info.source_name);
    le::write_u32(os, g.total_steps);
    le::write_u64(os, g.num_nodes());
    le::write_u64(os, g.num_edges());
    le::write_u32(os, static_cast<std::uint32_t>(g.currencies.size()));
    for (const auto& s : g.currencies) le::write_string(os, s);
    le::write_u32(os, static_cast<std::uint32_t>(g.formats.size()));
    for (const auto& s : g.formats) le::write_string(os, s);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        le::write_string(os, g.node_bank[i]);
        le::write_string(os, g.node_account[i]);
        le::write_u8(os, static_cast<std::uint8_t>(g.labels[i]));
    }
    for (const Edge& e : g.edges) {
        le::write_u32(os, e.src);
        le::write_u32(os, e.dst);
        le::write_u32(os, e.time_step);
        le::write_i64(os, e.amount_paid_cents);
        le::write_i64(os, e.amount_received_cents);
        le::write_u16(os, e.payment_currency);
        le::write_u16(os, e.receiving_currency);
        le::write_u16(os, e.payment_format);
        le::write_u8(os, e.is_laundering ? 1 : 0);
    }
    if (!os) throw DataError("graph cache write failed: " + path.string());
}

TemporalGraph load_graph_cache(const std::filesystem::path& path, GraphCacheInfo* info) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open graph cache: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, k_magic, sizeof(k_magic)) != 0)
        throw DataError("not a graph cache file: " + path.string());
    const std::uint32_t version = le::read_u32(is);
    if (version != k_version)
        throw DataError("unsupported graph cache version " + std::to_string(version));

    GraphCacheInfo local;
    local.source_digest = le::read_u64(is);
    local.source_name = le::read_string(is);
    if (info) *info = local;

    TemporalGraph g;
    g.total_steps = le::read_u32(is);
    const std::uint64_t nodes = le::read_u64(is);
    const std::uint64_t edges = le::read_u64(is);
    const std::uint32_t n_cur = le::read_u32(is);
    g.currencies.reserve(n_cur);
    for (std::uint32_t i = 0; i < n_cur; ++i) g.currencies.push_back(le::read_string(is));
    const std::uint32_t n_fmt = le::read_u32(is);
    g.formats.reserve(n_fmt);
    for (std::uint32_t i = 0; i < n_fmt; ++i) g.formats.push_back(le::read_string(is));
    g.node_bank.reserve(nodes);
    g.node_account.reserve(nodes);
    g.labels.reserve(nodes);
    for (std::uint64_t i = 0; i < nodes; ++i) {
        g.node_bank.push_back(le::read_string(is));
        g.node_account.push_back(le::read_string(is));
        g.labels.push_back(static_cast<Label>(le::read_u8(is)));
    }
    g.edges.reserve(edges);
    for (std::uint64_t i = 0; i < edges; ++i) {
        Edge e;
        e.src = le::read_u32(is);
        e.dst = le::read_u32(is);
        e.time_step = le::read_u32(is);
        e.amount_paid_cents = le::read_i64(is);
        e.amount_received_cents = le::read_i64(is);
        e.payment_currency = le::read_u16(is);
        e.receiving_currency = le::read_u16(is);
        e.payment_format = le::read_u16(is);
        e.is_laundering = le::read_u8(is) != 0;
        g.edges.push_back(e);
    }
    finalize(g);
    return g;
}

}  // namespace aml
