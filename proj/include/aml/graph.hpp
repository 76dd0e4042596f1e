#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aml/ingest.hpp"

namespace aml {

struct Edge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t time_step = 0;
    std::int64_t amount_paid_cents = 0;
    std::int64_t amount_received_cents = 0;
    std::uint16_t payment_currency = 0;
    std::uint16_t receiving_currency = 0;
    std::uint16_t payment_format = 0;
    bool is_laundering = false;
};

// Account-transaction multigraph with per-edge time steps. Edges are kept in
// a canonical sort order (step first), which makes the whole pipeline
// invariant to the input row order and keeps incidence lists time-sorted by
// construction. Immutable after build; share freely across threads.
struct TemporalGraph {
    std::vector<std::string> node_bank;
    std::vector<std::string> node_account;
    std::vector<Label> labels;
    std::vector<Edge> edges;
    std::vector<std::vector<std::uint32_t>> in_edges;   // edge ids per node
    std::vector<std::vector<std::uint32_t>> out_edges;
    std::uint32_t total_steps = 0;
    std::vector<std::string> currencies;
    std::vector<std::string> formats;

    std::size_t num_nodes() const { return labels.size(); }
    std::size_t num_edges() const { return edges.size(); }
    std::size_t count_label(Label l) const;
    std::string node_key(std::size_t i) const { return node_bank[i] + "|" + node_account[i]; }
};

TemporalGraph build_graph(const Intermediate& ir);
// Spec-shaped overload for callers that assembled the lists themselves.
TemporalGraph build_graph(const std::vector<TransactionRecord>& transactions,
                          const std::vector<AccountRecord>& accounts,
                          std::uint32_t total_steps,
                          std::vector<std::string> currencies,
                          std::vector<std::string> formats);

// Distinct-neighbor adjacency on the undirected simple projection.
// Self-loops are excluded from all projections.
std::vector<std::vector<std::uint32_t>> undirected_neighbors(const TemporalGraph& g);
std::vector<std::vector<std::uint32_t>> in_neighbors(const TemporalGraph& g);
std::vector<std::vector<std::uint32_t>> out_neighbors(const TemporalGraph& g);

struct SplitSpec {
    std::vector<double> fractions = {0.70, 0.15, 0.15};
    std::uint64_t seed = 0;
};

// Label-stratified node split into induced subgraphs. Node sets are disjoint
// and exhaustive; edges crossing parts are dropped. Deterministic in the seed
// and independent of node input order.
std::vector<TemporalGraph> stratified_split(const TemporalGraph& g, const SplitSpec& spec);

TemporalGraph induced_subgraph(const TemporalGraph& g,
                               const std::vector<std::uint32_t>& nodes);

// Binary graph cache (little-endian, versioned). The source digest lets a
// loader detect stale caches when the original CSV is still around.
struct GraphCacheInfo {
    std::string source_name;
    std::uint64_t source_digest = 0;
};

void save_graph_cache(const TemporalGraph& g, const std::filesystem::path& path,
                      const GraphCacheInfo& info);
TemporalGraph load_graph_cache(const std::filesystem::path& path, GraphCacheInfo* info = nullptr);

}  // namespace aml
