#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aml/graph.hpp"

namespace aml {

// All feature computations read only the subgraph they are given: a split's
// table never sees another split's structure.

// Per-node transaction statistics, row-major [num_nodes x 7]:
// avg incident transactions per step, min/max amount sent, min/max amount
// received, population variance of sent and of received amounts. Nodes with
// no sent (received) transactions get zeros for the matching stats.
std::vector<double> transaction_stats(const TemporalGraph& g);

// Per-node topology features, row-major [num_nodes x 6]:
// in-degree, out-degree (distinct neighbors), degree centrality deg/(n-1),
// closeness (Wasserman-Faust scaling over the directed simple projection),
// eigenvector centrality (power iteration on the undirected simple
// projection, L2-normalized), average neighbor degree.
// A single-node graph gets all-zero centralities.
std::vector<double> topology_features(const TemporalGraph& g);

// Local clustering coefficient on the undirected simple projection;
// degree < 2 gives 0.
std::vector<double> clustering_coefficient(const TemporalGraph& g);

struct PageRankOptions {
    double damping = 0.85;
    double tol = 1e-8;
    int max_iter = 100;
};

struct PageRankResult {
    std::vector<double> scores;
    int iterations = 0;
    bool converged = false;
};

// PageRank on the directed simple projection (parallel edges collapsed to
// weight 1, self-loops dropped); dangling mass is redistributed uniformly.
PageRankResult pagerank(const TemporalGraph& g, const PageRankOptions& opts = {});

// Per-column statistics and one-hot vocabularies fit on the training split.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population
    std::vector<std::string> format_vocab;    // sorted names; "other" slot appended
    std::vector<std::string> currency_vocab;
};

struct FeatureTable {
    std::size_t node_dim = 0;
    std::size_t edge_dim = 0;
    std::vector<double> node_features;  // [num_nodes x node_dim], z-scored
    std::vector<double> edge_features;  // [num_edges x edge_dim]
    std::vector<std::string> feature_names;
    std::vector<std::string> edge_feature_names;
    NormStats stats;  // the stats used for normalization (training split's)

    std::size_t num_nodes() const { return node_dim ? node_features.size() / node_dim : 0; }
    std::size_t num_edges() const { return edge_dim ? edge_features.size() / edge_dim : 0; }
    double node_at(std::size_t node, std::size_t col) const {
        return node_features[node * node_dim + col];
    }
};

// Computes all four feature families on this subgraph, z-scores node columns
// with `train_stats` (or with this split's own stats when null, i.e. when
// this IS the training split), and builds per-transaction edge features:
// log1p amounts, one-hot payment format and payment currency over the
// training vocabulary with an "other" slot, and a same-currency flag.
FeatureTable assemble(const TemporalGraph& g, const PageRankOptions& pr_opts = {},
                      const NormStats* train_stats = nullptr);

void export_feature_table(const FeatureTable& t, const std::filesystem::path& tsv_path,
                          const std::filesystem::path& stats_path);

}  // namespace aml
