#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "astroloc/embedding.hpp"
#include "astroloc/geo.hpp"

namespace astroloc {

// Immutable flat index over database embeddings. With augment=true every
// base image contributes its four rotation variants; search collapses the
// variants back to distinct base images.
struct RetrievalIndex {
    std::size_t dim = 0;
    bool augmented = false;
    std::size_t num_base = 0;
    std::vector<float> matrix;  // num_entries x dim, row-major
    std::vector<std::string> base_ids;
    std::vector<std::optional<Footprint>> footprints;

    std::size_t num_entries() const { return base_ids.size(); }
    std::size_t memory_bytes() const { return matrix.size() * sizeof(float); }
};

RetrievalIndex build_index(const EmbeddingStore& store, bool augment);

struct SearchHit {
    std::string base_id;
    double similarity = 0.0;
};

struct Region {
    GeoPoint nadir;
    double r_vis_km = kDefaultVisRadiusKm;
};

// Exact cosine top-N over the (optionally region-filtered) entries, collapsed
// to distinct base images keeping each base's best similarity. Ties break on
// ascending base_id. Under a region filter, entries without footprints are
// excluded.
std::vector<SearchHit> search(const RetrievalIndex& index, const std::vector<float>& query,
                              std::size_t n, const std::optional<Region>& region = std::nullopt);

struct LatencyStats {
    double mean_us = 0.0;
    double p95_us = 0.0;
    std::vector<double> per_query_us;
};

struct RecallReport {
    std::vector<int> ns;
    std::map<int, double> recall_pct;
    std::size_t num_queries = 0;
    std::size_t num_db_base = 0;
    std::size_t num_db_entries = 0;
    std::size_t index_bytes = 0;
    std::vector<std::string> query_ids;
    std::vector<std::vector<SearchHit>> per_query_top;  // top max(ns) distinct bases
    std::optional<LatencyStats> latency;
};

struct EvalOptions {
    std::vector<int> ns = {1, 10, 100};
    std::optional<Region> region;
    // a prediction is correct when IoU(query, prediction) > this threshold;
    // 0 means any overlap
    double correct_iou_threshold = 0.0;
    int threads = 1;
    bool measure_latency = false;
};

// recall@N = percentage of queries whose top-N distinct-base predictions
// include at least one footprint overlapping the query footprint.
RecallReport recall_at_n(const RetrievalIndex& index, const EmbeddingStore& queries,
                         const EvalOptions& opts);

// Full-index evaluation with per-query latency statistics.
RecallReport worldwide_eval(const RetrievalIndex& index, const EmbeddingStore& queries,
                            const std::vector<int>& ns, int threads = 1);

}  // namespace astroloc
