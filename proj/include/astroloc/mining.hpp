#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "astroloc/embedding.hpp"
#include "astroloc/losses.hpp"

namespace astroloc {

// k-means model over database embeddings plus the query-derived sampling
// weights. `assignments` is aligned with the vector list given to
// kmeans_fit; the trainer always fits on store.db_indices order.
struct ClusterModel {
    std::size_t dim = 0;
    std::size_t K = 0;
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignments;
    std::vector<std::uint64_t> bins;       // query count per cluster
    std::vector<double> weights;           // Pr(k) = b_k / sum(b); uniform when sum(b) == 0
    std::vector<double> objective_history; // within-cluster SSE after each assignment step
    std::uint64_t seed = 0;
};

// k-means++ seeding, Lloyd iterations until the max centroid shift is below
// 1e-4 (or 100 iterations), deterministic under seed. Empty clusters are
// re-seeded with the point farthest from its assigned centroid.
ClusterModel kmeans_fit(const std::vector<std::vector<double>>& vectors, std::size_t K,
                        std::uint64_t seed);

// Nearest-centroid assignment of queries; fills bins and weights. Queries
// never move the centroids. Inputs are normalized first, so any positive
// rescaling of the queries leaves the bins unchanged.
void assign_queries(ClusterModel& model, const std::vector<std::vector<double>>& query_vectors);

int nearest_centroid(const ClusterModel& model, const std::vector<double>& v);

enum class SamplingMode { uniform, weighted };

std::size_t sample_cluster(const ClusterModel& model, SamplingMode mode, Rng& rng);

// All (query, db base image) pairs whose footprints exceed the IoU
// threshold. Rotated db variants collapse onto their base_id; the rotation
// is chosen when a batch is built.
struct PairIndexEntry {
    std::size_t query_index = 0;
    std::string base_id;
};

struct PairIndex {
    std::vector<PairIndexEntry> entries;
};

PairIndex mine_pairs(const EmbeddingStore& store, double t_iou);

// Draws B pairs by greedy rejection: a candidate is accepted only when
// neither of its footprints overlaps anything already in the batch.
PairBatch build_pair_batch(const EmbeddingStore& store, const PairIndex& index, std::size_t B,
                           Rng& rng, std::size_t max_attempts = 0 /* default 1000*B */);

// Locations are connected components of the footprint-overlap graph over db
// records (db records without footprints are left out).
struct LocationIndex {
    std::vector<std::vector<std::size_t>> locations;  // member record indices, each sorted
    std::vector<int> location_of;                     // per store record, -1 if none
};

LocationIndex build_location_index(const EmbeddingStore& store);

// Location-level cluster membership: a location belongs to the cluster that
// the majority of its member records are assigned to (ties to the lowest
// cluster id). Only locations with >= 4 records can yield quadruplets.
struct MiningContext {
    std::vector<std::vector<std::size_t>> cluster_locations;  // per cluster: location ids
};

MiningContext build_mining_context(const EmbeddingStore& store, const LocationIndex& locations,
                                   const ClusterModel& model);

// H quadruplets from cluster k, each quadruplet 4 mutually overlapping
// records of one location; distinct quadruplets never overlap. Raises
// insufficient_cluster when the cluster cannot supply H locations.
QuadBatch build_quad_batch(const EmbeddingStore& store, const LocationIndex& locations,
                           const MiningContext& ctx, std::size_t k, std::size_t H, Rng& rng);

// Convenience overload that rebuilds the location index and context.
QuadBatch build_quad_batch(const EmbeddingStore& store, const ClusterModel& model, std::size_t k,
                           std::size_t H, Rng& rng);

bool refresh_due(std::uint64_t iteration, std::uint64_t refresh_every);

// Persistence: one JSON header line (K, dim, seed, bins) followed by the
// centroid block in the AEM1 float32 layout. Assignments are not stored.
void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path);
ClusterModel load_cluster_model(const std::filesystem::path& path);

}  // namespace astroloc
