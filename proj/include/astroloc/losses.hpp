#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "astroloc/embedding.hpp"

namespace astroloc {

// Hyperparameters of the two contrastive losses plus the training-loop
// constants that belong to them.
struct LossConfig {
    double alpha1 = 1.0;   // pair attraction gain
    double beta1 = 50.0;   // pair repulsion gain
    double alpha2 = 1.0;   // quadruplet attraction gain
    double beta2 = 50.0;   // quadruplet repulsion gain
    double lambda1 = 1.0;  // weight of the pairwise loss
    double lambda2 = 1.0;  // weight of the quadruplet loss
    double t_iou = 0.2;    // footprint IoU threshold for a valid pair
    int K = 50;            // number of mined clusters
    int batch_size = 48;   // pairs per pair batch, cap on quadruplets per quad batch
    int refresh_every = 5000;  // iterations between mining refreshes

    void validate() const;
};

// log(1 + exp(-gain * similarity)), overflow-safe.
double attraction(double gain, double similarity);

// log(1 + sum_j exp(gain * S(anchor, others[j]))); 0 for an empty set.
double repulsion(double gain, const std::vector<double>& anchor,
                 const std::vector<std::vector<double>>& others);

// Batches reference records by index into an EmbeddingStore. Raw (possibly
// non-unit) parameter vectors are supplied separately so the trainer can
// evaluate losses on its free parameters.
struct PairBatch {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query index, db index)
};

struct QuadBatch {
    std::vector<std::array<std::size_t, 4>> quads;  // db record indices
    int cluster_id = -1;
};

using ParamTable = std::vector<std::vector<double>>;  // aligned with store.records

ParamTable params_from_store(const EmbeddingStore& store);

struct LossOutput {
    double value = 0.0;
    // d(loss)/d(raw vector), normalization Jacobian included, keyed by record index
    std::unordered_map<std::size_t, std::vector<double>> grads;
};

// Eq. pair loss: attraction over matched pairs plus four repulsion terms per
// pair against the other pairs' queries and db images. Validates the batch
// invariants (within-pair IoU > t_iou, no geographic overlap across pairs).
LossOutput pair_loss(const EmbeddingStore& store, const ParamTable& params, const PairBatch& batch,
                     const LossConfig& cfg);

// Multi-similarity loss over quadruplets from a single cluster: members of a
// quadruplet attract each other and repel every member of the other
// quadruplets. Validates mutual overlap inside each quadruplet and
// disjointness across quadruplets.
LossOutput mum_loss(const EmbeddingStore& store, const ParamTable& params, const QuadBatch& batch,
                    const LossConfig& cfg);

struct TotalLossOutput {
    double value = 0.0;
    double pair_value = 0.0;
    double mum_value = 0.0;
    std::unordered_map<std::size_t, std::vector<double>> grads;
};

// lambda1 * pair_loss + lambda2 * mum_loss; gradients of records appearing in
// both batches accumulate. A component with zero weight is skipped entirely
// (its batch may then be empty).
TotalLossOutput total_loss(const EmbeddingStore& store, const ParamTable& params,
                           const PairBatch& pair_batch, const QuadBatch& quad_batch,
                           const LossConfig& cfg);

}  // namespace astroloc
