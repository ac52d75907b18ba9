#pragma once

#include <cstdint>
#include <vector>

#include "astroloc/losses.hpp"
#include "astroloc/mining.hpp"
#include "astroloc/retrieval.hpp"

namespace astroloc {

// Desk-scale optimization of a free embedding table: plain gradient descent
// on the raw vectors, one pair batch and one quadruplet batch per iteration,
// mining refreshed on the configured schedule.
struct TrainOptions {
    LossConfig loss;
    double lr = 0.05;
    std::uint64_t iterations = 2000;
    std::uint64_t seed = 0;
    SamplingMode mining = SamplingMode::weighted;
};

struct LossHistoryRow {
    std::uint64_t iteration = 0;
    double pair_loss = 0.0;
    double mum_loss = 0.0;
    double total = 0.0;
};

struct TrainState {
    ParamTable raw_params;
    std::uint64_t iteration = 0;
    std::vector<LossHistoryRow> history;
    std::vector<bool> touched;  // records whose parameters ever received an update
};

struct TrainResult {
    TrainState state;
    EmbeddingStore store;  // input store with re-normalized trained vectors
};

TrainResult train(const EmbeddingStore& store, const TrainOptions& opts);

// Builds an index from the db records of `current` and reports recall of the
// query records in `eval_queries` against it.
RecallReport eval_checkpoint(const EmbeddingStore& current, const EmbeddingStore& eval_queries,
                             const std::vector<int>& ns = {1, 10, 100}, bool augment = false,
                             int threads = 1);

}  // namespace astroloc
