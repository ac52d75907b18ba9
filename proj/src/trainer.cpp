#include "astroloc/trainer.hpp"

#include <cmath>

namespace astroloc {

namespace {

std::vector<std::vector<double>> normalized_subset(const ParamTable& params,
                                                   const std::vector<std::size_t>& indices) {
    std::vector<std::vector<double>> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(vec::normalized(params[i]));
    return out;
}

}  // namespace

TrainResult train(const EmbeddingStore& input, const TrainOptions& opts) {
    opts.loss.validate();
    if (!(opts.lr >= 0.0) || !std::isfinite(opts.lr))
        raise(ErrorCode::precondition, "train: lr must be finite and >= 0");

    EmbeddingStore store = input;
    store.finalize();

    const bool use_pairs = opts.loss.lambda1 > 0.0;
    const bool use_quads = opts.loss.lambda2 > 0.0;
    if (!use_pairs && !use_quads)
        raise(ErrorCode::precondition, "train: both loss weights are zero");

    const LocationIndex locations = build_location_index(store);
    if (locations.locations.size() < 2)
        raise(ErrorCode::precondition,
              "train: store must contain at least 2 non-overlapping training locations");

    PairIndex pair_index;
    if (use_pairs) {
        pair_index = mine_pairs(store, opts.loss.t_iou);
        if (pair_index.entries.empty())
            raise(ErrorCode::precondition, "train: pair index is empty at the given t_iou");
    }

    TrainState state;
    state.raw_params = params_from_store(store);
    state.touched.assign(store.size(), false);
    state.history.reserve(opts.iterations);

    Rng rng(opts.seed);
    ClusterModel model;
    MiningContext ctx;

    const std::size_t B = static_cast<std::size_t>(opts.loss.batch_size);

    for (std::uint64_t it = 0; it < opts.iterations; ++it) {
        if (use_quads && refresh_due(it, static_cast<std::uint64_t>(opts.loss.refresh_every))) {
            const std::uint64_t kmeans_seed = rng.next_u64();
            model = kmeans_fit(normalized_subset(state.raw_params, store.db_indices),
                               static_cast<std::size_t>(opts.loss.K), kmeans_seed);
            assign_queries(model, normalized_subset(state.raw_params, store.query_indices));
            ctx = build_mining_context(store, locations, model);
        }

        PairBatch pair_batch;
        if (use_pairs) pair_batch = build_pair_batch(store, pair_index, B, rng);

        QuadBatch quad_batch;
        if (use_quads) {
            bool built = false;
            for (int attempt = 0; attempt < 100 && !built; ++attempt) {
                const std::size_t k = sample_cluster(model, opts.mining, rng);
                const std::size_t capacity = ctx.cluster_locations[k].size();
                if (capacity == 0) continue;
                try {
                    quad_batch =
                        build_quad_batch(store, locations, ctx, k, std::min(B, capacity), rng);
                    built = true;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::insufficient_cluster) throw;
                }
            }
            if (!built)
                raise(ErrorCode::insufficient_cluster,
                      "train: no cluster could supply a quadruplet batch after 100 attempts");
        }

        const TotalLossOutput loss =
            total_loss(store, state.raw_params, pair_batch, quad_batch, opts.loss);
        if (!std::isfinite(loss.value) || !std::isfinite(loss.pair_value) ||
            !std::isfinite(loss.mum_value))
            raise(ErrorCode::non_finite_value,
                  "train: non-finite loss at iteration " + std::to_string(it));

        if (opts.lr > 0.0) {
            for (const auto& [idx, grad] : loss.grads) {
                // per-vector normalized step: each touched vector moves lr along
                // its own gradient direction, keeping the step size independent
                // of the mean-form 1/B and 1/(4H) loss scalings
                const double gnorm = vec::norm(grad);
                if (gnorm < 1e-12) continue;
                vec::axpy(-opts.lr / gnorm, grad, state.raw_params[idx]);
                state.touched[idx] = true;
                for (double x : state.raw_params[idx])
                    if (!std::isfinite(x))
                        raise(ErrorCode::non_finite_value,
                              "train: non-finite parameter at iteration " + std::to_string(it));
            }
        }

        state.history.push_back({it, loss.pair_value, loss.mum_value, loss.value});
        state.iteration = it + 1;
    }

    for (std::size_t i = 0; i < store.size(); ++i) {
        if (state.touched[i]) store.records[i].vector = normalize_to_unit(state.raw_params[i]);
    }
    store.finalize();
    return {std::move(state), std::move(store)};
}

RecallReport eval_checkpoint(const EmbeddingStore& current, const EmbeddingStore& eval_queries,
                             const std::vector<int>& ns, bool augment, int threads) {
    const RetrievalIndex index = build_index(current, augment);
    EvalOptions opts;
    opts.ns = ns;
    opts.threads = threads;
    return recall_at_n(index, eval_queries, opts);
}

}  // namespace astroloc
