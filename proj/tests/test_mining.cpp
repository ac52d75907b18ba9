#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "astroloc/mining.hpp"
#include "helpers.hpp"

using namespace astroloc;

namespace {

std::vector<std::vector<double>> blob(Rng& rng, const std::vector<double>& center, double sigma,
                                      std::size_t count) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v = center;
        for (double& x : v) x += sigma * rng.normal();
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

TEST_CASE("kmeans_fit") {
    SUBCASE("K equal to the number of vectors gives objective zero") {
        Rng rng(1);
        std::vector<std::vector<double>> vectors;
        for (int i = 0; i < 12; ++i) vectors.push_back(testhelp::random_unit(rng, 6));
        const ClusterModel model = kmeans_fit(vectors, vectors.size(), 3);
        CHECK(model.objective_history.back() == doctest::Approx(0.0).epsilon(1e-12));
        std::set<int> used(model.assignments.begin(), model.assignments.end());
        CHECK(used.size() == vectors.size());
    }
    SUBCASE("recovers two well-separated blobs") {
        Rng rng(2);
        const double sigma = 0.05;  // separation is 2.0 = 40 sigma along the first axis
        std::vector<double> c1(8, 0.0), c2(8, 0.0);
        c1[0] = 1.0;
        c2[0] = -1.0;
        auto vectors = blob(rng, c1, sigma, 40);
        const auto second = blob(rng, c2, sigma, 40);
        vectors.insert(vectors.end(), second.begin(), second.end());
        const ClusterModel model = kmeans_fit(vectors, 2, 7);
        // purity: every blob maps onto exactly one cluster
        CHECK(model.assignments[0] != model.assignments[40]);
        for (int i = 0; i < 40; ++i) {
            CHECK(model.assignments[i] == model.assignments[0]);
            CHECK(model.assignments[40 + i] == model.assignments[40]);
        }
    }
    SUBCASE("deterministic under seed") {
        Rng rng(3);
        std::vector<std::vector<double>> vectors;
        for (int i = 0; i < 60; ++i) vectors.push_back(testhelp::random_unit(rng, 8));
        const ClusterModel a = kmeans_fit(vectors, 5, 99);
        const ClusterModel b = kmeans_fit(vectors, 5, 99);
        CHECK(a.assignments == b.assignments);
        for (std::size_t k = 0; k < 5; ++k)
            for (std::size_t i = 0; i < 8; ++i)
                CHECK(a.centroids[k][i] == b.centroids[k][i]);
    }
    SUBCASE("objective is non-increasing, partition holds, no empty clusters") {
        Rng rng(4);
        std::vector<std::vector<double>> vectors;
        for (int i = 0; i < 200; ++i) vectors.push_back(testhelp::random_unit(rng, 16));
        const ClusterModel model = kmeans_fit(vectors, 12, 5);
        for (std::size_t i = 1; i < model.objective_history.size(); ++i)
            CHECK(model.objective_history[i] <= model.objective_history[i - 1] + 1e-12);
        std::vector<std::size_t> counts(12, 0);
        for (int a : model.assignments) {
            REQUIRE(a >= 0);
            REQUIRE(a < 12);
            counts[static_cast<std::size_t>(a)]++;
        }
        for (std::size_t k = 0; k < 12; ++k) CHECK(counts[k] > 0);
        // fixed point: one more nearest-centroid pass changes nothing
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            int best = 0;
            double best_d = 1e300;
            for (std::size_t k = 0; k < 12; ++k) {
                double d = 0.0;
                for (std::size_t c = 0; c < 16; ++c) {
                    const double diff = vectors[i][c] - model.centroids[k][c];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(k);
                }
            }
            CHECK(best == model.assignments[i]);
        }
    }
    SUBCASE("fewer vectors than K") {
        Rng rng(5);
        std::vector<std::vector<double>> vectors = {testhelp::random_unit(rng, 4)};
        CHECK_THROWS_AS(kmeans_fit(vectors, 2, 0), Error);
    }
}

TEST_CASE("assign_queries derives bins and weights") {
    ClusterModel model;
    model.dim = 2;
    model.K = 3;
    model.centroids = {{1, 0}, {0, 1}, {-1, 0}};

    SUBCASE("10/90/0 split") {
        std::vector<std::vector<double>> queries;
        for (int i = 0; i < 10; ++i) queries.push_back({0.9, 0.1});
        for (int i = 0; i < 90; ++i) queries.push_back({0.1, 0.9});
        assign_queries(model, queries);
        CHECK(model.bins == std::vector<std::uint64_t>{10, 90, 0});
        CHECK(model.weights[0] == doctest::Approx(0.1));
        CHECK(model.weights[1] == doctest::Approx(0.9));
        CHECK(model.weights[2] == doctest::Approx(0.0));

        // positive rescaling never changes the bins
        for (auto& q : queries)
            for (double& x : q) x *= 37.5;
        ClusterModel scaled = model;
        assign_queries(scaled, queries);
        CHECK(scaled.bins == model.bins);
    }
    SUBCASE("all queries in one cluster") {
        assign_queries(model, {{1, 0.01}, {1, -0.01}});
        CHECK(model.weights[0] == doctest::Approx(1.0));
        CHECK(model.weights[1] == doctest::Approx(0.0));
    }
    SUBCASE("zero queries falls back to uniform") {
        assign_queries(model, {});
        for (double w : model.weights) CHECK(w == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(assign_queries(model, {{1, 0, 0}}), Error);
    }
}

TEST_CASE("sample_cluster frequencies") {
    ClusterModel model;
    model.dim = 2;
    model.K = 3;
    model.centroids = {{1, 0}, {0, 1}, {-1, 0}};
    model.bins = {10, 90, 0};
    model.weights = {0.1, 0.9, 0.0};

    SUBCASE("weighted draws follow the bin distribution, zero bins never drawn") {
        Rng rng(123);
        std::vector<std::size_t> counts(3, 0);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) counts[sample_cluster(model, SamplingMode::weighted, rng)]++;
        CHECK(std::abs(double(counts[0]) / draws - 0.1) < 0.01);
        CHECK(std::abs(double(counts[1]) / draws - 0.9) < 0.01);
        CHECK(counts[2] == 0);
    }
    SUBCASE("uniform draws are equiprobable") {
        ClusterModel m4;
        m4.K = 4;
        m4.centroids = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        Rng rng(321);
        std::vector<std::size_t> counts(4, 0);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) counts[sample_cluster(m4, SamplingMode::uniform, rng)]++;
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(std::abs(double(counts[k]) / draws - 0.25) < 0.01);
    }
    SUBCASE("degenerate weights") {
        model.weights = {1.0, 0.0, 0.0};
        Rng rng(5);
        for (int i = 0; i < 1000; ++i)
            CHECK(sample_cluster(model, SamplingMode::weighted, rng) == 0);
    }
}

TEST_CASE("mine_pairs") {
    SUBCASE("synthetic store pairs every query with its location's bases") {
        const EmbeddingStore store = synth_dataset({10, 4, 1, 8, 0.2, 21});
        const PairIndex index = mine_pairs(store, 0.2);
        CHECK(index.entries.size() == 40);
        // brute-force check over all query x base combinations
        std::size_t expected = 0;
        for (std::size_t qi : store.query_indices) {
            for (const auto& [base_id, variants] : store.db_variants) {
                const auto& fp = store.record(variants[0]).footprint;
                if (footprint_iou(*store.record(qi).footprint, *fp) > 0.2) expected++;
            }
        }
        CHECK(expected == index.entries.size());
        for (const PairIndexEntry& e : index.entries) {
            // same location prefix, e.g. loc00003
            CHECK(store.record(e.query_index).id.substr(0, 8) == e.base_id.substr(0, 8));
        }
    }
    SUBCASE("identical footprints pair, disjoint do not") {
        Rng rng(8);
        EmbeddingStore store = testhelp::grid_store(2, 1, 1, 4, rng);
        const PairIndex index = mine_pairs(store, 0.2);
        REQUIRE(index.entries.size() == 2);
    }
    SUBCASE("missing query footprint") {
        Rng rng(9);
        EmbeddingStore store = testhelp::grid_store(2, 1, 1, 4, rng);
        store.records[store.query_indices[0]].footprint.reset();
        store.finalize();
        CHECK_THROWS_WITH_AS(mine_pairs(store, 0.2), doctest::Contains("footprint"), Error);
    }
}

TEST_CASE("build_pair_batch") {
    const EmbeddingStore store = synth_dataset({60, 4, 1, 8, 0.2, 31});
    const PairIndex index = mine_pairs(store, 0.2);

    SUBCASE("B=1 is always satisfiable") {
        Rng rng(1);
        const PairBatch batch = build_pair_batch(store, index, 1, rng);
        CHECK(batch.pairs.size() == 1);
    }
    SUBCASE("batch satisfies the no-overlap constraint and the IoU threshold") {
        Rng rng(2);
        const PairBatch batch = build_pair_batch(store, index, 48, rng);
        REQUIRE(batch.pairs.size() == 48);
        for (std::size_t i = 0; i < batch.pairs.size(); ++i) {
            const auto& [qi, di] = batch.pairs[i];
            CHECK(store.record(qi).kind == RecordKind::query);
            CHECK(store.record(di).kind == RecordKind::db);
            CHECK(footprint_iou(*store.record(qi).footprint, *store.record(di).footprint) > 0.2);
            for (std::size_t j = i + 1; j < batch.pairs.size(); ++j) {
                const auto& [qj, dj] = batch.pairs[j];
                CHECK_FALSE(footprints_overlap(*store.record(qi).footprint,
                                               *store.record(qj).footprint));
                CHECK_FALSE(footprints_overlap(*store.record(qi).footprint,
                                               *store.record(dj).footprint));
                CHECK_FALSE(footprints_overlap(*store.record(di).footprint,
                                               *store.record(qj).footprint));
                CHECK_FALSE(footprints_overlap(*store.record(di).footprint,
                                               *store.record(dj).footprint));
            }
        }
    }
    SUBCASE("deterministic under the rng seed") {
        Rng rng_a(77), rng_b(77);
        const PairBatch a = build_pair_batch(store, index, 20, rng_a);
        const PairBatch b = build_pair_batch(store, index, 20, rng_b);
        CHECK(a.pairs == b.pairs);
    }
    SUBCASE("cannot fill a batch beyond the available locations") {
        const EmbeddingStore tiny = synth_dataset({2, 2, 1, 4, 0.1, 5});
        const PairIndex tiny_index = mine_pairs(tiny, 0.2);
        Rng rng(3);
        CHECK_THROWS_WITH_AS(build_pair_batch(tiny, tiny_index, 3, rng),
                             doctest::Contains("non-overlapping"), Error);
    }
}

TEST_CASE("build_quad_batch") {
    const EmbeddingStore store = synth_dataset({12, 4, 1, 8, 0.2, 41});
    const std::vector<std::vector<double>> db_vecs = [&] {
        std::vector<std::vector<double>> out;
        for (std::size_t di : store.db_indices) out.push_back(vec::to_double(store.record(di).vector));
        return out;
    }();
    const ClusterModel model = kmeans_fit(db_vecs, 3, 11);

    SUBCASE("quads share a location, distinct quads never overlap") {
        const LocationIndex locations = build_location_index(store);
        const MiningContext ctx = build_mining_context(store, locations, model);
        for (std::size_t k = 0; k < 3; ++k) {
            const std::size_t capacity = ctx.cluster_locations[k].size();
            if (capacity == 0) continue;
            Rng rng(k);
            const QuadBatch batch = build_quad_batch(store, locations, ctx, k,
                                                     std::min<std::size_t>(capacity, 4), rng);
            CHECK(batch.cluster_id == static_cast<int>(k));
            for (const auto& quad : batch.quads)
                for (int i = 0; i < 4; ++i)
                    for (int j = i + 1; j < 4; ++j)
                        CHECK(footprints_overlap(*store.record(quad[i]).footprint,
                                                 *store.record(quad[j]).footprint));
            for (std::size_t a = 0; a < batch.quads.size(); ++a)
                for (std::size_t b = a + 1; b < batch.quads.size(); ++b)
                    for (std::size_t ma : batch.quads[a])
                        for (std::size_t mb : batch.quads[b])
                            CHECK_FALSE(footprints_overlap(*store.record(ma).footprint,
                                                           *store.record(mb).footprint));
        }
    }
    SUBCASE("a location with exactly 4 records yields those records") {
        const EmbeddingStore single = synth_dataset({2, 4, 1, 8, 0.2, 43});
        const std::vector<std::vector<double>> vecs = [&] {
            std::vector<std::vector<double>> out;
            for (std::size_t di : single.db_indices)
                out.push_back(vec::to_double(single.record(di).vector));
            return out;
        }();
        const ClusterModel m = kmeans_fit(vecs, 1, 1);
        Rng rng(5);
        const QuadBatch batch = build_quad_batch(single, m, 0, 1, rng);
        REQUIRE(batch.quads.size() == 1);
        std::set<std::string> bases;
        for (std::size_t r : batch.quads[0]) bases.insert(single.record(r).base_id.substr(0, 8));
        CHECK(bases.size() == 1);  // all four from the same location
    }
    SUBCASE("H larger than the cluster capacity") {
        Rng rng(6);
        CHECK_THROWS_WITH_AS(build_quad_batch(store, model, 0, 100, rng),
                             doctest::Contains("locations"), Error);
    }
}

TEST_CASE("refresh schedule") {
    CHECK(refresh_due(0, 5000));
    CHECK(refresh_due(5000, 5000));
    CHECK_FALSE(refresh_due(4999, 5000));
    CHECK(refresh_due(10000, 5000));
    CHECK_THROWS_AS(refresh_due(1, 0), Error);
}

TEST_CASE("cluster model persistence") {
    Rng rng(17);
    std::vector<std::vector<double>> vectors;
    for (int i = 0; i < 30; ++i) vectors.push_back(testhelp::random_unit(rng, 6));
    ClusterModel model = kmeans_fit(vectors, 4, 23);
    std::vector<std::vector<double>> queries;
    for (int i = 0; i < 10; ++i) queries.push_back(testhelp::random_unit(rng, 6));
    assign_queries(model, queries);

    const auto path = std::filesystem::temp_directory_path() / "astroloc_test" / "clusters.bin";
    std::filesystem::create_directories(path.parent_path());
    save_cluster_model(model, path);
    const ClusterModel loaded = load_cluster_model(path);
    CHECK(loaded.K == model.K);
    CHECK(loaded.dim == model.dim);
    CHECK(loaded.seed == model.seed);
    CHECK(loaded.bins == model.bins);
    for (std::size_t k = 0; k < model.K; ++k)
        for (std::size_t i = 0; i < model.dim; ++i)
            CHECK(loaded.centroids[k][i] ==
                  doctest::Approx(model.centroids[k][i]).epsilon(1e-6));  // float32 payload
    for (std::size_t k = 0; k < model.K; ++k)
        CHECK(loaded.weights[k] == doctest::Approx(model.weights[k]).epsilon(1e-12));
}
