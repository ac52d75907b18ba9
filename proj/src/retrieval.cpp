#include "astroloc/retrieval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

namespace astroloc {

namespace {

constexpr std::array<int, 4> kRotations = {0, 90, 180, 270};

std::vector<double> unit_query(const RetrievalIndex& index, const std::vector<float>& query) {
    if (query.size() != index.dim)
        raise(ErrorCode::dimension_mismatch, "search: query dimension mismatch");
    return vec::normalized(vec::to_double(query));
}

std::vector<SearchHit> search_entries(const RetrievalIndex& index,
                                      const std::vector<double>& unit,
                                      const std::vector<std::size_t>& entries, std::size_t n) {
    if (entries.empty()) raise(ErrorCode::empty_index, "search: no index entries after filtering");
    // best similarity per distinct base
    std::unordered_map<std::string, double> best;
    best.reserve(entries.size());
    for (std::size_t e : entries) {
        const float* row = index.matrix.data() + e * index.dim;
        double s = 0.0;
        for (std::size_t i = 0; i < index.dim; ++i) s += unit[i] * static_cast<double>(row[i]);
        auto [it, fresh] = best.emplace(index.base_ids[e], s);
        if (!fresh && s > it->second) it->second = s;
    }
    std::vector<SearchHit> hits;
    hits.reserve(best.size());
    for (auto& [id, s] : best) hits.push_back({id, s});
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.base_id < b.base_id;
    });
    if (hits.size() > n) hits.resize(n);
    return hits;
}

std::vector<std::size_t> all_entries(const RetrievalIndex& index) {
    std::vector<std::size_t> out(index.num_entries());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

std::vector<std::size_t> region_entries(const RetrievalIndex& index, const Region& region) {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < index.num_entries(); ++e) {
        if (!index.footprints[e]) continue;
        if (great_circle_km(region.nadir, footprint_centroid(*index.footprints[e])) <=
            region.r_vis_km)
            out.push_back(e);
    }
    return out;
}

}  // namespace

RetrievalIndex build_index(const EmbeddingStore& store, bool augment) {
    if (store.db_indices.empty())
        raise(ErrorCode::precondition, "build_index: store has no db records");

    std::vector<std::string> bases;
    bases.reserve(store.db_variants.size());
    for (const auto& [base_id, variants] : store.db_variants) bases.push_back(base_id);
    std::sort(bases.begin(), bases.end());

    RetrievalIndex index;
    index.dim = store.dim;
    index.augmented = augment;
    index.num_base = bases.size();

    std::vector<std::size_t> entry_records;
    for (const std::string& base : bases) {
        const auto& variants = store.db_variants.at(base);
        if (augment) {
            // require exactly the four rotation variants of each base image
            for (int rot : kRotations) {
                std::size_t found = store.size();
                for (std::size_t vi : variants) {
                    if (store.record(vi).rotation == rot) {
                        if (found != store.size())
                            raise(ErrorCode::precondition, "build_index: base " + base +
                                                               " has duplicate rotation variants");
                        found = vi;
                    }
                }
                if (found == store.size())
                    raise(ErrorCode::precondition,
                          "build_index: base " + base + " is missing its " + std::to_string(rot) +
                              " degree rotation variant");
                entry_records.push_back(found);
            }
        } else {
            std::size_t base_record = store.size();
            for (std::size_t vi : variants)
                if (store.record(vi).rotation == 0) base_record = vi;
            if (base_record == store.size())
                raise(ErrorCode::precondition,
                      "build_index: base " + base + " has no rotation-0 record");
            entry_records.push_back(base_record);
        }
    }

    index.matrix.resize(entry_records.size() * index.dim);
    index.base_ids.reserve(entry_records.size());
    index.footprints.reserve(entry_records.size());
    for (std::size_t e = 0; e < entry_records.size(); ++e) {
        const EmbeddingRecord& r = store.record(entry_records[e]);
        std::copy(r.vector.begin(), r.vector.end(), index.matrix.begin() + e * index.dim);
        index.base_ids.push_back(r.base_id);
        index.footprints.push_back(r.footprint);
    }
    return index;
}

std::vector<SearchHit> search(const RetrievalIndex& index, const std::vector<float>& query,
                              std::size_t n, const std::optional<Region>& region) {
    if (n == 0) raise(ErrorCode::precondition, "search: N must be positive");
    const std::vector<double> unit = unit_query(index, query);
    const std::vector<std::size_t> entries =
        region ? region_entries(index, *region) : all_entries(index);
    return search_entries(index, unit, entries, n);
}

RecallReport recall_at_n(const RetrievalIndex& index, const EmbeddingStore& queries,
                         const EvalOptions& opts) {
    if (opts.ns.empty()) raise(ErrorCode::precondition, "recall_at_n: empty N list");
    for (int n : opts.ns)
        if (n < 1) raise(ErrorCode::precondition, "recall_at_n: N must be >= 1");
    if (queries.query_indices.empty())
        raise(ErrorCode::precondition, "recall_at_n: no query records");
    for (std::size_t e = 0; e < index.num_entries(); ++e)
        if (!index.footprints[e])
            raise(ErrorCode::missing_footprint,
                  "recall_at_n: index entry " + index.base_ids[e] + " has no footprint");
    for (std::size_t qi : queries.query_indices)
        if (!queries.record(qi).footprint)
            raise(ErrorCode::missing_footprint,
                  "recall_at_n: query " + queries.record(qi).id + " has no footprint");

    // base footprint lookup for the correctness predicate
    std::unordered_map<std::string, const Footprint*> base_fp;
    for (std::size_t e = 0; e < index.num_entries(); ++e)
        base_fp.emplace(index.base_ids[e], &*index.footprints[e]);

    const std::vector<std::size_t> entries =
        opts.region ? region_entries(index, *opts.region) : all_entries(index);

    const std::size_t max_n = static_cast<std::size_t>(*std::max_element(opts.ns.begin(),
                                                                          opts.ns.end()));
    const std::size_t num_q = queries.query_indices.size();

    RecallReport report;
    report.ns = opts.ns;
    std::sort(report.ns.begin(), report.ns.end());
    report.num_queries = num_q;
    report.num_db_base = index.num_base;
    report.num_db_entries = index.num_entries();
    report.index_bytes = index.memory_bytes();
    report.query_ids.resize(num_q);
    report.per_query_top.resize(num_q);

    std::vector<std::size_t> first_correct_rank(num_q, 0);  // 0 = never correct
    std::vector<double> micros(num_q, 0.0);

    auto eval_one = [&](std::size_t qpos) {
        const EmbeddingRecord& q = queries.record(queries.query_indices[qpos]);
        report.query_ids[qpos] = q.id;
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<double> unit = unit_query(index, q.vector);
        std::vector<SearchHit> hits = search_entries(index, unit, entries, max_n);
        if (opts.measure_latency) {
            const auto t1 = std::chrono::steady_clock::now();
            micros[qpos] =
                std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() / 1000.0;
        }
        for (std::size_t r = 0; r < hits.size(); ++r) {
            const Footprint* fp = base_fp.at(hits[r].base_id);
            const bool correct = opts.correct_iou_threshold > 0.0
                                     ? footprint_iou(*q.footprint, *fp) > opts.correct_iou_threshold
                                     : footprints_overlap(*q.footprint, *fp);
            if (correct) {
                first_correct_rank[qpos] = r + 1;
                break;
            }
        }
        report.per_query_top[qpos] = std::move(hits);
    };

    const int threads = std::max(1, opts.threads);
    if (threads == 1 || num_q < 2) {
        for (std::size_t i = 0; i < num_q; ++i) eval_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < num_q; i = next.fetch_add(1))
                    eval_one(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    for (int n : report.ns) {
        std::size_t hit = 0;
        for (std::size_t qpos = 0; qpos < num_q; ++qpos)
            if (first_correct_rank[qpos] > 0 &&
                first_correct_rank[qpos] <= static_cast<std::size_t>(n))
                hit++;
        report.recall_pct[n] = 100.0 * static_cast<double>(hit) / static_cast<double>(num_q);
    }

    if (opts.measure_latency) {
        LatencyStats stats;
        stats.per_query_us = micros;
        stats.mean_us = std::accumulate(micros.begin(), micros.end(), 0.0) /
                        static_cast<double>(num_q);
        std::vector<double> sorted = micros;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t idx =
            std::min(sorted.size() - 1,
                     static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size()))) -
                         1);
        stats.p95_us = sorted[idx];
        report.latency = std::move(stats);
    }
    return report;
}

RecallReport worldwide_eval(const RetrievalIndex& index, const EmbeddingStore& queries,
                            const std::vector<int>& ns, int threads) {
    EvalOptions opts;
    opts.ns = ns;
    opts.threads = threads;
    opts.measure_latency = true;
    return recall_at_n(index, queries, opts);
}

}  // namespace astroloc
