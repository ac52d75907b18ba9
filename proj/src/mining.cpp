#include "astroloc/mining.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace astroloc {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

int nearest_of(const std::vector<std::vector<double>>& centroids, const std::vector<double>& v,
               double* dist2_out = nullptr) {
    int best = 0;
    double best_d = sq_dist(centroids[0], v);
    for (std::size_t k = 1; k < centroids.size(); ++k) {
        const double d = sq_dist(centroids[k], v);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    if (dist2_out) *dist2_out = best_d;
    return best;
}

std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& vectors,
                                               std::size_t K, Rng& rng) {
    const std::size_t n = vectors.size();
    std::vector<std::vector<double>> centroids;
    centroids.reserve(K);
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, 0.0);

    std::size_t first = rng.uniform_index(n);
    centroids.push_back(vectors[first]);
    chosen[first] = true;
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(vectors[i], centroids[0]);

    while (centroids.size() < K) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) total += d2[i];
        std::size_t pick = n;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n) {
            // all remaining points coincide with a centroid
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
            }
        }
        chosen[pick] = true;
        centroids.push_back(vectors[pick]);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], sq_dist(vectors[i], centroids.back()));
    }
    return centroids;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

}  // namespace

ClusterModel kmeans_fit(const std::vector<std::vector<double>>& vectors, std::size_t K,
                        std::uint64_t seed) {
    if (K == 0) raise(ErrorCode::precondition, "kmeans_fit: K must be positive");
    if (vectors.size() < K)
        raise(ErrorCode::precondition, "kmeans_fit: fewer vectors (" +
                                           std::to_string(vectors.size()) + ") than clusters (" +
                                           std::to_string(K) + ")");
    const std::size_t dim = vectors[0].size();
    for (const auto& v : vectors)
        if (v.size() != dim) raise(ErrorCode::dimension_mismatch, "kmeans_fit: mixed dimensions");

    Rng rng(seed);
    ClusterModel model;
    model.dim = dim;
    model.K = K;
    model.seed = seed;
    model.centroids = kmeanspp_init(vectors, K, rng);
    model.assignments.assign(vectors.size(), -1);

    const std::size_t n = vectors.size();
    std::vector<int> prev(n, -1);
    std::vector<double> dist2(n, 0.0);
    bool final_round = false;
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            model.assignments[i] = nearest_of(model.centroids, vectors[i], &dist2[i]);
            counts[static_cast<std::size_t>(model.assignments[i])]++;
        }
        // re-seed every empty cluster with the farthest point of a non-singleton
        // cluster; the move can only lower the objective
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] > 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(model.assignments[i])] <= 1) continue;
                if (dist2[i] > far_d) {
                    far_d = dist2[i];
                    far = i;
                }
            }
            if (far == n) break;  // everything is a singleton already
            counts[static_cast<std::size_t>(model.assignments[far])]--;
            model.assignments[far] = static_cast<int>(k);
            counts[k] = 1;
            model.centroids[k] = vectors[far];
            dist2[far] = 0.0;
        }
        double wcss = 0.0;
        for (double d : dist2) wcss += d;
        model.objective_history.push_back(wcss);
        if (final_round || model.assignments == prev) break;
        prev = model.assignments;

        std::vector<std::vector<double>> sums(K, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> members(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            vec::axpy(1.0, vectors[i], sums[static_cast<std::size_t>(model.assignments[i])]);
            members[static_cast<std::size_t>(model.assignments[i])]++;
        }
        double max_shift2 = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> next = sums[k];
            for (double& x : next) x /= static_cast<double>(members[k]);
            max_shift2 = std::max(max_shift2, sq_dist(next, model.centroids[k]));
            model.centroids[k] = std::move(next);
        }
        // converged: run one more assignment so the result is a fixed point
        if (max_shift2 < 1e-4 * 1e-4) final_round = true;
    }
    return model;
}

void assign_queries(ClusterModel& model, const std::vector<std::vector<double>>& query_vectors) {
    if (model.centroids.empty()) raise(ErrorCode::precondition, "assign_queries: model not fitted");
    model.bins.assign(model.K, 0);
    for (const auto& q : query_vectors) {
        if (q.size() != model.dim)
            raise(ErrorCode::dimension_mismatch, "assign_queries: query dim mismatch");
        model.bins[static_cast<std::size_t>(nearest_centroid(model, q))]++;
    }
    const std::uint64_t total = std::accumulate(model.bins.begin(), model.bins.end(),
                                                std::uint64_t{0});
    model.weights.assign(model.K, 0.0);
    if (total == 0) {
        // Pr(k) undefined with no query mass; fall back to uniform
        for (double& w : model.weights) w = 1.0 / static_cast<double>(model.K);
    } else {
        for (std::size_t k = 0; k < model.K; ++k)
            model.weights[k] = static_cast<double>(model.bins[k]) / static_cast<double>(total);
    }
}

int nearest_centroid(const ClusterModel& model, const std::vector<double>& v) {
    if (v.size() != model.dim)
        raise(ErrorCode::dimension_mismatch, "nearest_centroid: dimension mismatch");
    return nearest_of(model.centroids, vec::normalized(v));
}

std::size_t sample_cluster(const ClusterModel& model, SamplingMode mode, Rng& rng) {
    if (model.K == 0) raise(ErrorCode::precondition, "sample_cluster: model not fitted");
    if (mode == SamplingMode::uniform) return rng.uniform_index(model.K);
    if (model.weights.size() != model.K)
        raise(ErrorCode::precondition, "sample_cluster: weighted mode requires assigned queries");
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < model.K; ++k) {
        if (model.weights[k] <= 0.0) continue;
        last_positive = k;
        acc += model.weights[k];
        if (u < acc) return k;
    }
    return last_positive;  // u landed in the rounding tail
}

PairIndex mine_pairs(const EmbeddingStore& store, double t_iou) {
    if (!(t_iou > 0.0) || !(t_iou <= 1.0))
        raise(ErrorCode::precondition, "mine_pairs: t_iou must be in (0, 1]");
    for (std::size_t qi : store.query_indices) {
        if (!store.record(qi).footprint)
            raise(ErrorCode::missing_footprint,
                  "mine_pairs: query " + store.record(qi).id + " has no footprint");
    }
    // base image representative footprint: lowest-rotation variant that has one
    std::vector<std::pair<std::string, const Footprint*>> bases;
    for (const auto& [base_id, variants] : store.db_variants) {
        const Footprint* fp = nullptr;
        int best_rot = 400;
        for (std::size_t vi : variants) {
            const EmbeddingRecord& r = store.record(vi);
            if (r.footprint && r.rotation < best_rot) {
                best_rot = r.rotation;
                fp = &*r.footprint;
            }
        }
        if (fp) bases.emplace_back(base_id, fp);
    }
    std::sort(bases.begin(), bases.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    PairIndex index;
    for (std::size_t qi : store.query_indices) {
        const Footprint& fq = *store.record(qi).footprint;
        for (const auto& [base_id, fp] : bases) {
            if (!footprints_overlap(fq, *fp)) continue;
            if (footprint_iou(fq, *fp) > t_iou) index.entries.push_back({qi, base_id});
        }
    }
    return index;
}

PairBatch build_pair_batch(const EmbeddingStore& store, const PairIndex& index, std::size_t B,
                           Rng& rng, std::size_t max_attempts) {
    if (B == 0) raise(ErrorCode::precondition, "build_pair_batch: B must be positive");
    if (index.entries.empty()) raise(ErrorCode::precondition, "build_pair_batch: empty pair index");
    if (max_attempts == 0) max_attempts = 1000 * B;

    PairBatch batch;
    std::set<std::pair<std::size_t, std::string>> used;
    std::vector<const Footprint*> taken;
    std::size_t attempts = 0;
    while (batch.pairs.size() < B) {
        if (attempts++ >= max_attempts)
            raise(ErrorCode::cannot_fill_batch,
                  "build_pair_batch: could not assemble " + std::to_string(B) +
                      " non-overlapping pairs in " + std::to_string(max_attempts) + " attempts");
        const PairIndexEntry& e = index.entries[rng.uniform_index(index.entries.size())];
        if (used.count({e.query_index, e.base_id})) continue;

        // rotation variant chosen now; all variants share the base footprint
        const auto& variants = store.db_variants.at(e.base_id);
        std::vector<std::size_t> with_fp;
        for (std::size_t vi : variants)
            if (store.record(vi).footprint) with_fp.push_back(vi);
        if (with_fp.empty()) continue;
        const std::size_t di = with_fp[rng.uniform_index(with_fp.size())];

        const Footprint& fq = *store.record(e.query_index).footprint;
        const Footprint& fd = *store.record(di).footprint;
        bool clash = false;
        for (const Footprint* t : taken) {
            if (footprints_overlap(fq, *t) || footprints_overlap(fd, *t)) {
                clash = true;
                break;
            }
        }
        if (clash) continue;
        used.insert({e.query_index, e.base_id});
        taken.push_back(&fq);
        taken.push_back(&fd);
        batch.pairs.emplace_back(e.query_index, di);
    }
    return batch;
}

LocationIndex build_location_index(const EmbeddingStore& store) {
    LocationIndex out;
    out.location_of.assign(store.size(), -1);
    std::vector<std::size_t> members;
    for (std::size_t di : store.db_indices)
        if (store.record(di).footprint) members.push_back(di);

    // union-find over the overlap graph
    std::vector<std::size_t> parent(members.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            const std::size_t ri = find(i), rj = find(j);
            if (ri == rj) continue;
            if (footprints_overlap(*store.record(members[i]).footprint,
                                   *store.record(members[j]).footprint))
                parent[rj] = ri;
        }
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < members.size(); ++i) groups[find(i)].push_back(members[i]);
    for (auto& [root, recs] : groups) {
        std::sort(recs.begin(), recs.end());
        const int loc_id = static_cast<int>(out.locations.size());
        for (std::size_t r : recs) out.location_of[r] = loc_id;
        out.locations.push_back(std::move(recs));
    }
    return out;
}

MiningContext build_mining_context(const EmbeddingStore& store, const LocationIndex& locations,
                                   const ClusterModel& model) {
    if (model.assignments.size() != store.db_indices.size())
        raise(ErrorCode::precondition,
              "mining context: model assignments are not aligned with the store's db records");
    std::unordered_map<std::size_t, int> cluster_of_record;
    for (std::size_t i = 0; i < store.db_indices.size(); ++i)
        cluster_of_record[store.db_indices[i]] = model.assignments[i];

    MiningContext ctx;
    ctx.cluster_locations.assign(model.K, {});
    for (std::size_t loc = 0; loc < locations.locations.size(); ++loc) {
        const auto& recs = locations.locations[loc];
        if (recs.size() < 4) continue;
        std::vector<std::size_t> votes(model.K, 0);
        for (std::size_t r : recs) votes[static_cast<std::size_t>(cluster_of_record.at(r))]++;
        const std::size_t k = static_cast<std::size_t>(
            std::max_element(votes.begin(), votes.end()) - votes.begin());
        ctx.cluster_locations[k].push_back(loc);
    }
    return ctx;
}

QuadBatch build_quad_batch(const EmbeddingStore& store, const LocationIndex& locations,
                           const MiningContext& ctx, std::size_t k, std::size_t H, Rng& rng) {
    if (H == 0) raise(ErrorCode::precondition, "build_quad_batch: H must be positive");
    if (k >= ctx.cluster_locations.size())
        raise(ErrorCode::precondition, "build_quad_batch: cluster id out of range");
    const std::vector<std::size_t>& avail = ctx.cluster_locations[k];
    if (avail.size() < H)
        raise(ErrorCode::insufficient_cluster,
              "cluster " + std::to_string(k) + " has " + std::to_string(avail.size()) +
                  " usable locations, need " + std::to_string(H));

    QuadBatch batch;
    batch.cluster_id = static_cast<int>(k);
    const std::vector<std::size_t> picks = rng.sample_without_replacement(avail.size(), H);
    for (std::size_t p : picks) {
        const std::vector<std::size_t>& recs = locations.locations[avail[p]];
        bool built = false;
        for (int attempt = 0; attempt < 32 && !built; ++attempt) {
            const std::vector<std::size_t> sel = rng.sample_without_replacement(recs.size(), 4);
            std::array<std::size_t, 4> quad = {recs[sel[0]], recs[sel[1]], recs[sel[2]],
                                               recs[sel[3]]};
            bool mutual = true;
            for (int i = 0; i < 4 && mutual; ++i)
                for (int j = i + 1; j < 4 && mutual; ++j)
                    mutual = footprints_overlap(*store.record(quad[i]).footprint,
                                                *store.record(quad[j]).footprint);
            if (mutual) {
                std::sort(quad.begin(), quad.end());
                batch.quads.push_back(quad);
                built = true;
            }
            if (recs.size() == 4) break;  // no other draw exists
        }
        if (!built)
            raise(ErrorCode::insufficient_cluster,
                  "location in cluster " + std::to_string(k) +
                      " has no mutually overlapping quadruplet");
    }
    return batch;
}

QuadBatch build_quad_batch(const EmbeddingStore& store, const ClusterModel& model, std::size_t k,
                           std::size_t H, Rng& rng) {
    const LocationIndex locations = build_location_index(store);
    const MiningContext ctx = build_mining_context(store, locations, model);
    return build_quad_batch(store, locations, ctx, k, H, rng);
}

bool refresh_due(std::uint64_t iteration, std::uint64_t refresh_every) {
    if (refresh_every == 0) raise(ErrorCode::precondition, "refresh_every must be positive");
    return iteration % refresh_every == 0;
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path) {
    nlohmann::json header = {{"K", model.K},
                             {"dim", model.dim},
                             {"seed", model.seed},
                             {"bins", model.bins}};
    std::string buf = header.dump();
    buf.push_back('\n');
    buf.append("AEM1", 4);
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(model.K));
    put_u32(buf, static_cast<std::uint32_t>(model.dim));
    for (const auto& c : model.centroids) {
        for (double x : c) {
            const float f = static_cast<float>(x);
            char bytes[4];
            std::memcpy(bytes, &f, 4);
            buf.append(bytes, 4);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) raise(ErrorCode::io_error, "short write: " + path.string());
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::io_error, "cannot open: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t nl = buf.find('\n');
    if (nl == std::string::npos) raise(ErrorCode::truncated_file, "cluster model missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::bad_metadata, std::string("cluster model header: ") + e.what());
    }
    ClusterModel model;
    try {
        model.K = header.at("K").get<std::size_t>();
        model.dim = header.at("dim").get<std::size_t>();
        model.seed = header.at("seed").get<std::uint64_t>();
        model.bins = header.at("bins").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::bad_metadata, std::string("cluster model header: ") + e.what());
    }
    const std::size_t block = nl + 1;
    if (buf.size() < block + 16 || std::memcmp(buf.data() + block, "AEM1", 4) != 0)
        raise(ErrorCode::bad_magic, "cluster model centroid block has bad magic");
    const std::uint32_t version = get_u32(buf.data() + block + 4);
    if (version != 1) raise(ErrorCode::bad_version, "unsupported cluster model version");
    const std::size_t count = get_u32(buf.data() + block + 8);
    const std::size_t dim = get_u32(buf.data() + block + 12);
    if (count != model.K || dim != model.dim)
        raise(ErrorCode::bad_metadata, "cluster model header/block size mismatch");
    if (buf.size() < block + 16 + count * dim * 4)
        raise(ErrorCode::truncated_file, "cluster model centroid block truncated");
    model.centroids.assign(count, std::vector<double>(dim, 0.0));
    const char* p = buf.data() + block + 16;
    for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t i = 0; i < dim; ++i) {
            float f;
            std::memcpy(&f, p, 4);
            p += 4;
            if (!std::isfinite(f))
                raise(ErrorCode::non_finite_value, "cluster model has non-finite centroid entry");
            model.centroids[k][i] = f;
        }
    }
    if (model.bins.size() != model.K)
        raise(ErrorCode::bad_metadata, "cluster model bins length mismatch");
    const std::uint64_t total = std::accumulate(model.bins.begin(), model.bins.end(),
                                                std::uint64_t{0});
    model.weights.assign(model.K, 0.0);
    if (total == 0) {
        for (double& w : model.weights) w = 1.0 / static_cast<double>(model.K);
    } else {
        for (std::size_t k = 0; k < model.K; ++k)
            model.weights[k] = static_cast<double>(model.bins[k]) / static_cast<double>(total);
    }
    return model;
}

}  // namespace astroloc
