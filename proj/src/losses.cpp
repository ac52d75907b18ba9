#include "astroloc/losses.hpp"

#include <algorithm>
#include <cmath>

namespace astroloc {

namespace {

// logistic(-z), stable for large |z|
double sigmoid_neg(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

// log(1 + sum exp(a_j)) with the implicit unit term folded into the shift
double log1p_sum_exp(const std::vector<double>& a, std::vector<double>* softmax = nullptr) {
    double m = 0.0;
    for (double x : a) m = std::max(m, x);
    double sum = std::exp(-m);
    for (double x : a) sum += std::exp(x - m);
    if (softmax) {
        softmax->resize(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) (*softmax)[j] = std::exp(a[j] - m) / sum;
    }
    return m + std::log(sum);
}

// Normalized views of the raw parameter vectors of the records a batch
// touches, plus the bookkeeping to push normalized-space gradients back
// through the normalization Jacobian.
struct BatchVectors {
    std::vector<std::size_t> record_indices;
    std::unordered_map<std::size_t, std::size_t> slot_of;  // record index -> slot
    std::vector<std::vector<double>> unit;                 // per slot
    std::vector<double> raw_norm;                          // per slot
    std::vector<std::vector<double>> vgrad;                // per slot, d/d(normalized)

    void add(const ParamTable& params, std::size_t record_index) {
        if (slot_of.count(record_index)) return;
        if (record_index >= params.size())
            raise(ErrorCode::invalid_batch, "batch references record without parameters");
        const std::vector<double>& raw = params[record_index];
        const double n = vec::norm(raw);
        if (!(n > 0.0) || !std::isfinite(n))
            raise(ErrorCode::zero_vector, "batch vector has zero or non-finite norm");
        slot_of.emplace(record_index, record_indices.size());
        record_indices.push_back(record_index);
        std::vector<double> u(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) u[i] = raw[i] / n;
        unit.push_back(std::move(u));
        raw_norm.push_back(n);
        vgrad.emplace_back(raw.size(), 0.0);
    }

    std::size_t slot(std::size_t record_index) const { return slot_of.at(record_index); }

    double sim(std::size_t slot_a, std::size_t slot_b) const {
        return vec::dot(unit[slot_a], unit[slot_b]);
    }

    // accumulate c * unit[src] into vgrad[dst]
    void add_grad(std::size_t dst, double c, std::size_t src) {
        vec::axpy(c, unit[src], vgrad[dst]);
    }

    // raw-space gradients: (g - (g.v) v) / |w|
    std::unordered_map<std::size_t, std::vector<double>> raw_grads() const {
        std::unordered_map<std::size_t, std::vector<double>> out;
        out.reserve(record_indices.size());
        for (std::size_t s = 0; s < record_indices.size(); ++s) {
            const std::vector<double>& g = vgrad[s];
            const std::vector<double>& v = unit[s];
            const double gv = vec::dot(g, v);
            std::vector<double> raw(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) raw[i] = (g[i] - gv * v[i]) / raw_norm[s];
            out.emplace(record_indices[s], std::move(raw));
        }
        return out;
    }
};

const Footprint& require_footprint(const EmbeddingStore& store, std::size_t idx,
                                   const char* context) {
    const EmbeddingRecord& r = store.record(idx);
    if (!r.footprint)
        raise(ErrorCode::invalid_batch,
              std::string(context) + ": record " + r.id + " has no footprint");
    return *r.footprint;
}

void validate_pair_batch(const EmbeddingStore& store, const PairBatch& batch,
                         const LossConfig& cfg) {
    if (batch.pairs.empty()) raise(ErrorCode::invalid_batch, "pair batch is empty");
    for (const auto& [qi, di] : batch.pairs) {
        if (qi >= store.size() || di >= store.size())
            raise(ErrorCode::invalid_batch, "pair batch index out of range");
        if (store.record(qi).kind != RecordKind::query || store.record(di).kind != RecordKind::db)
            raise(ErrorCode::invalid_batch, "pair batch must pair a query with a db record");
        const Footprint& fq = require_footprint(store, qi, "pair batch");
        const Footprint& fd = require_footprint(store, di, "pair batch");
        if (!(footprint_iou(fq, fd) > cfg.t_iou))
            raise(ErrorCode::invalid_batch, "pair " + store.record(qi).id + "/" +
                                                store.record(di).id + " has IoU <= t_iou");
    }
    const std::size_t B = batch.pairs.size();
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = i + 1; j < B; ++j) {
            const std::array<const Footprint*, 2> fi = {
                &*store.record(batch.pairs[i].first).footprint,
                &*store.record(batch.pairs[i].second).footprint};
            const std::array<const Footprint*, 2> fj = {
                &*store.record(batch.pairs[j].first).footprint,
                &*store.record(batch.pairs[j].second).footprint};
            for (const Footprint* a : fi)
                for (const Footprint* b : fj)
                    if (footprints_overlap(*a, *b))
                        raise(ErrorCode::invalid_batch,
                              "pair batch has geographic overlap across pairs");
        }
    }
}

void validate_quad_batch(const EmbeddingStore& store, const QuadBatch& batch) {
    if (batch.quads.empty()) raise(ErrorCode::invalid_batch, "quad batch is empty");
    for (const auto& quad : batch.quads) {
        for (std::size_t m : quad) {
            if (m >= store.size()) raise(ErrorCode::invalid_batch, "quad batch index out of range");
            if (store.record(m).kind != RecordKind::db)
                raise(ErrorCode::invalid_batch, "quadruplets must contain db records");
            require_footprint(store, m, "quad batch");
        }
        for (int i = 0; i < 4; ++i) {
            if (std::count(quad.begin(), quad.end(), quad[i]) != 1)
                raise(ErrorCode::invalid_batch, "quadruplet repeats a record");
            for (int j = i + 1; j < 4; ++j)
                if (!footprints_overlap(*store.record(quad[i]).footprint,
                                        *store.record(quad[j]).footprint))
                    raise(ErrorCode::invalid_batch,
                          "quadruplet members must mutually overlap");
        }
    }
    for (std::size_t a = 0; a < batch.quads.size(); ++a) {
        for (std::size_t b = a + 1; b < batch.quads.size(); ++b) {
            for (std::size_t ma : batch.quads[a])
                for (std::size_t mb : batch.quads[b])
                    if (footprints_overlap(*store.record(ma).footprint,
                                           *store.record(mb).footprint))
                        raise(ErrorCode::invalid_batch,
                              "quadruplets in a batch must not overlap geographically");
        }
    }
}

}  // namespace

void LossConfig::validate() const {
    if (!(alpha1 > 0.0) || !(beta1 > 0.0) || !(alpha2 > 0.0) || !(beta2 > 0.0))
        raise(ErrorCode::precondition, "loss gains must be strictly positive");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
        raise(ErrorCode::precondition, "loss weights must be nonnegative");
    if (!(t_iou > 0.0) || !(t_iou <= 1.0))
        raise(ErrorCode::precondition, "t_iou must be in (0, 1]");
    if (K <= 0 || batch_size <= 0 || refresh_every <= 0)
        raise(ErrorCode::precondition, "K, batch_size and refresh_every must be positive");
}

double attraction(double gain, double similarity) {
    if (!(gain > 0.0)) raise(ErrorCode::precondition, "attraction gain must be > 0");
    const double t = -gain * similarity;
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

double repulsion(double gain, const std::vector<double>& anchor,
                 const std::vector<std::vector<double>>& others) {
    if (!(gain > 0.0)) raise(ErrorCode::precondition, "repulsion gain must be > 0");
    if (others.empty()) return 0.0;
    std::vector<double> a(others.size());
    for (std::size_t j = 0; j < others.size(); ++j) {
        if (others[j].size() != anchor.size())
            raise(ErrorCode::dimension_mismatch, "repulsion: dimension mismatch");
        a[j] = gain * cosine_similarity(anchor, others[j]);
    }
    return log1p_sum_exp(a);
}

ParamTable params_from_store(const EmbeddingStore& store) {
    ParamTable params(store.size());
    for (std::size_t i = 0; i < store.size(); ++i)
        params[i] = vec::to_double(store.record(i).vector);
    return params;
}

LossOutput pair_loss(const EmbeddingStore& store, const ParamTable& params, const PairBatch& batch,
                     const LossConfig& cfg) {
    cfg.validate();
    validate_pair_batch(store, batch, cfg);

    const std::size_t B = batch.pairs.size();
    BatchVectors bv;
    std::vector<std::size_t> qslot(B), dslot(B);
    for (std::size_t i = 0; i < B; ++i) {
        bv.add(params, batch.pairs[i].first);
        bv.add(params, batch.pairs[i].second);
        qslot[i] = bv.slot(batch.pairs[i].first);
        dslot[i] = bv.slot(batch.pairs[i].second);
    }

    double loss_pos = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double s = bv.sim(qslot[i], dslot[i]);
        loss_pos += attraction(cfg.alpha1, s);
        // d attraction/ds = -alpha1 * sigmoid(-alpha1 s); outer scale 1/(alpha1 B)
        const double c = -sigmoid_neg(cfg.alpha1 * s) / static_cast<double>(B);
        bv.add_grad(qslot[i], c, dslot[i]);
        bv.add_grad(dslot[i], c, qslot[i]);
    }
    loss_pos /= cfg.alpha1 * static_cast<double>(B);

    // four repulsion terms per pair: anchor in {q_i, d_i} against the other
    // pairs' queries and the other pairs' db images
    double loss_neg = 0.0;
    std::vector<double> a;
    std::vector<double> p;
    auto repel = [&](std::size_t anchor, const std::vector<std::size_t>& slots,
                     std::size_t excluded_pair) {
        a.clear();
        std::vector<std::size_t> members;
        for (std::size_t j = 0; j < slots.size(); ++j) {
            if (j == excluded_pair) continue;
            members.push_back(slots[j]);
            a.push_back(cfg.beta1 * bv.sim(anchor, slots[j]));
        }
        if (members.empty()) return 0.0;
        const double val = log1p_sum_exp(a, &p);
        const double scale = 1.0 / static_cast<double>(B);  // (1/(beta1 B)) * beta1
        for (std::size_t j = 0; j < members.size(); ++j) {
            bv.add_grad(anchor, scale * p[j], members[j]);
            bv.add_grad(members[j], scale * p[j], anchor);
        }
        return val;
    };
    for (std::size_t i = 0; i < B; ++i) {
        loss_neg += repel(qslot[i], qslot, i);
        loss_neg += repel(qslot[i], dslot, i);
        loss_neg += repel(dslot[i], qslot, i);
        loss_neg += repel(dslot[i], dslot, i);
    }
    loss_neg /= cfg.beta1 * static_cast<double>(B);

    LossOutput out;
    out.value = loss_pos + loss_neg;
    out.grads = bv.raw_grads();
    return out;
}

LossOutput mum_loss(const EmbeddingStore& store, const ParamTable& params, const QuadBatch& batch,
                    const LossConfig& cfg) {
    cfg.validate();
    validate_quad_batch(store, batch);

    const std::size_t H = batch.quads.size();
    BatchVectors bv;
    std::vector<std::array<std::size_t, 4>> slots(H);
    for (std::size_t i = 0; i < H; ++i) {
        for (int j = 0; j < 4; ++j) {
            bv.add(params, batch.quads[i][j]);
            slots[i][j] = bv.slot(batch.quads[i][j]);
        }
    }

    const double outer = 1.0 / (4.0 * static_cast<double>(H));
    double value = 0.0;
    std::vector<double> a;
    std::vector<double> p;
    for (std::size_t i = 0; i < H; ++i) {
        for (int j = 0; j < 4; ++j) {
            const std::size_t m = slots[i][j];
            // attraction against the 3 partners in the same quadruplet
            a.clear();
            std::vector<std::size_t> partners;
            for (int l = 0; l < 4; ++l) {
                if (l == j) continue;
                partners.push_back(slots[i][l]);
                a.push_back(-cfg.alpha2 * bv.sim(m, slots[i][l]));
            }
            value += log1p_sum_exp(a, &p) / cfg.alpha2;
            for (std::size_t l = 0; l < partners.size(); ++l) {
                const double c = -outer * p[l];  // outer * (1/alpha2) * (-alpha2 p)
                bv.add_grad(m, c, partners[l]);
                bv.add_grad(partners[l], c, m);
            }
            // repulsion against every member of the other quadruplets
            a.clear();
            std::vector<std::size_t> rivals;
            for (std::size_t o = 0; o < H; ++o) {
                if (o == i) continue;
                for (int l = 0; l < 4; ++l) {
                    rivals.push_back(slots[o][l]);
                    a.push_back(cfg.beta2 * bv.sim(m, slots[o][l]));
                }
            }
            if (!rivals.empty()) {
                value += log1p_sum_exp(a, &p) / cfg.beta2;
                for (std::size_t l = 0; l < rivals.size(); ++l) {
                    const double c = outer * p[l];
                    bv.add_grad(m, c, rivals[l]);
                    bv.add_grad(rivals[l], c, m);
                }
            }
        }
    }

    LossOutput out;
    out.value = outer * value;
    out.grads = bv.raw_grads();
    return out;
}

TotalLossOutput total_loss(const EmbeddingStore& store, const ParamTable& params,
                           const PairBatch& pair_batch, const QuadBatch& quad_batch,
                           const LossConfig& cfg) {
    cfg.validate();
    TotalLossOutput out;
    if (cfg.lambda1 > 0.0) {
        const LossOutput pl = pair_loss(store, params, pair_batch, cfg);
        out.pair_value = pl.value;
        for (const auto& [idx, g] : pl.grads) {
            auto [it, fresh] = out.grads.emplace(idx, std::vector<double>(g.size(), 0.0));
            vec::axpy(cfg.lambda1, g, it->second);
        }
    }
    if (cfg.lambda2 > 0.0) {
        const LossOutput ml = mum_loss(store, params, quad_batch, cfg);
        out.mum_value = ml.value;
        for (const auto& [idx, g] : ml.grads) {
            auto [it, fresh] = out.grads.emplace(idx, std::vector<double>(g.size(), 0.0));
            vec::axpy(cfg.lambda2, g, it->second);
        }
    }
    out.value = cfg.lambda1 * out.pair_value + cfg.lambda2 * out.mum_value;
    return out;
}

}  // namespace astroloc
