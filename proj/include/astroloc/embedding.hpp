#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "astroloc/common.hpp"
#include "astroloc/geo.hpp"

namespace astroloc {

enum class RecordKind : std::uint8_t { query = 0, db = 1 };

const char* kind_name(RecordKind k);
RecordKind kind_from_name(const std::string& name);

// One feature vector with its identity. Vectors are stored as float32 and
// are unit-norm; `base_id` names the un-rotated source image (equal to `id`
// when rotation is 0).
struct EmbeddingRecord {
    std::string id;
    std::string base_id;
    int rotation = 0;  // degrees: 0, 90, 180, 270
    RecordKind kind = RecordKind::db;
    std::vector<float> vector;
    std::optional<Footprint> footprint;
};

struct EmbeddingStore {
    std::size_t dim = 0;
    std::vector<EmbeddingRecord> records;

    // derived lookup structures, rebuilt by finalize()
    std::vector<std::size_t> query_indices;
    std::vector<std::size_t> db_indices;
    std::unordered_map<std::string, std::size_t> id_to_index;
    std::unordered_map<std::string, std::vector<std::size_t>> db_variants;  // base_id -> records

    // Validates invariants (unique ids, uniform dim, unit norms, rotation
    // tags) and rebuilds the lookup structures. Call after any mutation.
    void finalize();

    const EmbeddingRecord& record(std::size_t i) const { return records[i]; }
    std::size_t size() const { return records.size(); }
};

// dot(a,b) / (|a| |b|). Errors on dimension mismatch or zero vectors.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

// Normalizes in double precision and rounds to float32.
std::vector<float> normalize_to_unit(const std::vector<double>& v);

// Binary store format "AEM1": magic, u32 version, u32 count, u32 dim,
// count*dim float32 values, line-delimited JSON metadata, and a trailing
// little-endian u64 with the metadata byte offset.
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

struct SynthParams {
    std::size_t n_locations = 0;
    std::size_t db_per_location = 0;
    std::size_t queries_per_location = 0;
    std::size_t dim = 0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

// Deterministic synthetic dataset: disjoint square footprints on a 1-degree
// grid, one random unit prototype per location, db/query vectors drawn as
// re-normalized prototype + noise_sigma * gaussian.
EmbeddingStore synth_dataset(const SynthParams& params);

}  // namespace astroloc
