#include "astroloc/embedding.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace astroloc {

using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'E', 'M', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

json footprint_to_json(const Footprint& f) {
    json corners = json::array();
    for (const GeoPoint& c : f.corners) corners.push_back(json::array({c.lat, c.lon}));
    return corners;
}

Footprint footprint_from_json(const json& corners) {
    if (!corners.is_array() || corners.size() != 4)
        raise(ErrorCode::bad_metadata, "footprint must be an array of 4 [lat, lon] pairs");
    std::array<GeoPoint, 4> pts;
    for (int i = 0; i < 4; ++i) {
        const json& c = corners[i];
        if (!c.is_array() || c.size() != 2)
            raise(ErrorCode::bad_metadata, "footprint corner must be [lat, lon]");
        pts[i] = GeoPoint{c[0].get<double>(), c[1].get<double>()};
    }
    return footprint_from_corners(pts);
}

}  // namespace

const char* kind_name(RecordKind k) { return k == RecordKind::query ? "query" : "db"; }

RecordKind kind_from_name(const std::string& name) {
    if (name == "query") return RecordKind::query;
    if (name == "db") return RecordKind::db;
    raise(ErrorCode::bad_metadata, "record kind must be \"query\" or \"db\", got \"" + name + "\"");
}

void EmbeddingStore::finalize() {
    query_indices.clear();
    db_indices.clear();
    id_to_index.clear();
    db_variants.clear();
    for (std::size_t i = 0; i < records.size(); ++i) {
        EmbeddingRecord& r = records[i];
        if (r.id.empty()) raise(ErrorCode::bad_metadata, "record with empty id");
        if (!id_to_index.emplace(r.id, i).second)
            raise(ErrorCode::bad_metadata, "duplicate record id: " + r.id);
        if (r.vector.size() != dim)
            raise(ErrorCode::dimension_mismatch,
                  "record " + r.id + " has dim " + std::to_string(r.vector.size()) +
                      ", store dim is " + std::to_string(dim));
        if (r.rotation != 0 && r.rotation != 90 && r.rotation != 180 && r.rotation != 270)
            raise(ErrorCode::bad_metadata, "record " + r.id + " has invalid rotation tag");
        if (r.base_id.empty()) r.base_id = r.id;
        if (r.rotation == 0 && r.base_id != r.id)
            raise(ErrorCode::bad_metadata, "record " + r.id + ": base_id must equal id at rotation 0");
        double norm2 = 0.0;
        for (float x : r.vector) {
            if (!std::isfinite(x))
                raise(ErrorCode::non_finite_value, "record " + r.id + " has NaN/Inf vector entry");
            norm2 += static_cast<double>(x) * static_cast<double>(x);
        }
        const double norm = std::sqrt(norm2);
        if (!(norm > 0.0)) raise(ErrorCode::zero_vector, "record " + r.id + " has zero vector");
        if (std::abs(norm - 1.0) > 1e-6) {
            // foreign data: renormalize once; our own saves are already unit
            std::vector<double> d = vec::to_double(r.vector);
            r.vector = normalize_to_unit(d);
        }
        if (r.footprint) validate_footprint(*r.footprint);
        if (r.kind == RecordKind::query) {
            query_indices.push_back(i);
        } else {
            db_indices.push_back(i);
            db_variants[r.base_id].push_back(i);
        }
    }
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        raise(ErrorCode::dimension_mismatch, "cosine_similarity: dimension mismatch");
    const double na = vec::norm(a);
    const double nb = vec::norm(b);
    if (!(na > 0.0) || !(nb > 0.0))
        raise(ErrorCode::zero_vector, "cosine_similarity: zero-norm vector");
    return vec::dot(a, b) / (na * nb);
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    return cosine_similarity(vec::to_double(a), vec::to_double(b));
}

std::vector<float> normalize_to_unit(const std::vector<double>& v) {
    return vec::to_float(vec::normalized(v));
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    std::string buf;
    buf.append(kMagic.data(), kMagic.size());
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(store.records.size()));
    put_u32(buf, static_cast<std::uint32_t>(store.dim));
    for (const EmbeddingRecord& r : store.records) {
        static_assert(sizeof(float) == 4);
        const std::size_t off = buf.size();
        buf.resize(off + r.vector.size() * 4);
        std::memcpy(buf.data() + off, r.vector.data(), r.vector.size() * 4);
    }
    const std::uint64_t trailer_offset = buf.size();
    for (const EmbeddingRecord& r : store.records) {
        json line = {{"id", r.id},
                     {"base_id", r.base_id},
                     {"rotation", r.rotation},
                     {"kind", kind_name(r.kind)}};
        if (r.footprint) line["footprint"] = footprint_to_json(*r.footprint);
        buf += line.dump();
        buf.push_back('\n');
    }
    put_u64(buf, trailer_offset);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot open for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) raise(ErrorCode::io_error, "short write: " + path.string());
}

EmbeddingStore load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::io_error, "cannot open: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < kHeaderBytes + 8) raise(ErrorCode::truncated_file, "file too small: " + path.string());
    if (std::memcmp(buf.data(), kMagic.data(), 4) != 0)
        raise(ErrorCode::bad_magic, "bad magic bytes (expected AEM1): " + path.string());
    const std::uint32_t version = get_u32(buf.data() + 4);
    if (version != kVersion)
        raise(ErrorCode::bad_version, "unsupported store version " + std::to_string(version));
    const std::uint64_t count = get_u32(buf.data() + 8);
    const std::uint64_t dim = get_u32(buf.data() + 12);
    const std::uint64_t data_end = kHeaderBytes + count * dim * 4;
    if (buf.size() < data_end + 8) raise(ErrorCode::truncated_file, "vector payload truncated");
    const std::uint64_t trailer_offset = get_u64(buf.data() + buf.size() - 8);
    if (trailer_offset != data_end)
        raise(ErrorCode::bad_metadata, "metadata trailer offset does not match payload size");

    EmbeddingStore store;
    store.dim = static_cast<std::size_t>(dim);
    store.records.resize(count);

    std::istringstream trailer(buf.substr(trailer_offset, buf.size() - 8 - trailer_offset));
    std::string line;
    for (std::uint64_t i = 0; i < count; ++i) {
        if (!std::getline(trailer, line))
            raise(ErrorCode::truncated_file, "metadata trailer has too few lines");
        json meta;
        try {
            meta = json::parse(line);
        } catch (const json::exception& e) {
            raise(ErrorCode::bad_metadata, "metadata line " + std::to_string(i + 1) + ": " + e.what());
        }
        EmbeddingRecord& r = store.records[i];
        try {
            r.id = meta.at("id").get<std::string>();
            r.base_id = meta.value("base_id", r.id);
            r.rotation = meta.value("rotation", 0);
            r.kind = kind_from_name(meta.at("kind").get<std::string>());
            if (meta.contains("footprint")) r.footprint = footprint_from_json(meta["footprint"]);
        } catch (const json::exception& e) {
            raise(ErrorCode::bad_metadata, "metadata line " + std::to_string(i + 1) + ": " + e.what());
        }
        r.vector.resize(dim);
        std::memcpy(r.vector.data(), buf.data() + kHeaderBytes + i * dim * 4, dim * 4);
    }
    store.finalize();
    return store;
}

EmbeddingStore synth_dataset(const SynthParams& p) {
    if (p.n_locations == 0 || p.db_per_location == 0 || p.queries_per_location == 0 || p.dim == 0)
        raise(ErrorCode::precondition, "synth_dataset: all counts must be positive");
    if (!(p.noise_sigma >= 0.0))
        raise(ErrorCode::precondition, "synth_dataset: noise_sigma must be >= 0");
    // 1-degree cells over lon [-150, 150) x lat [-60, 60)
    constexpr std::size_t kCols = 300;
    constexpr std::size_t kRows = 120;
    if (p.n_locations > kCols * kRows)
        raise(ErrorCode::grid_capacity,
              "synth_dataset: grid capacity exceeded (max " + std::to_string(kCols * kRows) + ")");

    Rng rng(p.seed);
    EmbeddingStore store;
    store.dim = p.dim;

    auto draw_vector = [&](const std::vector<double>& proto, double sigma) {
        std::vector<double> v(p.dim);
        for (std::size_t i = 0; i < p.dim; ++i) v[i] = proto.empty() ? rng.normal() : proto[i] + sigma * rng.normal();
        return normalize_to_unit(v);
    };

    auto jittered_square = [&](double cell_lat0, double cell_lon0) {
        const double jy = (rng.uniform() - 0.5) * 0.1;  // within +-0.05 deg
        const double jx = (rng.uniform() - 0.5) * 0.1;
        const double clat = cell_lat0 + 0.5 + jy;
        const double clon = cell_lon0 + 0.5 + jx;
        constexpr double h = 0.25;  // half side
        return Footprint{{GeoPoint{clat + h, clon - h}, GeoPoint{clat + h, clon + h},
                          GeoPoint{clat - h, clon + h}, GeoPoint{clat - h, clon - h}}};
    };

    char name[64];
    for (std::size_t loc = 0; loc < p.n_locations; ++loc) {
        const std::size_t col = loc % kCols;
        const std::size_t row = loc / kCols;
        const double lon0 = -150.0 + static_cast<double>(col);
        const double lat0 = -60.0 + static_cast<double>(row);

        std::vector<double> proto_raw(p.dim);
        for (std::size_t i = 0; i < p.dim; ++i) proto_raw[i] = rng.normal();
        const std::vector<double> proto = vec::normalized(proto_raw);

        for (std::size_t d = 0; d < p.db_per_location; ++d) {
            std::snprintf(name, sizeof(name), "loc%05zu_db%zu", loc, d);
            EmbeddingRecord r;
            r.id = name;
            r.base_id = name;
            r.kind = RecordKind::db;
            r.vector = draw_vector(proto, p.noise_sigma);
            r.footprint = jittered_square(lat0, lon0);
            store.records.push_back(std::move(r));
        }
        for (std::size_t q = 0; q < p.queries_per_location; ++q) {
            std::snprintf(name, sizeof(name), "loc%05zu_q%zu", loc, q);
            EmbeddingRecord r;
            r.id = name;
            r.base_id = name;
            r.kind = RecordKind::query;
            r.vector = draw_vector(proto, p.noise_sigma);
            r.footprint = jittered_square(lat0, lon0);
            store.records.push_back(std::move(r));
        }
    }
    store.finalize();
    return store;
}

}  // namespace astroloc
