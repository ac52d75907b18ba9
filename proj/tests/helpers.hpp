// Shared fixtures for the test suites.
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "astroloc/embedding.hpp"
#include "astroloc/geo.hpp"

namespace testhelp {

inline astroloc::Footprint square(double center_lat, double center_lon, double half_deg) {
    using astroloc::GeoPoint;
    return astroloc::Footprint{{GeoPoint{center_lat + half_deg, center_lon - half_deg},
                                GeoPoint{center_lat + half_deg, center_lon + half_deg},
                                GeoPoint{center_lat - half_deg, center_lon + half_deg},
                                GeoPoint{center_lat - half_deg, center_lon - half_deg}}};
}

// Axis-aligned rectangle specified in the normalized Mercator plane.
inline astroloc::Footprint merc_rect(double x0, double x1, double y0, double y1) {
    constexpr double pi = 3.14159265358979323846;
    auto lat_of = [&](double y) { return std::atan(std::sinh(pi * (1.0 - 2.0 * y))) * 180.0 / pi; };
    auto lon_of = [](double x) { return x * 360.0 - 180.0; };
    using astroloc::GeoPoint;
    return astroloc::Footprint{{GeoPoint{lat_of(y0), lon_of(x0)}, GeoPoint{lat_of(y0), lon_of(x1)},
                                GeoPoint{lat_of(y1), lon_of(x1)},
                                GeoPoint{lat_of(y1), lon_of(x0)}}};
}

// Random simple (convex) quadrilateral: a jittered rotated rectangle.
inline astroloc::Footprint random_quad(astroloc::Rng& rng, double center_lat, double center_lon,
                                       double scale_deg) {
    const double hx = scale_deg * (0.4 + 0.6 * rng.uniform());
    const double hy = scale_deg * (0.4 + 0.6 * rng.uniform());
    const double theta = rng.uniform() * 3.14159265358979323846 / 2.0;
    const double c = std::cos(theta), s = std::sin(theta);
    std::array<astroloc::GeoPoint, 4> corners;
    const std::array<std::pair<double, double>, 4> base = {
        {{-hx, hy}, {hx, hy}, {hx, -hy}, {-hx, -hy}}};
    for (int i = 0; i < 4; ++i) {
        const double jx = 0.15 * hx * (rng.uniform() - 0.5);
        const double jy = 0.15 * hy * (rng.uniform() - 0.5);
        const double x = base[i].first + jx;
        const double y = base[i].second + jy;
        corners[i] = astroloc::GeoPoint{center_lat + (s * x + c * y),
                                        center_lon + (c * x - s * y)};
    }
    return astroloc::Footprint{corners};
}

inline std::vector<float> unit_vec(std::vector<double> v) {
    return astroloc::normalize_to_unit(v);
}

inline std::vector<double> random_unit(astroloc::Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return astroloc::vec::normalized(v);
}

// A store laid out as disjoint locations, each with `db_per_loc` db records
// and `q_per_loc` queries sharing the location footprint. Vectors are random
// unit vectors unless a prototype map is supplied.
inline astroloc::EmbeddingStore grid_store(std::size_t locations, std::size_t db_per_loc,
                                           std::size_t q_per_loc, std::size_t dim,
                                           astroloc::Rng& rng) {
    astroloc::EmbeddingStore store;
    store.dim = dim;
    for (std::size_t loc = 0; loc < locations; ++loc) {
        const double lat = -50.0 + 2.0 * static_cast<double>(loc / 100);
        const double lon = -150.0 + 2.0 * static_cast<double>(loc % 100);
        for (std::size_t d = 0; d < db_per_loc; ++d) {
            astroloc::EmbeddingRecord r;
            r.id = "L" + std::to_string(loc) + "_d" + std::to_string(d);
            r.base_id = r.id;
            r.kind = astroloc::RecordKind::db;
            r.vector = astroloc::vec::to_float(random_unit(rng, dim));
            r.footprint = square(lat, lon, 0.4);
            store.records.push_back(std::move(r));
        }
        for (std::size_t q = 0; q < q_per_loc; ++q) {
            astroloc::EmbeddingRecord r;
            r.id = "L" + std::to_string(loc) + "_q" + std::to_string(q);
            r.base_id = r.id;
            r.kind = astroloc::RecordKind::query;
            r.vector = astroloc::vec::to_float(random_unit(rng, dim));
            r.footprint = square(lat, lon, 0.4);
            store.records.push_back(std::move(r));
        }
    }
    store.finalize();
    return store;
}

}  // namespace testhelp
