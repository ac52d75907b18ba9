#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "astroloc/common.hpp"

namespace astroloc {

// Latitude bound of the Web-Mercator projection, atan(sinh(pi)) in degrees.
inline constexpr double kMaxMercatorLat = 85.05112878;
// Mean Earth radius in km (IUGG R1).
inline constexpr double kEarthRadiusKm = 6371.0088;
// Default visibility radius: a spherical cap of ~20M sqkm around the nadir.
inline constexpr double kDefaultVisRadiusKm = 2543.0;

inline constexpr int kMinAplZoom = 8;
inline constexpr int kMaxAplZoom = 12;

struct GeoPoint {
    double lat = 0.0;  // degrees, within [-kMaxMercatorLat, kMaxMercatorLat]
    double lon = 0.0;  // degrees, within [-180, 180]
};

// Wraps an arbitrary longitude into [-180, 180).
double normalize_lon(double lon);

bool point_valid(const GeoPoint& p);

// Ground extent of an image: four corners in NW, NE, SE, SW order. The
// polygon must be simple and have nonzero area in the Mercator plane.
// Longitudes are taken literally (no wrapping): footprints never span the
// antimeridian, matching the ingestion rule that rejects wrapped records.
struct Footprint {
    std::array<GeoPoint, 4> corners{};
};

// Throws degenerate_geometry / invalid_point when the footprint is unusable.
void validate_footprint(const Footprint& f);

// Ingestion path: additionally rejects footprints whose edges would cross
// the antimeridian (any edge with |delta lon| > 180).
Footprint footprint_from_corners(const std::array<GeoPoint, 4>& corners);

bool footprint_equal(const Footprint& a, const Footprint& b);

enum class TileOffset : std::uint8_t { none = 0, half_x = 1, half_y = 2, half_both = 3 };

// Slippy-map tile extended with a half-tile grid offset. The four offset
// grids together cover every point exactly four times per zoom. On a shifted
// axis the index range grows to [-1, 2^zoom - 1] and the two border tiles are
// clamped to the Mercator extent (half-width/height).
struct TileId {
    int zoom = 0;
    std::int64_t x = 0;
    std::int64_t y = 0;
    TileOffset offset = TileOffset::none;
};

bool tile_valid(const TileId& t);

// Axis-aligned (in Mercator) extent of the tile; corners NW, NE, SE, SW.
// Accepts any zoom in [0, 22]; the APL zoom restriction [8, 12] applies only
// to the point-covering operations below.
Footprint tile_footprint(const TileId& t);

// Spherical area in sqkm (Earth radius kEarthRadiusKm). Edges are straight
// lines in the cylindrical equal-area plane (x = lon, y = sin lat), so
// graticule-aligned quadrilaterals get the exact R^2 * dlon * dsin(lat) area.
// Winding-insensitive. Degenerate footprints raise degenerate_geometry.
double footprint_area_sqkm(const Footprint& f);

// Intersection-over-union of the two quadrilaterals in the Mercator plane
// (Sutherland-Hodgman clipping on a triangle decomposition). Symmetric,
// in [0, 1], exactly 1 for identical footprints and 0 for disjoint ones.
double footprint_iou(const Footprint& a, const Footprint& b);

// True iff the intersection has positive area; shared edges do not count.
bool footprints_overlap(const Footprint& a, const Footprint& b);

// Closed containment test in the Mercator plane (boundary points count).
bool footprint_contains(const Footprint& f, const GeoPoint& p);

// Arithmetic mean of the four corners.
GeoPoint footprint_centroid(const Footprint& f);

double great_circle_km(const GeoPoint& a, const GeoPoint& b);

// The 4 tiles (one per offset grid) containing p at the given zoom.
// Points on a tile edge belong to the east/south tile.
std::array<TileId, 4> covering_tiles(const GeoPoint& p, int zoom);

struct CandidatePositive {
    TileId tile;
    int rotation_deg = 0;  // 0, 90, 180, 270
};

// All (tile, rotation) candidates for a weakly labeled point: one covering
// tile quadruple per zoom level times four rotations. With the default five
// zoom levels this is 5 x 4 x 4 = 80 entries.
std::vector<CandidatePositive> candidate_positives(const GeoPoint& weak,
                                                   const std::vector<int>& zooms = {8, 9, 10, 11,
                                                                                    12});

// Indices of footprints whose centroid lies within r_vis_km of the nadir.
std::vector<std::size_t> region_filter(const GeoPoint& nadir, const std::vector<Footprint>& db,
                                       double r_vis_km = kDefaultVisRadiusKm);

}  // namespace astroloc
