#include "astroloc/geo.hpp"

#include <algorithm>
#include <cmath>

namespace astroloc {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

struct P2 {
    double x = 0.0;
    double y = 0.0;
};

double merc_x(double lon) { return (lon + 180.0) / 360.0; }

double merc_y(double lat) {
    const double rad = lat * kDegToRad;
    return (1.0 - std::asinh(std::tan(rad)) / kPi) / 2.0;
}

P2 to_merc(const GeoPoint& p) { return {merc_x(p.lon), merc_y(p.lat)}; }

double cross(const P2& o, const P2& a, const P2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double shoelace(const std::vector<P2>& poly) {
    double s = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const P2& a = poly[i];
        const P2& b = poly[(i + 1) % n];
        s += a.x * b.y - a.y * b.x;
    }
    return 0.5 * s;
}

int orient_sign(const P2& o, const P2& a, const P2& b) {
    const double c = cross(o, a, b);
    if (c > 0.0) return 1;
    if (c < 0.0) return -1;
    return 0;
}

bool on_segment_collinear(const P2& a, const P2& b, const P2& p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

// Closed segment intersection test (touching counts).
bool segments_intersect(const P2& a, const P2& b, const P2& c, const P2& d) {
    const int o1 = orient_sign(a, b, c);
    const int o2 = orient_sign(a, b, d);
    const int o3 = orient_sign(c, d, a);
    const int o4 = orient_sign(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment_collinear(a, b, c)) return true;
    if (o2 == 0 && on_segment_collinear(a, b, d)) return true;
    if (o3 == 0 && on_segment_collinear(c, d, a)) return true;
    if (o4 == 0 && on_segment_collinear(c, d, b)) return true;
    return false;
}

std::array<P2, 4> merc_quad(const Footprint& f) {
    return {to_merc(f.corners[0]), to_merc(f.corners[1]), to_merc(f.corners[2]),
            to_merc(f.corners[3])};
}

double quad_signed_area(const std::array<P2, 4>& q) {
    return shoelace({q[0], q[1], q[2], q[3]});
}

// Splits a simple quad into two triangles along an internal diagonal.
bool triangulate(const std::array<P2, 4>& q, std::array<std::array<P2, 3>, 2>& out) {
    const double t1 = shoelace({q[0], q[1], q[2]});
    const double t2 = shoelace({q[0], q[2], q[3]});
    if (t1 * t2 > 0.0) {
        out[0] = {q[0], q[1], q[2]};
        out[1] = {q[0], q[2], q[3]};
        return true;
    }
    const double t3 = shoelace({q[1], q[2], q[3]});
    const double t4 = shoelace({q[1], q[3], q[0]});
    if (t3 * t4 > 0.0) {
        out[0] = {q[1], q[2], q[3]};
        out[1] = {q[1], q[3], q[0]};
        return true;
    }
    return false;
}

std::array<P2, 3> ccw_triangle(const std::array<P2, 3>& t) {
    if (shoelace({t[0], t[1], t[2]}) < 0.0) return {t[0], t[2], t[1]};
    return t;
}

// Sutherland-Hodgman: clip a polygon against one CCW triangle.
std::vector<P2> clip_against_triangle(std::vector<P2> subject, const std::array<P2, 3>& clip) {
    for (int e = 0; e < 3 && !subject.empty(); ++e) {
        const P2& ca = clip[e];
        const P2& cb = clip[(e + 1) % 3];
        std::vector<P2> out;
        out.reserve(subject.size() + 3);
        const std::size_t n = subject.size();
        for (std::size_t i = 0; i < n; ++i) {
            const P2& cur = subject[i];
            const P2& nxt = subject[(i + 1) % n];
            const double dc = cross(ca, cb, cur);
            const double dn = cross(ca, cb, nxt);
            const bool cur_in = dc >= 0.0;
            const bool nxt_in = dn >= 0.0;
            if (cur_in) out.push_back(cur);
            if (cur_in != nxt_in) {
                const double t = dc / (dc - dn);
                out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
            }
        }
        subject = std::move(out);
    }
    return subject;
}

double triangle_intersection_area(const std::array<P2, 3>& a, const std::array<P2, 3>& b) {
    const std::array<P2, 3> ca = ccw_triangle(a);
    const std::array<P2, 3> cb = ccw_triangle(b);
    const std::vector<P2> poly = clip_against_triangle({ca[0], ca[1], ca[2]}, cb);
    if (poly.size() < 3) return 0.0;
    return std::abs(shoelace(poly));
}

double quad_intersection_area(const std::array<P2, 4>& qa, const std::array<P2, 4>& qb) {
    std::array<std::array<P2, 3>, 2> ta, tb;
    if (!triangulate(qa, ta) || !triangulate(qb, tb))
        raise(ErrorCode::degenerate_geometry, "footprint cannot be triangulated");
    double sum = 0.0;
    for (const auto& t1 : ta)
        for (const auto& t2 : tb) sum += triangle_intersection_area(t1, t2);
    return sum;
}

std::array<double, 8> corner_key(const Footprint& f) {
    return {f.corners[0].lat, f.corners[0].lon, f.corners[1].lat, f.corners[1].lon,
            f.corners[2].lat, f.corners[2].lon, f.corners[3].lat, f.corners[3].lon};
}

std::int64_t pow2(int zoom) { return std::int64_t{1} << zoom; }

double u_to_lon(double u, double n) { return u / n * 360.0 - 180.0; }

double v_to_lat(double v, double n) {
    if (v <= 0.0) return kMaxMercatorLat;
    if (v >= n) return -kMaxMercatorLat;
    return std::atan(std::sinh(kPi * (1.0 - 2.0 * v / n))) / kDegToRad;
}

bool axis_shifted_x(TileOffset o) { return o == TileOffset::half_x || o == TileOffset::half_both; }
bool axis_shifted_y(TileOffset o) { return o == TileOffset::half_y || o == TileOffset::half_both; }

// [lo, hi] extent of tile index i along one axis, in tile units, clamped to
// the world range [0, n]. Shifted grids have the border half-tiles.
void axis_extent(std::int64_t i, bool shifted, double n, double& lo, double& hi) {
    if (shifted) {
        lo = std::max(0.0, static_cast<double>(i) + 0.5);
        hi = std::min(n, static_cast<double>(i) + 1.5);
    } else {
        lo = static_cast<double>(i);
        hi = static_cast<double>(i) + 1.0;
    }
}

bool axis_index_valid(std::int64_t i, bool shifted, std::int64_t n) {
    if (shifted) return i >= -1 && i < n;
    return i >= 0 && i < n;
}

std::int64_t axis_index_for(double coord, bool shifted, std::int64_t n) {
    const double shifted_coord = shifted ? coord - 0.5 : coord;
    auto idx = static_cast<std::int64_t>(std::floor(shifted_coord));
    const std::int64_t lo = shifted ? -1 : 0;
    return std::clamp(idx, lo, n - 1);
}

}  // namespace

double normalize_lon(double lon) {
    double l = std::fmod(lon + 180.0, 360.0);
    if (l < 0.0) l += 360.0;
    return l - 180.0;
}

bool point_valid(const GeoPoint& p) {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -kMaxMercatorLat &&
           p.lat <= kMaxMercatorLat && p.lon >= -180.0 && p.lon <= 180.0;
}

void validate_footprint(const Footprint& f) {
    for (const GeoPoint& c : f.corners) {
        if (!point_valid(c))
            raise(ErrorCode::invalid_point, "footprint corner outside Web-Mercator bounds");
    }
    const std::array<P2, 4> q = merc_quad(f);
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            if (q[i].x == q[j].x && q[i].y == q[j].y)
                raise(ErrorCode::degenerate_geometry, "footprint has repeated corners");
        }
    }
    // Non-adjacent edges of a simple quad never meet.
    if (segments_intersect(q[0], q[1], q[2], q[3]) || segments_intersect(q[1], q[2], q[3], q[0]))
        raise(ErrorCode::degenerate_geometry, "footprint polygon is self-intersecting");
    if (std::abs(quad_signed_area(q)) <= 1e-17)
        raise(ErrorCode::degenerate_geometry, "footprint has zero area");
}

Footprint footprint_from_corners(const std::array<GeoPoint, 4>& corners) {
    Footprint f{corners};
    for (int i = 0; i < 4; ++i) {
        const double dlon = std::abs(f.corners[(i + 1) % 4].lon - f.corners[i].lon);
        if (dlon > 180.0)
            raise(ErrorCode::antimeridian_crossing,
                  "footprint edge crosses the antimeridian; such records are rejected");
    }
    validate_footprint(f);
    return f;
}

bool footprint_equal(const Footprint& a, const Footprint& b) {
    return corner_key(a) == corner_key(b);
}

bool tile_valid(const TileId& t) {
    if (t.zoom < 0 || t.zoom > 22) return false;
    const std::int64_t n = pow2(t.zoom);
    return axis_index_valid(t.x, axis_shifted_x(t.offset), n) &&
           axis_index_valid(t.y, axis_shifted_y(t.offset), n);
}

Footprint tile_footprint(const TileId& t) {
    if (!tile_valid(t)) raise(ErrorCode::invalid_tile, "tile zoom or indices out of range");
    const double n = static_cast<double>(pow2(t.zoom));
    double u0, u1, v0, v1;
    axis_extent(t.x, axis_shifted_x(t.offset), n, u0, u1);
    axis_extent(t.y, axis_shifted_y(t.offset), n, v0, v1);
    const double west = u_to_lon(u0, n);
    const double east = u_to_lon(u1, n);
    const double north = v_to_lat(v0, n);
    const double south = v_to_lat(v1, n);
    return Footprint{{GeoPoint{north, west}, GeoPoint{north, east}, GeoPoint{south, east},
                      GeoPoint{south, west}}};
}

double footprint_area_sqkm(const Footprint& f) {
    validate_footprint(f);
    std::vector<P2> poly(4);
    for (int i = 0; i < 4; ++i) {
        poly[i].x = f.corners[i].lon * kDegToRad;
        poly[i].y = std::sin(f.corners[i].lat * kDegToRad);
    }
    const double area = std::abs(shoelace(poly)) * kEarthRadiusKm * kEarthRadiusKm;
    if (area <= 0.0) raise(ErrorCode::degenerate_geometry, "footprint has zero spherical area");
    return area;
}

double footprint_iou(const Footprint& a, const Footprint& b) {
    validate_footprint(a);
    validate_footprint(b);
    if (footprint_equal(a, b)) return 1.0;
    const Footprint* first = &a;
    const Footprint* second = &b;
    if (corner_key(b) < corner_key(a)) std::swap(first, second);
    const std::array<P2, 4> qa = merc_quad(*first);
    const std::array<P2, 4> qb = merc_quad(*second);
    const double area_a = std::abs(quad_signed_area(qa));
    const double area_b = std::abs(quad_signed_area(qb));
    double inter = quad_intersection_area(qa, qb);
    if (inter <= 1e-12 * std::max(area_a, area_b)) return 0.0;
    inter = std::min(inter, std::min(area_a, area_b));
    const double uni = std::max(area_a + area_b - inter, inter);
    return std::clamp(inter / uni, 0.0, 1.0);
}

bool footprints_overlap(const Footprint& a, const Footprint& b) {
    validate_footprint(a);
    validate_footprint(b);
    const std::array<P2, 4> qa = merc_quad(a);
    const std::array<P2, 4> qb = merc_quad(b);
    double ax0 = qa[0].x, ax1 = qa[0].x, ay0 = qa[0].y, ay1 = qa[0].y;
    double bx0 = qb[0].x, bx1 = qb[0].x, by0 = qb[0].y, by1 = qb[0].y;
    for (int i = 1; i < 4; ++i) {
        ax0 = std::min(ax0, qa[i].x), ax1 = std::max(ax1, qa[i].x);
        ay0 = std::min(ay0, qa[i].y), ay1 = std::max(ay1, qa[i].y);
        bx0 = std::min(bx0, qb[i].x), bx1 = std::max(bx1, qb[i].x);
        by0 = std::min(by0, qb[i].y), by1 = std::max(by1, qb[i].y);
    }
    if (ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0) return false;
    return footprint_iou(a, b) > 0.0;
}

bool footprint_contains(const Footprint& f, const GeoPoint& p) {
    if (!point_valid(p)) raise(ErrorCode::invalid_point, "point outside Web-Mercator bounds");
    const std::array<P2, 4> q = merc_quad(f);
    const P2 pt = to_merc(p);
    for (int i = 0; i < 4; ++i) {
        const P2& a = q[i];
        const P2& b = q[(i + 1) % 4];
        if (std::abs(cross(a, b, pt)) <= 1e-15 && on_segment_collinear(a, b, pt)) return true;
    }
    bool inside = false;
    for (int i = 0, j = 3; i < 4; j = i++) {
        const bool above_i = q[i].y > pt.y;
        const bool above_j = q[j].y > pt.y;
        if (above_i != above_j) {
            const double xint = q[i].x + (pt.y - q[i].y) / (q[j].y - q[i].y) * (q[j].x - q[i].x);
            if (pt.x < xint) inside = !inside;
        }
    }
    return inside;
}

GeoPoint footprint_centroid(const Footprint& f) {
    GeoPoint c;
    for (const GeoPoint& p : f.corners) {
        c.lat += p.lat;
        c.lon += p.lon;
    }
    c.lat /= 4.0;
    c.lon /= 4.0;
    return c;
}

double great_circle_km(const GeoPoint& a, const GeoPoint& b) {
    const double la = a.lat * kDegToRad;
    const double lb = b.lat * kDegToRad;
    const double dlat = lb - la;
    const double dlon = (b.lon - a.lon) * kDegToRad;
    const double s = std::sin(dlat / 2.0);
    const double t = std::sin(dlon / 2.0);
    const double h = s * s + std::cos(la) * std::cos(lb) * t * t;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

std::array<TileId, 4> covering_tiles(const GeoPoint& p, int zoom) {
    if (!point_valid(p)) raise(ErrorCode::invalid_point, "point outside Web-Mercator bounds");
    if (zoom < kMinAplZoom || zoom > kMaxAplZoom)
        raise(ErrorCode::invalid_tile, "covering_tiles zoom must be in [8, 12]");
    const std::int64_t n = pow2(zoom);
    const double nd = static_cast<double>(n);
    const double u = merc_x(p.lon) * nd;
    const double v = merc_y(p.lat) * nd;
    std::array<TileId, 4> out;
    const std::array<TileOffset, 4> offsets = {TileOffset::none, TileOffset::half_x,
                                               TileOffset::half_y, TileOffset::half_both};
    for (int i = 0; i < 4; ++i) {
        const TileOffset o = offsets[i];
        out[i] = TileId{zoom, axis_index_for(u, axis_shifted_x(o), n),
                        axis_index_for(v, axis_shifted_y(o), n), o};
    }
    return out;
}

std::vector<CandidatePositive> candidate_positives(const GeoPoint& weak,
                                                   const std::vector<int>& zooms) {
    if (zooms.empty()) raise(ErrorCode::precondition, "candidate_positives: empty zoom list");
    std::vector<int> sorted = zooms;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        raise(ErrorCode::precondition, "candidate_positives: duplicate zoom levels");
    std::vector<CandidatePositive> out;
    out.reserve(sorted.size() * 16);
    for (int z : sorted) {
        const std::array<TileId, 4> tiles = covering_tiles(weak, z);
        for (const TileId& t : tiles) {
            for (int rot = 0; rot < 360; rot += 90) out.push_back({t, rot});
        }
    }
    return out;
}

std::vector<std::size_t> region_filter(const GeoPoint& nadir, const std::vector<Footprint>& db,
                                       double r_vis_km) {
    if (!point_valid(nadir)) raise(ErrorCode::invalid_point, "nadir outside Web-Mercator bounds");
    if (!(r_vis_km > 0.0)) raise(ErrorCode::precondition, "region_filter: r_vis_km must be > 0");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (great_circle_km(nadir, footprint_centroid(db[i])) <= r_vis_km) out.push_back(i);
    }
    return out;
}

}  // namespace astroloc
