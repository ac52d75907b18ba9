#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "astroloc/geo.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace astroloc;

TEST_CASE("normalize_lon wraps into [-180, 180)") {
    CHECK(normalize_lon(180.0) == doctest::Approx(-180.0));
    CHECK(normalize_lon(190.0) == doctest::Approx(-170.0));
    CHECK(normalize_lon(-190.0) == doctest::Approx(170.0));
    CHECK(normalize_lon(360.0) == doctest::Approx(0.0));
    CHECK(normalize_lon(-180.0) == doctest::Approx(-180.0));
}

TEST_CASE("tile_footprint matches the slippy-map corner formulas") {
    SUBCASE("zoom 1, no offset") {
        const Footprint f = tile_footprint({1, 0, 0, TileOffset::none});
        CHECK(f.corners[0].lon == doctest::Approx(-180.0));
        CHECK(f.corners[1].lon == doctest::Approx(0.0));
        CHECK(f.corners[0].lat == doctest::Approx(kMaxMercatorLat));
        CHECK(f.corners[2].lat == doctest::Approx(0.0));
    }
    SUBCASE("zoom 0 covers the whole Mercator extent") {
        const Footprint f = tile_footprint({0, 0, 0, TileOffset::none});
        CHECK(f.corners[0].lon == doctest::Approx(-180.0));
        CHECK(f.corners[1].lon == doctest::Approx(180.0));
        CHECK(f.corners[0].lat == doctest::Approx(kMaxMercatorLat));
        CHECK(f.corners[2].lat == doctest::Approx(-kMaxMercatorLat));
    }
    SUBCASE("zoom 1 half-x shift") {
        const Footprint f = tile_footprint({1, 0, 0, TileOffset::half_x});
        CHECK(f.corners[0].lon == doctest::Approx(-90.0));
        CHECK(f.corners[1].lon == doctest::Approx(90.0));
        CHECK(f.corners[0].lat == doctest::Approx(kMaxMercatorLat));
        CHECK(f.corners[2].lat == doctest::Approx(0.0));
    }
    SUBCASE("shifted border tiles are clamped half tiles") {
        const Footprint west = tile_footprint({1, -1, 0, TileOffset::half_x});
        CHECK(west.corners[0].lon == doctest::Approx(-180.0));
        CHECK(west.corners[1].lon == doctest::Approx(-90.0));
        const Footprint east = tile_footprint({1, 1, 0, TileOffset::half_x});
        CHECK(east.corners[0].lon == doctest::Approx(90.0));
        CHECK(east.corners[1].lon == doctest::Approx(180.0));
    }
    SUBCASE("invalid tiles are rejected") {
        CHECK_THROWS_AS(tile_footprint({23, 0, 0, TileOffset::none}), Error);
        CHECK_THROWS_AS(tile_footprint({1, 2, 0, TileOffset::none}), Error);
        CHECK_THROWS_AS(tile_footprint({1, -1, 0, TileOffset::none}), Error);
        CHECK_THROWS_AS(tile_footprint({1, -2, 0, TileOffset::half_x}), Error);
        CHECK_THROWS_AS(tile_footprint({-1, 0, 0, TileOffset::none}), Error);
    }
}

TEST_CASE("footprint area agrees with the spherical quadrangle oracle") {
    SUBCASE("whole Mercator extent") {
        const Footprint f = tile_footprint({0, 0, 0, TileOffset::none});
        const double expected =
            testoracle::strip_area_sqkm(-kMaxMercatorLat, kMaxMercatorLat, -180.0, 180.0);
        CHECK(footprint_area_sqkm(f) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(footprint_area_sqkm(f) > 5.0e8);
        CHECK(footprint_area_sqkm(f) < 5.12e8);
    }
    SUBCASE("one degree cell at the equator") {
        const Footprint f{{GeoPoint{1, 0}, GeoPoint{1, 1}, GeoPoint{0, 1}, GeoPoint{0, 0}}};
        const double expected = testoracle::strip_area_sqkm(0.0, 1.0, 0.0, 1.0);
        CHECK(footprint_area_sqkm(f) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(footprint_area_sqkm(f) == doctest::Approx(12364.0).epsilon(1e-4));
    }
    SUBCASE("winding reversal leaves the area unchanged") {
        Rng rng(11);
        for (int i = 0; i < 50; ++i) {
            const Footprint f = testhelp::random_quad(rng, -40.0 + 80.0 * rng.uniform(),
                                                      -150.0 + 300.0 * rng.uniform(), 1.5);
            Footprint rev = f;
            std::swap(rev.corners[0], rev.corners[3]);
            std::swap(rev.corners[1], rev.corners[2]);
            CHECK(footprint_area_sqkm(f) == doctest::Approx(footprint_area_sqkm(rev)).epsilon(1e-12));
        }
    }
    SUBCASE("longitude translation leaves the area unchanged") {
        Rng rng(12);
        for (int i = 0; i < 50; ++i) {
            const Footprint f = testhelp::random_quad(rng, -40.0 + 80.0 * rng.uniform(),
                                                      -120.0 + 200.0 * rng.uniform(), 1.5);
            Footprint moved = f;
            for (auto& c : moved.corners) c.lon += 37.0;
            CHECK(footprint_area_sqkm(f) == doctest::Approx(footprint_area_sqkm(moved)).epsilon(1e-9));
        }
    }
    SUBCASE("degenerate footprints raise") {
        const Footprint collinear{
            {GeoPoint{0, 0}, GeoPoint{0, 1}, GeoPoint{0, 2}, GeoPoint{0, 3}}};
        CHECK_THROWS_AS(footprint_area_sqkm(collinear), Error);
    }
}

TEST_CASE("footprint IoU: exact cases") {
    const Footprint a = testhelp::square(10.0, 20.0, 0.5);
    const Footprint far_away = testhelp::square(-10.0, -20.0, 0.5);
    CHECK(footprint_iou(a, a) == 1.0);
    CHECK(footprint_iou(a, far_away) == 0.0);
    CHECK(footprints_overlap(a, a));
    CHECK_FALSE(footprints_overlap(a, far_away));

    // unit squares in the projected plane, offset by half a side
    const Footprint sq1 = testhelp::merc_rect(0.40, 0.44, 0.40, 0.44);
    const Footprint sq2 = testhelp::merc_rect(0.42, 0.46, 0.40, 0.44);
    CHECK(footprint_iou(sq1, sq2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // edge-touching squares share no area
    const Footprint sq3 = testhelp::merc_rect(0.44, 0.48, 0.40, 0.44);
    CHECK(footprint_iou(sq1, sq3) == 0.0);
    CHECK_FALSE(footprints_overlap(sq1, sq3));

    const Footprint degen{{GeoPoint{0, 0}, GeoPoint{0, 1}, GeoPoint{0, 2}, GeoPoint{0, 3}}};
    CHECK_THROWS_AS(footprint_iou(a, degen), Error);
}

TEST_CASE("footprint IoU: symmetry, bounds and Monte-Carlo agreement") {
    Rng rng(77);
    int checked = 0;
    for (int i = 0; i < 40; ++i) {
        const double lat = -50.0 + 100.0 * rng.uniform();
        const double lon = -150.0 + 300.0 * rng.uniform();
        const Footprint a = testhelp::random_quad(rng, lat, lon, 1.0);
        const Footprint b = testhelp::random_quad(rng, lat + 1.6 * (rng.uniform() - 0.5),
                                                  lon + 1.6 * (rng.uniform() - 0.5), 1.0);
        const double iou_ab = footprint_iou(a, b);
        const double iou_ba = footprint_iou(b, a);
        CHECK(iou_ab == iou_ba);  // bitwise symmetric
        CHECK(iou_ab >= 0.0);
        CHECK(iou_ab <= 1.0);
        const double mc = testoracle::monte_carlo_iou(a, b, 200000, 1000 + i);
        CHECK(std::abs(iou_ab - mc) < 0.01);
        checked++;
    }
    CHECK(checked == 40);
}

TEST_CASE("same-offset tiles partition the world exactly") {
    const Footprint world = tile_footprint({0, 0, 0, TileOffset::none});
    const double world_area = footprint_area_sqkm(world);
    for (TileOffset offset : {TileOffset::none, TileOffset::half_x, TileOffset::half_y,
                              TileOffset::half_both}) {
        const int zoom = 3;
        const std::int64_t n = 8;
        std::vector<Footprint> tiles;
        const std::int64_t x0 = (offset == TileOffset::half_x || offset == TileOffset::half_both)
                                    ? -1
                                    : 0;
        const std::int64_t y0 = (offset == TileOffset::half_y || offset == TileOffset::half_both)
                                    ? -1
                                    : 0;
        for (std::int64_t x = x0; x < n; ++x)
            for (std::int64_t y = y0; y < n; ++y)
                tiles.push_back(tile_footprint({zoom, x, y, offset}));
        double total = 0.0;
        for (const Footprint& t : tiles) total += footprint_area_sqkm(t);
        CHECK(total == doctest::Approx(world_area).epsilon(1e-9));
        for (std::size_t i = 0; i < tiles.size(); ++i)
            for (std::size_t j = i + 1; j < tiles.size(); ++j)
                CHECK(footprint_iou(tiles[i], tiles[j]) == 0.0);
    }
}

TEST_CASE("covering_tiles returns one containing tile per offset grid") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const GeoPoint p{-80.0 + 160.0 * rng.uniform(), -180.0 + 360.0 * rng.uniform()};
        const int zoom = 8 + static_cast<int>(rng.uniform_index(5));
        const auto tiles = covering_tiles(p, zoom);
        std::set<int> offsets;
        for (const TileId& t : tiles) {
            offsets.insert(static_cast<int>(t.offset));
            CHECK(footprint_contains(tile_footprint(t), p));
        }
        CHECK(offsets.size() == 4);
    }
    SUBCASE("point exactly on a tile corner still gets 4 containing tiles") {
        // (0, -90) is the exact corner of no-offset tile (64, 128) at zoom 8
        const GeoPoint corner{0.0, -90.0};
        const auto tiles = covering_tiles(corner, 8);
        for (const TileId& t : tiles) CHECK(footprint_contains(tile_footprint(t), corner));
        // east/south tie-break: the no-offset tile starts at the corner
        CHECK(tiles[0].x == 64);
        CHECK(tiles[0].y == 128);
    }
    SUBCASE("origin point") {
        for (const TileId& t : covering_tiles({0.0, 0.0}, 8))
            CHECK(footprint_contains(tile_footprint(t), {0.0, 0.0}));
    }
    CHECK_THROWS_AS(covering_tiles({0.0, 0.0}, 7), Error);
    CHECK_THROWS_AS(covering_tiles({0.0, 0.0}, 13), Error);
}

TEST_CASE("candidate_positives enumerates 5 zooms x 4 tiles x 4 rotations") {
    Rng rng(9);
    for (int trial = 0; trial < 25; ++trial) {
        const GeoPoint p{-80.0 + 160.0 * rng.uniform(), -180.0 + 360.0 * rng.uniform()};
        const auto cands = candidate_positives(p);
        REQUIRE(cands.size() == 80);
        std::set<std::tuple<int, std::int64_t, std::int64_t, int, int>> keys;
        for (const CandidatePositive& c : cands) {
            keys.insert({c.tile.zoom, c.tile.x, c.tile.y, static_cast<int>(c.tile.offset),
                         c.rotation_deg});
            CHECK(footprint_contains(tile_footprint(c.tile), p));
        }
        CHECK(keys.size() == 80);
    }
    CHECK(candidate_positives({10.0, 10.0}, {9}).size() == 16);
    CHECK_THROWS_AS(candidate_positives({10.0, 10.0}, {9, 9}), Error);
    CHECK_THROWS_AS(candidate_positives({10.0, 10.0}, {}), Error);
}

TEST_CASE("region_filter keeps footprints within the visibility cap") {
    const GeoPoint nadir{10.0, 20.0};
    std::vector<Footprint> db = {
        testhelp::square(10.0, 20.0, 0.5),    // at the nadir
        testhelp::square(-10.0, -160.0, 0.5), // near the antipode
        testhelp::square(12.0, 22.0, 0.5),    // ~300 km away
    };
    const auto kept = region_filter(nadir, db);
    CHECK(kept == std::vector<std::size_t>{0, 2});

    SUBCASE("default radius matches the 20M sqkm cap") {
        // solve 2 pi R^2 (1 - cos theta) = 2e7 by bisection
        const double r = kEarthRadiusKm;
        double lo = 0.0, hi = 3.14159265358979323846;
        for (int i = 0; i < 200; ++i) {
            const double mid = (lo + hi) / 2.0;
            const double area = 2.0 * 3.14159265358979323846 * r * r * (1.0 - std::cos(mid));
            (area < 2.0e7 ? lo : hi) = mid;
        }
        const double r_vis = r * (lo + hi) / 2.0;
        CHECK(r_vis == doctest::Approx(2539.92).epsilon(1e-4));
        // the engine default rounds the cap radius up to 2543 km
        CHECK(std::abs(kDefaultVisRadiusKm - r_vis) < 5.0);
    }
}

TEST_CASE("footprint validation") {
    CHECK_THROWS_AS(footprint_from_corners({GeoPoint{10, 170}, GeoPoint{10, -170},
                                            GeoPoint{9, -170}, GeoPoint{9, 170}}),
                    Error);  // wraps the antimeridian
    CHECK_THROWS_AS(validate_footprint(Footprint{{GeoPoint{88, 0}, GeoPoint{88, 1},
                                                  GeoPoint{87, 1}, GeoPoint{87, 0}}}),
                    Error);  // beyond Mercator latitude bounds
    // bow-tie (self-intersecting)
    CHECK_THROWS_AS(validate_footprint(Footprint{{GeoPoint{1, 0}, GeoPoint{0, 1}, GeoPoint{1, 1},
                                                  GeoPoint{0, 0}}}),
                    Error);
    // valid footprint passes
    validate_footprint(testhelp::square(45.0, 100.0, 1.0));
}
