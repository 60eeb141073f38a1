#include "srl360/errors.hpp"
#include "srl360/geometry.hpp"

#include <doctest.h>

#include <numeric>
#include <random>

using namespace srl360;
using namespace srl360::geo;

namespace {

double sum(const ViewProbabilities &p) { return std::accumulate(p.begin(), p.end(), 0.0); }

// Monte-Carlo estimate: uniform points inside the FoV rectangle, binned by tile.
ViewProbabilities monte_carlo_probs(const Viewpoint &vp, const TileGrid &grid, const FieldOfView &fov, int samples,
                                    std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> ulon(-fov.width / 2, fov.width / 2), ulat(-fov.height / 2, fov.height / 2);
    ViewProbabilities counts(static_cast<std::size_t>(grid.tile_count()), 0.0);
    for (int k = 0; k < samples; ++k) {
        double lon = vp.longitude + ulon(rng), lat = vp.latitude + ulat(rng);
        lon = std::fmod(lon + 540.0, 360.0) - 180.0;
        const int col = std::min(grid.cols - 1, static_cast<int>((lon + 180.0) / grid.tile_width()));
        const int row = std::min(grid.rows - 1, static_cast<int>((90.0 - lat) / grid.tile_height()));
        counts[static_cast<std::size_t>(row * grid.cols + col)] += 1.0;
    }
    for (auto &c : counts) c /= samples;
    return counts;
}

} // namespace

TEST_CASE("wrap_longitude_distance cases and metric properties") {
    CHECK(wrap_longitude_distance(10, 10) == 0.0);
    CHECK(wrap_longitude_distance(175, -175) == doctest::Approx(10.0));
    CHECK(wrap_longitude_distance(-90, 90) == doctest::Approx(180.0));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-540, 540);
    for (int k = 0; k < 2000; ++k) {
        const double a = u(rng), b = u(rng), c = u(rng);
        const double ab = wrap_longitude_distance(a, b);
        CHECK(ab >= 0.0);
        CHECK(ab <= 180.0);
        CHECK(ab == doctest::Approx(wrap_longitude_distance(b, a)));
        CHECK(ab <= wrap_longitude_distance(a, c) + wrap_longitude_distance(c, b) + 1e-9);
    }
    CHECK(wrap_longitude_distance(30, 390) == doctest::Approx(0.0));
}

TEST_CASE("viewing_probabilities containment and symmetry") {
    const TileGrid g3{3, 3};
    const auto e = g3.extent(4);
    const FieldOfView tile_fov{e.lon_max - e.lon_min, e.lat_max - e.lat_min};
    const auto p = viewing_probabilities({0.0, 0.0}, g3, tile_fov);
    for (int t = 0; t < 9; ++t) CHECK(p[static_cast<std::size_t>(t)] == doctest::Approx(t == 4 ? 1.0 : 0.0));

    const TileGrid g2{2, 2};
    const auto q = viewing_probabilities({0.0, 0.0}, g2, {180.0, 90.0});
    for (double v : q) CHECK(v == doctest::Approx(0.25));

    // Same corner case across the ±180 seam.
    const auto seam = viewing_probabilities({180.0, 0.0}, g2, {180.0, 90.0});
    for (double v : seam) CHECK(v == doctest::Approx(0.25));

    CHECK_THROWS_AS(viewing_probabilities({0, 0}, g3, {0.0, 100.0}), ParameterError);
    CHECK_THROWS_AS(viewing_probabilities({0, 0}, g3, {400.0, 100.0}), ParameterError);
}

TEST_CASE("viewing_probabilities matches Monte-Carlo oracle") {
    std::mt19937_64 rng(1234);
    const TileGrid grid{3, 3};
    const auto exact = viewing_probabilities({0.0, 0.0}, grid);
    const auto mc = monte_carlo_probs({0.0, 0.0}, grid, {}, 1'000'000, rng);
    for (std::size_t t = 0; t < exact.size(); ++t) CHECK(std::abs(exact[t] - mc[t]) < 1e-3);

    const auto exact2 = viewing_probabilities({165.0, 20.0}, grid);
    const auto mc2 = monte_carlo_probs({165.0, 20.0}, grid, {}, 1'000'000, rng);
    for (std::size_t t = 0; t < exact2.size(); ++t) CHECK(std::abs(exact2[t] - mc2[t]) < 1e-3);
}

TEST_CASE("viewing_probabilities sums to one and is rotation-equivariant by one column") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> ulon(-180, 180), ulat(-90, 90);
    for (const TileGrid grid : {TileGrid{3, 3}, TileGrid{2, 4}, TileGrid{4, 6}}) {
        for (int k = 0; k < 300; ++k) {
            const Viewpoint vp{ulon(rng), ulat(rng)};
            const auto p = viewing_probabilities(vp, grid);
            CHECK(std::abs(sum(p) - 1.0) < 1e-9);
            for (double v : p) CHECK(v >= 0.0);

            const auto rotated = viewing_probabilities({vp.longitude + grid.tile_width(), vp.latitude}, grid);
            for (int r = 0; r < grid.rows; ++r)
                for (int c = 0; c < grid.cols; ++c) {
                    const auto shifted = static_cast<std::size_t>(grid.tile_at(r, (c + 1) % grid.cols));
                    CHECK(rotated[shifted] == doctest::Approx(p[static_cast<std::size_t>(grid.tile_at(r, c))]).epsilon(1e-9));
                }
        }
    }
}

TEST_CASE("one_hop_neighbors enumerations") {
    const TileGrid g{3, 3};
    CHECK(one_hop_neighbors(g, 4) == std::vector<int>{0, 1, 2, 3, 5, 6, 7, 8});

    // Enumeration oracle: every other tile within one row and one wrapped column.
    for (int tile = 0; tile < 9; ++tile) {
        std::vector<int> expected;
        for (int other = 0; other < 9; ++other) {
            if (other == tile) continue;
            const int dr = std::abs(other / 3 - tile / 3);
            const int dc = std::abs(other % 3 - tile % 3);
            if (dr <= 1 && std::min(dc, 3 - dc) <= 1) expected.push_back(other);
        }
        CHECK(one_hop_neighbors(g, tile) == expected);
    }
    CHECK(one_hop_neighbors(g, 0).size() == 5);
    CHECK(one_hop_neighbors(g, 0) == std::vector<int>{1, 2, 3, 4, 5});

    CHECK(one_hop_neighbors(TileGrid{1, 1}, 0).empty());
    CHECK(one_hop_neighbors(TileGrid{2, 2}, 0) == std::vector<int>{1, 2, 3});
    CHECK_THROWS_AS(one_hop_neighbors(g, 9), ParameterError);

    const auto slots = neighbor_slots(g, 0);
    CHECK_FALSE(slots[0].has_value()); // NW beyond the pole
    CHECK(slots[3] == 1);              // E
    CHECK(slots[4] == 4);              // SE
    CHECK(slots[5] == 3);              // S
    CHECK(slots[6] == 5);              // SW wraps
    CHECK(slots[7] == 2);              // W wraps
}

TEST_CASE("hit_rate cases") {
    const ViewProbabilities a{0.1, 0.2, 0.3, 0.4, 0.0, 0.0};
    CHECK(hit_rate(a, a) == 1.0);
    CHECK(hit_rate({0, 0, 0, 0, 0.5, 0.5}, a) == 0.0);
    const ViewProbabilities act{0, 0.25, 0.25, 0.25, 0.25, 0};
    const ViewProbabilities pred{0, 0, 0.3, 0.3, 0.3, 0.1};
    CHECK(hit_rate(pred, act) == doctest::Approx(0.75));
    CHECK(hit_rate(pred, ViewProbabilities(6, 0.0)) == 1.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 100; ++k) {
        ViewProbabilities x(9);
        for (auto &v : x) v = u(rng) < 0.5 ? 0.0 : u(rng);
        for (double thr : {0.0, 0.1, 0.5}) CHECK(hit_rate(x, x, thr) == 1.0);
    }
}

TEST_CASE("angular_errors cases") {
    const auto same = angular_errors({12, 34}, {12, 34});
    CHECK(same.longitude == 0.0);
    CHECK(same.latitude == 0.0);
    const auto wrap = angular_errors({179, 10}, {-179, -10});
    CHECK(wrap.longitude == doctest::Approx(2.0));
    CHECK(wrap.latitude == doctest::Approx(20.0));
    const auto poles = angular_errors({0, 90}, {0, -90});
    CHECK(poles.longitude == 0.0);
    CHECK(poles.latitude == doctest::Approx(180.0));
}

TEST_CASE("canonical wraps longitude and clamps latitude") {
    const auto v = canonical({190.0, 95.0});
    CHECK(v.longitude == doctest::Approx(-170.0));
    CHECK(v.latitude == 90.0);
    CHECK(canonical({-540.0, -100.0}).longitude == doctest::Approx(-180.0));
}
