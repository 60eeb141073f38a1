#include "srl360/errors.hpp"
#include "srl360/qoe.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace srl360;
using namespace srl360::qoe;

namespace {

SegmentDecision random_decision(std::mt19937_64 &rng, std::size_t tiles, std::size_t levels) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SegmentDecision d;
    d.rates.resize(tiles);
    double total = 0.0;
    for (std::size_t i = 0; i < tiles; ++i) {
        double r = 0.1;
        for (std::size_t j = 0; j < levels; ++j) d.rates[i].push_back(r += u(rng));
        d.selection.push_back(static_cast<int>(rng() % levels));
        d.probs.push_back(u(rng) < 0.3 ? 0.0 : u(rng));
        total += d.probs.back();
    }
    if (total == 0.0) d.probs[0] = total = 1.0;
    for (auto &p : d.probs) p /= total;
    return d;
}

} // namespace

TEST_CASE("viewport_quality") {
    SegmentDecision d{{1, 0}, {{1.0, 4.0}, {1.0, 2.0}}, {0.7, 0.3}};
    CHECK(viewport_quality(d) == doctest::Approx(3.1));

    SegmentDecision uniform{{2, 2, 2, 2}, TileRates(4, {1.0, 2.0, 5.0}), {0.25, 0.25, 0.25, 0.25}};
    CHECK(viewport_quality(uniform) == doctest::Approx(5.0));

    std::mt19937_64 rng(9);
    for (int k = 0; k < 50; ++k) {
        const auto r = random_decision(rng, 9, 5);
        double expected = 0.0;
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                expected += (r.selection[i] == static_cast<int>(j) ? 1.0 : 0.0) * r.probs[i] * r.rates[i][j];
        CHECK(viewport_quality(r) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("viewport_quality is linear in the probability vector") {
    std::mt19937_64 rng(10);
    for (int k = 0; k < 50; ++k) {
        auto a = random_decision(rng, 9, 4);
        auto b = a;
        b.probs = random_decision(rng, 9, 4).probs;
        const double lambda = 0.37;
        auto mix = a;
        for (std::size_t i = 0; i < 9; ++i) mix.probs[i] = lambda * a.probs[i] + (1 - lambda) * b.probs[i];
        CHECK(viewport_quality(mix) ==
              doctest::Approx(lambda * viewport_quality(a) + (1 - lambda) * viewport_quality(b)).epsilon(1e-12));
    }
}

TEST_CASE("temporal_variation") {
    CHECK(temporal_variation(3.1, 3.1) == 0.0);
    CHECK(temporal_variation(3.1, 1.1) == doctest::Approx(2.0));
    CHECK(temporal_variation(0.0, 5.0) == 5.0);
}

TEST_CASE("spatial_variation cases and pair oracles") {
    const geo::TileGrid grid{3, 3};
    const auto nbrs = neighbor_map(grid);
    SegmentDecision same{std::vector<int>(9, 2), TileRates(9, {1, 2, 3}), geo::ViewProbabilities(9, 1.0 / 9)};
    CHECK(spatial_variation(same, nbrs) == 0.0);

    SegmentDecision two{{1, 0}, {{1.0, 4.0}, {1.0, 4.0}}, {0.5, 0.5}};
    CHECK(spatial_variation(two, NeighborMap{{1}, {0}}) == doctest::Approx(0.75));

    std::mt19937_64 rng(12);
    for (int k = 0; k < 200; ++k) {
        const auto d = random_decision(rng, 9, 5);
        double ordered = 0.0, unordered = 0.0;
        for (int i = 0; i < 9; ++i)
            for (int u = 0; u < 9; ++u) {
                const auto nb = geo::one_hop_neighbors(grid, i);
                if (std::find(nb.begin(), nb.end(), u) == nb.end()) continue;
                const double term = d.probs[static_cast<std::size_t>(i)] * d.probs[static_cast<std::size_t>(u)] *
                                    std::abs(d.chosen_rate(static_cast<std::size_t>(i)) - d.chosen_rate(static_cast<std::size_t>(u)));
                ordered += term;
                if (i < u) unordered += term;
            }
        const double q3 = spatial_variation(d, nbrs);
        CHECK(q3 == doctest::Approx(0.5 * ordered).epsilon(1e-12));
        CHECK(q3 == doctest::Approx(unordered).epsilon(1e-12));
    }
}

TEST_CASE("rebuffer_time cases and monotonicity") {
    SegmentDecision d{{0, 0}, {{1.5}, {2.5}}, {0.5, 0.5}};
    CHECK(rebuffer_time(d, 2.0, 1.5, 1.0) == doctest::Approx(0.5));
    CHECK(rebuffer_time(d, 2.0, 100.0, 1.0) == 0.0);
    CHECK(rebuffer_time(d, 4.0, 0.0, 1.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rebuffer_time(d, 0.0, 1.0, 1.0), ParameterError);

    double prev = INFINITY;
    for (double b = 0.0; b < 4.0; b += 0.25) {
        const double r = rebuffer_time(d, 2.0, b, 1.0);
        CHECK(r <= prev);
        prev = r;
    }
    prev = INFINITY;
    for (double xi = 0.5; xi < 10.0; xi += 0.5) {
        const double r = rebuffer_time(d, xi, 0.5, 1.0);
        CHECK(r <= prev);
        prev = r;
    }
}

TEST_CASE("qoe_score arithmetic and monotonicity") {
    const QoeWeights w;
    CHECK(qoe_score(3.1, 0, 0, 0, w).total == doctest::Approx(3.1));
    CHECK(qoe_score(3.1, 2.0, 0.75, 0.5, w).total == doctest::Approx(-1.8));
    CHECK(qoe_score(3.1, 2.0, 0.75, 0.5, {0, 0, 0}).total == 3.1);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 3);
    for (int k = 0; k < 200; ++k) {
        const QoeWeights ww{u(rng), u(rng), u(rng)};
        const double q1 = u(rng), q2 = u(rng), q3 = u(rng), q4 = u(rng), bump = u(rng);
        const double base = qoe_score(q1, q2, q3, q4, ww).total;
        CHECK(qoe_score(q1, q2 + bump, q3, q4, ww).total <= base);
        CHECK(qoe_score(q1, q2, q3 + bump, q4, ww).total <= base);
        CHECK(qoe_score(q1, q2, q3, q4 + bump, ww).total <= base);
    }
    CHECK_THROWS_AS((QoeWeights{-1, 0, 0}.validate()), ParameterError);
}

TEST_CASE("decision validation") {
    SegmentDecision bad{{3}, {{1.0, 2.0}}, {1.0}};
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    SegmentDecision mismatch{{0, 0}, {{1.0}}, {1.0}};
    CHECK_THROWS_AS(mismatch.validate(), ParameterError);
}

TEST_CASE("qoe csv rows recompute exactly") {
    const QoeWeights w;
    std::vector<QoeRow> rows;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 3);
    for (std::size_t k = 0; k < 20; ++k) rows.push_back({k, qoe_score(u(rng), u(rng), u(rng), u(rng), w)});
    std::ostringstream out;
    write_qoe_csv(out, rows);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "segment_index,q1,q2,q3,q4,total");
    std::size_t count = 0;
    while (std::getline(in, line)) {
        double v[6];
        char comma;
        std::istringstream row(line);
        row >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3] >> comma >> v[4] >> comma >> v[5];
        CHECK(v[5] == v[1] - w.eta1 * v[2] - w.eta2 * v[3] - w.eta3 * v[4]);
        ++count;
    }
    CHECK(count == rows.size());
}
