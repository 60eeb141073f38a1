#include "srl360/errors.hpp"
#include "srl360/sequential.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace srl360;
using namespace srl360::seq;

namespace {

env::NetworkTrace constant_trace(double mbps) {
    env::NetworkTrace t;
    t.name = "const";
    for (int s = 0; s < 50; ++s) {
        t.timestamps.push_back(s);
        t.throughput_mbps.push_back(mbps);
    }
    return t;
}

env::VideoManifest grid_manifest(geo::TileGrid grid, std::size_t segments, std::uint64_t seed = 1) {
    env::ManifestSpec spec;
    spec.grid = grid;
    spec.segment_count = segments;
    spec.seed = seed;
    return env::synthesize_manifest(spec);
}

geo::ViewProbabilities random_probs(std::size_t n, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    geo::ViewProbabilities p(n);
    for (auto &v : p) v = u(rng) < 0.3 ? 0.0 : u(rng);
    return p;
}

} // namespace

TEST_CASE("decision_order: forced first, requested order, tie rule, reproducible shuffle") {
    const geo::ViewProbabilities p{0.0, 0.6, 0.4, 0.0};
    const auto hi = decision_order(p, OrderMode::HighToLow);
    CHECK(hi.order == std::vector<int>{0, 3, 1, 2});
    CHECK(hi.forced == std::vector<bool>{true, true, false, false});
    CHECK(hi.forced_count == 2);
    CHECK(decision_order(p, OrderMode::LowToHigh).order == std::vector<int>{0, 3, 2, 1});
    CHECK(decision_order(p, OrderMode::ZScan).order == std::vector<int>{0, 3, 1, 2});

    const geo::ViewProbabilities flat(9, 0.2);
    std::vector<int> ascending(9);
    for (int k = 0; k < 9; ++k) ascending[static_cast<std::size_t>(k)] = k;
    CHECK(decision_order(flat, OrderMode::HighToLow).order == ascending);
    CHECK(decision_order(flat, OrderMode::LowToHigh).order == ascending);

    const auto r1 = decision_order(flat, OrderMode::Random, 17);
    const auto r2 = decision_order(flat, OrderMode::Random, 17);
    CHECK(r1.order == r2.order);
    auto sorted = r1.order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == ascending);
    bool differs = false;
    for (std::uint64_t s = 0; s < 10; ++s) differs |= decision_order(flat, OrderMode::Random, s).order != r1.order;
    CHECK(differs);

    CHECK(parse_order_mode("high_to_low") == OrderMode::HighToLow);
    CHECK_THROWS_AS(parse_order_mode("sideways"), ParameterError);
}

TEST_CASE("estimate_buffer") {
    env::ManifestSpec spec;
    spec.grid = {1, 2};
    spec.nominal_bitrates_mbps = {1.0, 2.0, 4.0};
    spec.segment_count = 1;
    spec.jitter_sigma = 0.0;
    const auto m = env::synthesize_manifest(spec); // tile rates {0.5, 1, 2}
    CHECK(estimate_buffer(4.0, {}, m, 1.0) == 4.0);
    const std::vector<TileLevel> two{{0, 1}, {1, 1}};
    CHECK(estimate_buffer(4.0, two, m, 1.0) == doctest::Approx(2.0));
    const std::vector<TileLevel> heavy{{0, 2}, {1, 2}};
    CHECK(estimate_buffer(1.0, heavy, m, 1.0) == 0.0);
    CHECK_THROWS_AS(estimate_buffer(1.0, two, m, 0.0), ParameterError);
}

TEST_CASE("tile_reward hand examples and stall-regime monotonicity") {
    TileDecisionState s;
    s.level_rates_mbps = {0.5, 1.0, 4.0};
    s.prob = 0.5;
    s.last_viewport_quality = 3.0;
    s.buffer_s = 3.0;
    s.throughput_mbps = 2.0;
    const qoe::QoeWeights w{1.0, 1.0, 4.3};
    const auto parts = tile_reward(s, 2, w);
    CHECK(parts.q1 == doctest::Approx(2.0));
    CHECK(parts.q2 == doctest::Approx(0.5));
    CHECK(parts.q3 == 0.0);
    CHECK(parts.q4 == 0.0);
    CHECK(parts.total == doctest::Approx(1.5));

    s.prob = 0.0;
    s.buffer_s = 10.0;
    CHECK(tile_reward(s, 0, w).total == 0.0);

    s.buffer_s = 0.1;
    double prev = tile_reward(s, 0, w).total;
    for (int a = 1; a < 3; ++a) {
        const double r = tile_reward(s, a, w).total;
        CHECK(r < prev);
        prev = r;
    }
    CHECK_THROWS_AS(tile_reward(s, 3, w), ParameterError);
}

TEST_CASE("assemble_state matches a manual construction on a 3x3 toy") {
    const auto m = grid_manifest({3, 3}, 2, 5);
    const auto trace = constant_trace(3.0);
    geo::ViewProbabilities p{0.0, 0.1, 0.0, 0.3, 0.4, 0.2, 0.0, 0.0, 0.0};
    const env::Episode ep(m, trace, {p, p}, {p, p}, {});
    auto stream = env::reset(ep, 1);
    stream.buffer_s = 2.5;
    stream.last_viewport_quality = 1.25;
    stream.history = {{2.0, 1.0}, {6.0, 2.0}};

    const auto plan = decision_order(p, OrderMode::HighToLow);
    // Forced: 0, 2, 6, 7, 8 at level 0; then tile 4 (p=0.4) decided at level 3.
    std::vector<int> levels(9, -1);
    for (int t : {0, 2, 6, 7, 8}) levels[static_cast<std::size_t>(t)] = 0;
    levels[4] = 3;
    const std::size_t position = 6; // tile 3
    REQUIRE(plan.order[position] == 3);
    const auto s = assemble_state(stream, plan, position, m, p, levels, ep.config);

    TileDecisionState manual;
    manual.tile = 3;
    manual.chunk_sizes_mbit = m.chunk_sizes_mbit[0][3];
    for (std::size_t j = 0; j < 5; ++j) manual.level_rates_mbps.push_back(m.tile_rate(3, j));
    // Tile 3 is row 1, col 0. Clockwise from NW: 2, 0, 1, 4, 7, 6, 8, 5.
    const int slots[8] = {2, 0, 1, 4, 7, 6, 8, 5};
    for (std::size_t k = 0; k < 8; ++k) {
        const auto n = static_cast<std::size_t>(slots[k]);
        manual.neighbor_probs[k] = p[n];
        manual.neighbor_rates[k] = levels[n] < 0 ? 0.0 : m.tile_rate(n, static_cast<std::size_t>(levels[n]));
        manual.neighbor_decided[k] = levels[n] < 0 ? 0.0 : 1.0;
    }
    for (int n : {0, 1, 2, 4, 5, 6, 7, 8}) {
        const auto u = static_cast<std::size_t>(n);
        const bool decided = levels[u] >= 0;
        manual.neighborhood.push_back({n, p[u], decided ? m.tile_rate(u, static_cast<std::size_t>(levels[u])) : 0.0, decided});
    }
    manual.throughput_mbps = 2.0 / (1.0 / 2.0 + 1.0 / 3.0) * 1.0; // harmonic mean of 2 and 3 Mbps
    manual.last_viewport_quality = 1.25;
    manual.prob = 0.3;
    double spent = 0.0;
    for (int t : {0, 2, 6, 7, 8, 4})
        spent += m.tile_rate(static_cast<std::size_t>(t), static_cast<std::size_t>(levels[static_cast<std::size_t>(t)]));
    manual.buffer_s = std::max(2.5 - spent / manual.throughput_mbps, 0.0);
    manual.segment_duration_s = 1.0;

    CHECK(s.throughput_mbps == doctest::Approx(manual.throughput_mbps).epsilon(1e-14));
    CHECK(s.buffer_s == doctest::Approx(manual.buffer_s).epsilon(1e-14));
    auto a = s;
    a.throughput_mbps = manual.throughput_mbps;
    a.buffer_s = manual.buffer_s;
    CHECK(a == manual);

    CHECK(assemble_state(stream, plan, position, m, p, levels, ep.config) == s);
    CHECK_THROWS_AS(assemble_state(stream, plan, 9, m, p, levels, ep.config), ParameterError);
}

TEST_CASE("assemble_state: forced neighbours at the lowest rate, last tile fully populated") {
    const auto m = grid_manifest({3, 3}, 1, 2);
    const auto trace = constant_trace(3.0);
    geo::ViewProbabilities p{0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0};
    const env::Episode ep(m, trace, {p}, {p}, {});
    const auto stream = env::reset(ep, 0);
    const auto pass = decision_pass(ep, stream, OrderMode::HighToLow, 0, [](const TileDecisionState &) { return 2; });

    const auto &first = pass.transitions[7];
    REQUIRE(first.state.tile == 3);
    for (std::size_t k = 0; k < 8; ++k) {
        // Slot 3 (east) is tile 4, still undecided; slot 7 (west) wraps to tile 5, forced.
        if (k == 3) {
            CHECK(first.state.neighbor_decided[k] == 0.0);
            CHECK(first.state.neighbor_rates[k] == 0.0);
        } else {
            CHECK(first.state.neighbor_decided[k] == 1.0);
        }
    }
    CHECK(first.state.neighbor_rates[7] == m.tile_rate(5, 0));

    const auto &last = pass.transitions.back();
    for (std::size_t k = 0; k < 8; ++k) CHECK(last.state.neighbor_decided[k] == 1.0);
    CHECK(last.state.neighbor_rates[7] == m.tile_rate(3, 2));
}

TEST_CASE("full pass: per-tile Q1 and Q3 sum to the segment terms") {
    std::mt19937_64 rng(11);
    for (geo::TileGrid grid : {geo::TileGrid{3, 3}, geo::TileGrid{2, 4}, geo::TileGrid{4, 6}}) {
        const auto m = grid_manifest(grid, 3, 9);
        const auto trace = constant_trace(2.5);
        const auto n = static_cast<std::size_t>(grid.tile_count());
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = random_probs(n, rng);
            const env::Episode ep(m, trace, {p, p, p}, {p, p, p}, {});
            const auto stream = env::reset(ep, static_cast<std::uint64_t>(trial));
            std::uniform_int_distribution<int> pick(0, 4);
            for (auto mode : {OrderMode::HighToLow, OrderMode::LowToHigh, OrderMode::ZScan, OrderMode::Random}) {
                const auto pass = decision_pass(ep, stream, mode, 3, [&](const TileDecisionState &) { return pick(rng); });
                double q1 = 0.0, q3 = 0.0;
                for (const auto &tr : pass.transitions) {
                    const auto parts = tile_reward(tr.state, tr.action, ep.config.weights);
                    CHECK(parts.total == tr.reward);
                    q1 += parts.q1;
                    q3 += parts.q3;
                    if (tr.forced) CHECK(tr.action == 0);
                }
                const qoe::SegmentDecision d{pass.levels, m.tile_rates(), p};
                CHECK(q1 == doctest::Approx(qoe::viewport_quality(d)).epsilon(1e-12));
                CHECK(q3 == doctest::Approx(qoe::spatial_variation(d, ep.neighbors)).epsilon(1e-12));
            }
        }
    }
}
