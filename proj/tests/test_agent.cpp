#include "srl360/agent.hpp"
#include "srl360/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

using namespace srl360;
using namespace srl360::agent;

namespace {

env::NetworkTrace constant_trace(double mbps) {
    env::NetworkTrace t;
    t.name = "const";
    for (int s = 0; s < 60; ++s) {
        t.timestamps.push_back(s);
        t.throughput_mbps.push_back(mbps);
    }
    return t;
}

struct Toy {
    env::VideoManifest manifest;
    env::NetworkTrace trace;
    std::vector<env::Episode> envs;
};

Toy toy_world(std::size_t levels = 2) {
    Toy w;
    env::ManifestSpec spec;
    spec.grid = {1, 2};
    spec.nominal_bitrates_mbps = levels == 2 ? std::vector<double>{1.0, 3.0} : std::vector<double>{1.0, 2.0, 4.0};
    spec.segment_count = 3;
    spec.jitter_sigma = 0.0;
    w.manifest = env::synthesize_manifest(spec);
    w.trace = constant_trace(2.5);
    return w;
}

void add_env(Toy &w, const env::EnvConfig &cfg = {}) {
    const std::vector<geo::ViewProbabilities> probs{{0.7, 0.3}, {0.5, 0.5}, {0.2, 0.8}};
    w.envs.emplace_back(w.manifest, w.trace, probs, probs, cfg);
}

seq::TileDecisionState random_state(std::size_t levels, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    seq::TileDecisionState s;
    for (std::size_t j = 0; j < levels; ++j) {
        s.chunk_sizes_mbit.push_back(0.3 * static_cast<double>(j + 1) + 0.1 * u(rng));
        s.level_rates_mbps.push_back(0.3 * static_cast<double>(j + 1));
    }
    for (std::size_t k = 0; k < seq::kNeighborSlots; ++k) {
        s.neighbor_probs[k] = u(rng);
        s.neighbor_rates[k] = u(rng) < 0.5 ? 0.0 : u(rng);
    }
    s.throughput_mbps = 1.0 + 4.0 * u(rng);
    s.last_viewport_quality = u(rng);
    s.prob = u(rng);
    s.buffer_s = 3.0 * u(rng);
    return s;
}

NetShape small_shape(std::size_t levels) {
    NetShape s;
    s.levels = levels;
    s.filters = 4;
    s.hidden = 5;
    return s;
}

} // namespace

TEST_CASE("policy_forward: distribution, zero parameters, fixture") {
    std::mt19937_64 rng(1);
    AgentParams params(NetShape{});
    nn::Rng init(2);
    init_uniform(params, init);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = policy_forward(params.policy, random_state(3, rng));
        double sum = 0.0;
        for (double v : p) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::isfinite(value_forward(params.value, random_state(3, rng))));
    }

    const AgentParams zero(NetShape{});
    for (double v : policy_forward(zero.policy, random_state(3, rng))) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(value_forward(zero.value, random_state(3, rng)) == 0.0);

    CHECK_THROWS_AS(policy_forward(params.policy, random_state(4, rng)), ShapeError);

    // Slot layout matters: swapping two neighbour slots changes the output.
    std::mt19937_64 fixed(9);
    auto s = random_state(3, fixed);
    const auto base = policy_forward(params.policy, s);
    auto swapped = s;
    std::swap(swapped.neighbor_probs[0], swapped.neighbor_probs[4]);
    std::swap(swapped.neighbor_rates[0], swapped.neighbor_rates[4]);
    CHECK(policy_forward(params.policy, swapped) != base);
    CHECK(policy_forward(params.policy, s) == base);
}

TEST_CASE("conv width falls back to the ladder length") {
    NetShape shape;
    shape.levels = 2;
    const AgentParams p(shape);
    CHECK(p.policy.chunks.width == 2);
    CHECK(p.policy.neighbors.width == 3);
    CHECK(p.policy.outputs() == 2);
    CHECK(p.value.outputs() == 1);
    shape.conv_width = 9;
    CHECK_THROWS_AS(AgentParams{shape}, ParameterError);
}

TEST_CASE("select_action: greedy tie rule and seeded sampling frequencies") {
    nn::Rng rng(4);
    const std::vector<double> a{0.1, 0.7, 0.2};
    CHECK(select_action(a, ActionMode::Greedy, rng) == 1);
    const std::vector<double> tie{0.5, 0.5};
    CHECK(select_greedy(tie) == 0);

    std::vector<int> counts(3, 0);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(select_action(a, ActionMode::Sample, rng))];
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / double(draws) - a[k]) < 0.01);

    nn::Rng r1(5), r2(5);
    for (int k = 0; k < 100; ++k) CHECK(select_action(a, ActionMode::Sample, r1) == select_action(a, ActionMode::Sample, r2));
}

TEST_CASE("compose_returns: unrolling, discount identities, incomplete episodes") {
    RolloutBuffer one;
    one.tile_count = 1;
    one.complete = true;
    one.segments.push_back({{{seq::TileDecisionState{}, 0, 0.5, false}}, 2.0, {}});
    CHECK(compose_returns(one, 0.99, 1.0)[0][0] == 2.5);

    // 2 segments x 2 tiles, hand unrolled.
    RolloutBuffer two;
    two.tile_count = 2;
    two.complete = true;
    two.segments.push_back({{{{}, 0, 0.1, false}, {{}, 0, 0.2, false}}, 1.0, {}});
    two.segments.push_back({{{{}, 0, 0.3, false}, {{}, 0, 0.4, false}}, 2.0, {}});
    const double g1 = 0.99, g2 = 0.5;
    const auto t = compose_returns(two, g1, g2);
    CHECK(t[1][1] == doctest::Approx(2.0 + 0.4));
    CHECK(t[1][0] == doctest::Approx(2.0 + 0.3 + g2 * 0.4));
    CHECK(t[0][1] == doctest::Approx(1.0 + g1 * 2.0 + 0.2));
    CHECK(t[0][0] == doctest::Approx(1.0 + g1 * 2.0 + 0.1 + g2 * 0.2));

    const auto z = compose_returns(two, g1, 0.0);
    CHECK(z[0][0] == doctest::Approx(1.0 + g1 * 2.0 + 0.1));
    CHECK(z[1][0] == doctest::Approx(2.0 + 0.3));

    RolloutBuffer zero = two;
    for (auto &seg : zero.segments) {
        seg.reward = 0.0;
        for (auto &tr : seg.tiles) tr.reward = 0.0;
    }
    for (const auto &row : compose_returns(zero, g1, g2))
        for (double v : row) CHECK(v == 0.0);

    auto partial = two;
    partial.complete = false;
    CHECK_THROWS_AS(compose_returns(partial, g1, g2), TrainingError);
    auto ragged = two;
    ragged.segments[1].tiles.pop_back();
    CHECK_THROWS_AS(compose_returns(ragged, g1, g2), TrainingError);
}

TEST_CASE("policy and value gradients match central differences") {
    std::mt19937_64 rng(21);
    for (std::size_t levels : {2, 3}) {
        for (int point = 0; point < 10; ++point) {
            AgentParams p(small_shape(levels));
            nn::Rng init(100 + static_cast<std::uint64_t>(point));
            init_uniform(p, init);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            std::vector<PolicySample> ps;
            std::vector<ValueSample> vs;
            for (int k = 0; k < 2; ++k) {
                const auto s = random_state(levels, rng);
                ps.push_back({s, static_cast<int>(rng() % levels), 2.0 * u(rng)});
                vs.push_back({s, 2.0 * u(rng)});
            }
            const double beta = 0.3;

            auto gp = nn::zeros_like(p.policy);
            policy_loss(p.policy, ps, beta, &gp);
            const auto pf = nn::flatten(p.policy);
            const auto pr = nn::finite_diff_check(
                [&](std::span<const double> x) {
                    auto q = p.policy;
                    nn::unflatten(q, x);
                    return policy_loss(q, ps, beta);
                },
                pf, nn::flatten(gp), 1e-3);
            CHECK(pr.passed);

            auto gv = nn::zeros_like(p.value);
            value_loss(p.value, vs, &gv);
            const auto vr = nn::finite_diff_check(
                [&](std::span<const double> x) {
                    auto q = p.value;
                    nn::unflatten(q, x);
                    return value_loss(q, vs);
                },
                nn::flatten(p.value), nn::flatten(gv), 1e-3);
            CHECK(vr.passed);
        }
    }
}

TEST_CASE("policy gradient: zero advantage is pure entropy, sign property") {
    std::mt19937_64 rng(3);
    AgentParams p(small_shape(3));
    nn::Rng init(7);
    init_uniform(p, init);
    const auto s = random_state(3, rng);

    auto with_beta = nn::zeros_like(p.policy);
    policy_loss(p.policy, {{s, 1, 0.0}}, 0.25, &with_beta);
    auto unit_beta = nn::zeros_like(p.policy);
    policy_loss(p.policy, {{s, 1, 0.0}}, 1.0, &unit_beta);
    const auto a = nn::flatten(with_beta), b = nn::flatten(unit_beta);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(0.25 * b[k]).epsilon(1e-12));
    const auto entropy_check = nn::finite_diff_check(
        [&](std::span<const double> x) {
            auto q = p.policy;
            nn::unflatten(q, x);
            return -entropy(policy_forward(q, s));
        },
        nn::flatten(p.policy), b, 1e-3);
    CHECK(entropy_check.passed);

    for (double advantage : {1.5, -1.5}) {
        auto g = nn::zeros_like(p.policy);
        policy_loss(p.policy, {{s, 2, advantage}}, 0.0, &g);
        auto q = p.policy;
        auto flat = nn::flatten(q);
        const auto gf = nn::flatten(g);
        for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= 1e-3 * gf[k];
        nn::unflatten(q, flat);
        const double before = std::log(policy_forward(p.policy, s)[2]);
        const double after = std::log(policy_forward(q, s)[2]);
        CHECK((after > before) == (advantage > 0.0));
    }
}

TEST_CASE("beta schedule: multiplicative and subtractive steps") {
    TrainConfig c;
    c.beta = 1.0;
    c.beta_decay = 0.1;
    c.beta_decay_steps = 100;
    CHECK(c.beta_at(0) == 1.0);
    CHECK(c.beta_at(99) == 1.0);
    CHECK(c.beta_at(100) == doctest::Approx(0.1));
    CHECK(c.beta_at(250) == doctest::Approx(0.01));
    c.beta_decay_subtractive = true;
    CHECK(c.beta_at(250) == doctest::Approx(0.8));
    CHECK(c.beta_at(100000) == 0.0);
    c.gamma1 = 1.5;
    CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("train: reproducible, one log row per episode, entropy bounds") {
    auto w = toy_world();
    add_env(w);
    TrainConfig cfg;
    cfg.shape = small_shape(2);
    cfg.workers = 3;
    cfg.max_steps = 600;
    cfg.seed = 5;
    std::size_t callbacks = 0;
    const auto a = train(w.envs, cfg, [&](const TrainLogRow &, const AgentParams &) { ++callbacks; });
    const auto b = train(w.envs, cfg);
    CHECK(nn::flatten(a.params) == nn::flatten(b.params));
    REQUIRE(!a.log.empty());
    CHECK(callbacks == a.log.size());
    CHECK(a.log.back().step >= cfg.max_steps);
    for (std::size_t k = 0; k < a.log.size(); ++k) {
        CHECK(a.log[k].episode == k);
        CHECK(a.log[k].worker == k % cfg.workers);
        CHECK(a.log[k].entropy >= 0.0);
        CHECK(a.log[k].entropy <= std::log(2.0) + 1e-12);
    }

    std::ostringstream csv;
    write_train_log(csv, a.log);
    std::size_t lines = 0;
    for (char ch : csv.str()) lines += ch == '\n';
    CHECK(lines == a.log.size() + 1);
    CHECK(csv.str().rfind("step,episode,worker,mean_qoe,q1,q2,q3,q4,entropy,beta\n", 0) == 0);

    cfg.threaded = true;
    cfg.workers = 2;
    const auto threaded = train(w.envs, cfg);
    CHECK(threaded.log.back().step >= cfg.max_steps);

    TrainConfig wrong = cfg;
    wrong.shape.levels = 3;
    CHECK_THROWS_AS(train(w.envs, wrong), ConfigError);
}

TEST_CASE("large entropy weight keeps the policy near uniform") {
    auto w = toy_world(3);
    add_env(w);
    TrainConfig cfg;
    cfg.shape = small_shape(3);
    cfg.workers = 1;
    cfg.max_steps = 3000;
    cfg.beta = 50.0;
    cfg.beta_decay = 1.0;
    cfg.policy_learning_rate = 1e-3;
    const auto r = train(w.envs, cfg);
    CHECK(r.log.back().entropy > 0.95 * std::log(3.0));
}

TEST_CASE("value loss on its own targets decreases during early updates") {
    auto w = toy_world();
    add_env(w);
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainConfig cfg;
        cfg.shape = small_shape(2);
        AgentParams shared(cfg.shape);
        nn::Rng init(seed);
        init_uniform(shared, init);
        nn::AdamState po(nn::flatten(shared.policy).size(), cfg.policy_learning_rate);
        nn::AdamState vo(nn::flatten(shared.value).size(), cfg.value_learning_rate);
        nn::Rng rng(seed + 10);
        double early = 0.0, late = 0.0;
        for (int update = 0; update < 1000; ++update) {
            const auto snapshot = shared;
            const auto buf = collect_rollout(snapshot, w.envs[0], env::reset(w.envs[0], rng()), cfg.order,
                                             ActionMode::Sample, rng);
            const auto stats = a3c_update(shared, snapshot, buf, cfg, cfg.beta, po, vo);
            if (update < 100) early += stats.value_loss;
            if (update >= 900) late += stats.value_loss;
        }
        CHECK(late < early);
    }
}

TEST_CASE("greedy controller is deterministic, checkpoints round-trip") {
    auto w = toy_world();
    add_env(w);
    AgentParams p(small_shape(2));
    nn::Rng init(3);
    init_uniform(p, init);
    const auto start = env::reset(w.envs[0], 2);
    const auto a = env::run_episode(w.envs[0], start, agent_controller(p, seq::OrderMode::HighToLow));
    const auto b = env::run_episode(w.envs[0], start, agent_controller(p, seq::OrderMode::HighToLow));
    CHECK(a.levels == b.levels);
    CHECK(a.total_reward == b.total_reward);

    const auto path = std::filesystem::temp_directory_path() / "srl360_agent_test.ckpt";
    save_agent(path, p);
    const auto q = load_agent(path);
    CHECK(nn::flatten(q) == nn::flatten(p));
    CHECK(q.policy.shape.filters == 4);
    CHECK(q.policy.shape.hidden == 5);
    std::filesystem::remove(path);
}
