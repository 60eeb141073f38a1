#include "srl360/sequential.hpp"

#include "srl360/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace srl360::seq {

std::string to_string(OrderMode mode) {
    switch (mode) {
    case OrderMode::HighToLow: return "high_to_low";
    case OrderMode::LowToHigh: return "low_to_high";
    case OrderMode::ZScan: return "zscan";
    case OrderMode::Random: return "random";
    }
    return "unknown";
}

OrderMode parse_order_mode(const std::string &text) {
    for (auto mode : {OrderMode::HighToLow, OrderMode::LowToHigh, OrderMode::ZScan, OrderMode::Random})
        if (to_string(mode) == text) return mode;
    throw ParameterError("unknown decision order '" + text + "'");
}

DecisionPlan decision_order(const geo::ViewProbabilities &probs, OrderMode mode, std::uint64_t seed) {
    DecisionPlan plan;
    std::vector<int> free;
    for (std::size_t t = 0; t < probs.size(); ++t) {
        if (probs[t] > 0.0)
            free.push_back(static_cast<int>(t));
        else
            plan.order.push_back(static_cast<int>(t));
    }
    plan.forced_count = plan.order.size();

    const auto p = [&](int t) { return probs[static_cast<std::size_t>(t)]; };
    switch (mode) {
    case OrderMode::HighToLow:
        std::stable_sort(free.begin(), free.end(), [&](int a, int b) { return p(a) > p(b); });
        break;
    case OrderMode::LowToHigh:
        std::stable_sort(free.begin(), free.end(), [&](int a, int b) { return p(a) < p(b); });
        break;
    case OrderMode::ZScan: break;
    case OrderMode::Random: {
        std::mt19937_64 rng(seed);
        // Fisher-Yates with an explicit draw so the permutation does not depend on std::shuffle's
        // implementation.
        for (std::size_t k = free.size(); k > 1; --k) {
            const auto j = static_cast<std::size_t>(rng() % k);
            std::swap(free[k - 1], free[j]);
        }
        break;
    }
    }
    plan.order.insert(plan.order.end(), free.begin(), free.end());
    plan.forced.assign(plan.order.size(), false);
    std::fill_n(plan.forced.begin(), plan.forced_count, true);
    return plan;
}

double estimate_buffer(double b_prev, std::span<const TileLevel> decided, const env::VideoManifest &manifest,
                       double throughput_mbps) {
    if (!(throughput_mbps > 0.0)) throw ParameterError("estimate_buffer: throughput estimate must be positive");
    double seconds = 0.0;
    for (const auto &d : decided)
        seconds += manifest.tile_rate(static_cast<std::size_t>(d.tile), static_cast<std::size_t>(d.level)) *
                   manifest.segment_duration_s / throughput_mbps;
    return std::max(b_prev - seconds, 0.0);
}

TileDecisionState assemble_state(const env::StreamState &stream, const DecisionPlan &plan, std::size_t position,
                                 const env::VideoManifest &manifest, const geo::ViewProbabilities &probs,
                                 std::span<const int> levels, const env::EnvConfig &config) {
    if (position >= plan.order.size()) throw ParameterError("assemble_state: position beyond plan");
    const int tile = plan.order[position];
    const auto ti = static_cast<std::size_t>(tile);
    const auto segment = stream.segment_index;

    TileDecisionState s;
    s.tile = tile;
    s.chunk_sizes_mbit = manifest.chunk_sizes_mbit[segment][ti];
    for (std::size_t j = 0; j < manifest.level_count(); ++j) s.level_rates_mbps.push_back(manifest.tile_rate(ti, j));

    const auto chosen_rate = [&](int t) {
        const int level = levels[static_cast<std::size_t>(t)];
        return level < 0 ? 0.0 : manifest.tile_rate(static_cast<std::size_t>(t), static_cast<std::size_t>(level));
    };
    const auto slots = geo::neighbor_slots(manifest.grid, tile);
    for (std::size_t k = 0; k < kNeighborSlots; ++k) {
        if (!slots[k]) continue;
        const int n = *slots[k];
        s.neighbor_probs[k] = probs[static_cast<std::size_t>(n)];
        s.neighbor_rates[k] = chosen_rate(n);
        s.neighbor_decided[k] = levels[static_cast<std::size_t>(n)] >= 0 ? 1.0 : 0.0;
    }
    for (int n : geo::one_hop_neighbors(manifest.grid, tile))
        s.neighborhood.push_back({n, probs[static_cast<std::size_t>(n)], chosen_rate(n), levels[static_cast<std::size_t>(n)] >= 0});

    s.throughput_mbps = env::harmonic_throughput(stream.history, config.throughput_prior_mbps, config.throughput_history);
    s.last_viewport_quality = stream.last_viewport_quality;
    s.prob = probs[ti];
    s.segment_duration_s = manifest.segment_duration_s;

    std::vector<TileLevel> decided;
    for (std::size_t k = 0; k < position; ++k) {
        const int t = plan.order[k];
        decided.push_back({t, levels[static_cast<std::size_t>(t)]});
    }
    s.buffer_s = estimate_buffer(stream.buffer_s, decided, manifest, s.throughput_mbps);
    return s;
}

TileRewardParts tile_reward(const TileDecisionState &s, int level, const qoe::QoeWeights &w) {
    if (level < 0 || static_cast<std::size_t>(level) >= s.level_rates_mbps.size())
        throw ParameterError("tile_reward: level out of range");
    const double r = s.level_rates_mbps[static_cast<std::size_t>(level)];
    TileRewardParts parts;
    parts.q1 = s.prob * r;
    parts.q2 = s.prob * std::abs(r - s.last_viewport_quality);
    for (const auto &n : s.neighborhood)
        if (n.decided) parts.q3 += s.prob * n.prob * std::abs(r - n.rate);
    parts.q4 = std::max(r * s.segment_duration_s / s.throughput_mbps - s.buffer_s, 0.0);
    parts.total = parts.q1 - w.eta1 * parts.q2 - w.eta2 * parts.q3 - w.eta3 * parts.q4;
    return parts;
}

PassResult decision_pass(const env::Episode &episode, const env::StreamState &stream, OrderMode mode,
                         std::uint64_t order_seed, const TilePolicy &policy) {
    const auto &manifest = *episode.manifest;
    const auto &probs = stream.predicted_probs;
    const auto plan = decision_order(probs, mode, order_seed);

    PassResult out;
    out.levels.assign(manifest.tile_count(), -1);
    out.transitions.reserve(plan.order.size());
    for (std::size_t k = 0; k < plan.order.size(); ++k) {
        auto state = assemble_state(stream, plan, k, manifest, probs, out.levels, episode.config);
        const bool forced = plan.forced[k];
        const int action = forced ? 0 : policy(state);
        const double reward = tile_reward(state, action, episode.config.weights).total;
        out.levels[static_cast<std::size_t>(plan.order[k])] = action;
        out.transitions.push_back({std::move(state), action, reward, forced});
    }
    return out;
}

} // namespace srl360::seq
