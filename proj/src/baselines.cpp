#include "srl360/baselines.hpp"

#include "srl360/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace srl360::baselines {

void BbConfig::validate() const {
    if (!(reservoir_s > 0.0) || !(cushion_s > reservoir_s))
        throw ParameterError("bb: need 0 < reservoir < cushion");
}

qoe::SegmentDecision bb_select(double buffer_s, const qoe::TileRates &ladder, const geo::ViewProbabilities &probs,
                               const BbConfig &cfg) {
    cfg.validate();
    if (ladder.empty() || ladder.front().empty()) throw ParameterError("bb_select: empty ladder");
    if (probs.size() != ladder.size()) throw ParameterError("bb_select: probs/ladder length mismatch");
    const auto top = static_cast<int>(ladder.front().size()) - 1;
    int level = 0;
    if (buffer_s >= cfg.cushion_s)
        level = top;
    else if (buffer_s > cfg.reservoir_s)
        level = std::clamp(static_cast<int>(std::floor((buffer_s - cfg.reservoir_s) / (cfg.cushion_s - cfg.reservoir_s) * top)),
                           0, top);
    qoe::SegmentDecision d;
    d.rates = ladder;
    d.probs = probs;
    for (double p : probs) d.selection.push_back(p > 0.0 ? level : 0);
    return d;
}

qoe::SegmentDecision greedy_mckp(const qoe::TileRates &ladder, const geo::ViewProbabilities &probs,
                                 const qoe::NeighborMap &neighbors, double budget_mbit, const qoe::QoeWeights &w,
                                 double segment_duration_s) {
    const auto n = ladder.size();
    if (n == 0 || probs.size() != n || neighbors.size() != n) throw ParameterError("greedy_mckp: size mismatch");
    qoe::SegmentDecision d;
    d.rates = ladder;
    d.probs = probs;
    d.selection.assign(n, 0);

    const auto rate = [&](std::size_t i, int level) { return ladder[i][static_cast<std::size_t>(level)]; };
    double spent = 0.0;
    for (std::size_t i = 0; i < n; ++i) spent += rate(i, 0) * segment_duration_s;
    if (spent > budget_mbit * (1.0 + 1e-12))
        throw ParameterError("greedy_mckp: budget " + std::to_string(budget_mbit) + " Mbit below all-lowest cost " +
                             std::to_string(spent));

    for (;;) {
        double best_ratio = 0.0;
        std::size_t best_tile = n;
        int best_level = 0;
        double best_cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int from = d.selection[i];
            const double r_from = rate(i, from);
            for (int to = from + 1; to < static_cast<int>(ladder[i].size()); ++to) {
                const double r_to = rate(i, to);
                const double cost = (r_to - r_from) * segment_duration_s;
                if (!(cost > 0.0) || spent + cost > budget_mbit) continue;
                double gain = probs[i] * (r_to - r_from);
                for (int u : neighbors[i]) {
                    const auto uu = static_cast<std::size_t>(u);
                    const double ru = rate(uu, d.selection[uu]);
                    gain -= w.eta2 * probs[i] * probs[uu] * (std::abs(r_to - ru) - std::abs(r_from - ru));
                }
                const double ratio = gain / cost;
                if (gain > 0.0 && ratio > best_ratio) {
                    best_ratio = ratio;
                    best_tile = i;
                    best_level = to;
                    best_cost = cost;
                }
            }
        }
        if (best_tile == n) break;
        d.selection[best_tile] = best_level;
        spent += best_cost;
    }
    return d;
}

env::SegmentController bb_controller(BbConfig cfg) {
    cfg.validate();
    return [cfg](const env::Episode &ep, const env::StreamState &s) {
        return bb_select(s.buffer_s, ep.manifest->tile_rates(), s.predicted_probs, cfg).selection;
    };
}

env::SegmentController greedy_controller() {
    return [](const env::Episode &ep, const env::StreamState &s) {
        const auto &m = *ep.manifest;
        const auto ladder = m.tile_rates();
        const double xi =
            env::harmonic_throughput(s.history, ep.config.throughput_prior_mbps, ep.config.throughput_history);
        double floor = 0.0;
        for (const auto &r : ladder) floor += r.front() * m.segment_duration_s;
        const double budget = std::max(xi * m.segment_duration_s, floor);
        return greedy_mckp(ladder, s.predicted_probs, ep.neighbors, budget, ep.config.weights, m.segment_duration_s)
            .selection;
    };
}

namespace {

struct SearchSpace {
    std::size_t tiles = 0;
    std::size_t levels = 0;
    std::uint64_t per_segment = 0;
};

SearchSpace check_space(const env::Episode &episode, const env::StreamState &start, std::size_t horizon) {
    const auto &m = *episode.manifest;
    if (horizon == 0 || start.segment_index + horizon > episode.segment_count())
        throw ParameterError("brute_force_oracle: horizon beyond the remaining segments");
    SearchSpace s{m.tile_count(), m.level_count(), 1};
    const double leaves = std::pow(static_cast<double>(s.levels), static_cast<double>(s.tiles * horizon));
    if (leaves > kOracleLeafLimit) {
        std::ostringstream msg;
        msg << "brute_force_oracle: " << leaves << " action sequences exceed the limit of " << kOracleLeafLimit;
        throw ParameterError(msg.str());
    }
    for (std::size_t i = 0; i < s.tiles; ++i) s.per_segment *= s.levels;
    return s;
}

// Tile 0 is the most significant digit, so ascending codes enumerate level vectors lexicographically.
std::vector<int> decode(std::uint64_t code, const SearchSpace &s) {
    std::vector<int> levels(s.tiles);
    for (std::size_t i = s.tiles; i-- > 0;) {
        levels[i] = static_cast<int>(code % s.levels);
        code /= s.levels;
    }
    return levels;
}

struct Search {
    const env::Episode &episode;
    const SearchSpace &space;
    std::size_t horizon;
    std::vector<std::vector<int>> prefix;
    OracleResult best;
    bool have = false;

    void visit(const env::StreamState &state, std::size_t depth, double value) {
        if (depth == horizon) {
            ++best.leaves;
            if (!have || value > best.value) {
                best.value = value;
                best.levels = prefix;
                have = true;
            }
            return;
        }
        for (std::uint64_t code = 0; code < space.per_segment; ++code) expand(state, depth, value, code);
    }

    void expand(const env::StreamState &state, std::size_t depth, double value, std::uint64_t code) {
        prefix.push_back(decode(code, space));
        const auto r = env::step(episode, state, state.segment_index, prefix.back());
        visit(r.next, depth + 1, value + r.reward);
        prefix.pop_back();
    }
};

OracleResult merge(std::vector<OracleResult> &parts) {
    OracleResult out;
    bool have = false;
    for (auto &p : parts) {
        out.leaves += p.leaves;
        if (!have || p.value > out.value) {
            out.value = p.value;
            out.levels = std::move(p.levels);
            have = true;
        }
    }
    return out;
}

template <bool Parallel>
OracleResult oracle(const env::Episode &episode, const env::StreamState &start, std::size_t horizon) {
    const auto space = check_space(episode, start, horizon);
    std::vector<OracleResult> parts(space.per_segment);
    const auto count = static_cast<std::ptrdiff_t>(space.per_segment);
    auto run = [&](std::ptrdiff_t code) {
        Search s{episode, space, horizon, {}, {}, false};
        s.expand(start, 0, 0.0, static_cast<std::uint64_t>(code));
        parts[static_cast<std::size_t>(code)] = std::move(s.best);
    };
    if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t code = 0; code < count; ++code) run(code);
    } else {
        for (std::ptrdiff_t code = 0; code < count; ++code) run(code);
    }
    return merge(parts);
}

} // namespace

OracleResult brute_force_oracle(const env::Episode &episode, const env::StreamState &start, std::size_t horizon) {
    return oracle<true>(episode, start, horizon);
}

OracleResult brute_force_oracle_serial(const env::Episode &episode, const env::StreamState &start,
                                       std::size_t horizon) {
    return oracle<false>(episode, start, horizon);
}

} // namespace srl360::baselines
