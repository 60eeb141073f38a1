#pragma once

#include "srl360/environment.hpp"
#include "srl360/qoe.hpp"

#include <cstdint>
#include <vector>

namespace srl360::baselines {

struct BbConfig {
    double reservoir_s = 1.0;
    double cushion_s = 5.0;

    /// Throws ParameterError unless 0 < reservoir < cushion.
    void validate() const;
};

/// Buffer-based rule: in-FoV tiles (p > 0) share one level mapped linearly from the buffer between
/// reservoir and cushion, rounded down; the rest get level 0.
qoe::SegmentDecision bb_select(double buffer_s, const qoe::TileRates &ladder, const geo::ViewProbabilities &probs,
                               const BbConfig &cfg = {});

/// Starts at all-lowest and repeatedly applies the single-tile upgrade (to any higher level) with the
/// best gain in Q1 - eta2 Q3 per extra Mbit, among upgrades with positive gain that fit `budget_mbit`.
/// Chunk cost is r_{i,j} T. Throws ParameterError when even all-lowest exceeds the budget.
qoe::SegmentDecision greedy_mckp(const qoe::TileRates &ladder, const geo::ViewProbabilities &probs,
                                 const qoe::NeighborMap &neighbors, double budget_mbit, const qoe::QoeWeights &w,
                                 double segment_duration_s = 1.0);

/// Controllers driving the environment with the predicted probabilities of each segment.
env::SegmentController bb_controller(BbConfig cfg = {});
/// Budget is the harmonic-mean throughput times T, raised to the all-lowest cost when below it.
env::SegmentController greedy_controller();

struct OracleResult {
    std::vector<std::vector<int>> levels; ///< per segment
    double value = 0.0;                   ///< summed reward
    std::uint64_t leaves = 0;
};

inline constexpr double kOracleLeafLimit = 1e7;

/// Exhaustive search over every level assignment for `horizon` segments from `start`. Ties keep the
/// lexicographically smallest sequence. Throws ParameterError when M^(N horizon) exceeds the limit.
OracleResult brute_force_oracle(const env::Episode &episode, const env::StreamState &start, std::size_t horizon);
/// Single-threaded reference for `brute_force_oracle`.
OracleResult brute_force_oracle_serial(const env::Episode &episode, const env::StreamState &start,
                                       std::size_t horizon);

} // namespace srl360::baselines
