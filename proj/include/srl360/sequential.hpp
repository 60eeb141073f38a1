#pragma once

#include "srl360/environment.hpp"
#include "srl360/geometry.hpp"
#include "srl360/qoe.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace srl360::seq {

enum class OrderMode { HighToLow, LowToHigh, ZScan, Random };

std::string to_string(OrderMode mode);
OrderMode parse_order_mode(const std::string &text);

/// Tile visiting order for one segment. Out-of-FoV tiles (p = 0) come first and are forced to the
/// lowest level; `forced[k]` refers to position k of `order`.
struct DecisionPlan {
    std::vector<int> order;
    std::vector<bool> forced;
    std::size_t forced_count = 0;
};

/// Ties are broken by ascending tile index; Random shuffles the in-FoV tiles with `seed`.
DecisionPlan decision_order(const geo::ViewProbabilities &probs, OrderMode mode, std::uint64_t seed = 0);

struct TileLevel {
    int tile = 0;
    int level = 0;
};

/// b^i = max(b_prev - sum_decided r_{h,a_h} T / throughput, 0).
double estimate_buffer(double b_prev, std::span<const TileLevel> decided, const env::VideoManifest &manifest,
                       double throughput_mbps);

inline constexpr std::size_t kNeighborSlots = 8;

/// One member of U_i as seen when tile i is decided.
struct NeighborInfo {
    int tile = 0;
    double prob = 0.0;
    double rate = 0.0; ///< chosen bitrate, 0 while undecided
    bool decided = false;

    friend bool operator==(const NeighborInfo &, const NeighborInfo &) = default;
};

/// Per-tile observation s^i_t.
struct TileDecisionState {
    int tile = 0;
    std::vector<double> chunk_sizes_mbit; ///< tau, one per level
    std::vector<double> level_rates_mbps; ///< r_{i,j}, one per level
    /// Clockwise from north-west; absent neighbours and undecided rates are 0 (below any ladder rate).
    std::array<double, kNeighborSlots> neighbor_probs{};
    std::array<double, kNeighborSlots> neighbor_rates{};
    std::array<double, kNeighborSlots> neighbor_decided{};
    double throughput_mbps = 0.0;       ///< harmonic-mean estimate
    double last_viewport_quality = 0.0; ///< Q1 of the previous segment
    double prob = 0.0;                  ///< predicted p^i
    double buffer_s = 0.0;              ///< estimated b^i
    double segment_duration_s = 1.0;
    std::vector<NeighborInfo> neighborhood; ///< U_i without duplicates, with the delta mask

    friend bool operator==(const TileDecisionState &, const TileDecisionState &) = default;
};

/// Builds s^i for plan position `position`. `levels[t]` is the level already chosen for tile t, or -1.
TileDecisionState assemble_state(const env::StreamState &stream, const DecisionPlan &plan, std::size_t position,
                                 const env::VideoManifest &manifest, const geo::ViewProbabilities &probs,
                                 std::span<const int> levels, const env::EnvConfig &config);

struct TileRewardParts {
    double q1 = 0.0, q2 = 0.0, q3 = 0.0, q4 = 0.0, total = 0.0;
};

/// Per-tile reward estimate for choosing `level` in state `s`. Q3 sums only over decided neighbours.
TileRewardParts tile_reward(const TileDecisionState &s, int level, const qoe::QoeWeights &w);

struct TileTransition {
    TileDecisionState state;
    int action = 0;
    double reward = 0.0;
    bool forced = false;
};

struct PassResult {
    std::vector<int> levels; ///< indexed by tile
    std::vector<TileTransition> transitions; ///< in decision order
};

using TilePolicy = std::function<int(const TileDecisionState &)>;

/// Runs one bottom-level pass over all tiles of the current segment, querying `policy` for every
/// in-FoV tile and forcing out-of-FoV tiles to level 0.
PassResult decision_pass(const env::Episode &episode, const env::StreamState &stream, OrderMode mode,
                         std::uint64_t order_seed, const TilePolicy &policy);

} // namespace srl360::seq
