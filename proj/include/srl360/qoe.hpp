#pragma once

#include "srl360/geometry.hpp"

#include <iosfwd>
#include <vector>

namespace srl360::qoe {

/// Penalty weights for temporal variation, spatial variation and rebuffering.
struct QoeWeights {
    double eta1 = 1.0;
    double eta2 = 1.0;
    double eta3 = 4.3;

    void validate() const;
};

/// r_{i,j}: bitrate in Mbps of tile i at level j.
using TileRates = std::vector<std::vector<double>>;

/// Adjacency lists U_i, as produced by geo::one_hop_neighbors for every tile.
using NeighborMap = std::vector<std::vector<int>>;

NeighborMap neighbor_map(const geo::TileGrid &grid);

/// One bitrate level per tile together with the ladder and viewing probabilities it is scored against.
struct SegmentDecision {
    std::vector<int> selection;
    TileRates rates;
    geo::ViewProbabilities probs;

    /// Throws ParameterError if a tile has no level, a level is out of range, or sizes disagree.
    void validate() const;
    [[nodiscard]] double chosen_rate(std::size_t tile) const {
        return rates[tile][static_cast<std::size_t>(selection[tile])];
    }
    [[nodiscard]] double total_rate() const;
};

struct QoeBreakdown {
    double q1 = 0.0; ///< viewport quality, Mbps
    double q2 = 0.0; ///< temporal variation, Mbps
    double q3 = 0.0; ///< spatial variation, Mbps
    double q4 = 0.0; ///< rebuffering, s
    double total = 0.0;
};

/// Q1 = sum_i p_i r_{i,chosen(i)}
double viewport_quality(const SegmentDecision &d);

/// Q2 = |q1_now - q1_prev|
double temporal_variation(double q1_now, double q1_prev);

/// Q3 = 1/2 sum_i sum_{u in U_i} p_i p_u |r_i - r_u|
double spatial_variation(const SegmentDecision &d, const NeighborMap &neighbors);

/// Nominal rebuffering: max(sum_i r_i T / throughput - buffer, 0).
double rebuffer_time(const SegmentDecision &d, double throughput_mbps, double buffer_s, double segment_duration_s);

/// Combines the four terms; total = q1 - eta1 q2 - eta2 q3 - eta3 q4.
QoeBreakdown qoe_score(double q1, double q2, double q3, double q4, const QoeWeights &w);

struct QoeRow {
    std::size_t segment_index = 0;
    QoeBreakdown parts;
};

/// CSV with header `segment_index,q1,q2,q3,q4,total`; values printed round-trip exact.
void write_qoe_csv(std::ostream &out, const std::vector<QoeRow> &rows);

} // namespace srl360::qoe
