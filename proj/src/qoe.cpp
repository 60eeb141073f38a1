#include "srl360/qoe.hpp"

#include "srl360/errors.hpp"
#include "srl360/format.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace srl360::qoe {

void QoeWeights::validate() const {
    for (double eta : {eta1, eta2, eta3})
        if (!std::isfinite(eta) || eta < 0.0) throw ParameterError("QoE weights must be finite and non-negative");
}

NeighborMap neighbor_map(const geo::TileGrid &grid) {
    NeighborMap map(static_cast<std::size_t>(grid.tile_count()));
    for (int t = 0; t < grid.tile_count(); ++t) map[static_cast<std::size_t>(t)] = geo::one_hop_neighbors(grid, t);
    return map;
}

void SegmentDecision::validate() const {
    if (selection.size() != rates.size() || probs.size() != rates.size())
        throw ParameterError("SegmentDecision: selection, rates and probs must cover the same tiles");
    for (std::size_t i = 0; i < selection.size(); ++i)
        if (selection[i] < 0 || static_cast<std::size_t>(selection[i]) >= rates[i].size())
            throw ParameterError("SegmentDecision: level index out of range for tile " + std::to_string(i));
}

double SegmentDecision::total_rate() const {
    double total = 0.0;
    for (std::size_t i = 0; i < selection.size(); ++i) total += chosen_rate(i);
    return total;
}

double viewport_quality(const SegmentDecision &d) {
    double q = 0.0;
    for (std::size_t i = 0; i < d.selection.size(); ++i) q += d.probs[i] * d.chosen_rate(i);
    return q;
}

double temporal_variation(double q1_now, double q1_prev) { return std::abs(q1_now - q1_prev); }

double spatial_variation(const SegmentDecision &d, const NeighborMap &neighbors) {
    double q = 0.0;
    for (std::size_t i = 0; i < d.selection.size(); ++i)
        for (int u : neighbors[i]) {
            const auto uu = static_cast<std::size_t>(u);
            q += d.probs[i] * d.probs[uu] * std::abs(d.chosen_rate(i) - d.chosen_rate(uu));
        }
    return 0.5 * q;
}

double rebuffer_time(const SegmentDecision &d, double throughput_mbps, double buffer_s, double segment_duration_s) {
    if (!(throughput_mbps > 0.0)) throw ParameterError("rebuffer_time: throughput must be positive");
    return std::max(d.total_rate() * segment_duration_s / throughput_mbps - buffer_s, 0.0);
}

QoeBreakdown qoe_score(double q1, double q2, double q3, double q4, const QoeWeights &w) {
    return {q1, q2, q3, q4, q1 - w.eta1 * q2 - w.eta2 * q3 - w.eta3 * q4};
}

void write_qoe_csv(std::ostream &out, const std::vector<QoeRow> &rows) {
    out << "segment_index,q1,q2,q3,q4,total\n";
    for (const auto &r : rows)
        out << r.segment_index << ',' << fmt_exact(r.parts.q1) << ',' << fmt_exact(r.parts.q2) << ','
            << fmt_exact(r.parts.q3) << ',' << fmt_exact(r.parts.q4) << ',' << fmt_exact(r.parts.total) << '\n';
}

} // namespace srl360::qoe
