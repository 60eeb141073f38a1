#include "srl360/geometry.hpp"

#include "srl360/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace srl360::geo {

namespace {

double interval_overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Overlap of the longitude interval [lo, lo + width) (may extend past ±180) with [t0, t1],
// counting every 360-degree image of the interval.
double wrapped_overlap(double lo, double width, double t0, double t1) {
    double total = 0.0;
    for (int shift = -2; shift <= 2; ++shift) {
        const double s = lo + 360.0 * shift;
        total += interval_overlap(s, s + width, t0, t1);
    }
    return total;
}

} // namespace

Viewpoint canonical(Viewpoint vp) {
    double lon = std::fmod(vp.longitude + 180.0, 360.0);
    if (lon < 0) lon += 360.0;
    vp.longitude = lon - 180.0;
    vp.latitude = std::clamp(vp.latitude, -90.0, 90.0);
    return vp;
}

NormalizedViewpoint normalize(const Viewpoint &vp) { return {vp.longitude / 180.0, vp.latitude / 90.0}; }

Viewpoint denormalize(const NormalizedViewpoint &nv) { return {nv.x * 180.0, nv.y * 90.0}; }

void Trajectory::validate() const {
    if (samples.empty()) throw ParameterError("trajectory '" + user_id + "' has no samples");
    if (timestamps.size() != samples.size()) throw ParameterError("trajectory '" + user_id + "': timestamp count mismatch");
    for (std::size_t k = 1; k < timestamps.size(); ++k)
        if (!(timestamps[k] > timestamps[k - 1]))
            throw ParameterError("trajectory '" + user_id + "': timestamps not strictly increasing");
}

TileExtent TileGrid::extent(int tile) const {
    if (tile < 0 || tile >= tile_count()) throw ParameterError("tile index out of range");
    const int r = tile / cols, c = tile % cols;
    const double w = tile_width(), h = tile_height();
    return {-180.0 + c * w, -180.0 + (c + 1) * w, 90.0 - (r + 1) * h, 90.0 - r * h};
}

double wrap_longitude_distance(double a, double b) {
    const double d = std::fmod(std::abs(a - b), 360.0);
    return std::min(d, 360.0 - d);
}

ViewProbabilities viewing_probabilities(const Viewpoint &vp, const TileGrid &grid, const FieldOfView &fov) {
    if (!(fov.width > 0.0) || !(fov.height > 0.0) || fov.width > 360.0 || fov.height > 180.0)
        throw ParameterError("viewing_probabilities: FoV must have positive extent within 360x180");
    if (grid.rows <= 0 || grid.cols <= 0) throw ParameterError("viewing_probabilities: empty grid");

    const auto center = canonical(vp);
    const double lon_lo = center.longitude - fov.width / 2.0;
    const double lat_lo = std::max(-90.0, center.latitude - fov.height / 2.0);
    const double lat_hi = std::min(90.0, center.latitude + fov.height / 2.0);
    const double area = fov.width * (lat_hi - lat_lo);
    if (!(area > 0.0)) throw ParameterError("viewing_probabilities: zero-area FoV");

    ViewProbabilities probs(static_cast<std::size_t>(grid.tile_count()), 0.0);
    for (int t = 0; t < grid.tile_count(); ++t) {
        const auto e = grid.extent(t);
        const double lat = interval_overlap(lat_lo, lat_hi, e.lat_min, e.lat_max);
        if (lat <= 0.0) continue;
        probs[static_cast<std::size_t>(t)] = wrapped_overlap(lon_lo, fov.width, e.lon_min, e.lon_max) * lat / area;
    }
    return probs;
}

std::vector<int> one_hop_neighbors(const TileGrid &grid, int tile) {
    if (tile < 0 || tile >= grid.tile_count()) throw ParameterError("one_hop_neighbors: tile index out of range");
    std::set<int> out;
    for (const auto &slot : neighbor_slots(grid, tile))
        if (slot) out.insert(*slot);
    return {out.begin(), out.end()};
}

std::array<std::optional<int>, 8> neighbor_slots(const TileGrid &grid, int tile) {
    if (tile < 0 || tile >= grid.tile_count()) throw ParameterError("neighbor_slots: tile index out of range");
    static constexpr std::array<std::pair<int, int>, 8> kOffsets = {
        {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}}};
    const int r = tile / grid.cols, c = tile % grid.cols;
    std::array<std::optional<int>, 8> slots;
    for (std::size_t k = 0; k < kOffsets.size(); ++k) {
        const int nr = r + kOffsets[k].first;
        if (nr < 0 || nr >= grid.rows) continue;
        const int nc = ((c + kOffsets[k].second) % grid.cols + grid.cols) % grid.cols;
        const int n = grid.tile_at(nr, nc);
        if (n != tile) slots[k] = n;
    }
    return slots;
}

double hit_rate(const ViewProbabilities &predicted, const ViewProbabilities &actual, double threshold) {
    if (predicted.size() != actual.size()) throw ShapeError("hit_rate: probability vectors differ in length");
    std::size_t actual_count = 0, hits = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] > threshold) {
            ++actual_count;
            if (predicted[i] > threshold) ++hits;
        }
    }
    return actual_count == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(actual_count);
}

AngularError angular_errors(const Viewpoint &predicted, const Viewpoint &actual) {
    return {wrap_longitude_distance(predicted.longitude, actual.longitude),
            std::abs(predicted.latitude - actual.latitude)};
}

} // namespace srl360::geo
