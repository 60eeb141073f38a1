#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace srl360::geo {

/// Head orientation on the equirectangular plane, in degrees.
struct Viewpoint {
    double longitude = 0.0; ///< [-180, 180]
    double latitude = 0.0;  ///< [-90, 90]

    friend bool operator==(const Viewpoint &, const Viewpoint &) = default;
};

/// Viewpoint scaled to [-1, 1] on both axes (longitude / 180, latitude / 90).
struct NormalizedViewpoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const NormalizedViewpoint &, const NormalizedViewpoint &) = default;
};

/// Wraps longitude into [-180, 180) and clamps latitude into [-90, 90].
Viewpoint canonical(Viewpoint vp);

NormalizedViewpoint normalize(const Viewpoint &vp);
Viewpoint denormalize(const NormalizedViewpoint &nv);

/// One user's head trace over a video.
struct Trajectory {
    std::string video_id;
    std::string user_id;
    double sample_rate = 0.0; ///< samples per second
    std::vector<double> timestamps;
    std::vector<Viewpoint> samples;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
    /// Throws ParameterError when timestamps are not strictly increasing or the trace is empty.
    void validate() const;
};

/// Axis-aligned box on the equirectangular plane.
struct TileExtent {
    double lon_min, lon_max;
    double lat_min, lat_max;
};

/// rows x cols equal tiles covering [-180,180] x [-90,90]. Tile index = row * cols + col,
/// row 0 at the top (latitude 90).
struct TileGrid {
    int rows = 3;
    int cols = 3;

    [[nodiscard]] int tile_count() const { return rows * cols; }
    [[nodiscard]] double tile_width() const { return 360.0 / cols; }
    [[nodiscard]] double tile_height() const { return 180.0 / rows; }
    [[nodiscard]] TileExtent extent(int tile) const;
    [[nodiscard]] int tile_at(int row, int col) const { return row * cols + col; }
};

/// Per-tile viewing probabilities; entries are non-negative and sum to 1.
using ViewProbabilities = std::vector<double>;

struct FieldOfView {
    double width = 100.0;
    double height = 100.0;
};

/// Shortest angular distance between two longitudes, in [0, 180].
double wrap_longitude_distance(double a, double b);

/// Fraction of the FoV rectangle (centered at vp, wrapping in longitude, clipped at the poles)
/// that falls in each tile.
ViewProbabilities viewing_probabilities(const Viewpoint &vp, const TileGrid &grid, const FieldOfView &fov = {});

/// 8-connected neighbours of `tile`, wrapping across the left/right edges but not the poles.
/// Sorted ascending, without duplicates or the tile itself.
std::vector<int> one_hop_neighbors(const TileGrid &grid, int tile);

/// Neighbour slots in clockwise order starting north-west: NW, N, NE, E, SE, S, SW, W.
/// A slot is empty beyond a pole or when the wrapped neighbour is the tile itself.
std::array<std::optional<int>, 8> neighbor_slots(const TileGrid &grid, int tile);

/// Recall of the viewed-tile set: |{pred > thr} ∩ {act > thr}| / |{act > thr}|, or 1 when the
/// actual set is empty.
double hit_rate(const ViewProbabilities &predicted, const ViewProbabilities &actual, double threshold = 0.0);

struct AngularError {
    double longitude = 0.0;
    double latitude = 0.0;
};

AngularError angular_errors(const Viewpoint &predicted, const Viewpoint &actual);

} // namespace srl360::geo
