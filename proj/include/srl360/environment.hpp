#pragma once

#include "srl360/geometry.hpp"
#include "srl360/qoe.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace srl360::env {

/// Piecewise-constant throughput: sample k holds from timestamps[k] until timestamps[k+1];
/// the last sample holds for one more sampling interval, after which the trace loops.
struct NetworkTrace {
    std::string name;
    std::vector<double> timestamps;     ///< seconds, strictly increasing
    std::vector<double> throughput_mbps; ///< > 0

    void validate() const;
    /// Looping period in seconds.
    [[nodiscard]] double period() const;
};

/// Adds `add_mbps` to every sample and clamps at `cap_mbps`.
NetworkTrace augment_trace(NetworkTrace trace, double add_mbps = 3.0, double cap_mbps = 8.0);

struct DownloadResult {
    double seconds = 0.0;
    double cursor = 0.0; ///< unwrapped trace time after the download
};

/// Integrates throughput from `cursor` (unwrapped seconds; wrapped by the trace period on lookup)
/// until `mbit` have been delivered.
DownloadResult download_time(double mbit, const NetworkTrace &trace, double cursor);

/// Tiles x levels ladder with per-segment chunk sizes.
struct VideoManifest {
    std::string video_id;
    geo::TileGrid grid;
    double segment_duration_s = 1.0;
    std::vector<double> nominal_bitrates_mbps; ///< whole-frame bitrate per level, ascending
    std::vector<double> tile_area_fraction;    ///< per tile, sums to 1
    /// chunk_sizes_mbit[segment][tile][level]
    std::vector<std::vector<std::vector<double>>> chunk_sizes_mbit;

    [[nodiscard]] std::size_t segment_count() const { return chunk_sizes_mbit.size(); }
    [[nodiscard]] std::size_t tile_count() const { return tile_area_fraction.size(); }
    [[nodiscard]] std::size_t level_count() const { return nominal_bitrates_mbps.size(); }
    /// Nominal per-tile bitrate r_{i,j} = level bitrate x tile area share.
    [[nodiscard]] double tile_rate(std::size_t tile, std::size_t level) const {
        return nominal_bitrates_mbps[level] * tile_area_fraction[tile];
    }
    [[nodiscard]] qoe::TileRates tile_rates() const;
    void validate() const;
};

struct ManifestSpec {
    std::string video_id = "synthetic";
    geo::TileGrid grid;
    std::vector<double> nominal_bitrates_mbps{0.5, 1.0, 2.0, 4.0, 8.0};
    std::size_t segment_count = 60;
    double segment_duration_s = 1.0;
    double jitter_sigma = 0.2; ///< lognormal VBR jitter, mean-preserving
    std::uint64_t seed = 1;
};

/// Equal-area tiles; chunk size = r_{i,j} T m_{s,i} with one mean-one lognormal factor per
/// (segment, tile), so sizes stay non-decreasing in level.
VideoManifest synthesize_manifest(const ManifestSpec &spec);

struct EnvConfig {
    double buffer_cap_s = 6.0;
    qoe::QoeWeights weights;
    double throughput_prior_mbps = 1.0;
    std::size_t throughput_history = 5;
    /// When true the first segment scores no temporal variation instead of comparing to Q1 = 0.
    bool skip_first_temporal = false;
    /// Buffer level at reset, as if a startup prefetch had already played out.
    double initial_buffer_s = 0.0;
};

struct DownloadRecord {
    double mbit = 0.0;
    double seconds = 0.0;
};

/// Observation and bookkeeping for the per-segment decision process.
struct StreamState {
    std::size_t segment_index = 0;
    double buffer_s = 0.0;
    std::deque<DownloadRecord> history;
    double last_viewport_quality = 0.0;
    geo::ViewProbabilities predicted_probs;
    double cursor = 0.0;       ///< unwrapped trace time
    double start_cursor = 0.0; ///< cursor right after reset

    // Wall-clock accounting. Each download splits into time the player kept playing
    // (overlapped) and time it stalled.
    double overlapped_download_s = 0.0;
    double stall_s = 0.0;
    double idle_s = 0.0;
    double wall_clock_s = 0.0;
};

/// Immutable inputs of one episode.
struct Episode {
    const VideoManifest *manifest = nullptr;
    const NetworkTrace *trace = nullptr;
    std::vector<geo::ViewProbabilities> actual_probs;    ///< per segment
    std::vector<geo::ViewProbabilities> predicted_probs; ///< per segment, what the client sees
    EnvConfig config;
    qoe::NeighborMap neighbors;

    Episode() = default;
    Episode(const VideoManifest &manifest, const NetworkTrace &trace, std::vector<geo::ViewProbabilities> actual,
            std::vector<geo::ViewProbabilities> predicted, EnvConfig config);

    [[nodiscard]] std::size_t segment_count() const { return actual_probs.size(); }
    /// The decision as scored for segment `segment` (nominal tile rates, actual probabilities).
    [[nodiscard]] qoe::SegmentDecision decision(std::size_t segment, std::span<const int> levels) const;
};

/// Fresh state with the trace cursor at a seeded uniform offset in [0, period).
StreamState reset(const Episode &episode, std::uint64_t seed);

struct StepResult {
    double reward = 0.0;
    qoe::QoeBreakdown parts;
    StreamState next;
    bool done = false;
    double download_s = 0.0;
    double rebuffer_s = 0.0;
    double idle_s = 0.0;
};

/// Downloads segment `segment_index` at the given per-tile levels and scores it.
/// Throws ProtocolError when `segment_index` is not the state's current segment.
StepResult step(const Episode &episode, const StreamState &state, std::size_t segment_index,
                std::span<const int> levels);

/// Chooses per-tile levels for the state's current segment.
using SegmentController = std::function<std::vector<int>(const Episode &, const StreamState &)>;

struct EpisodeResult {
    std::vector<StepResult> steps;
    std::vector<std::vector<int>> levels; ///< per segment
    double total_reward = 0.0;
};

/// Steps from `start` until the episode ends or `max_segments` segments were played.
EpisodeResult run_episode(const Episode &episode, StreamState start, const SegmentController &controller,
                          std::size_t max_segments = std::numeric_limits<std::size_t>::max());

/// Harmonic mean of per-download throughputs over the most recent `window` entries, or `prior`.
double harmonic_throughput(const std::deque<DownloadRecord> &history, double prior = 1.0, std::size_t window = 5);

// File formats -----------------------------------------------------------

inline constexpr int kTraceFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

/// CSV: optional `# srl360-trace v1` comment, header `timestamp_s,throughput_mbps`, one row per sample.
NetworkTrace load_trace_csv(const std::filesystem::path &path);
void save_trace_csv(const std::filesystem::path &path, const NetworkTrace &trace);

/// JSON manifest: {"format_version", "video_id", "grid": {"rows","cols"}, "segment_duration_s",
/// "nominal_bitrates_mbps", "tile_area_fraction", and either "chunk_sizes_mbit" or "generator": {...}}.
VideoManifest load_manifest_json(const std::filesystem::path &path);
void save_manifest_json(const std::filesystem::path &path, const VideoManifest &manifest);

} // namespace srl360::env
