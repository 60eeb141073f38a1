#include "srl360/environment.hpp"

#include "srl360/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace srl360::env {

void NetworkTrace::validate() const {
    if (timestamps.empty()) throw ConfigError("network trace '" + name + "' is empty");
    if (timestamps.size() != throughput_mbps.size()) throw ConfigError("network trace '" + name + "': column mismatch");
    for (std::size_t k = 1; k < timestamps.size(); ++k)
        if (!(timestamps[k] > timestamps[k - 1]))
            throw ConfigError("network trace '" + name + "': timestamps not strictly increasing");
    for (double x : throughput_mbps)
        if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("network trace '" + name + "': throughput must be > 0");
}

double NetworkTrace::period() const {
    const auto n = timestamps.size();
    const double last = n > 1 ? timestamps[n - 1] - timestamps[n - 2] : 1.0;
    return timestamps.back() - timestamps.front() + last;
}

NetworkTrace augment_trace(NetworkTrace trace, double add_mbps, double cap_mbps) {
    for (auto &x : trace.throughput_mbps) x = std::min(x + add_mbps, cap_mbps);
    return trace;
}

DownloadResult download_time(double mbit, const NetworkTrace &trace, double cursor) {
    if (!(mbit > 0.0)) throw ParameterError("download_time: chunk volume must be positive");
    const double period = trace.period();
    const double origin = trace.timestamps.front();
    const auto n = trace.timestamps.size();

    double pos = std::fmod(cursor, period);
    if (pos < 0) pos += period;
    // Index of the sample in effect at `pos`.
    auto k = static_cast<std::size_t>(
        std::upper_bound(trace.timestamps.begin(), trace.timestamps.end(), origin + pos) - trace.timestamps.begin());
    k = k == 0 ? 0 : k - 1;

    double remaining = mbit, elapsed = 0.0;
    while (true) {
        const double end = k + 1 < n ? trace.timestamps[k + 1] - origin : period;
        const double span = end - pos;
        const double rate = trace.throughput_mbps[k];
        if (span * rate >= remaining) {
            elapsed += remaining / rate;
            break;
        }
        remaining -= span * rate;
        elapsed += span;
        pos = end;
        if (++k == n) {
            k = 0;
            pos = 0.0;
        }
    }
    return {elapsed, cursor + elapsed};
}

qoe::TileRates VideoManifest::tile_rates() const {
    qoe::TileRates rates(tile_count(), std::vector<double>(level_count()));
    for (std::size_t i = 0; i < tile_count(); ++i)
        for (std::size_t j = 0; j < level_count(); ++j) rates[i][j] = tile_rate(i, j);
    return rates;
}

void VideoManifest::validate() const {
    if (static_cast<std::size_t>(grid.tile_count()) != tile_count())
        throw ConfigError("manifest: tile count != grid rows*cols");
    if (nominal_bitrates_mbps.empty()) throw ConfigError("manifest: empty bitrate ladder");
    for (std::size_t j = 1; j < level_count(); ++j)
        if (nominal_bitrates_mbps[j] < nominal_bitrates_mbps[j - 1]) throw ConfigError("manifest: ladder not ascending");
    if (!(segment_duration_s > 0.0)) throw ConfigError("manifest: segment duration must be positive");
    for (const auto &segment : chunk_sizes_mbit) {
        if (segment.size() != tile_count()) throw ConfigError("manifest: chunk table tile count mismatch");
        for (const auto &tile : segment) {
            if (tile.size() != level_count()) throw ConfigError("manifest: chunk table level count mismatch");
            for (std::size_t j = 0; j < tile.size(); ++j) {
                if (!(tile[j] > 0.0)) throw ConfigError("manifest: chunk sizes must be positive");
                if (j > 0 && tile[j] < tile[j - 1]) throw ConfigError("manifest: chunk sizes decrease with level");
            }
        }
    }
}

VideoManifest synthesize_manifest(const ManifestSpec &spec) {
    VideoManifest m;
    m.video_id = spec.video_id;
    m.grid = spec.grid;
    m.segment_duration_s = spec.segment_duration_s;
    m.nominal_bitrates_mbps = spec.nominal_bitrates_mbps;
    const auto tiles = static_cast<std::size_t>(spec.grid.tile_count());
    m.tile_area_fraction.assign(tiles, 1.0 / static_cast<double>(tiles));

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const double sigma = spec.jitter_sigma;
    m.chunk_sizes_mbit.resize(spec.segment_count);
    for (auto &segment : m.chunk_sizes_mbit) {
        segment.resize(tiles);
        for (std::size_t i = 0; i < tiles; ++i) {
            const double factor = std::exp(sigma * z(rng) - 0.5 * sigma * sigma);
            for (std::size_t j = 0; j < m.level_count(); ++j)
                segment[i].push_back(m.tile_rate(i, j) * m.segment_duration_s * factor);
        }
    }
    m.validate();
    return m;
}

Episode::Episode(const VideoManifest &manifest, const NetworkTrace &trace, std::vector<geo::ViewProbabilities> actual,
                 std::vector<geo::ViewProbabilities> predicted, EnvConfig config)
    : manifest(&manifest), trace(&trace), actual_probs(std::move(actual)), predicted_probs(std::move(predicted)),
      config(config), neighbors(qoe::neighbor_map(manifest.grid)) {
    manifest.validate();
    trace.validate();
    config.weights.validate();
    if (actual_probs.empty()) throw ConfigError("episode: no segments");
    if (actual_probs.size() > manifest.segment_count()) throw ConfigError("episode: more segments than the manifest");
    if (predicted_probs.size() != actual_probs.size()) throw ConfigError("episode: predicted/actual length mismatch");
    if (!(config.buffer_cap_s >= manifest.segment_duration_s))
        throw ConfigError("episode: buffer cap below one segment duration");
    if (!(config.initial_buffer_s >= 0.0 && config.initial_buffer_s <= config.buffer_cap_s))
        throw ConfigError("episode: initial buffer outside [0, cap]");
}

qoe::SegmentDecision Episode::decision(std::size_t segment, std::span<const int> levels) const {
    qoe::SegmentDecision d{{levels.begin(), levels.end()}, manifest->tile_rates(), actual_probs[segment]};
    d.validate();
    return d;
}

StreamState reset(const Episode &episode, std::uint64_t seed) {
    if (episode.trace == nullptr || episode.trace->timestamps.empty()) throw ConfigError("reset: empty trace");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(0.0, episode.trace->period());
    StreamState s;
    s.cursor = s.start_cursor = offset(rng);
    s.buffer_s = episode.config.initial_buffer_s;
    s.predicted_probs = episode.predicted_probs.front();
    return s;
}

StepResult step(const Episode &episode, const StreamState &state, std::size_t segment_index,
                std::span<const int> levels) {
    if (segment_index != state.segment_index || segment_index >= episode.segment_count())
        throw ProtocolError("step: decision for segment " + std::to_string(segment_index) + " but state expects " +
                            std::to_string(state.segment_index));
    const auto &manifest = *episode.manifest;
    const auto decision = episode.decision(segment_index, levels);

    double mbit = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i)
        mbit += manifest.chunk_sizes_mbit[segment_index][i][static_cast<std::size_t>(levels[i])];
    const auto dl = download_time(mbit, *episode.trace, state.cursor);

    StepResult r;
    r.next = state;
    auto &next = r.next;
    r.download_s = dl.seconds;
    r.rebuffer_s = std::max(dl.seconds - state.buffer_s, 0.0);
    next.cursor = dl.cursor;
    next.overlapped_download_s += dl.seconds - r.rebuffer_s;
    next.stall_s += r.rebuffer_s;
    next.wall_clock_s += dl.seconds;

    double buffer = std::max(state.buffer_s - dl.seconds, 0.0) + manifest.segment_duration_s;
    if (buffer > episode.config.buffer_cap_s) {
        // Player waits, still playing, until the buffer is back at the cap.
        r.idle_s = buffer - episode.config.buffer_cap_s;
        buffer = episode.config.buffer_cap_s;
        next.cursor += r.idle_s;
        next.idle_s += r.idle_s;
        next.wall_clock_s += r.idle_s;
    }
    next.buffer_s = buffer;

    next.history.push_back({mbit, dl.seconds});
    while (next.history.size() > episode.config.throughput_history) next.history.pop_front();

    const double q1 = qoe::viewport_quality(decision);
    const bool first = segment_index == 0;
    const double q2 = first && episode.config.skip_first_temporal
                          ? 0.0
                          : qoe::temporal_variation(q1, state.last_viewport_quality);
    const double q3 = qoe::spatial_variation(decision, episode.neighbors);
    r.parts = qoe::qoe_score(q1, q2, q3, r.rebuffer_s, episode.config.weights);
    r.reward = r.parts.total;

    next.last_viewport_quality = q1;
    next.segment_index = segment_index + 1;
    r.done = next.segment_index >= episode.segment_count();
    next.predicted_probs = r.done ? geo::ViewProbabilities{} : episode.predicted_probs[next.segment_index];
    return r;
}

EpisodeResult run_episode(const Episode &episode, StreamState start, const SegmentController &controller,
                          std::size_t max_segments) {
    EpisodeResult out;
    auto state = std::move(start);
    for (std::size_t played = 0; played < max_segments && state.segment_index < episode.segment_count(); ++played) {
        auto levels = controller(episode, state);
        auto r = step(episode, state, state.segment_index, levels);
        out.total_reward += r.reward;
        state = r.next;
        out.levels.push_back(std::move(levels));
        out.steps.push_back(std::move(r));
    }
    return out;
}

double harmonic_throughput(const std::deque<DownloadRecord> &history, double prior, std::size_t window) {
    if (history.empty() || window == 0) return prior;
    const auto count = std::min(window, history.size());
    double inverse_sum = 0.0;
    for (auto it = history.end() - static_cast<std::ptrdiff_t>(count); it != history.end(); ++it)
        inverse_sum += it->seconds / it->mbit;
    return static_cast<double>(count) / inverse_sum;
}

} // namespace srl360::env
