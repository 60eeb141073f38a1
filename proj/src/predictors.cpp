#include "srl360/predictors.hpp"

#include "srl360/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace srl360::predict {

namespace {

double wrap180(double x) { return x - 360.0 * std::floor((x + 180.0) / 360.0); }

// Longitudes of samples[begin, end) relative to `origin`, unwrapped along the sequence and anchored so
// that sample `anchor` lies in [-180, 180).
Path local_path(const std::vector<geo::Viewpoint> &samples, std::size_t begin, std::size_t end, std::size_t anchor,
                double origin) {
    std::vector<double> lon(end - begin);
    const auto a = anchor - begin;
    lon[a] = wrap180(samples[anchor].longitude - origin);
    for (std::size_t k = a + 1; k < lon.size(); ++k)
        lon[k] = lon[k - 1] + wrap180(samples[begin + k].longitude - samples[begin + k - 1].longitude);
    for (std::size_t k = a; k-- > 0;)
        lon[k] = lon[k + 1] - wrap180(samples[begin + k + 1].longitude - samples[begin + k].longitude);
    Path out(lon.size());
    for (std::size_t k = 0; k < lon.size(); ++k) out[k] = {lon[k] / 180.0, samples[begin + k].latitude / 90.0};
    return out;
}

} // namespace

void PredictionTask::validate() const {
    if (history.empty()) throw ParameterError("prediction task: empty history");
    for (const auto &c : cross_user)
        if (c.size() < history.size() + horizon) throw PredictionError("prediction task: cross-user path too short");
    if (!target.empty() && target.size() != horizon) throw ParameterError("prediction task: target length != horizon");
}

geo::Viewpoint to_viewpoint(const PredictionTask &task, const geo::NormalizedViewpoint &local) {
    return geo::canonical({task.origin_longitude + local.x * 180.0, local.y * 90.0});
}

PredictionTask make_task(const std::vector<geo::Trajectory> &video, std::size_t user, std::size_t now,
                         const TaskWindow &window, std::span<const std::size_t> cross_users) {
    if (window.history == 0 || window.horizon == 0) throw ParameterError("make_task: window sizes must be positive");
    if (user >= video.size()) throw ParameterError("make_task: user index out of range");
    const auto n = video[user].size();
    if (now + 1 < window.history || now + window.horizon >= n)
        throw ParameterError("make_task: window around sample " + std::to_string(now) + " leaves the trajectory");
    const auto begin = now + 1 - window.history;
    const auto end = now + window.horizon + 1;
    PredictionTask task;
    task.horizon = window.horizon;
    task.origin_longitude = video[user].samples[now].longitude;
    auto path = local_path(video[user].samples, begin, end, now, task.origin_longitude);
    task.history.assign(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(window.history));
    task.target.assign(path.begin() + static_cast<std::ptrdiff_t>(window.history), path.end());
    for (auto c : cross_users) {
        if (c >= video.size() || video[c].size() < end) throw ParameterError("make_task: bad cross-user");
        task.cross_user.push_back(local_path(video[c].samples, begin, end, now, task.origin_longitude));
    }
    return task;
}

std::vector<PredictionTask> build_tasks(const std::vector<geo::Trajectory> &video, const TaskWindow &window,
                                        std::uint64_t seed) {
    if (window.history == 0 || window.horizon == 0 || window.stride == 0)
        throw ParameterError("build_tasks: window sizes must be positive");
    if (video.empty()) return {};
    const auto n = video.front().size();
    for (const auto &t : video)
        if (t.size() != n) throw ParameterError("build_tasks: trajectories differ in length");
    const auto span = window.history + window.horizon;
    if (n < span) return {};

    std::mt19937_64 rng(seed);
    std::vector<PredictionTask> tasks;
    for (std::size_t p = 0; p < video.size(); ++p) {
        std::vector<std::size_t> others;
        for (std::size_t q = 0; q < video.size(); ++q)
            if (q != p) others.push_back(q);
        for (std::size_t begin = 0; begin + span <= n; begin += window.stride) {
            for (std::size_t k = others.size(); k > 1; --k) std::swap(others[k - 1], others[rng() % k]);
            const auto m = std::min(window.cross_user_count, others.size());
            tasks.push_back(make_task(video, p, begin + window.history - 1, window,
                                      std::span<const std::size_t>(others.data(), m)));
        }
    }
    return tasks;
}

Path predict_static(const PredictionTask &task) {
    if (task.history.empty()) throw ParameterError("predict_static: empty history");
    return Path(task.horizon, task.history.back());
}

Path predict_lr(const PredictionTask &task) {
    const auto h = task.history.size();
    if (h < 2) throw ParameterError("predict_lr: need at least two history samples");
    const double mean_s = static_cast<double>(h - 1) / 2.0;
    // Accumulated as offsets from the first sample so constant histories reproduce exactly.
    const auto &first = task.history.front();
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto &v : task.history) {
        mean_x += v.x - first.x;
        mean_y += v.y - first.y;
    }
    mean_x = first.x + mean_x / static_cast<double>(h);
    mean_y = first.y + mean_y / static_cast<double>(h);
    double sxx = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
        const double ds = static_cast<double>(k) - mean_s;
        sxx += ds * ds;
        sx += ds * (task.history[k].x - mean_x);
        sy += ds * (task.history[k].y - mean_y);
    }
    const double bx = sx / sxx, by = sy / sxx;
    Path out(task.horizon);
    for (std::size_t k = 0; k < task.horizon; ++k) {
        const double ds = static_cast<double>(h - 1 + k + 1) - mean_s;
        out[k] = {std::clamp(mean_x + bx * ds, -1.0, 1.0), std::clamp(mean_y + by * ds, -1.0, 1.0)};
    }
    return out;
}

KnnPrediction predict_knn(const PredictionTask &task, std::size_t k, const geo::TileGrid &grid,
                          const geo::FieldOfView &fov) {
    if (k == 0 || k > task.cross_user.size())
        throw PredictionError("predict_knn: k must be in 1..cross-user count");
    const auto h = task.history.size();
    for (const auto &c : task.cross_user)
        if (c.size() < h + task.horizon) throw PredictionError("predict_knn: cross-user path does not cover horizon");

    const auto lr = predict_lr(task);
    KnnPrediction out;
    std::vector<std::pair<double, std::size_t>> dist(task.cross_user.size());
    for (std::size_t step = 0; step < task.horizon; ++step) {
        const double plon = lr[step].x * 180.0, plat = lr[step].y * 90.0;
        for (std::size_t i = 0; i < task.cross_user.size(); ++i) {
            const auto &v = task.cross_user[i][h + step];
            dist[i] = {geo::wrap_longitude_distance(plon, v.x * 180.0) + std::abs(plat - v.y * 90.0), i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        double dlon = 0.0, lat = 0.0;
        geo::ViewProbabilities probs(static_cast<std::size_t>(grid.tile_count()), 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            const auto &v = task.cross_user[dist[j].second][h + step];
            dlon += wrap180(v.x * 180.0 - plon);
            lat += v.y * 90.0;
            const auto p = geo::viewing_probabilities(to_viewpoint(task, v), grid, fov);
            for (std::size_t t = 0; t < probs.size(); ++t) probs[t] += p[t];
        }
        const double kk = static_cast<double>(k);
        for (auto &p : probs) p /= kk;
        out.path.push_back({(plon + dlon / kk) / 180.0, lat / kk / 90.0});
        out.probs.push_back(std::move(probs));
    }
    return out;
}

geo::Trajectory downsample(const geo::Trajectory &trajectory, std::size_t factor) {
    if (factor == 0) throw ParameterError("downsample: factor must be positive");
    geo::Trajectory out;
    out.video_id = trajectory.video_id;
    out.user_id = trajectory.user_id;
    out.sample_rate = trajectory.sample_rate / static_cast<double>(factor);
    for (std::size_t k = 0; k < trajectory.size(); k += factor) {
        out.timestamps.push_back(trajectory.timestamps[k]);
        out.samples.push_back(trajectory.samples[k]);
    }
    return out;
}

} // namespace srl360::predict
