#include "srl360/synthetic.hpp"

#include "srl360/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace srl360::harness {

void SyntheticTrajectorySpec::validate() const {
    if (user_count == 0 || group_count == 0) throw ParameterError("trajectory spec: need at least one user and group");
    if (!(duration_s > 0.0) || !(frame_rate > 0.0)) throw ParameterError("trajectory spec: duration and rate must be positive");
    if (!(episode_min_s > 0.0) || episode_max_s < episode_min_s) throw ParameterError("trajectory spec: bad episode range");
    if (fixation_weight < 0.0 || pan_weight < 0.0 || saccade_weight < 0.0 ||
        !(fixation_weight + pan_weight + saccade_weight > 0.0))
        throw ParameterError("trajectory spec: archetype weights must be nonnegative and not all zero");
    if (group_spread_deg < 0.0 || max_lag_s < 0.0 || offset_sigma_deg < 0.0 || noise_sigma_deg < 0.0)
        throw ParameterError("trajectory spec: spreads must be nonnegative");
    if (!(group_timescale_s > 0.0) || !(noise_timescale_s > 0.0) || !(saccade_duration_s > 0.0))
        throw ParameterError("trajectory spec: timescales must be positive");
    if (!(latitude_limit_deg > 0.0) || latitude_limit_deg > 90.0)
        throw ParameterError("trajectory spec: latitude limit must be in (0, 90]");
}

namespace {

using Rng = std::mt19937_64;

double reflect(double lat, double limit) {
    while (lat > limit || lat < -limit) lat = lat > limit ? 2.0 * limit - lat : -2.0 * limit - lat;
    return lat;
}

// Unwrapped longitude and latitude on a uniform grid.
struct LatentPath {
    std::vector<double> lon, lat;
};

LatentPath crowd_path(const SyntheticTrajectorySpec &spec, std::size_t samples, Rng &rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double dt = 1.0 / spec.frame_rate;
    const double total = spec.fixation_weight + spec.pan_weight + spec.saccade_weight;
    LatentPath p;
    double lon = 360.0 * unit(rng) - 180.0;
    double lat = (2.0 * unit(rng) - 1.0) * 0.3 * spec.latitude_limit_deg;
    while (p.lon.size() < samples) {
        const double pick = unit(rng) * total;
        const double length = spec.episode_min_s + (spec.episode_max_s - spec.episode_min_s) * unit(rng);
        const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(length / dt)));
        double vlon = 0.0, vlat = 0.0;
        std::size_t move_steps = 0;
        if (pick >= spec.fixation_weight && pick < spec.fixation_weight + spec.pan_weight) {
            const double speed = spec.pan_speed_min_dps + (spec.pan_speed_max_dps - spec.pan_speed_min_dps) * unit(rng);
            vlon = (unit(rng) < 0.5 ? -speed : speed) * dt;
            vlat = (unit(rng) - 0.5) * 0.6 * speed * dt;
            move_steps = steps;
        } else if (pick >= spec.fixation_weight + spec.pan_weight) {
            const double jump = spec.saccade_min_deg + (spec.saccade_max_deg - spec.saccade_min_deg) * unit(rng);
            move_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.saccade_duration_s / dt)));
            vlon = (unit(rng) < 0.5 ? -jump : jump) / static_cast<double>(move_steps);
            vlat = (unit(rng) - 0.5) * 40.0 / static_cast<double>(move_steps);
        }
        for (std::size_t k = 0; k < steps && p.lon.size() < samples; ++k) {
            if (k < move_steps) {
                lon += vlon;
                lat = reflect(lat + vlat, spec.latitude_limit_deg);
            }
            p.lon.push_back(lon);
            p.lat.push_back(lat);
        }
    }
    return p;
}

// Ornstein-Uhlenbeck sequence with stationary std-dev `sigma`.
std::vector<double> ou_process(std::size_t samples, double sigma, double timescale, double dt, Rng &rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double a = std::exp(-dt / timescale);
    const double b = sigma * std::sqrt(1.0 - a * a);
    std::vector<double> x(samples);
    double v = sigma * gauss(rng);
    for (auto &out : x) {
        out = v;
        v = a * v + b * gauss(rng);
    }
    return x;
}

double interpolate(const std::vector<double> &v, double index) {
    const double clamped = std::clamp(index, 0.0, static_cast<double>(v.size() - 1));
    const auto k = static_cast<std::size_t>(std::floor(clamped));
    if (k + 1 >= v.size()) return v.back();
    const double w = clamped - static_cast<double>(k);
    return (1.0 - w) * v[k] + w * v[k + 1];
}

} // namespace

std::vector<geo::Trajectory> synthesize_trajectories(const SyntheticTrajectorySpec &spec) {
    spec.validate();
    Rng rng(spec.seed);
    const double dt = 1.0 / spec.frame_rate;
    const auto frames = static_cast<std::size_t>(std::floor(spec.duration_s * spec.frame_rate + 1e-9));
    const auto lead = static_cast<std::size_t>(std::ceil(spec.max_lag_s * spec.frame_rate));
    const auto latent_len = frames + lead + 1;

    const auto crowd = crowd_path(spec, latent_len, rng);
    std::vector<LatentPath> groups;
    for (std::size_t g = 0; g < spec.group_count; ++g) {
        LatentPath p = crowd;
        if (spec.group_count > 1) {
            const auto dlon = ou_process(latent_len, spec.group_spread_deg, spec.group_timescale_s, dt, rng);
            const auto dlat = ou_process(latent_len, spec.group_spread_deg / 3.0, spec.group_timescale_s, dt, rng);
            for (std::size_t k = 0; k < latent_len; ++k) {
                p.lon[k] += dlon[k];
                p.lat[k] = reflect(p.lat[k] + dlat[k], spec.latitude_limit_deg);
            }
        }
        groups.push_back(std::move(p));
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<geo::Trajectory> out;
    for (std::size_t u = 0; u < spec.user_count; ++u) {
        const auto &path = groups[u % spec.group_count];
        const double lag = spec.max_lag_s * unit(rng);
        const double off_lon = spec.offset_sigma_deg * gauss(rng);
        const double off_lat = 0.5 * spec.offset_sigma_deg * gauss(rng);
        const auto n_lon = ou_process(frames, spec.noise_sigma_deg, spec.noise_timescale_s, dt, rng);
        const auto n_lat = ou_process(frames, 0.5 * spec.noise_sigma_deg, spec.noise_timescale_s, dt, rng);

        geo::Trajectory t;
        t.video_id = spec.video_id;
        t.user_id = "user" + std::to_string(u);
        t.sample_rate = spec.frame_rate;
        for (std::size_t k = 0; k < frames; ++k) {
            const double index = static_cast<double>(k + lead) - lag * spec.frame_rate;
            t.timestamps.push_back(static_cast<double>(k) * dt);
            t.samples.push_back(geo::canonical({interpolate(path.lon, index) + off_lon + n_lon[k],
                                                std::clamp(interpolate(path.lat, index) + off_lat + n_lat[k], -89.0, 89.0)}));
        }
        out.push_back(std::move(t));
    }
    return out;
}

env::NetworkTrace synthesize_trace(const SyntheticTraceSpec &spec) {
    if (!(spec.duration_s >= 1.0) || spec.state_means_mbps.empty())
        throw ParameterError("trace spec: need a duration of at least 1 s and one state");
    for (double m : spec.state_means_mbps)
        if (!(m > 0.0)) throw ParameterError("trace spec: state means must be positive");
    Rng rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto states = spec.state_means_mbps.size();
    auto state = static_cast<std::size_t>(rng() % states);

    env::NetworkTrace trace;
    trace.name = spec.name;
    const double s = spec.fluctuation_sigma;
    for (double t = 0.0; t < spec.duration_s; t += 1.0) {
        if (states > 1 && unit(rng) < spec.switch_probability) state = (state + 1 + rng() % (states - 1)) % states;
        trace.timestamps.push_back(t);
        trace.throughput_mbps.push_back(spec.state_means_mbps[state] * std::exp(s * gauss(rng) - 0.5 * s * s));
    }
    return spec.augment ? env::augment_trace(std::move(trace)) : trace;
}

std::vector<env::NetworkTrace> synthesize_traces(SyntheticTraceSpec spec, std::size_t count, const std::string &prefix) {
    std::vector<env::NetworkTrace> out;
    const auto base = spec.seed;
    for (std::size_t k = 0; k < count; ++k) {
        spec.seed = base + k;
        spec.name = prefix + std::to_string(k);
        out.push_back(synthesize_trace(spec));
    }
    return out;
}

} // namespace srl360::harness
