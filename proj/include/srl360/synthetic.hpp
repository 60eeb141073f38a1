#pragma once

#include "srl360/environment.hpp"
#include "srl360/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace srl360::harness {

/// Multi-user head-movement generator. Users are split into groups; each group follows a latent
/// attention path built from fixation, pan and saccade episodes, and every user watches its group's
/// path with a personal lag, a persistent offset and smoothed noise. Groups share a common crowd
/// path plus a slowly varying group deviation, so they meet and separate over time.
struct SyntheticTrajectorySpec {
    std::string video_id = "video0";
    std::size_t user_count = 20;
    std::size_t group_count = 3;
    double duration_s = 60.0;
    double frame_rate = 30.0;

    double fixation_weight = 0.4;
    double pan_weight = 0.4;
    double saccade_weight = 0.2;
    double episode_min_s = 1.0;
    double episode_max_s = 4.0;
    double pan_speed_min_dps = 10.0;
    double pan_speed_max_dps = 60.0;
    double saccade_min_deg = 40.0;
    double saccade_max_deg = 140.0;
    double saccade_duration_s = 0.3;
    double latitude_limit_deg = 60.0;

    double group_spread_deg = 50.0;   ///< stationary std-dev of a group's deviation from the crowd
    double group_timescale_s = 4.0;   ///< correlation time of that deviation
    double max_lag_s = 1.0;           ///< per-user lag drawn from [0, max_lag_s]
    double offset_sigma_deg = 4.0;    ///< per-user persistent offset
    double noise_sigma_deg = 3.0;     ///< per-sample noise, AR(1) smoothed
    double noise_timescale_s = 0.5;

    std::uint64_t seed = 1;

    /// Throws ParameterError on non-positive durations or rates, or negative spreads.
    void validate() const;
};

std::vector<geo::Trajectory> synthesize_trajectories(const SyntheticTrajectorySpec &spec);

/// Throughput generator: a Markov chain over mean-throughput states with lognormal per-sample
/// fluctuation, sampled once per second.
struct SyntheticTraceSpec {
    std::string name = "trace0";
    double duration_s = 300.0;
    std::vector<double> state_means_mbps{0.3, 0.8, 1.5, 2.5, 4.0};
    double switch_probability = 0.1; ///< per second
    double fluctuation_sigma = 0.25;
    bool augment = true;             ///< +3 Mbps, capped at 8 Mbps
    std::uint64_t seed = 1;
};

env::NetworkTrace synthesize_trace(const SyntheticTraceSpec &spec);

/// `count` traces with seeds seed, seed+1, ... named <prefix><k>.
std::vector<env::NetworkTrace> synthesize_traces(SyntheticTraceSpec spec, std::size_t count,
                                                 const std::string &prefix = "trace");

} // namespace srl360::harness
