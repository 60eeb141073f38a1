#include "srl360/harness.hpp"

#include "srl360/errors.hpp"
#include "srl360/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace srl360::harness {

using json = nlohmann::ordered_json;

std::string to_string(Mode mode) { return mode == Mode::Predict ? "predict" : "stream"; }

Mode parse_mode(const std::string &text) {
    if (text == "predict") return Mode::Predict;
    if (text == "stream") return Mode::Stream;
    throw ConfigError("unknown mode '" + text + "' (expected predict or stream)");
}

std::string to_string(SweepKind kind) {
    switch (kind) {
    case SweepKind::Order: return "order";
    case SweepKind::BufferCap: return "buffer";
    case SweepKind::Eta: return "eta";
    }
    return "order";
}

SweepKind parse_sweep_kind(const std::string &text) {
    if (text == "order") return SweepKind::Order;
    if (text == "buffer") return SweepKind::BufferCap;
    if (text == "eta") return SweepKind::Eta;
    throw ConfigError("unknown sweep '" + text + "' (expected order, buffer or eta)");
}

// Config JSON --------------------------------------------------------------

namespace {

template <class T>
void read(const json &j, const char *key, T &out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

void read_path(const json &j, const char *key, std::filesystem::path &out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
}

json weights_json(const qoe::QoeWeights &w) { return {{"eta1", w.eta1}, {"eta2", w.eta2}, {"eta3", w.eta3}}; }

void read_weights(const json &j, qoe::QoeWeights &w) {
    read(j, "eta1", w.eta1);
    read(j, "eta2", w.eta2);
    read(j, "eta3", w.eta3);
}

json window_json(const predict::TaskWindow &w) {
    return {{"history", w.history}, {"horizon", w.horizon}, {"stride", w.stride}, {"cross_user_count", w.cross_user_count}};
}

void read_window(const json &j, predict::TaskWindow &w) {
    read(j, "history", w.history);
    read(j, "horizon", w.horizon);
    read(j, "stride", w.stride);
    read(j, "cross_user_count", w.cross_user_count);
}

json env_json(const env::EnvConfig &e) {
    return {{"buffer_cap_s", e.buffer_cap_s},
            {"weights", weights_json(e.weights)},
            {"throughput_prior_mbps", e.throughput_prior_mbps},
            {"throughput_history", e.throughput_history},
            {"skip_first_temporal", e.skip_first_temporal},
            {"initial_buffer_s", e.initial_buffer_s}};
}

void read_env(const json &j, env::EnvConfig &e) {
    read(j, "buffer_cap_s", e.buffer_cap_s);
    if (j.contains("weights")) read_weights(j.at("weights"), e.weights);
    read(j, "throughput_prior_mbps", e.throughput_prior_mbps);
    read(j, "throughput_history", e.throughput_history);
    read(j, "skip_first_temporal", e.skip_first_temporal);
    read(j, "initial_buffer_s", e.initial_buffer_s);
}

json trajectory_spec_json(const SyntheticTrajectorySpec &s) {
    return {{"video_id", s.video_id},
            {"user_count", s.user_count},
            {"group_count", s.group_count},
            {"duration_s", s.duration_s},
            {"frame_rate", s.frame_rate},
            {"fixation_weight", s.fixation_weight},
            {"pan_weight", s.pan_weight},
            {"saccade_weight", s.saccade_weight},
            {"episode_min_s", s.episode_min_s},
            {"episode_max_s", s.episode_max_s},
            {"pan_speed_min_dps", s.pan_speed_min_dps},
            {"pan_speed_max_dps", s.pan_speed_max_dps},
            {"saccade_min_deg", s.saccade_min_deg},
            {"saccade_max_deg", s.saccade_max_deg},
            {"saccade_duration_s", s.saccade_duration_s},
            {"latitude_limit_deg", s.latitude_limit_deg},
            {"group_spread_deg", s.group_spread_deg},
            {"group_timescale_s", s.group_timescale_s},
            {"max_lag_s", s.max_lag_s},
            {"offset_sigma_deg", s.offset_sigma_deg},
            {"noise_sigma_deg", s.noise_sigma_deg},
            {"noise_timescale_s", s.noise_timescale_s},
            {"seed", s.seed}};
}

void read_trajectory_spec(const json &j, SyntheticTrajectorySpec &s) {
    read(j, "video_id", s.video_id);
    read(j, "user_count", s.user_count);
    read(j, "group_count", s.group_count);
    read(j, "duration_s", s.duration_s);
    read(j, "frame_rate", s.frame_rate);
    read(j, "fixation_weight", s.fixation_weight);
    read(j, "pan_weight", s.pan_weight);
    read(j, "saccade_weight", s.saccade_weight);
    read(j, "episode_min_s", s.episode_min_s);
    read(j, "episode_max_s", s.episode_max_s);
    read(j, "pan_speed_min_dps", s.pan_speed_min_dps);
    read(j, "pan_speed_max_dps", s.pan_speed_max_dps);
    read(j, "saccade_min_deg", s.saccade_min_deg);
    read(j, "saccade_max_deg", s.saccade_max_deg);
    read(j, "saccade_duration_s", s.saccade_duration_s);
    read(j, "latitude_limit_deg", s.latitude_limit_deg);
    read(j, "group_spread_deg", s.group_spread_deg);
    read(j, "group_timescale_s", s.group_timescale_s);
    read(j, "max_lag_s", s.max_lag_s);
    read(j, "offset_sigma_deg", s.offset_sigma_deg);
    read(j, "noise_sigma_deg", s.noise_sigma_deg);
    read(j, "noise_timescale_s", s.noise_timescale_s);
    read(j, "seed", s.seed);
}

json trace_spec_json(const SyntheticTraceSpec &s) {
    return {{"name", s.name},
            {"duration_s", s.duration_s},
            {"state_means_mbps", s.state_means_mbps},
            {"switch_probability", s.switch_probability},
            {"fluctuation_sigma", s.fluctuation_sigma},
            {"augment", s.augment},
            {"seed", s.seed}};
}

void read_trace_spec(const json &j, SyntheticTraceSpec &s) {
    read(j, "name", s.name);
    read(j, "duration_s", s.duration_s);
    read(j, "state_means_mbps", s.state_means_mbps);
    read(j, "switch_probability", s.switch_probability);
    read(j, "fluctuation_sigma", s.fluctuation_sigma);
    read(j, "augment", s.augment);
    read(j, "seed", s.seed);
}

json grid_json(const geo::TileGrid &g) { return {{"rows", g.rows}, {"cols", g.cols}}; }

void read_grid(const json &j, geo::TileGrid &g) {
    read(j, "rows", g.rows);
    read(j, "cols", g.cols);
}

json manifest_spec_json(const env::ManifestSpec &s) {
    return {{"video_id", s.video_id},
            {"grid", grid_json(s.grid)},
            {"nominal_bitrates_mbps", s.nominal_bitrates_mbps},
            {"segment_count", s.segment_count},
            {"segment_duration_s", s.segment_duration_s},
            {"jitter_sigma", s.jitter_sigma},
            {"seed", s.seed}};
}

void read_manifest_spec(const json &j, env::ManifestSpec &s) {
    read(j, "video_id", s.video_id);
    if (j.contains("grid")) read_grid(j.at("grid"), s.grid);
    read(j, "nominal_bitrates_mbps", s.nominal_bitrates_mbps);
    read(j, "segment_count", s.segment_count);
    read(j, "segment_duration_s", s.segment_duration_s);
    read(j, "jitter_sigma", s.jitter_sigma);
    read(j, "seed", s.seed);
}

json cuan_json(const predict::CuanTrainConfig &c) {
    return {{"hidden", c.hidden},
            {"epochs", c.epochs},
            {"samples_per_epoch", c.samples_per_epoch},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"learning_rate_decay", c.learning_rate_decay},
            {"seed", c.seed}};
}

void read_cuan(const json &j, predict::CuanTrainConfig &c) {
    read(j, "hidden", c.hidden);
    read(j, "epochs", c.epochs);
    read(j, "samples_per_epoch", c.samples_per_epoch);
    read(j, "batch_size", c.batch_size);
    read(j, "learning_rate", c.learning_rate);
    read(j, "learning_rate_decay", c.learning_rate_decay);
    read(j, "seed", c.seed);
}

json agent_json(const agent::TrainConfig &c) {
    return {{"shape",
             {{"levels", c.shape.levels},
              {"filters", c.shape.filters},
              {"hidden", c.shape.hidden},
              {"conv_width", c.shape.conv_width}}},
            {"gamma1", c.gamma1},
            {"gamma2", c.gamma2},
            {"workers", c.workers},
            {"threaded", c.threaded},
            {"beta", c.beta},
            {"beta_decay", c.beta_decay},
            {"beta_decay_steps", c.beta_decay_steps},
            {"beta_decay_subtractive", c.beta_decay_subtractive},
            {"policy_learning_rate", c.policy_learning_rate},
            {"value_learning_rate", c.value_learning_rate},
            {"max_steps", c.max_steps},
            {"max_segments", c.max_segments},
            {"order", seq::to_string(c.order)},
            {"seed", c.seed}};
}

void read_agent(const json &j, agent::TrainConfig &c) {
    if (j.contains("shape")) {
        const auto &s = j.at("shape");
        read(s, "levels", c.shape.levels);
        read(s, "filters", c.shape.filters);
        read(s, "hidden", c.shape.hidden);
        read(s, "conv_width", c.shape.conv_width);
    }
    read(j, "gamma1", c.gamma1);
    read(j, "gamma2", c.gamma2);
    read(j, "workers", c.workers);
    read(j, "threaded", c.threaded);
    read(j, "beta", c.beta);
    read(j, "beta_decay", c.beta_decay);
    read(j, "beta_decay_steps", c.beta_decay_steps);
    read(j, "beta_decay_subtractive", c.beta_decay_subtractive);
    read(j, "policy_learning_rate", c.policy_learning_rate);
    read(j, "value_learning_rate", c.value_learning_rate);
    read(j, "max_steps", c.max_steps);
    read(j, "max_segments", c.max_segments);
    if (j.contains("order")) c.order = seq::parse_order_mode(j.at("order").get<std::string>());
    read(j, "seed", c.seed);
}

json config_json(const ExperimentConfig &c) {
    const auto &p = c.prediction;
    const auto &s = c.stream;
    return {{"schema_version", c.schema_version},
            {"name", c.name},
            {"mode", to_string(c.mode)},
            {"output_dir", c.output_dir.string()},
            {"grid", grid_json(c.grid)},
            {"fov", {{"width", c.fov.width}, {"height", c.fov.height}}},
            {"trajectory_index", c.trajectory_index.string()},
            {"train_trajectory_index", c.train_trajectory_index.string()},
            {"trajectory_generator", trajectory_spec_json(c.trajectory_generator)},
            {"eval_videos", c.eval_videos},
            {"train_videos", c.train_videos},
            {"trace_dir", c.trace_dir.string()},
            {"trace_generator", trace_spec_json(c.trace_generator)},
            {"trace_count", c.trace_count},
            {"manifest_path", c.manifest_path.string()},
            {"manifest_generator", manifest_spec_json(c.manifest_generator)},
            {"predictors", c.predictors},
            {"controllers", c.controllers},
            {"cuan_checkpoint", c.cuan_checkpoint.string()},
            {"cuan_train", cuan_json(c.cuan_train)},
            {"agent_checkpoint", c.agent_checkpoint.string()},
            {"agent_train", agent_json(c.agent_train)},
            {"bb", {{"reservoir_s", c.bb.reservoir_s}, {"cushion_s", c.bb.cushion_s}}},
            {"prediction",
             {{"window", window_json(p.window)},
              {"downsample", p.downsample},
              {"knn_k", p.knn_k},
              {"max_tasks", p.max_tasks},
              {"horizons_s", p.horizons_s},
              {"hit_threshold", p.hit_threshold}}},
            {"stream",
             {{"env", env_json(s.env)},
              {"segments", s.segments},
              {"users_per_video", s.users_per_video},
              {"starts", s.starts},
              {"order", seq::to_string(s.order)},
              {"viewpoint_source", s.viewpoint_source},
              {"oracle_horizon", s.oracle_horizon}}}};
}

ExperimentConfig config_from(const json &j) {
    ExperimentConfig c;
    read(j, "schema_version", c.schema_version);
    if (c.schema_version > kSchemaVersion)
        throw ConfigError("config schema version " + std::to_string(c.schema_version) + " is newer than supported " +
                          std::to_string(kSchemaVersion));
    read(j, "name", c.name);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    read_path(j, "output_dir", c.output_dir);
    if (j.contains("grid")) read_grid(j.at("grid"), c.grid);
    if (j.contains("fov")) {
        read(j.at("fov"), "width", c.fov.width);
        read(j.at("fov"), "height", c.fov.height);
    }
    read_path(j, "trajectory_index", c.trajectory_index);
    read_path(j, "train_trajectory_index", c.train_trajectory_index);
    if (j.contains("trajectory_generator")) read_trajectory_spec(j.at("trajectory_generator"), c.trajectory_generator);
    read(j, "eval_videos", c.eval_videos);
    read(j, "train_videos", c.train_videos);
    read_path(j, "trace_dir", c.trace_dir);
    if (j.contains("trace_generator")) read_trace_spec(j.at("trace_generator"), c.trace_generator);
    read(j, "trace_count", c.trace_count);
    read_path(j, "manifest_path", c.manifest_path);
    if (j.contains("manifest_generator")) read_manifest_spec(j.at("manifest_generator"), c.manifest_generator);
    read(j, "predictors", c.predictors);
    read(j, "controllers", c.controllers);
    read_path(j, "cuan_checkpoint", c.cuan_checkpoint);
    if (j.contains("cuan_train")) read_cuan(j.at("cuan_train"), c.cuan_train);
    read_path(j, "agent_checkpoint", c.agent_checkpoint);
    if (j.contains("agent_train")) read_agent(j.at("agent_train"), c.agent_train);
    if (j.contains("bb")) {
        read(j.at("bb"), "reservoir_s", c.bb.reservoir_s);
        read(j.at("bb"), "cushion_s", c.bb.cushion_s);
    }
    if (j.contains("prediction")) {
        const auto &p = j.at("prediction");
        if (p.contains("window")) read_window(p.at("window"), c.prediction.window);
        read(p, "downsample", c.prediction.downsample);
        read(p, "knn_k", c.prediction.knn_k);
        read(p, "max_tasks", c.prediction.max_tasks);
        read(p, "horizons_s", c.prediction.horizons_s);
        read(p, "hit_threshold", c.prediction.hit_threshold);
    }
    if (j.contains("stream")) {
        const auto &s = j.at("stream");
        if (s.contains("env")) read_env(s.at("env"), c.stream.env);
        read(s, "segments", c.stream.segments);
        read(s, "users_per_video", c.stream.users_per_video);
        read(s, "starts", c.stream.starts);
        if (s.contains("order")) c.stream.order = seq::parse_order_mode(s.at("order").get<std::string>());
        read(s, "viewpoint_source", c.stream.viewpoint_source);
        read(s, "oracle_horizon", c.stream.oracle_horizon);
    }
    return c;
}

bool contains(const std::vector<std::string> &v, const std::string &x) { return std::find(v.begin(), v.end(), x) != v.end(); }

const std::vector<std::string> kPredictors{"static", "lr", "knn", "cuan"};
const std::vector<std::string> kControllers{"bb", "greedy", "agent", "oracle"};

} // namespace

std::string config_to_json(const ExperimentConfig &config) { return config_json(config).dump(2); }

ExperimentConfig config_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    try {
        return config_from(j.contains("config") ? j.at("config") : j);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

void ExperimentConfig::validate() const {
    if (schema_version != kSchemaVersion) throw ConfigError("config: unsupported schema version");
    if (grid.rows <= 0 || grid.cols <= 0) throw ConfigError("config: grid must have positive rows and cols");
    for (const auto &p : predictors)
        if (!contains(kPredictors, p)) throw ConfigError("config: unknown predictor '" + p + "'");
    for (const auto &c : controllers)
        if (!contains(kControllers, c)) throw ConfigError("config: unknown controller '" + c + "'");
    if (stream.viewpoint_source != "actual" && !contains(kPredictors, stream.viewpoint_source))
        throw ConfigError("config: unknown viewpoint source '" + stream.viewpoint_source + "'");
    for (const auto *p : {&trajectory_index, &train_trajectory_index, &manifest_path, &cuan_checkpoint, &agent_checkpoint})
        if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("config: missing file " + p->string());
    if (!trace_dir.empty() && !std::filesystem::is_directory(trace_dir))
        throw ConfigError("config: missing trace directory " + trace_dir.string());
    if (prediction.downsample == 0) throw ConfigError("config: downsample must be positive");
    if (stream.segments == 0 || stream.starts == 0) throw ConfigError("config: segments and starts must be positive");
    bb.validate();
    stream.env.weights.validate();
}

// Data ---------------------------------------------------------------------

std::vector<Video> load_videos(const ExperimentConfig &config, bool training) {
    const auto &index = training && !config.train_trajectory_index.empty() ? config.train_trajectory_index
                                                                           : config.trajectory_index;
    if (!index.empty()) {
        std::map<std::string, Video> by_video;
        for (auto &t : predict::load_trajectory_set(index)) by_video[t.video_id].push_back(std::move(t));
        std::vector<Video> out;
        for (auto &[id, v] : by_video) out.push_back(std::move(v));
        return out;
    }
    std::vector<Video> out;
    const auto count = training ? config.train_videos : config.eval_videos;
    for (std::size_t v = 0; v < count; ++v) {
        auto spec = config.trajectory_generator;
        spec.seed = config.trajectory_generator.seed + (training ? 10000 : 0) + v;
        spec.video_id = (training ? "train" : "video") + std::to_string(v);
        out.push_back(synthesize_trajectories(spec));
    }
    return out;
}

std::vector<env::NetworkTrace> load_traces(const ExperimentConfig &config, bool training) {
    if (!config.trace_dir.empty()) {
        std::vector<std::filesystem::path> files;
        for (const auto &e : std::filesystem::directory_iterator(config.trace_dir))
            if (e.path().extension() == ".csv") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::vector<env::NetworkTrace> out;
        for (const auto &f : files) {
            auto t = env::load_trace_csv(f);
            if (t.name.empty()) t.name = f.stem().string();
            out.push_back(std::move(t));
        }
        if (out.empty()) throw ConfigError("no trace CSVs in " + config.trace_dir.string());
        return out;
    }
    auto spec = config.trace_generator;
    if (training) spec.seed += 10000;
    return synthesize_traces(spec, config.trace_count, training ? "train_trace" : "trace");
}

env::VideoManifest load_manifest(const ExperimentConfig &config) {
    if (!config.manifest_path.empty()) return env::load_manifest_json(config.manifest_path);
    auto spec = config.manifest_generator;
    spec.grid = config.grid;
    return env::synthesize_manifest(spec);
}

namespace {

std::size_t nearest_index(const geo::Trajectory &t, double time) {
    const auto it = std::lower_bound(t.timestamps.begin(), t.timestamps.end(), time);
    if (it == t.timestamps.begin()) return 0;
    if (it == t.timestamps.end()) return t.size() - 1;
    const auto k = static_cast<std::size_t>(it - t.timestamps.begin());
    return time - t.timestamps[k - 1] <= t.timestamps[k] - time ? k - 1 : k;
}

Video downsample_video(const Video &video, std::size_t factor) {
    Video out;
    for (const auto &t : video) out.push_back(factor == 1 ? t : predict::downsample(t, factor));
    return out;
}

predict::Path run_predictor(const std::string &name, const predict::PredictionTask &task, std::size_t knn_k,
                            const geo::TileGrid &grid, const geo::FieldOfView &fov, const predict::CuanParams *cuan,
                            std::vector<geo::ViewProbabilities> *knn_probs) {
    if (name == "static") return predict::predict_static(task);
    if (name == "lr") return predict::predict_lr(task);
    if (name == "knn") {
        auto k = predict::predict_knn(task, std::min(knn_k, task.cross_user.size()), grid, fov);
        if (knn_probs) *knn_probs = std::move(k.probs);
        return k.path;
    }
    if (name == "cuan") {
        if (!cuan) throw ConfigError("cuan predictor requested without parameters");
        return predict::cuan_predict(*cuan, task);
    }
    throw ConfigError("unknown predictor '" + name + "'");
}

} // namespace

std::vector<geo::ViewProbabilities> segment_probabilities(const geo::Trajectory &trajectory,
                                                         const env::VideoManifest &manifest, std::size_t segments,
                                                         const geo::FieldOfView &fov) {
    std::vector<geo::ViewProbabilities> out;
    for (std::size_t s = 0; s < segments; ++s) {
        const double mid = (static_cast<double>(s) + 0.5) * manifest.segment_duration_s;
        out.push_back(geo::viewing_probabilities(trajectory.samples[nearest_index(trajectory, mid)], manifest.grid, fov));
    }
    return out;
}

std::vector<geo::ViewProbabilities> predicted_segment_probabilities(
    const Video &video, std::size_t user, const env::VideoManifest &manifest, std::size_t segments,
    const std::string &source, const PredictionSettings &settings, const geo::FieldOfView &fov,
    const predict::CuanParams *cuan, std::uint64_t seed) {
    if (source == "actual") return segment_probabilities(video.at(user), manifest, segments, fov);
    const auto ds = downsample_video(video, settings.downsample);
    const auto &me = ds.at(user);
    const double rate = me.sample_rate;
    std::vector<std::size_t> others;
    for (std::size_t q = 0; q < ds.size(); ++q)
        if (q != user) others.push_back(q);
    std::mt19937_64 rng(seed);

    std::vector<geo::ViewProbabilities> out;
    for (std::size_t s = 0; s < segments; ++s) {
        const double start = static_cast<double>(s) * manifest.segment_duration_s;
        const double mid = start + 0.5 * manifest.segment_duration_s;
        const auto first_future = static_cast<std::size_t>(std::ceil(start * rate - 1e-9));
        const std::size_t steps = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(mid * rate)) - std::min(first_future, static_cast<std::size_t>(std::llround(mid * rate))) + 1);
        for (std::size_t k = others.size(); k > 1; --k) std::swap(others[k - 1], others[rng() % k]);
        const auto m = std::min(settings.window.cross_user_count, others.size());

        geo::Viewpoint vp = me.samples.front();
        std::vector<geo::ViewProbabilities> knn_probs;
        bool from_knn = false;
        if (first_future >= settings.window.history && first_future - 1 + steps < me.size()) {
            predict::TaskWindow w = settings.window;
            w.horizon = steps;
            const auto task = predict::make_task(ds, user, first_future - 1, w, std::span<const std::size_t>(others.data(), m));
            const auto path = run_predictor(source, task, settings.knn_k, manifest.grid, fov, cuan, &knn_probs);
            vp = predict::to_viewpoint(task, path[steps - 1]);
            from_knn = source == "knn";
        } else if (first_future > 0) {
            vp = me.samples[std::min(first_future - 1, me.size() - 1)];
        }
        out.push_back(from_knn ? knn_probs[steps - 1] : geo::viewing_probabilities(vp, manifest.grid, fov));
    }
    return out;
}

EpisodeSet build_episodes(const std::vector<Video> &videos, const std::vector<env::NetworkTrace> &traces,
                          const env::VideoManifest &manifest, const ExperimentConfig &config,
                          const predict::CuanParams *cuan) {
    const auto &s = config.stream;
    if (s.segments > manifest.segment_count())
        throw ConfigError("stream: " + std::to_string(s.segments) + " segments requested, manifest holds " +
                          std::to_string(manifest.segment_count()));
    EpisodeSet set;
    for (std::size_t v = 0; v < videos.size(); ++v) {
        const auto &video = videos[v];
        for (std::size_t u = 0; u < std::min(s.users_per_video, video.size()); ++u) {
            const double needed = static_cast<double>(s.segments) * manifest.segment_duration_s;
            if (video[u].timestamps.back() + 1.0 / video[u].sample_rate < needed - 1e-9)
                throw ConfigError("stream: trajectory " + video[u].user_id + " is shorter than the episode");
            const auto actual = segment_probabilities(video[u], manifest, s.segments, config.fov);
            const auto predicted = predicted_segment_probabilities(video, u, manifest, s.segments, s.viewpoint_source,
                                                                   config.prediction, config.fov, cuan,
                                                                   config.trajectory_generator.seed + 7919 * v + u);
            for (const auto &trace : traces) {
                set.episodes.emplace_back(manifest, trace, actual, predicted, s.env);
                set.keys.push_back({trace.name, video[u].video_id, video[u].user_id});
            }
        }
    }
    return set;
}

// Evaluation ---------------------------------------------------------------

std::vector<predict::PredictionTask> training_tasks(const std::vector<Video> &videos, const PredictionSettings &settings,
                                                    std::uint64_t seed) {
    std::vector<predict::PredictionTask> out;
    for (std::size_t v = 0; v < videos.size(); ++v) {
        auto tasks = predict::build_tasks(downsample_video(videos[v], settings.downsample), settings.window, seed + v);
        out.insert(out.end(), std::make_move_iterator(tasks.begin()), std::make_move_iterator(tasks.end()));
    }
    return out;
}

std::vector<predict::PredictionTask> evaluation_tasks(const std::vector<Video> &videos,
                                                      const PredictionSettings &settings, std::uint64_t seed) {
    auto all = training_tasks(videos, settings, seed);
    if (all.size() <= settings.max_tasks) return all;
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[rng() % k]);
    idx.resize(settings.max_tasks);
    std::sort(idx.begin(), idx.end());
    std::vector<predict::PredictionTask> out;
    for (auto i : idx) out.push_back(std::move(all[i]));
    return out;
}

std::vector<PredictionRow> evaluate_predictors(const std::vector<predict::PredictionTask> &tasks,
                                               const std::vector<std::string> &predictors,
                                               const PredictionSettings &settings, double sample_rate_hz,
                                               const geo::TileGrid &grid, const geo::FieldOfView &fov,
                                               const predict::CuanParams *cuan) {
    std::vector<std::size_t> steps;
    for (double h : settings.horizons_s) {
        const auto k = static_cast<std::size_t>(std::llround(h * sample_rate_hz));
        if (k == 0 || k > settings.window.horizon)
            throw ConfigError("prediction: horizon " + fmt_exact(h) + " s falls outside the task window");
        steps.push_back(k - 1);
    }
    std::vector<PredictionRow> rows;
    for (const auto &name : predictors) {
        // per task, per horizon: lon error, lat error, hit
        std::vector<std::array<double, 3>> acc(tasks.size() * steps.size());
        const auto n = static_cast<std::ptrdiff_t>(tasks.size());
        std::string failure;
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            try {
                const auto &task = tasks[static_cast<std::size_t>(i)];
                std::vector<geo::ViewProbabilities> knn_probs;
                const auto path = run_predictor(name, task, settings.knn_k, grid, fov, cuan, &knn_probs);
                for (std::size_t h = 0; h < steps.size(); ++h) {
                    const auto k = steps[h];
                    const auto pred = predict::to_viewpoint(task, path[k]);
                    const auto actual = predict::to_viewpoint(task, task.target[k]);
                    const auto err = geo::angular_errors(pred, actual);
                    const auto pp = name == "knn" ? knn_probs[k] : geo::viewing_probabilities(pred, grid, fov);
                    const auto ap = geo::viewing_probabilities(actual, grid, fov);
                    acc[static_cast<std::size_t>(i) * steps.size() + h] = {err.longitude, err.latitude,
                                                                           geo::hit_rate(pp, ap, settings.hit_threshold)};
                }
            } catch (const std::exception &e) {
#pragma omp critical
                if (failure.empty()) failure = e.what();
            }
        }
        if (!failure.empty()) throw PredictionError("predictor " + name + ": " + failure);
        for (std::size_t h = 0; h < steps.size(); ++h) {
            PredictionRow row{name, settings.horizons_s[h], tasks.size(), 0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < tasks.size(); ++i) {
                const auto &a = acc[i * steps.size() + h];
                row.longitude_error_deg += a[0];
                row.latitude_error_deg += a[1];
                row.hit_rate += a[2];
            }
            const auto count = static_cast<double>(std::max<std::size_t>(tasks.size(), 1));
            row.longitude_error_deg /= count;
            row.latitude_error_deg /= count;
            row.hit_rate /= count;
            rows.push_back(row);
        }
    }
    return rows;
}

env::SegmentController make_controller(const std::string &name, const ExperimentConfig &config,
                                       const agent::AgentParams *agent) {
    if (name == "bb") return baselines::bb_controller(config.bb);
    if (name == "greedy") return baselines::greedy_controller();
    if (name == "agent") {
        if (!agent) throw ConfigError("agent controller requested without parameters");
        return agent::agent_controller(*agent, config.stream.order, config.agent_train.seed);
    }
    throw ConfigError("no controller named '" + name + "'");
}

namespace {

StreamRow score(const std::vector<env::StepResult> &steps) {
    StreamRow row;
    row.segments = steps.size();
    const auto n = static_cast<double>(std::max<std::size_t>(steps.size(), 1));
    for (const auto &s : steps) {
        row.q1 += s.parts.q1 / n;
        row.q2 += s.parts.q2 / n;
        row.q3 += s.parts.q3 / n;
        row.q4 += s.parts.q4 / n;
        row.total += s.reward / n;
    }
    return row;
}

StreamRow play(const std::string &controller, const env::Episode &ep, const env::StreamState &start,
               const ExperimentConfig &config, const env::SegmentController *ctl) {
    if (controller != "oracle") return score(env::run_episode(ep, start, *ctl, config.stream.segments).steps);
    const auto best = baselines::brute_force_oracle(ep, start, config.stream.segments);
    std::vector<env::StepResult> steps;
    auto state = start;
    for (const auto &levels : best.levels) {
        steps.push_back(env::step(ep, state, state.segment_index, levels));
        state = steps.back().next;
    }
    return score(steps);
}

} // namespace

std::vector<StreamRow> evaluate_stream(const EpisodeSet &set, const std::vector<std::string> &controllers,
                                       const ExperimentConfig &config, const agent::AgentParams *agent) {
    const auto starts = config.stream.starts;
    std::vector<StreamRow> rows;
    for (const auto &name : controllers) {
        const bool oracle = name == "oracle";
        if (oracle && config.stream.oracle_horizon < config.stream.segments) continue;
        const auto ctl = oracle ? env::SegmentController{} : make_controller(name, config, agent);
        std::vector<StreamRow> part(set.episodes.size() * starts);
        const auto n = static_cast<std::ptrdiff_t>(part.size());
        std::string failure;
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto e = static_cast<std::size_t>(i) / starts;
            const auto k = static_cast<std::uint64_t>(static_cast<std::size_t>(i) % starts);
            try {
                const auto &ep = set.episodes[e];
                auto row = play(name, ep, env::reset(ep, k), config, &ctl);
                row.controller = name;
                row.trace = set.keys[e].trace;
                row.video = set.keys[e].video;
                row.user = set.keys[e].user;
                row.start_seed = k;
                part[static_cast<std::size_t>(i)] = std::move(row);
            } catch (const std::exception &ex) {
#pragma omp critical
                if (failure.empty()) failure = ex.what();
            }
        }
        if (!failure.empty()) throw Error("controller " + name + ": " + failure);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

std::vector<ControllerSummary> summarize(const std::vector<StreamRow> &rows) {
    std::vector<ControllerSummary> out;
    for (const auto &r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const auto &s) { return s.controller == r.controller; });
        if (it == out.end()) {
            out.push_back({r.controller, 0, 0, 0, 0, 0, 0});
            it = out.end() - 1;
        }
        ++it->episodes;
        it->q1 += r.q1;
        it->q2 += r.q2;
        it->q3 += r.q3;
        it->q4 += r.q4;
        it->total += r.total;
    }
    for (auto &s : out) {
        const auto n = static_cast<double>(s.episodes);
        s.q1 /= n;
        s.q2 /= n;
        s.q3 /= n;
        s.q4 /= n;
        s.total /= n;
    }
    return out;
}

// Experiments --------------------------------------------------------------

predict::CuanTrainResult train_cuan(const ExperimentConfig &config, const predict::EpochCallback &on_epoch) {
    const auto videos = load_videos(config, true);
    const auto tasks = training_tasks(videos, config.prediction, config.cuan_train.seed);
    if (tasks.empty()) throw ConfigError("train-cuan: no training windows fit the trajectories");
    return predict::cuan_train(tasks, config.cuan_train, on_epoch);
}

namespace {

std::optional<predict::CuanParams> cuan_for(const ExperimentConfig &config, bool needed) {
    if (!needed) return std::nullopt;
    if (!config.cuan_checkpoint.empty()) return predict::load_cuan(config.cuan_checkpoint);
    return train_cuan(config).params;
}

double sample_rate_of(const std::vector<Video> &videos, std::size_t downsample) {
    for (const auto &v : videos)
        if (!v.empty()) return v.front().sample_rate / static_cast<double>(downsample);
    throw ConfigError("no trajectories");
}

struct StreamData {
    env::VideoManifest manifest;
    std::vector<env::NetworkTrace> traces;
    std::vector<Video> videos;
};

StreamData stream_data(const ExperimentConfig &config, bool training) {
    return {load_manifest(config), load_traces(config, training), load_videos(config, training)};
}

agent::TrainResult train_agent_on(const StreamData &data, ExperimentConfig config, const predict::CuanParams *cuan,
                                  const agent::EpisodeCallback &on_episode) {
    config.agent_train.shape.levels = data.manifest.level_count();
    const auto set = build_episodes(data.videos, data.traces, data.manifest, config, cuan);
    auto train_cfg = config.agent_train;
    if (train_cfg.max_segments == 0) train_cfg.max_segments = config.stream.segments;
    return agent::train(set.episodes, train_cfg, on_episode);
}

std::optional<agent::AgentParams> agent_for(const ExperimentConfig &config, const predict::CuanParams *cuan) {
    if (!contains(config.controllers, "agent")) return std::nullopt;
    if (!config.agent_checkpoint.empty()) return agent::load_agent(config.agent_checkpoint);
    return train_agent_on(stream_data(config, true), config, cuan, {}).params;
}

} // namespace

agent::TrainResult train_agent(const ExperimentConfig &config, const agent::EpisodeCallback &on_episode) {
    config.validate();
    const auto cuan = cuan_for(config, config.stream.viewpoint_source == "cuan");
    return train_agent_on(stream_data(config, true), config, cuan ? &*cuan : nullptr, on_episode);
}

ExperimentResult run_experiment(const ExperimentConfig &config) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    if (config.mode == Mode::Predict) {
        const auto videos = load_videos(config, false);
        const auto tasks = evaluation_tasks(videos, config.prediction, config.trajectory_generator.seed);
        const auto cuan = cuan_for(config, contains(config.predictors, "cuan"));
        const double rate = sample_rate_of(videos, config.prediction.downsample);
        for (const auto &p : config.predictors) {
            try {
                auto rows = evaluate_predictors(tasks, {p}, config.prediction, rate, config.grid, config.fov,
                                                cuan ? &*cuan : nullptr);
                result.prediction.insert(result.prediction.end(), rows.begin(), rows.end());
            } catch (const Error &e) {
                result.errors.push_back(e.what());
            }
        }
    } else {
        const auto cuan = cuan_for(config, config.stream.viewpoint_source == "cuan");
        const auto agent = agent_for(config, cuan ? &*cuan : nullptr);
        const auto data = stream_data(config, false);
        const auto set = build_episodes(data.videos, data.traces, data.manifest, config, cuan ? &*cuan : nullptr);
        for (const auto &c : config.controllers) {
            try {
                auto rows = evaluate_stream(set, {c}, config, agent ? &*agent : nullptr);
                result.stream.insert(result.stream.end(), rows.begin(), rows.end());
            } catch (const Error &e) {
                result.errors.push_back(e.what());
            }
        }
    }
    emit_report(result, config.output_dir);
    return result;
}

// Reports ------------------------------------------------------------------

void write_prediction_csv(std::ostream &out, const std::vector<PredictionRow> &rows) {
    out << "predictor,horizon_s,tasks,longitude_error_deg,latitude_error_deg,hit_rate\n";
    for (const auto &r : rows)
        out << r.predictor << ',' << fmt_exact(r.horizon_s) << ',' << r.tasks << ',' << fmt_exact(r.longitude_error_deg)
            << ',' << fmt_exact(r.latitude_error_deg) << ',' << fmt_exact(r.hit_rate) << '\n';
}

void write_stream_csv(std::ostream &out, const std::vector<StreamRow> &rows) {
    out << "controller,trace,video,user,start_seed,segments,q1,q2,q3,q4,total\n";
    for (const auto &r : rows)
        out << r.controller << ',' << r.trace << ',' << r.video << ',' << r.user << ',' << r.start_seed << ','
            << r.segments << ',' << fmt_exact(r.q1) << ',' << fmt_exact(r.q2) << ',' << fmt_exact(r.q3) << ','
            << fmt_exact(r.q4) << ',' << fmt_exact(r.total) << '\n';
}

void write_summary_csv(std::ostream &out, const std::vector<ControllerSummary> &rows) {
    out << "controller,episodes,q1,q2,q3,q4,total\n";
    for (const auto &r : rows)
        out << r.controller << ',' << r.episodes << ',' << fmt_exact(r.q1) << ',' << fmt_exact(r.q2) << ','
            << fmt_exact(r.q3) << ',' << fmt_exact(r.q4) << ',' << fmt_exact(r.total) << '\n';
}

namespace {

template <class Writer, class Rows>
void write_file(const std::filesystem::path &path, Writer writer, const Rows &rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    writer(out, rows);
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace

void emit_report(const ExperimentResult &result, const std::filesystem::path &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

    json summary;
    summary["schema_version"] = kSchemaVersion;
    summary["name"] = result.config.name;
    summary["mode"] = to_string(result.config.mode);
    json files = json::array();
    if (result.config.mode == Mode::Predict) {
        write_file(dir / "prediction.csv", write_prediction_csv, result.prediction);
        files.push_back("prediction.csv");
        json rows = json::array();
        for (const auto &r : result.prediction)
            rows.push_back({{"predictor", r.predictor}, {"horizon_s", r.horizon_s}, {"hit_rate", r.hit_rate},
                            {"longitude_error_deg", r.longitude_error_deg}, {"latitude_error_deg", r.latitude_error_deg}});
        summary["results"] = rows;
    } else {
        const auto summ = summarize(result.stream);
        write_file(dir / "stream.csv", write_stream_csv, result.stream);
        write_file(dir / "stream_summary.csv", write_summary_csv, summ);
        files.push_back("stream.csv");
        files.push_back("stream_summary.csv");
        json rows = json::array();
        for (const auto &s : summ)
            rows.push_back({{"controller", s.controller}, {"episodes", s.episodes}, {"q1", s.q1}, {"q2", s.q2},
                            {"q3", s.q3}, {"q4", s.q4}, {"total", s.total}});
        summary["results"] = rows;
    }
    if (!result.errors.empty()) {
        std::ofstream out(dir / "errors.csv", std::ios::binary);
        out << "error\n";
        for (auto e : result.errors) {
            std::replace(e.begin(), e.end(), '\n', ' ');
            out << e << '\n';
        }
        files.push_back("errors.csv");
    }
    summary["files"] = files;
    summary["errors"] = result.errors.size();
    summary["config"] = config_json(result.config);
    std::ofstream out(dir / "summary.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "summary.json").string());
    out << summary.dump(2) << '\n';
}

// Sweeps -------------------------------------------------------------------

std::vector<SweepRow> run_sweep(const SweepConfig &sweep) {
    const auto &base = sweep.base;
    base.validate();
    const auto cuan = cuan_for(base, base.stream.viewpoint_source == "cuan");
    const auto *cp = cuan ? &*cuan : nullptr;
    const auto train_data = stream_data(base, true);
    const auto eval_data = stream_data(base, false);

    const auto evaluate = [&](const ExperimentConfig &cfg, const agent::AgentParams &params) {
        const auto set = build_episodes(eval_data.videos, eval_data.traces, eval_data.manifest, cfg, cp);
        return summarize(evaluate_stream(set, {"agent"}, cfg, &params)).front();
    };
    const auto trained = [&](const ExperimentConfig &cfg) {
        return train_agent_on(train_data, cfg, cp, {}).params;
    };

    std::vector<SweepRow> rows;
    for (auto seed : sweep.seeds) {
        auto cfg = base;
        cfg.agent_train.seed = seed;
        switch (sweep.kind) {
        case SweepKind::Order:
            for (auto order : sweep.orders) {
                cfg.agent_train.order = order;
                cfg.stream.order = order;
                rows.push_back({"order", seq::to_string(order), seed, evaluate(cfg, trained(cfg))});
            }
            break;
        case SweepKind::BufferCap: {
            const auto params = base.agent_checkpoint.empty() ? trained(cfg) : agent::load_agent(base.agent_checkpoint);
            for (double cap : sweep.buffer_caps_s) {
                auto c = cfg;
                c.stream.env.buffer_cap_s = cap;
                c.stream.env.initial_buffer_s = std::min(c.stream.env.initial_buffer_s, cap);
                rows.push_back({"buffer_cap_s", fmt_exact(cap), seed, evaluate(c, params)});
            }
            break;
        }
        case SweepKind::Eta:
            for (const auto &w : sweep.weights) {
                auto c = cfg;
                c.stream.env.weights = w;
                rows.push_back({"eta", fmt_exact(w.eta1) + "/" + fmt_exact(w.eta2) + "/" + fmt_exact(w.eta3), seed,
                                evaluate(c, trained(c))});
            }
            break;
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows) {
    out << "parameter,value,seed,controller,episodes,q1,q2,q3,q4,total\n";
    for (const auto &r : rows) {
        const auto &s = r.summary;
        out << r.parameter << ',' << r.value << ',' << r.seed << ',' << s.controller << ',' << s.episodes << ','
            << fmt_exact(s.q1) << ',' << fmt_exact(s.q2) << ',' << fmt_exact(s.q3) << ',' << fmt_exact(s.q4) << ','
            << fmt_exact(s.total) << '\n';
    }
}

} // namespace srl360::harness
