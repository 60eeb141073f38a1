#pragma once

#include "srl360/agent.hpp"
#include "srl360/baselines.hpp"
#include "srl360/environment.hpp"
#include "srl360/predictors.hpp"
#include "srl360/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace srl360::harness {

/// Version of the config and report schemas. Every JSON summary carries it.
inline constexpr int kSchemaVersion = 1;

enum class Mode { Predict, Stream };

std::string to_string(Mode mode);
Mode parse_mode(const std::string &text);

struct PredictionSettings {
    predict::TaskWindow window;
    std::size_t downsample = 5; ///< keep every n-th raw sample
    std::size_t knn_k = 5;
    std::size_t max_tasks = 200;
    std::vector<double> horizons_s{1.0, 3.0, 5.0};
    double hit_threshold = 0.0;
};

struct StreamSettings {
    env::EnvConfig env;
    std::size_t segments = 20;       ///< per episode; the manifest must hold at least this many
    std::size_t users_per_video = 2; ///< evaluated users per video (the rest serve as cross-users)
    std::size_t starts = 1;          ///< reset seeds per (trace, user) pair
    seq::OrderMode order = seq::OrderMode::HighToLow;
    std::string viewpoint_source = "actual"; ///< actual | static | lr | knn | cuan
    std::size_t oracle_horizon = 0;          ///< > 0 adds a brute-force row per episode
};

/// Everything an experiment depends on. Generated data is a pure function of the generator specs,
/// so the config alone replays a run.
struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name = "experiment";
    Mode mode = Mode::Predict;
    std::filesystem::path output_dir = "out";
    geo::TileGrid grid{3, 3};
    geo::FieldOfView fov;

    /// Trajectories: an index file, or generated videos with seeds generator.seed + v (evaluation)
    /// and generator.seed + 10000 + v (training).
    std::filesystem::path trajectory_index;
    std::filesystem::path train_trajectory_index;
    SyntheticTrajectorySpec trajectory_generator;
    std::size_t eval_videos = 6;
    std::size_t train_videos = 20;

    /// Traces: every *.csv in a directory (sorted by name), or generated ones. Training uses seeds
    /// shifted by 10000 when generated and the same files otherwise.
    std::filesystem::path trace_dir;
    SyntheticTraceSpec trace_generator;
    std::size_t trace_count = 10;

    std::filesystem::path manifest_path;
    env::ManifestSpec manifest_generator;

    std::vector<std::string> predictors{"static", "lr", "knn", "cuan"};
    std::vector<std::string> controllers{"bb", "greedy", "agent"};
    std::filesystem::path cuan_checkpoint; ///< empty: train in process
    predict::CuanTrainConfig cuan_train;
    std::filesystem::path agent_checkpoint; ///< empty: train in process
    agent::TrainConfig agent_train;
    baselines::BbConfig bb;

    PredictionSettings prediction;
    StreamSettings stream;

    /// Throws ConfigError on unknown method names, missing files or inconsistent sizes.
    void validate() const;
};

std::string config_to_json(const ExperimentConfig &config);
/// Accepts a bare config object or a report summary holding it under "config". Missing fields keep
/// their defaults.
ExperimentConfig config_from_json(const std::string &text);
ExperimentConfig load_config(const std::filesystem::path &path);

// Data -------------------------------------------------------------------

using Video = std::vector<geo::Trajectory>;

std::vector<Video> load_videos(const ExperimentConfig &config, bool training);
std::vector<env::NetworkTrace> load_traces(const ExperimentConfig &config, bool training);
env::VideoManifest load_manifest(const ExperimentConfig &config);

/// Viewing probabilities per segment, from the viewpoint at each segment's midpoint.
std::vector<geo::ViewProbabilities> segment_probabilities(const geo::Trajectory &trajectory,
                                                         const env::VideoManifest &manifest, std::size_t segments,
                                                         const geo::FieldOfView &fov = {});

/// What the client believes per segment: the named predictor run at each segment start, aimed at
/// the segment midpoint. Segments without enough history or future cross-user data fall back to the
/// last observed viewpoint.
std::vector<geo::ViewProbabilities> predicted_segment_probabilities(
    const Video &video, std::size_t user, const env::VideoManifest &manifest, std::size_t segments,
    const std::string &source, const PredictionSettings &settings, const geo::FieldOfView &fov,
    const predict::CuanParams *cuan, std::uint64_t seed);

struct EpisodeKey {
    std::string trace;
    std::string video;
    std::string user;
};

struct EpisodeSet {
    std::vector<env::Episode> episodes;
    std::vector<EpisodeKey> keys;
};

/// Pairs every trace with the first users_per_video users of every video. The manifest and traces
/// must outlive the returned episodes.
EpisodeSet build_episodes(const std::vector<Video> &videos, const std::vector<env::NetworkTrace> &traces,
                          const env::VideoManifest &manifest, const ExperimentConfig &config,
                          const predict::CuanParams *cuan);

// Evaluation -------------------------------------------------------------

struct PredictionRow {
    std::string predictor;
    double horizon_s = 0.0;
    std::size_t tasks = 0;
    double longitude_error_deg = 0.0;
    double latitude_error_deg = 0.0;
    double hit_rate = 0.0;
};

struct StreamRow {
    std::string controller;
    std::string trace;
    std::string video;
    std::string user;
    std::uint64_t start_seed = 0;
    std::size_t segments = 0;
    /// Per-segment means.
    double q1 = 0.0, q2 = 0.0, q3 = 0.0, q4 = 0.0, total = 0.0;
};

struct ControllerSummary {
    std::string controller;
    std::size_t episodes = 0;
    double q1 = 0.0, q2 = 0.0, q3 = 0.0, q4 = 0.0, total = 0.0;
};

/// Prediction tasks for evaluation, capped at settings.max_tasks with a seeded choice.
std::vector<predict::PredictionTask> evaluation_tasks(const std::vector<Video> &videos,
                                                      const PredictionSettings &settings, std::uint64_t seed);
/// Training tasks over all windows of the given videos.
std::vector<predict::PredictionTask> training_tasks(const std::vector<Video> &videos,
                                                    const PredictionSettings &settings, std::uint64_t seed);

/// `sample_rate_hz` is the rate of the (downsampled) task samples; horizons map to steps through it.
std::vector<PredictionRow> evaluate_predictors(const std::vector<predict::PredictionTask> &tasks,
                                               const std::vector<std::string> &predictors,
                                               const PredictionSettings &settings, double sample_rate_hz,
                                               const geo::TileGrid &grid,
                                               const geo::FieldOfView &fov, const predict::CuanParams *cuan);

/// Resolves a controller name (bb, greedy, agent) to a controller.
env::SegmentController make_controller(const std::string &name, const ExperimentConfig &config,
                                       const agent::AgentParams *agent);

/// Runs every controller on every episode and start seed. Episodes run in parallel; rows come back in
/// (controller, episode, start) order.
std::vector<StreamRow> evaluate_stream(const EpisodeSet &set, const std::vector<std::string> &controllers,
                                       const ExperimentConfig &config, const agent::AgentParams *agent);

std::vector<ControllerSummary> summarize(const std::vector<StreamRow> &rows);

// Experiments ------------------------------------------------------------

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<PredictionRow> prediction;
    std::vector<StreamRow> stream;
    std::vector<std::string> errors; ///< per-item failures
};

/// Loads or trains the models the config needs, evaluates and emits the report into output_dir.
ExperimentResult run_experiment(const ExperimentConfig &config);

/// Trains CUAN on the config's training videos.
predict::CuanTrainResult train_cuan(const ExperimentConfig &config, const predict::EpochCallback &on_epoch = {});
/// Trains the agent on the config's training videos and traces.
agent::TrainResult train_agent(const ExperimentConfig &config, const agent::EpisodeCallback &on_episode = {});

void write_prediction_csv(std::ostream &out, const std::vector<PredictionRow> &rows);
void write_stream_csv(std::ostream &out, const std::vector<StreamRow> &rows);
void write_summary_csv(std::ostream &out, const std::vector<ControllerSummary> &rows);

/// prediction.csv and/or stream.csv + stream_summary.csv, errors.csv when something failed, and
/// summary.json with the schema version and the full config. Throws IoError when `dir` is unwritable.
void emit_report(const ExperimentResult &result, const std::filesystem::path &dir);

// Sweeps -----------------------------------------------------------------

enum class SweepKind { Order, BufferCap, Eta };

std::string to_string(SweepKind kind);
SweepKind parse_sweep_kind(const std::string &text);

struct SweepConfig {
    ExperimentConfig base;
    SweepKind kind = SweepKind::Order;
    std::vector<std::uint64_t> seeds{1};
    std::vector<seq::OrderMode> orders{seq::OrderMode::HighToLow, seq::OrderMode::LowToHigh, seq::OrderMode::ZScan,
                                       seq::OrderMode::Random};
    std::vector<double> buffer_caps_s{2.0, 4.0, 6.0, 8.0, 10.0};
    std::vector<qoe::QoeWeights> weights{{1.0, 1.0, 4.3}, {1.0, 1.0, 1.0}, {0.5, 0.5, 4.3}};
};

struct SweepRow {
    std::string parameter;
    std::string value;
    std::uint64_t seed = 0;
    ControllerSummary summary;
};

/// Order and Eta train one agent per (value, seed); BufferCap trains one agent per seed (or loads the
/// checkpoint) and re-evaluates it under each cap.
std::vector<SweepRow> run_sweep(const SweepConfig &config);

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows);

} // namespace srl360::harness
