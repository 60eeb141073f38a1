// Command-line front end: dataset generation, training, evaluation and sweeps.

#include "srl360/errors.hpp"
#include "srl360/format.hpp"
#include "srl360/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

using namespace srl360;
using namespace srl360::harness;
namespace fs = std::filesystem;

namespace {

/// Relative output paths resolve under $SRL360_OUTPUT_ROOT when it is set.
fs::path output_path(const fs::path &p) {
    const char *root = std::getenv("SRL360_OUTPUT_ROOT");
    if (!root || !*root || p.is_absolute()) return p;
    return fs::path(root) / p;
}

/// Flags that override config fields. Unset flags leave the config (or its defaults) untouched.
struct Overrides {
    std::string config;
    std::optional<std::string> name, output, trajectory_index, train_trajectory_index, trace_dir, manifest;
    std::optional<std::string> cuan_checkpoint, agent_checkpoint, order, viewpoint_source, grid;
    std::optional<std::vector<std::string>> predictors, controllers;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> segments, eval_videos, train_videos, trace_count, users_per_video, max_tasks;
    std::optional<std::size_t> epochs, workers;
    std::optional<std::uint64_t> max_steps;
    std::optional<double> buffer_cap, eta1, eta2, eta3, policy_lr, value_lr;
    bool threaded = false;
    bool print_config = false;

    void add(CLI::App &app) {
        app.add_option("-c,--config", config, "JSON config file (a report summary.json also works)");
        app.add_option("--name", name, "Experiment name");
        app.add_option("-o,--output", output, "Output directory");
        app.add_option("--seed", seed, "Seed for every generator and trainer");
        app.add_option("--grid", grid, "Tile grid as ROWSxCOLS");
        app.add_option("--trajectory-index", trajectory_index, "Evaluation trajectory index JSON");
        app.add_option("--train-trajectory-index", train_trajectory_index, "Training trajectory index JSON");
        app.add_option("--trace-dir", trace_dir, "Directory of throughput trace CSVs");
        app.add_option("--manifest", manifest, "Video manifest JSON");
        app.add_option("--eval-videos", eval_videos, "Generated evaluation videos");
        app.add_option("--train-videos", train_videos, "Generated training videos");
        app.add_option("--trace-count", trace_count, "Generated traces");
        app.add_option("--predictors", predictors, "static, lr, knn, cuan")->delimiter(',');
        app.add_option("--controllers", controllers, "bb, greedy, agent, oracle")->delimiter(',');
        app.add_option("--cuan-checkpoint", cuan_checkpoint, "Trained CUAN parameters");
        app.add_option("--agent-checkpoint", agent_checkpoint, "Trained agent parameters");
        app.add_option("--segments", segments, "Segments per streaming episode");
        app.add_option("--users-per-video", users_per_video, "Evaluated users per video");
        app.add_option("--max-tasks", max_tasks, "Prediction tasks evaluated");
        app.add_option("--buffer-cap", buffer_cap, "Playback buffer cap, s");
        app.add_option("--eta1", eta1, "Temporal variation weight");
        app.add_option("--eta2", eta2, "Spatial variation weight");
        app.add_option("--eta3", eta3, "Rebuffering weight");
        app.add_option("--order", order, "Tile decision order: high_to_low, low_to_high, zscan, random");
        app.add_option("--viewpoint-source", viewpoint_source, "actual or a predictor name");
        app.add_option("--epochs", epochs, "CUAN epochs");
        app.add_option("--max-steps", max_steps, "Agent training steps");
        app.add_option("--workers", workers, "Agent workers");
        app.add_option("--policy-lr", policy_lr, "Agent policy learning rate");
        app.add_option("--value-lr", value_lr, "Agent value learning rate");
        app.add_flag("--threaded", threaded, "Run agent workers on threads (not reproducible)");
        app.add_flag("--print-config", print_config, "Print the effective config and exit");
    }

    ExperimentConfig resolve(Mode mode) const {
        auto c = config.empty() ? ExperimentConfig{} : load_config(config);
        c.mode = mode;
        if (name) c.name = *name;
        if (output) c.output_dir = *output;
        c.output_dir = output_path(c.output_dir);
        if (seed) {
            c.trajectory_generator.seed = *seed;
            c.trace_generator.seed = *seed;
            c.manifest_generator.seed = *seed;
            c.cuan_train.seed = *seed;
            c.agent_train.seed = *seed;
        }
        if (grid) {
            const auto x = grid->find('x');
            if (x == std::string::npos) throw ConfigError("--grid expects ROWSxCOLS");
            c.grid = {std::stoi(grid->substr(0, x)), std::stoi(grid->substr(x + 1))};
        }
        if (trajectory_index) c.trajectory_index = *trajectory_index;
        if (train_trajectory_index) c.train_trajectory_index = *train_trajectory_index;
        if (trace_dir) c.trace_dir = *trace_dir;
        if (manifest) c.manifest_path = *manifest;
        if (eval_videos) c.eval_videos = *eval_videos;
        if (train_videos) c.train_videos = *train_videos;
        if (trace_count) c.trace_count = *trace_count;
        if (predictors) c.predictors = *predictors;
        if (controllers) c.controllers = *controllers;
        if (cuan_checkpoint) c.cuan_checkpoint = *cuan_checkpoint;
        if (agent_checkpoint) c.agent_checkpoint = *agent_checkpoint;
        if (segments) c.stream.segments = *segments;
        if (users_per_video) c.stream.users_per_video = *users_per_video;
        if (max_tasks) c.prediction.max_tasks = *max_tasks;
        if (buffer_cap) c.stream.env.buffer_cap_s = *buffer_cap;
        if (eta1) c.stream.env.weights.eta1 = *eta1;
        if (eta2) c.stream.env.weights.eta2 = *eta2;
        if (eta3) c.stream.env.weights.eta3 = *eta3;
        if (order) c.stream.order = c.agent_train.order = seq::parse_order_mode(*order);
        if (viewpoint_source) c.stream.viewpoint_source = *viewpoint_source;
        if (epochs) c.cuan_train.epochs = *epochs;
        if (max_steps) c.agent_train.max_steps = *max_steps;
        if (workers) c.agent_train.workers = *workers;
        if (policy_lr) c.agent_train.policy_learning_rate = *policy_lr;
        if (value_lr) c.agent_train.value_learning_rate = *value_lr;
        if (threaded) c.agent_train.threaded = true;
        return c;
    }
};

void prepare(const fs::path &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_config(const ExperimentConfig &c, const fs::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << config_to_json(c) << '\n';
}

int report_errors(const ExperimentResult &r) {
    for (const auto &e : r.errors) std::cerr << "error: " << e << '\n';
    return r.errors.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Tile-based 360-degree video streaming: viewport prediction and sequential bitrate RL"};
    app.require_subcommand(1);

    // gen-traces
    auto *traces = app.add_subcommand("gen-traces", "Generate synthetic throughput traces as CSV");
    SyntheticTraceSpec trace_spec;
    std::size_t trace_count = 10;
    std::string trace_out = "traces";
    bool no_augment = false;
    traces->add_option("-n,--count", trace_count, "Number of traces");
    traces->add_option("--seed", trace_spec.seed, "First seed");
    traces->add_option("--duration", trace_spec.duration_s, "Seconds per trace");
    traces->add_option("--states", trace_spec.state_means_mbps, "Mean throughput per Markov state, Mbps")->delimiter(',');
    traces->add_option("--switch-probability", trace_spec.switch_probability, "State switch probability per second");
    traces->add_flag("--no-augment", no_augment, "Keep raw throughput (no +3 Mbps shift)");
    traces->add_option("-o,--output", trace_out, "Output directory");

    // gen-trajectories
    auto *trajs = app.add_subcommand("gen-trajectories", "Generate synthetic multi-user head-movement trajectories");
    SyntheticTrajectorySpec traj_spec;
    std::size_t videos = 1;
    std::string traj_out = "trajectories";
    trajs->add_option("--videos", videos, "Number of videos");
    trajs->add_option("--users", traj_spec.user_count, "Users per video");
    trajs->add_option("--groups", traj_spec.group_count, "Attention groups per video");
    trajs->add_option("--duration", traj_spec.duration_s, "Seconds per video");
    trajs->add_option("--frame-rate", traj_spec.frame_rate, "Samples per second");
    trajs->add_option("--noise", traj_spec.noise_sigma_deg, "Per-sample noise, degrees");
    trajs->add_option("--max-lag", traj_spec.max_lag_s, "Largest per-user lag, s");
    trajs->add_option("--seed", traj_spec.seed, "First seed");
    trajs->add_option("-o,--output", traj_out, "Output directory");

    Overrides train_cuan_o, train_agent_o, predict_o, stream_o, sweep_o;
    auto *tc = app.add_subcommand("train-cuan", "Train the cross-user attentive predictor");
    train_cuan_o.add(*tc);
    auto *ta = app.add_subcommand("train-agent", "Train the sequential bitrate agent");
    train_agent_o.add(*ta);
    auto *ep = app.add_subcommand("eval-predict", "Evaluate viewport predictors at 1/3/5 s horizons");
    predict_o.add(*ep);
    auto *es = app.add_subcommand("eval-stream", "Evaluate bitrate controllers on trace x trajectory episodes");
    stream_o.add(*es);

    auto *sw = app.add_subcommand("sweep", "Decision order, buffer cap or QoE weight ablation");
    sweep_o.add(*sw);
    std::string sweep_kind = "order";
    std::vector<std::uint64_t> sweep_seeds{1};
    std::vector<std::string> sweep_orders;
    std::vector<double> sweep_caps;
    sw->add_option("--kind", sweep_kind, "order, buffer or eta");
    sw->add_option("--seeds", sweep_seeds, "Training seeds")->delimiter(',');
    sw->add_option("--orders", sweep_orders, "Orders for the order sweep")->delimiter(',');
    sw->add_option("--caps", sweep_caps, "Buffer caps for the buffer sweep, s")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (*traces) {
            trace_spec.augment = !no_augment;
            const auto dir = output_path(trace_out);
            prepare(dir);
            for (const auto &t : synthesize_traces(trace_spec, trace_count)) {
                env::save_trace_csv(dir / (t.name + ".csv"), t);
                std::cout << (dir / (t.name + ".csv")).string() << '\n';
            }
            return 0;
        }
        if (*trajs) {
            const auto dir = output_path(traj_out);
            prepare(dir);
            std::vector<geo::Trajectory> all;
            for (std::size_t v = 0; v < videos; ++v) {
                auto spec = traj_spec;
                spec.seed = traj_spec.seed + v;
                spec.video_id = "video" + std::to_string(v);
                for (auto &t : synthesize_trajectories(spec)) all.push_back(std::move(t));
            }
            predict::save_trajectory_set(dir, all);
            std::cout << "wrote " << all.size() << " trajectories to " << dir.string() << '\n';
            return 0;
        }
        if (*tc) {
            const auto cfg = train_cuan_o.resolve(Mode::Predict);
            if (train_cuan_o.print_config) return std::cout << config_to_json(cfg) << '\n', 0;
            cfg.validate();
            prepare(cfg.output_dir);
            const auto result = train_cuan(cfg, [](std::size_t epoch, double loss, const predict::CuanParams &) {
                std::cerr << "epoch " << epoch << " loss " << fmt_exact(loss) << '\n';
            });
            predict::save_cuan(cfg.output_dir / "cuan.ckpt", result.params);
            std::ofstream log(cfg.output_dir / "cuan_loss.csv", std::ios::binary);
            log << "epoch,loss\n";
            for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) log << e << ',' << fmt_exact(result.epoch_loss[e]) << '\n';
            write_config(cfg, cfg.output_dir / "config.json");
            std::cout << (cfg.output_dir / "cuan.ckpt").string() << '\n';
            return 0;
        }
        if (*ta) {
            const auto cfg = train_agent_o.resolve(Mode::Stream);
            if (train_agent_o.print_config) return std::cout << config_to_json(cfg) << '\n', 0;
            prepare(cfg.output_dir);
            std::uint64_t next = 0;
            const auto result = train_agent(cfg, [&](const agent::TrainLogRow &row, const agent::AgentParams &) {
                if (row.step < next) return;
                next = row.step + 10000;
                std::cerr << "step " << row.step << " mean_qoe " << fmt_exact(row.mean_qoe) << " entropy "
                          << fmt_exact(row.entropy) << '\n';
            });
            agent::save_agent(cfg.output_dir / "agent.ckpt", result.params);
            std::ofstream log(cfg.output_dir / "train_log.csv", std::ios::binary);
            agent::write_train_log(log, result.log);
            write_config(cfg, cfg.output_dir / "config.json");
            for (const auto &i : result.incidents) std::cerr << "incident: " << i << '\n';
            std::cout << (cfg.output_dir / "agent.ckpt").string() << '\n';
            return 0;
        }
        if (*ep || *es) {
            const auto &o = *ep ? predict_o : stream_o;
            const auto cfg = o.resolve(*ep ? Mode::Predict : Mode::Stream);
            if (o.print_config) return std::cout << config_to_json(cfg) << '\n', 0;
            const auto result = run_experiment(cfg);
            if (cfg.mode == Mode::Predict)
                write_prediction_csv(std::cout, result.prediction);
            else
                write_summary_csv(std::cout, summarize(result.stream));
            return report_errors(result);
        }
        if (*sw) {
            SweepConfig sweep;
            sweep.base = sweep_o.resolve(Mode::Stream);
            if (sweep_o.print_config) return std::cout << config_to_json(sweep.base) << '\n', 0;
            sweep.kind = parse_sweep_kind(sweep_kind);
            sweep.seeds = sweep_seeds;
            if (!sweep_orders.empty()) {
                sweep.orders.clear();
                for (const auto &s : sweep_orders) sweep.orders.push_back(seq::parse_order_mode(s));
            }
            if (!sweep_caps.empty()) sweep.buffer_caps_s = sweep_caps;
            const auto rows = run_sweep(sweep);
            prepare(sweep.base.output_dir);
            std::ofstream out(sweep.base.output_dir / "sweep.csv", std::ios::binary);
            write_sweep_csv(out, rows);
            nlohmann::ordered_json summary;
            summary["schema_version"] = kSchemaVersion;
            summary["sweep"] = to_string(sweep.kind);
            summary["seeds"] = sweep.seeds;
            summary["config"] = nlohmann::ordered_json::parse(config_to_json(sweep.base));
            std::ofstream(sweep.base.output_dir / "summary.json", std::ios::binary) << summary.dump(2) << '\n';
            write_sweep_csv(std::cout, rows);
            return 0;
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
