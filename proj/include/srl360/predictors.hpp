#pragma once

#include "srl360/geometry.hpp"
#include "srl360/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace srl360::predict {

using Path = std::vector<geo::NormalizedViewpoint>;

/// One prediction problem in a local frame: longitudes are measured from the user's last history
/// sample and unwrapped along each sequence, then divided by 180 (latitude by 90). Values may leave
/// [-1, 1] after unwrapping.
struct PredictionTask {
    Path history;                 ///< user samples t-H+1 .. t
    std::vector<Path> cross_user; ///< same window, each covering t-H+1 .. t+horizon
    std::size_t horizon = 0;
    Path target;                  ///< ground truth t+1 .. t+horizon, empty when unknown
    double origin_longitude = 0.0; ///< degrees, added back when leaving the frame

    /// Throws ParameterError on an empty history or short cross-user paths.
    void validate() const;
};

/// Leaves the task frame: canonical degrees.
geo::Viewpoint to_viewpoint(const PredictionTask &task, const geo::NormalizedViewpoint &local);

struct TaskWindow {
    std::size_t history = 6;  ///< H, steps
    std::size_t horizon = 30; ///< T, steps
    std::size_t stride = 6;   ///< steps between consecutive windows of one user
    std::size_t cross_user_count = 20;
};

/// Cuts prediction tasks from the trajectories of one video. Every user in turn is the predicted user;
/// cross-users are drawn without replacement from the others with `seed`. All trajectories must share
/// the sample count.
std::vector<PredictionTask> build_tasks(const std::vector<geo::Trajectory> &video, const TaskWindow &window,
                                        std::uint64_t seed);

/// One task for `user` with its last history sample at index `now` and the given cross-users.
/// Throws ParameterError when the window leaves the trajectories.
PredictionTask make_task(const std::vector<geo::Trajectory> &video, std::size_t user, std::size_t now,
                         const TaskWindow &window, std::span<const std::size_t> cross_users);

Path predict_static(const PredictionTask &task);

/// Per-axis least squares over the history window, extrapolated and clamped to [-1, 1].
Path predict_lr(const PredictionTask &task);

struct KnnPrediction {
    Path path;
    std::vector<geo::ViewProbabilities> probs;
};

/// Amends each LR step with the centroid of the k nearest cross-user viewpoints (wrapped Manhattan
/// distance in degrees) and averages their tile probabilities.
KnnPrediction predict_knn(const PredictionTask &task, std::size_t k, const geo::TileGrid &grid,
                          const geo::FieldOfView &fov = {});

struct CuanParams {
    std::size_t hidden = 32;
    nn::LstmCellParams layer1, layer2;
    nn::Linear decoder;

    CuanParams() : CuanParams(32) {}
    explicit CuanParams(std::size_t hidden_dim);
};

template <class Self>
    requires std::is_same_v<std::remove_const_t<Self>, CuanParams>
void collect_params(Self &p, nn::ParamList<nn::param_elem_t<Self>> &list, const std::string &prefix) {
    nn::collect_params(p.layer1, list, prefix + "layer1.");
    nn::collect_params(p.layer2, list, prefix + "layer2.");
    nn::collect_params(p.decoder, list, prefix + "decoder.");
}

void init_uniform(CuanParams &params, nn::Rng &rng);

/// Final top-layer hidden state after running the two-layer encoder over `path`.
nn::Vec cuan_encode(const CuanParams &params, const Path &path);

struct AttentionTrace {
    nn::Vec similarities;
    nn::Vec weights;
    nn::Vec fused;
};

/// Inner-product attention with the user embedding as the query. `participants` must include the
/// user's own embedding.
AttentionTrace cuan_attend(const nn::Vec &user_embedding, const std::vector<nn::Vec> &participants);

/// Gradients of the fused vector pushed back onto the query and the participants.
struct AttentionGrads {
    nn::Vec query;
    std::vector<nn::Vec> participants;
};
AttentionGrads cuan_attend_backward(const nn::Vec &user_embedding, const std::vector<nn::Vec> &participants,
                                    const AttentionTrace &trace, const nn::Vec &grad_fused);

/// Rolling prediction: the user's encoder consumes its own outputs, cross-users advance on true
/// samples (through t+k at step k).
Path cuan_predict(const CuanParams &params, const PredictionTask &task);

/// Summed L1 loss over the horizon and, when `grad` is given, its gradient accumulated into `grad`.
double cuan_loss(const CuanParams &params, const PredictionTask &task, CuanParams *grad = nullptr);

/// Mean loss over `batch` and its mean gradient. Per-sample gradients are computed in parallel and
/// summed in index order, so the result does not depend on the thread count.
double cuan_batch_gradient(const CuanParams &params, const std::vector<const PredictionTask *> &batch,
                           CuanParams &grad);
/// Single-threaded reference for `cuan_batch_gradient`.
double cuan_batch_gradient_serial(const CuanParams &params, const std::vector<const PredictionTask *> &batch,
                                  CuanParams &grad);

struct CuanTrainConfig {
    std::size_t hidden = 32;
    std::size_t epochs = 50;
    std::size_t samples_per_epoch = 2048; ///< drawn with replacement from the dataset
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double learning_rate_decay = 1.0; ///< multiplies the learning rate after every epoch
    std::uint64_t seed = 1;
};

struct CuanTrainResult {
    CuanParams params;
    std::vector<double> epoch_loss; ///< mean per-task loss seen during each epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss, const CuanParams &params)>;

/// Throws TrainingError on a non-finite loss.
CuanTrainResult cuan_train(const std::vector<PredictionTask> &dataset, const CuanTrainConfig &config,
                           const EpochCallback &on_epoch = {});

void save_cuan(const std::filesystem::path &path, const CuanParams &params);
CuanParams load_cuan(const std::filesystem::path &path);

inline constexpr int kTrajectoryFormatVersion = 1;

/// CSV with columns timestamp_s, longitude_deg, latitude_deg.
geo::Trajectory load_trajectory_csv(const std::filesystem::path &path);
void save_trajectory_csv(const std::filesystem::path &path, const geo::Trajectory &trajectory);

/// JSON index of trajectory files: {"format_version", "trajectories": [{video_id, user_id, frame_rate, file}]}.
/// Relative file names resolve against the index's directory.
std::vector<geo::Trajectory> load_trajectory_set(const std::filesystem::path &index);
void save_trajectory_set(const std::filesystem::path &directory, const std::vector<geo::Trajectory> &set);

/// Keeps every `factor`-th sample.
geo::Trajectory downsample(const geo::Trajectory &trajectory, std::size_t factor);

} // namespace srl360::predict
