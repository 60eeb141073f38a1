#pragma once

#include "srl360/environment.hpp"
#include "srl360/nn.hpp"
#include "srl360/sequential.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace srl360::agent {

struct NetShape {
    std::size_t levels = 3;
    std::size_t filters = 64;
    std::size_t hidden = 64;     ///< units of the scalar branch
    std::size_t conv_width = 3;  ///< the chunk-size branch uses min(conv_width, levels)

    void validate() const;
};

inline constexpr std::size_t kScalarInputs = 4; ///< throughput, previous Q1, p, buffer

/// Shared layout of the policy and value networks. Three branches, each followed by tanh:
/// a conv bank over the chunk sizes, a conv bank over the 8 neighbour slots with channels
/// (probability, chosen rate), and a dense layer over the scalar inputs. Their outputs are
/// concatenated and fed to a linear head.
struct Net {
    NetShape shape;
    nn::Conv1d chunks;
    nn::Conv1d neighbors;
    nn::Linear scalars;
    nn::Linear head;

    Net() = default;
    Net(const NetShape &shape, std::size_t outputs);
    [[nodiscard]] std::size_t outputs() const { return head.out_dim(); }
};

template <class Self>
    requires std::is_same_v<std::remove_const_t<Self>, Net>
void collect_params(Self &p, nn::ParamList<nn::param_elem_t<Self>> &list, const std::string &prefix) {
    nn::collect_params(p.chunks, list, prefix + "chunks.");
    nn::collect_params(p.neighbors, list, prefix + "neighbors.");
    nn::collect_params(p.scalars, list, prefix + "scalars.");
    nn::collect_params(p.head, list, prefix + "head.");
}

using PolicyParams = Net; ///< head outputs one logit per level
using ValueParams = Net;  ///< head outputs one scalar

struct AgentParams {
    PolicyParams policy;
    ValueParams value;

    AgentParams() = default;
    explicit AgentParams(const NetShape &shape) : policy(shape, shape.levels), value(shape, 1) {}
};

template <class Self>
    requires std::is_same_v<std::remove_const_t<Self>, AgentParams>
void collect_params(Self &p, nn::ParamList<nn::param_elem_t<Self>> &list, const std::string &prefix) {
    collect_params(p.policy, list, prefix + "policy.");
    collect_params(p.value, list, prefix + "value.");
}

void init_uniform(Net &net, nn::Rng &rng);
void init_uniform(AgentParams &params, nn::Rng &rng);

/// Throws ShapeError when the state's ladder length differs from the network's.
nn::Vec policy_forward(const PolicyParams &params, const seq::TileDecisionState &s);
double value_forward(const ValueParams &params, const seq::TileDecisionState &s);

/// Greedy picks the first maximum.
enum class ActionMode { Greedy, Sample };

int select_action(std::span<const double> dist, ActionMode mode, nn::Rng &rng);
int select_greedy(std::span<const double> dist);

/// H = -sum p log p.
double entropy(std::span<const double> dist);

/// One episode of bottom-level transitions grouped by segment.
struct SegmentRollout {
    std::vector<seq::TileTransition> tiles; ///< decision order
    double reward = 0.0;                    ///< top-level reward r_t
    qoe::QoeBreakdown parts;
};

struct RolloutBuffer {
    std::size_t tile_count = 0;
    std::vector<SegmentRollout> segments;
    bool complete = false; ///< the episode reached its end (no bootstrap)
};

/// targets[j][k] for transition k of segment j: outer return R over segment rewards with gamma1
/// plus inner return R' over the segment's tile rewards in reverse decision order with gamma2.
/// Throws TrainingError on an incomplete episode or a segment with the wrong tile count.
std::vector<std::vector<double>> compose_returns(const RolloutBuffer &buffer, double gamma1, double gamma2);

struct PolicySample {
    seq::TileDecisionState state;
    int action = 0;
    double advantage = 0.0;
};

/// L = sum_k [-A_k log pi(a_k | s_k) - beta H(pi(s_k))]. Accumulates dL/dtheta into `grad` when given.
double policy_loss(const PolicyParams &params, const std::vector<PolicySample> &samples, double beta,
                   PolicyParams *grad = nullptr);

struct ValueSample {
    seq::TileDecisionState state;
    double target = 0.0;
};

/// L = sum_k (target_k - V(s_k))^2.
double value_loss(const ValueParams &params, const std::vector<ValueSample> &samples, ValueParams *grad = nullptr);

struct TrainConfig {
    NetShape shape;
    double gamma1 = 0.99;
    double gamma2 = 1.0;
    std::size_t workers = 16;
    bool threaded = false; ///< false: deterministic round-robin over workers
    double beta = 1.0;
    double beta_decay = 0.1;              ///< multiplier (or decrement when subtractive)
    std::uint64_t beta_decay_steps = 20000;
    bool beta_decay_subtractive = false;
    double policy_learning_rate = 1e-4;
    double value_learning_rate = 1e-3;
    std::uint64_t max_steps = 200000; ///< bottom-level agent decisions
    std::size_t max_segments = 0;     ///< per episode, 0 = play to the end
    seq::OrderMode order = seq::OrderMode::HighToLow;
    std::uint64_t seed = 1;

    void validate() const;
    [[nodiscard]] double beta_at(std::uint64_t step) const;
};

struct A3cStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double mean_entropy = 0.0;
    std::size_t samples = 0;
};

/// Builds advantages and targets from `buffer` (forced tiles excluded), accumulates the policy and
/// value gradients and applies them through the two Adam states. Throws TrainingError on NaN.
A3cStats a3c_update(AgentParams &shared, const AgentParams &snapshot, const RolloutBuffer &buffer,
                    const TrainConfig &config, double beta, nn::AdamState &policy_opt, nn::AdamState &value_opt);

/// Plays one episode from `start`, querying the policy for every in-view tile.
RolloutBuffer collect_rollout(const AgentParams &params, const env::Episode &episode, env::StreamState start,
                              seq::OrderMode order, ActionMode mode, nn::Rng &rng, std::size_t max_segments = 0);

struct TrainLogRow {
    std::uint64_t step = 0;
    std::uint64_t episode = 0;
    std::size_t worker = 0;
    double mean_qoe = 0.0;
    double q1 = 0.0, q2 = 0.0, q3 = 0.0, q4 = 0.0;
    double entropy = 0.0;
    double beta = 0.0;
};

struct TrainResult {
    AgentParams params;
    std::vector<TrainLogRow> log;
    std::vector<std::string> incidents;
};

using EpisodeCallback = std::function<void(const TrainLogRow &, const AgentParams &)>;

/// Workers sync from the shared parameters before each episode and apply one update per episode.
/// Episodes draw an environment and a start offset from the worker's seeded stream.
TrainResult train(const std::vector<env::Episode> &envs, const TrainConfig &config,
                  const EpisodeCallback &on_episode = {});

/// CSV header `step,episode,worker,mean_qoe,q1,q2,q3,q4,entropy,beta`.
void write_train_log(std::ostream &out, const std::vector<TrainLogRow> &rows);

/// Greedy-action controller. Random order draws its shuffle from `order_seed` and the segment index.
env::SegmentController agent_controller(AgentParams params, seq::OrderMode order, std::uint64_t order_seed = 0);

void save_agent(const std::filesystem::path &path, const AgentParams &params);
AgentParams load_agent(const std::filesystem::path &path);

} // namespace srl360::agent
