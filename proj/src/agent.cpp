#include "srl360/agent.hpp"

#include "srl360/checkpoint.hpp"
#include "srl360/errors.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <ostream>
#include <thread>

namespace srl360::agent {

void NetShape::validate() const {
    if (levels == 0 || filters == 0 || hidden == 0) throw ParameterError("net shape: sizes must be positive");
    if (conv_width == 0 || conv_width > seq::kNeighborSlots)
        throw ParameterError("net shape: conv width must be in [1, 8]");
}

namespace {

std::size_t chunk_width(const NetShape &s) { return std::min(s.conv_width, s.levels); }

std::size_t concat_size(const NetShape &s) {
    const auto a = s.levels - chunk_width(s) + 1;
    const auto b = seq::kNeighborSlots - s.conv_width + 1;
    return (a + b) * s.filters + s.hidden;
}

} // namespace

Net::Net(const NetShape &shape, std::size_t outputs)
    : shape(shape), chunks(1, shape.filters, chunk_width(shape)), neighbors(2, shape.filters, shape.conv_width),
      scalars(kScalarInputs, shape.hidden), head(concat_size(shape), outputs) {
    shape.validate();
    if (outputs == 0) throw ParameterError("net: head needs at least one output");
}

void init_uniform(Net &net, nn::Rng &rng) {
    nn::init_uniform(net.chunks, rng);
    nn::init_uniform(net.neighbors, rng);
    nn::init_uniform(net.scalars, rng);
    nn::init_uniform(net.head, rng);
}

void init_uniform(AgentParams &params, nn::Rng &rng) {
    init_uniform(params.policy, rng);
    init_uniform(params.value, rng);
}

namespace {

struct Inputs {
    nn::Sequence chunks;
    nn::Sequence neighbors;
    nn::Vec scalars;
};

Inputs features(const Net &net, const seq::TileDecisionState &s) {
    if (s.chunk_sizes_mbit.size() != net.shape.levels)
        throw ShapeError("agent: state has " + std::to_string(s.chunk_sizes_mbit.size()) + " levels, network expects " +
                         std::to_string(net.shape.levels));
    Inputs in;
    for (double tau : s.chunk_sizes_mbit) in.chunks.push_back({tau});
    for (std::size_t k = 0; k < seq::kNeighborSlots; ++k) in.neighbors.push_back({s.neighbor_probs[k], s.neighbor_rates[k]});
    in.scalars = {s.throughput_mbps, s.last_viewport_quality, s.prob, s.buffer_s};
    return in;
}

struct Cache {
    Inputs in;
    nn::Sequence chunks, neighbors;
    nn::Vec scalars;
    nn::Vec concat;
};

nn::Sequence tanh_seq(nn::Sequence x) {
    for (auto &v : x) v = nn::tanh(v);
    return x;
}

nn::Vec forward(const Net &net, const seq::TileDecisionState &s, Cache &c) {
    c.in = features(net, s);
    c.chunks = tanh_seq(nn::conv1d_forward(net.chunks, c.in.chunks));
    c.neighbors = tanh_seq(nn::conv1d_forward(net.neighbors, c.in.neighbors));
    c.scalars = nn::tanh(nn::linear_forward(net.scalars, c.in.scalars));
    c.concat.clear();
    for (const auto &v : c.chunks) c.concat.insert(c.concat.end(), v.begin(), v.end());
    for (const auto &v : c.neighbors) c.concat.insert(c.concat.end(), v.begin(), v.end());
    c.concat.insert(c.concat.end(), c.scalars.begin(), c.scalars.end());
    return nn::linear_forward(net.head, c.concat);
}

void backward(const Net &net, const Cache &c, std::span<const double> grad_out, Net &grad) {
    const auto d_concat = nn::linear_backward(net.head, c.concat, grad_out, grad.head);
    std::size_t pos = 0;
    const auto split = [&](const nn::Sequence &y) {
        nn::Sequence d(y.size());
        for (std::size_t t = 0; t < y.size(); ++t) {
            const std::span<const double> g(d_concat.data() + pos, y[t].size());
            d[t] = nn::tanh_backward(y[t], g);
            pos += y[t].size();
        }
        return d;
    };
    nn::conv1d_backward(net.chunks, c.in.chunks, split(c.chunks), 1, grad.chunks);
    nn::conv1d_backward(net.neighbors, c.in.neighbors, split(c.neighbors), 1, grad.neighbors);
    const auto d_scalars = nn::tanh_backward(c.scalars, std::span<const double>(d_concat.data() + pos, c.scalars.size()));
    nn::linear_backward(net.scalars, c.in.scalars, d_scalars, grad.scalars);
}

double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

} // namespace

nn::Vec policy_forward(const PolicyParams &params, const seq::TileDecisionState &s) {
    Cache c;
    return nn::softmax(forward(params, s, c));
}

double value_forward(const ValueParams &params, const seq::TileDecisionState &s) {
    Cache c;
    return forward(params, s, c).front();
}

int select_greedy(std::span<const double> dist) {
    if (dist.empty()) throw ParameterError("select_action: empty distribution");
    return static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
}

int select_action(std::span<const double> dist, ActionMode mode, nn::Rng &rng) {
    if (mode == ActionMode::Greedy) return select_greedy(dist);
    if (dist.empty()) throw ParameterError("select_action: empty distribution");
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        acc += dist[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(dist.size()) - 1;
}

double entropy(std::span<const double> dist) {
    double h = 0.0;
    for (double p : dist)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

std::vector<std::vector<double>> compose_returns(const RolloutBuffer &buffer, double gamma1, double gamma2) {
    if (!buffer.complete) throw TrainingError("compose_returns: episode is incomplete");
    std::vector<std::vector<double>> targets(buffer.segments.size());
    double outer = 0.0;
    for (std::size_t j = buffer.segments.size(); j-- > 0;) {
        const auto &seg = buffer.segments[j];
        if (seg.tiles.size() != buffer.tile_count)
            throw TrainingError("compose_returns: segment " + std::to_string(j) + " has " +
                                std::to_string(seg.tiles.size()) + " tile transitions, expected " +
                                std::to_string(buffer.tile_count));
        outer = seg.reward + gamma1 * outer;
        double inner = 0.0;
        targets[j].resize(seg.tiles.size());
        for (std::size_t k = seg.tiles.size(); k-- > 0;) {
            inner = seg.tiles[k].reward + gamma2 * inner;
            targets[j][k] = outer + inner;
        }
    }
    return targets;
}

namespace {

double policy_loss_impl(const PolicyParams &params, const std::vector<PolicySample> &samples, double beta,
                        PolicyParams *grad, double *entropy_sum) {
    double loss = 0.0;
    for (const auto &smp : samples) {
        Cache c;
        const auto p = nn::softmax(forward(params, smp.state, c));
        const auto a = static_cast<std::size_t>(smp.action);
        if (a >= p.size()) throw ParameterError("policy_loss: action out of range");
        const double h = entropy(p);
        loss += -smp.advantage * safe_log(p[a]) - beta * h;
        if (entropy_sum) *entropy_sum += h;
        if (!grad) continue;
        nn::Vec dz(p.size());
        for (std::size_t k = 0; k < p.size(); ++k)
            dz[k] = smp.advantage * (p[k] - (k == a ? 1.0 : 0.0)) + beta * p[k] * (safe_log(p[k]) + h);
        backward(params, c, dz, *grad);
    }
    return loss;
}

} // namespace

double policy_loss(const PolicyParams &params, const std::vector<PolicySample> &samples, double beta,
                   PolicyParams *grad) {
    return policy_loss_impl(params, samples, beta, grad, nullptr);
}

double value_loss(const ValueParams &params, const std::vector<ValueSample> &samples, ValueParams *grad) {
    double loss = 0.0;
    for (const auto &smp : samples) {
        Cache c;
        const double v = forward(params, smp.state, c).front();
        const double err = smp.target - v;
        loss += err * err;
        if (grad) {
            const double dv = -2.0 * err;
            backward(params, c, std::span<const double>(&dv, 1), *grad);
        }
    }
    return loss;
}

void TrainConfig::validate() const {
    shape.validate();
    if (!(gamma1 >= 0.0 && gamma1 <= 1.0) || !(gamma2 >= 0.0 && gamma2 <= 1.0))
        throw ParameterError("train config: discounts must lie in [0, 1]");
    if (!(policy_learning_rate > 0.0) || !(value_learning_rate > 0.0))
        throw ParameterError("train config: learning rates must be positive");
    if (workers == 0) throw ParameterError("train config: need at least one worker");
    if (beta < 0.0 || beta_decay < 0.0 || beta_decay_steps == 0)
        throw ParameterError("train config: bad entropy schedule");
}

double TrainConfig::beta_at(std::uint64_t step) const {
    const auto drops = static_cast<double>(step / beta_decay_steps);
    if (beta_decay_subtractive) return std::max(beta - beta_decay * drops, 0.0);
    return beta * std::pow(beta_decay, drops);
}

namespace {

void check_finite(const nn::Vec &g, const char *what) {
    for (std::size_t k = 0; k < g.size(); ++k)
        if (!std::isfinite(g[k]))
            throw TrainingError(std::string("a3c_update: non-finite ") + what + " gradient at index " + std::to_string(k));
}

void apply(nn::AdamState &opt, Net &shared, const Net &grad) {
    auto flat = nn::flatten(shared);
    nn::adam_update(opt, flat, nn::flatten(grad));
    nn::unflatten(shared, flat);
}

} // namespace

A3cStats a3c_update(AgentParams &shared, const AgentParams &snapshot, const RolloutBuffer &buffer,
                    const TrainConfig &config, double beta, nn::AdamState &policy_opt, nn::AdamState &value_opt) {
    const auto targets = compose_returns(buffer, config.gamma1, config.gamma2);
    std::vector<PolicySample> ps;
    std::vector<ValueSample> vs;
    for (std::size_t j = 0; j < buffer.segments.size(); ++j) {
        const auto &tiles = buffer.segments[j].tiles;
        for (std::size_t k = 0; k < tiles.size(); ++k) {
            if (tiles[k].forced) continue;
            const double advantage = targets[j][k] - value_forward(snapshot.value, tiles[k].state);
            ps.push_back({tiles[k].state, tiles[k].action, advantage});
            vs.push_back({tiles[k].state, targets[j][k]});
        }
    }
    A3cStats stats;
    stats.samples = ps.size();
    if (ps.empty()) return stats;

    auto gp = nn::zeros_like(snapshot.policy);
    auto gv = nn::zeros_like(snapshot.value);
    double entropy_sum = 0.0;
    stats.policy_loss = policy_loss_impl(snapshot.policy, ps, beta, &gp, &entropy_sum);
    stats.value_loss = value_loss(snapshot.value, vs, &gv);
    stats.mean_entropy = entropy_sum / static_cast<double>(ps.size());
    if (!std::isfinite(stats.policy_loss) || !std::isfinite(stats.value_loss))
        throw TrainingError("a3c_update: non-finite loss (policy " + std::to_string(stats.policy_loss) + ", value " +
                            std::to_string(stats.value_loss) + ")");
    check_finite(nn::flatten(gp), "policy");
    check_finite(nn::flatten(gv), "value");
    apply(policy_opt, shared.policy, gp);
    apply(value_opt, shared.value, gv);
    return stats;
}

RolloutBuffer collect_rollout(const AgentParams &params, const env::Episode &episode, env::StreamState start,
                              seq::OrderMode order, ActionMode mode, nn::Rng &rng, std::size_t max_segments) {
    RolloutBuffer buf;
    buf.tile_count = episode.manifest->tile_count();
    auto state = std::move(start);
    const auto policy = [&](const seq::TileDecisionState &s) {
        return select_action(policy_forward(params.policy, s), mode, rng);
    };
    for (std::size_t played = 0;
         state.segment_index < episode.segment_count() && (max_segments == 0 || played < max_segments); ++played) {
        const auto order_seed = rng();
        auto pass = seq::decision_pass(episode, state, order, order_seed, policy);
        auto r = env::step(episode, state, state.segment_index, pass.levels);
        buf.segments.push_back({std::move(pass.transitions), r.reward, r.parts});
        state = std::move(r.next);
    }
    // Truncated episodes are scored as terminal.
    buf.complete = true;
    return buf;
}

namespace {

TrainLogRow summarize(const RolloutBuffer &buf, const A3cStats &stats) {
    TrainLogRow row;
    const auto n = static_cast<double>(std::max<std::size_t>(buf.segments.size(), 1));
    for (const auto &s : buf.segments) {
        row.mean_qoe += s.reward / n;
        row.q1 += s.parts.q1 / n;
        row.q2 += s.parts.q2 / n;
        row.q3 += s.parts.q3 / n;
        row.q4 += s.parts.q4 / n;
    }
    row.entropy = stats.mean_entropy;
    return row;
}

struct Trainer {
    const std::vector<env::Episode> &envs;
    const TrainConfig &config;
    const EpisodeCallback &on_episode;
    TrainResult result;
    nn::AdamState policy_opt, value_opt;
    std::vector<nn::Rng> rngs;
    std::mutex mutex;
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    std::size_t consecutive_failures = 0;

    bool done() {
        std::lock_guard lock(mutex);
        return steps >= config.max_steps;
    }

    void run_episode(std::size_t w) {
        AgentParams snapshot;
        double beta = 0.0;
        {
            std::lock_guard lock(mutex);
            snapshot = result.params;
            beta = config.beta_at(steps);
        }
        auto &rng = rngs[w];
        try {
            const auto &ep = envs[rng() % envs.size()];
            const auto start = env::reset(ep, rng());
            const auto buf = collect_rollout(snapshot, ep, start, config.order, ActionMode::Sample, rng,
                                             config.max_segments);
            std::lock_guard lock(mutex);
            const auto stats = a3c_update(result.params, snapshot, buf, config, beta, policy_opt, value_opt);
            steps += stats.samples;
            auto row = summarize(buf, stats);
            row.step = steps;
            row.episode = episodes++;
            row.worker = w;
            row.beta = beta;
            result.log.push_back(row);
            consecutive_failures = 0;
            if (on_episode) on_episode(row, result.params);
        } catch (const TrainingError &) {
            throw;
        } catch (const Error &e) {
            std::lock_guard lock(mutex);
            result.incidents.push_back("worker " + std::to_string(w) + " restarted after: " + e.what());
            if (++consecutive_failures > 10 * config.workers)
                throw TrainingError("train: workers keep failing; last error: " + std::string(e.what()));
        }
    }
};

} // namespace

TrainResult train(const std::vector<env::Episode> &envs, const TrainConfig &config, const EpisodeCallback &on_episode) {
    config.validate();
    if (envs.empty()) throw ConfigError("train: need at least one environment");
    for (const auto &e : envs)
        if (e.manifest->level_count() != config.shape.levels)
            throw ConfigError("train: environment ladder length differs from the network's level count");

    Trainer t{envs, config, on_episode, {}, {}, {}, {}, {}, 0, 0, 0};
    nn::Rng init(config.seed);
    t.result.params = AgentParams(config.shape);
    init_uniform(t.result.params, init);
    t.policy_opt = nn::AdamState(nn::flatten(t.result.params.policy).size(), config.policy_learning_rate);
    t.value_opt = nn::AdamState(nn::flatten(t.result.params.value).size(), config.value_learning_rate);
    for (std::size_t w = 0; w < config.workers; ++w) {
        std::seed_seq seq{config.seed, static_cast<std::uint64_t>(w) + 1};
        t.rngs.emplace_back(seq);
    }

    if (!config.threaded) {
        for (std::size_t w = 0; !t.done(); w = (w + 1) % config.workers) t.run_episode(w);
        return std::move(t.result);
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<bool> stop{false};
    for (std::size_t w = 0; w < config.workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                while (!stop && !t.done()) t.run_episode(w);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                stop = true;
            }
        });
    }
    for (auto &th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return std::move(t.result);
}

void write_train_log(std::ostream &out, const std::vector<TrainLogRow> &rows) {
    out << "step,episode,worker,mean_qoe,q1,q2,q3,q4,entropy,beta\n";
    char buf[512];
    for (const auto &r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%llu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(r.step), static_cast<unsigned long long>(r.episode), r.worker,
                      r.mean_qoe, r.q1, r.q2, r.q3, r.q4, r.entropy, r.beta);
        out << buf;
    }
}

env::SegmentController agent_controller(AgentParams params, seq::OrderMode order, std::uint64_t order_seed) {
    return [params = std::move(params), order, order_seed](const env::Episode &ep, const env::StreamState &s) {
        const auto policy = [&](const seq::TileDecisionState &ts) {
            return select_greedy(policy_forward(params.policy, ts));
        };
        return seq::decision_pass(ep, s, order, order_seed + s.segment_index, policy).levels;
    };
}

void save_agent(const std::filesystem::path &path, const AgentParams &params) {
    nn::save_checkpoint(path, nn::to_named_arrays(nn::params_of(params), "agent."));
}

AgentParams load_agent(const std::filesystem::path &path) {
    const auto arrays = nn::load_checkpoint(path);
    const auto find = [&](const std::string &name) -> const nn::NamedArray & {
        for (const auto &a : arrays)
            if (a.name == name) return a;
        throw IoError("checkpoint " + path.string() + " has no array " + name);
    };
    NetShape shape;
    shape.levels = find("agent.policy.head.bias").values.size();
    shape.filters = find("agent.policy.chunks.bias").values.size();
    shape.hidden = find("agent.policy.scalars.bias").values.size();
    shape.conv_width = find("agent.policy.neighbors.weight").cols / 2;
    AgentParams params(shape);
    auto list = nn::params_of(params);
    nn::restore_from(list, arrays, "agent.");
    return params;
}

} // namespace srl360::agent
