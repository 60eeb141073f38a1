#include "srl360/checkpoint.hpp"
#include "srl360/errors.hpp"
#include "srl360/predictors.hpp"

#include <cmath>
#include <random>

namespace srl360::predict {

using nn::Vec;

CuanParams::CuanParams(std::size_t hidden_dim)
    : hidden(hidden_dim), layer1(2, hidden_dim), layer2(hidden_dim, hidden_dim), decoder(hidden_dim, 2) {}

void init_uniform(CuanParams &params, nn::Rng &rng) {
    nn::init_uniform(params.layer1, rng);
    nn::init_uniform(params.layer2, rng);
    nn::init_uniform(params.decoder, rng);
}

namespace {

// Two stacked LSTM layers run one sample at a time.
struct Encoder {
    const CuanParams *params;
    nn::LstmState s1, s2;
    bool keep;
    std::vector<nn::LstmStepCache> c1, c2;

    Encoder(const CuanParams &p, bool keep_caches)
        : params(&p), s1{Vec(p.hidden, 0.0), Vec(p.hidden, 0.0)}, s2{Vec(p.hidden, 0.0), Vec(p.hidden, 0.0)},
          keep(keep_caches) {}

    void push(const geo::NormalizedViewpoint &v) {
        const double x[2] = {v.x, v.y};
        s1 = nn::lstm_step(params->layer1, x, s1.hidden, s1.cell, keep ? &c1.emplace_back() : nullptr);
        s2 = nn::lstm_step(params->layer2, s1.hidden, s2.hidden, s2.cell, keep ? &c2.emplace_back() : nullptr);
    }
    [[nodiscard]] const Vec &top() const { return s2.hidden; }
};

struct EncoderCarry {
    Vec dh1, dc1, dh2, dc2;
    explicit EncoderCarry(std::size_t n) : dh1(n, 0.0), dc1(n, 0.0), dh2(n, 0.0), dc2(n, 0.0) {}
};

// Backward through step `step` given dL/d(top hidden) from outside the recurrence. Returns dL/dx.
Vec encoder_step_backward(const Encoder &e, std::size_t step, const Vec &d_top, EncoderCarry &carry, CuanParams &grad) {
    for (std::size_t k = 0; k < d_top.size(); ++k) carry.dh2[k] += d_top[k];
    auto g2 = nn::lstm_step_backward(e.params->layer2, e.c2[step], carry.dh2, carry.dc2, grad.layer2);
    carry.dh2 = std::move(g2.prev_hidden);
    carry.dc2 = std::move(g2.prev_cell);
    for (std::size_t k = 0; k < g2.input.size(); ++k) carry.dh1[k] += g2.input[k];
    auto g1 = nn::lstm_step_backward(e.params->layer1, e.c1[step], carry.dh1, carry.dc1, grad.layer1);
    carry.dh1 = std::move(g1.prev_hidden);
    carry.dc1 = std::move(g1.prev_cell);
    return g1.input;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void add_into(CuanParams &dst, const CuanParams &src, double scale = 1.0) {
    auto d = nn::params_of(dst);
    const auto s = nn::params_of(src);
    for (std::size_t k = 0; k < d.items.size(); ++k)
        for (std::size_t j = 0; j < d.items[k].values.size(); ++j) d.items[k].values[j] += scale * s.items[k].values[j];
}

void scale_all(CuanParams &p, double scale) {
    auto list = nn::params_of(p);
    for (auto &item : list.items)
        for (auto &v : item.values) v *= scale;
}

} // namespace

Vec cuan_encode(const CuanParams &params, const Path &path) {
    Encoder e(params, false);
    for (const auto &v : path) e.push(v);
    return e.top();
}

AttentionTrace cuan_attend(const Vec &user_embedding, const std::vector<Vec> &participants) {
    if (participants.empty()) throw ParameterError("cuan_attend: no participants");
    AttentionTrace t;
    for (const auto &f : participants) {
        if (f.size() != user_embedding.size()) throw ShapeError("cuan_attend: embedding sizes differ");
        double s = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * user_embedding[k];
        t.similarities.push_back(s);
    }
    t.weights = nn::softmax(t.similarities);
    t.fused.assign(user_embedding.size(), 0.0);
    for (std::size_t j = 0; j < participants.size(); ++j)
        for (std::size_t k = 0; k < t.fused.size(); ++k) t.fused[k] += t.weights[j] * participants[j][k];
    return t;
}

AttentionGrads cuan_attend_backward(const Vec &user_embedding, const std::vector<Vec> &participants,
                                    const AttentionTrace &trace, const Vec &grad_fused) {
    const auto m = participants.size();
    const auto n = user_embedding.size();
    Vec d_alpha(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < n; ++k) d_alpha[j] += grad_fused[k] * participants[j][k];
    const auto d_sim = nn::softmax_backward(trace.weights, d_alpha);

    AttentionGrads g{Vec(n, 0.0), std::vector<Vec>(m, Vec(n, 0.0))};
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < n; ++k) {
            g.participants[j][k] = trace.weights[j] * grad_fused[k] + d_sim[j] * user_embedding[k];
            g.query[k] += d_sim[j] * participants[j][k];
        }
    return g;
}

namespace {

struct RollingStep {
    std::vector<Vec> participants; // user first
    AttentionTrace attention;
    Vec output; // tanh(decoder(fused))
};

struct RollingRun {
    Encoder user;
    std::vector<Encoder> cross;
    std::vector<RollingStep> steps;
};

RollingRun rolling_forward(const CuanParams &params, const PredictionTask &task, bool keep) {
    task.validate();
    const auto h = task.history.size();
    RollingRun run{Encoder(params, keep), {}, {}};
    for (const auto &v : task.history) run.user.push(v);
    for (const auto &c : task.cross_user) {
        auto &e = run.cross.emplace_back(params, keep);
        for (std::size_t k = 0; k <= h; ++k) e.push(c[k]);
    }
    for (std::size_t k = 0; k < task.horizon; ++k) {
        RollingStep step;
        step.participants.push_back(run.user.top());
        for (const auto &e : run.cross) step.participants.push_back(e.top());
        step.attention = cuan_attend(step.participants.front(), step.participants);
        step.output = nn::tanh(nn::linear_forward(params.decoder, step.attention.fused));
        if (k + 1 < task.horizon) {
            run.user.push({step.output[0], step.output[1]});
            for (std::size_t i = 0; i < run.cross.size(); ++i) run.cross[i].push(task.cross_user[i][h + k + 1]);
        }
        run.steps.push_back(std::move(step));
    }
    return run;
}

} // namespace

Path cuan_predict(const CuanParams &params, const PredictionTask &task) {
    const auto run = rolling_forward(params, task, false);
    Path out;
    for (const auto &s : run.steps) out.push_back({s.output[0], s.output[1]});
    return out;
}

double cuan_loss(const CuanParams &params, const PredictionTask &task, CuanParams *grad) {
    if (task.target.size() != task.horizon) throw ParameterError("cuan_loss: task has no target");
    const auto run = rolling_forward(params, task, grad != nullptr);
    double loss = 0.0;
    for (std::size_t k = 0; k < task.horizon; ++k) {
        loss += std::abs(run.steps[k].output[0] - task.target[k].x);
        loss += std::abs(run.steps[k].output[1] - task.target[k].y);
    }
    if (grad == nullptr) return loss;

    const auto h = task.history.size();
    const auto t = task.horizon;
    const auto n = params.hidden;
    // Cross encoder step h + k produced the embedding used at prediction k.
    std::vector<std::vector<Vec>> d_cross(run.cross.size(), std::vector<Vec>(h + t, Vec{}));

    // User step s consumed history[s] (s < h) or prediction s - h; its output feeds prediction s - h + 1.
    EncoderCarry carry(n);
    Vec dx_next(2, 0.0);
    for (std::size_t s = h + t - 1; s-- > 0;) {
        Vec d_top(n, 0.0);
        if (s + 1 >= h) {
            const auto k = s + 1 - h;
            const auto &step = run.steps[k];
            Vec dz(2);
            for (std::size_t a = 0; a < 2; ++a) {
                const double y = a == 0 ? task.target[k].x : task.target[k].y;
                double dl = sign(step.output[a] - y);
                if (k + 1 < t) dl += dx_next[a];
                dz[a] = dl * (1.0 - step.output[a] * step.output[a]);
            }
            const auto dg = nn::linear_backward(params.decoder, step.attention.fused, dz, grad->decoder);
            const auto ag = cuan_attend_backward(step.participants.front(), step.participants, step.attention, dg);
            for (std::size_t q = 0; q < n; ++q) d_top[q] = ag.query[q] + ag.participants[0][q];
            for (std::size_t i = 0; i < run.cross.size(); ++i) d_cross[i][h + k] = ag.participants[i + 1];
        }
        dx_next = encoder_step_backward(run.user, s, d_top, carry, *grad);
    }

    const Vec zero(n, 0.0);
    for (std::size_t i = 0; i < run.cross.size(); ++i) {
        EncoderCarry c(n);
        for (std::size_t s = h + t; s-- > 0;)
            encoder_step_backward(run.cross[i], s, d_cross[i][s].empty() ? zero : d_cross[i][s], c, *grad);
    }
    return loss;
}

namespace {

constexpr std::size_t kGradientBlock = 32;

template <bool Parallel>
double batch_gradient(const CuanParams &params, const std::vector<const PredictionTask *> &batch, CuanParams &grad) {
    if (batch.empty()) throw TrainingError("cuan: empty batch");
    grad = nn::zeros_like(params);
    const CuanParams zero = grad;
    double loss = 0.0;
    std::vector<CuanParams> partial(std::min(kGradientBlock, batch.size()), zero);
    std::vector<double> losses(partial.size());
    for (std::size_t begin = 0; begin < batch.size(); begin += kGradientBlock) {
        const auto count = static_cast<std::ptrdiff_t>(std::min(kGradientBlock, batch.size() - begin));
        if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t j = 0; j < count; ++j) {
                const auto u = static_cast<std::size_t>(j);
                partial[u] = zero;
                losses[u] = cuan_loss(params, *batch[begin + u], &partial[u]);
            }
        } else {
            for (std::ptrdiff_t j = 0; j < count; ++j) {
                const auto u = static_cast<std::size_t>(j);
                partial[u] = zero;
                losses[u] = cuan_loss(params, *batch[begin + u], &partial[u]);
            }
        }
        for (std::ptrdiff_t j = 0; j < count; ++j) {
            const auto u = static_cast<std::size_t>(j);
            add_into(grad, partial[u]);
            loss += losses[u];
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    scale_all(grad, inv);
    return loss * inv;
}

} // namespace

double cuan_batch_gradient(const CuanParams &params, const std::vector<const PredictionTask *> &batch,
                           CuanParams &grad) {
    return batch_gradient<true>(params, batch, grad);
}

double cuan_batch_gradient_serial(const CuanParams &params, const std::vector<const PredictionTask *> &batch,
                                  CuanParams &grad) {
    return batch_gradient<false>(params, batch, grad);
}

CuanTrainResult cuan_train(const std::vector<PredictionTask> &dataset, const CuanTrainConfig &config,
                           const EpochCallback &on_epoch) {
    if (dataset.empty()) throw TrainingError("cuan_train: empty dataset");
    if (config.batch_size == 0 || config.samples_per_epoch == 0 || config.hidden == 0)
        throw ConfigError("cuan_train: batch size, samples per epoch and hidden size must be positive");
    if (!(config.learning_rate > 0.0) || !(config.learning_rate_decay > 0.0) || config.learning_rate_decay > 1.0)
        throw ConfigError("cuan_train: learning rate must be positive and decay in (0, 1]");
    for (const auto &t : dataset)
        if (t.target.size() != t.horizon) throw TrainingError("cuan_train: task without target");

    nn::Rng rng(config.seed);
    CuanTrainResult result{CuanParams(config.hidden), {}};
    init_uniform(result.params, rng);
    auto flat = nn::flatten(result.params);
    nn::AdamState adam(flat.size(), config.learning_rate);
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

    CuanParams grad;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        std::size_t seen = 0;
        while (seen < config.samples_per_epoch) {
            const auto n = std::min(config.batch_size, config.samples_per_epoch - seen);
            std::vector<const PredictionTask *> batch(n);
            for (auto &b : batch) b = &dataset[pick(rng)];
            const double loss = cuan_batch_gradient(result.params, batch, grad);
            if (!std::isfinite(loss))
                throw TrainingError("cuan_train: non-finite loss at epoch " + std::to_string(epoch));
            nn::adam_update(adam, flat, nn::flatten(grad));
            nn::unflatten(result.params, flat);
            total += loss * static_cast<double>(n);
            seen += n;
        }
        result.epoch_loss.push_back(total / static_cast<double>(seen));
        adam.learning_rate *= config.learning_rate_decay;
        if (on_epoch) on_epoch(epoch, result.epoch_loss.back(), result.params);
    }
    return result;
}

void save_cuan(const std::filesystem::path &path, const CuanParams &params) {
    nn::save_checkpoint(path, nn::to_named_arrays(nn::params_of(params), "cuan."));
}

CuanParams load_cuan(const std::filesystem::path &path) {
    const auto arrays = nn::load_checkpoint(path);
    for (const auto &a : arrays) {
        if (a.name != "cuan.layer1.b_input") continue;
        CuanParams params(a.values.size());
        auto list = nn::params_of(params);
        nn::restore_from(list, arrays, "cuan.");
        return params;
    }
    throw IoError("checkpoint " + path.string() + " holds no CUAN parameters");
}

} // namespace srl360::predict
