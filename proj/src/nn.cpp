#include "srl360/nn.hpp"

#include "srl360/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace srl360::nn {

namespace {

void require(bool ok, const char *what) {
    if (!ok) throw ShapeError(what);
}

void check_shape(const Tensor2 &t, std::size_t rows, std::size_t cols, const char *what) {
    if (t.rows != rows || t.cols != cols || t.data.size() != rows * cols) throw ShapeError(what);
}

// Gate pre-activation: W z + b.
void affine(const Tensor2 &w, const Vec &b, const Vec &z, Vec &out) {
    out.assign(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double *row = w.data.data() + r * w.cols;
        double acc = b[r];
        for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * z[c];
        out[r] = acc;
    }
}

// dW += g z^T, db += g, dz += W^T g.
void affine_backward(const Tensor2 &w, const Vec &z, const Vec &g, Tensor2 &dw, Vec &db, Vec &dz) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double gr = g[r];
        db[r] += gr;
        const double *row = w.data.data() + r * w.cols;
        double *drow = dw.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) {
            drow[c] += gr * z[c];
            dz[c] += row[c] * gr;
        }
    }
}

double fan_in_bound(std::size_t fan_in) { return fan_in == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <class Container>
void fill_uniform(Container &values, double bound, Rng &rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto &v : values) v = dist(rng);
}

} // namespace

Vec linear_forward(const Linear &layer, std::span<const double> input) {
    require(input.size() == layer.in_dim(), "linear_forward: input length != weight columns");
    require(layer.bias.size() == layer.out_dim(), "linear_forward: bias length != weight rows");
    Vec out(layer.out_dim());
    for (std::size_t k = 0; k < layer.out_dim(); ++k) {
        double acc = layer.bias[k];
        const auto row = layer.weight.row(k);
        for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * input[j];
        out[k] = acc;
    }
    return out;
}

Vec linear_backward(const Linear &layer, std::span<const double> input, std::span<const double> grad_out, Linear &grad) {
    require(input.size() == layer.in_dim(), "linear_backward: input length != weight columns");
    require(grad_out.size() == layer.out_dim(), "linear_backward: grad length != weight rows");
    Vec grad_in(layer.in_dim(), 0.0);
    for (std::size_t k = 0; k < layer.out_dim(); ++k) {
        const double g = grad_out[k];
        grad.bias[k] += g;
        const auto row = layer.weight.row(k);
        double *grow = grad.weight.data.data() + k * layer.in_dim();
        for (std::size_t j = 0; j < row.size(); ++j) {
            grow[j] += g * input[j];
            grad_in[j] += row[j] * g;
        }
    }
    return grad_in;
}

LstmCellParams::LstmCellParams(std::size_t input_dim, std::size_t hidden_dim)
    : input_dim(input_dim), hidden_dim(hidden_dim), w_input(hidden_dim, input_dim + hidden_dim),
      w_forget(hidden_dim, input_dim + hidden_dim), w_output(hidden_dim, input_dim + hidden_dim),
      w_candidate(hidden_dim, input_dim + hidden_dim), b_input(hidden_dim, 0.0), b_forget(hidden_dim, 0.0),
      b_output(hidden_dim, 0.0), b_candidate(hidden_dim, 0.0) {}

void LstmCellParams::validate() const {
    const auto cols = input_dim + hidden_dim;
    check_shape(w_input, hidden_dim, cols, "lstm: input gate shape");
    check_shape(w_forget, hidden_dim, cols, "lstm: forget gate shape");
    check_shape(w_output, hidden_dim, cols, "lstm: output gate shape");
    check_shape(w_candidate, hidden_dim, cols, "lstm: candidate shape");
    for (const auto *b : {&b_input, &b_forget, &b_output, &b_candidate})
        require(b->size() == hidden_dim, "lstm: bias length != hidden_dim");
}

LstmState lstm_step(const LstmCellParams &params, std::span<const double> input, std::span<const double> prev_hidden,
                    std::span<const double> prev_cell, LstmStepCache *cache) {
    const auto n = params.hidden_dim;
    require(input.size() == params.input_dim, "lstm_step: input length != input_dim");
    require(prev_hidden.size() == n && prev_cell.size() == n, "lstm_step: state length != hidden_dim");

    Vec z(input.begin(), input.end());
    z.insert(z.end(), prev_hidden.begin(), prev_hidden.end());

    Vec gi, gf, go, gg;
    affine(params.w_input, params.b_input, z, gi);
    affine(params.w_forget, params.b_forget, z, gf);
    affine(params.w_output, params.b_output, z, go);
    affine(params.w_candidate, params.b_candidate, z, gg);

    LstmState next{Vec(n), Vec(n)};
    Vec tanh_cell(n);
    for (std::size_t k = 0; k < n; ++k) {
        gi[k] = sigmoid(gi[k]);
        gf[k] = sigmoid(gf[k]);
        go[k] = sigmoid(go[k]);
        gg[k] = std::tanh(gg[k]);
        next.cell[k] = gf[k] * prev_cell[k] + gi[k] * gg[k];
        tanh_cell[k] = std::tanh(next.cell[k]);
        next.hidden[k] = go[k] * tanh_cell[k];
    }

    if (cache != nullptr) {
        cache->concat = std::move(z);
        cache->input_gate = std::move(gi);
        cache->forget_gate = std::move(gf);
        cache->output_gate = std::move(go);
        cache->candidate = std::move(gg);
        cache->prev_cell.assign(prev_cell.begin(), prev_cell.end());
        cache->tanh_cell = std::move(tanh_cell);
    }
    return next;
}

LstmStepGrads lstm_step_backward(const LstmCellParams &params, const LstmStepCache &cache,
                                 std::span<const double> grad_hidden, std::span<const double> grad_cell,
                                 LstmCellParams &grad) {
    const auto n = params.hidden_dim;
    require(grad_hidden.size() == n && grad_cell.size() == n, "lstm_step_backward: grad length != hidden_dim");

    Vec d_in(n), d_forget(n), d_out(n), d_cand(n);
    LstmStepGrads out{Vec{}, Vec(n), Vec(n)};
    for (std::size_t k = 0; k < n; ++k) {
        const double i = cache.input_gate[k], f = cache.forget_gate[k], o = cache.output_gate[k];
        const double g = cache.candidate[k], tc = cache.tanh_cell[k];
        const double dc = grad_cell[k] + grad_hidden[k] * o * (1.0 - tc * tc);
        d_out[k] = grad_hidden[k] * tc * o * (1.0 - o);
        d_in[k] = dc * g * i * (1.0 - i);
        d_forget[k] = dc * cache.prev_cell[k] * f * (1.0 - f);
        d_cand[k] = dc * i * (1.0 - g * g);
        out.prev_cell[k] = dc * f;
    }

    Vec dz(params.input_dim + n, 0.0);
    affine_backward(params.w_input, cache.concat, d_in, grad.w_input, grad.b_input, dz);
    affine_backward(params.w_forget, cache.concat, d_forget, grad.w_forget, grad.b_forget, dz);
    affine_backward(params.w_output, cache.concat, d_out, grad.w_output, grad.b_output, dz);
    affine_backward(params.w_candidate, cache.concat, d_cand, grad.w_candidate, grad.b_candidate, dz);

    out.input.assign(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(params.input_dim));
    std::copy(dz.begin() + static_cast<std::ptrdiff_t>(params.input_dim), dz.end(), out.prev_hidden.begin());
    return out;
}

std::size_t conv1d_output_length(std::size_t input_length, std::size_t width, std::size_t stride) {
    if (stride == 0) throw ShapeError("conv1d: stride must be positive");
    if (width == 0 || input_length < width) throw ShapeError("conv1d: input shorter than filter width");
    return (input_length - width) / stride + 1;
}

Sequence conv1d_forward(const Conv1d &conv, const Sequence &input, std::size_t stride) {
    const auto out_len = conv1d_output_length(input.size(), conv.width, stride);
    for (const auto &x : input) require(x.size() == conv.in_channels, "conv1d_forward: channel count mismatch");
    check_shape(conv.weight, conv.out_channels, conv.width * conv.in_channels, "conv1d_forward: weight shape");

    Sequence out(out_len, Vec(conv.out_channels));
    for (std::size_t t = 0; t < out_len; ++t) {
        const auto start = t * stride;
        for (std::size_t f = 0; f < conv.out_channels; ++f) {
            double acc = conv.bias[f];
            for (std::size_t k = 0; k < conv.width; ++k) {
                const auto &x = input[start + k];
                for (std::size_t c = 0; c < conv.in_channels; ++c) acc += conv.weight(f, k * conv.in_channels + c) * x[c];
            }
            out[t][f] = acc;
        }
    }
    return out;
}

Sequence conv1d_backward(const Conv1d &conv, const Sequence &input, const Sequence &grad_out, std::size_t stride,
                         Conv1d &grad) {
    const auto out_len = conv1d_output_length(input.size(), conv.width, stride);
    require(grad_out.size() == out_len, "conv1d_backward: grad length mismatch");

    Sequence grad_in(input.size(), Vec(conv.in_channels, 0.0));
    for (std::size_t t = 0; t < out_len; ++t) {
        const auto start = t * stride;
        for (std::size_t f = 0; f < conv.out_channels; ++f) {
            const double g = grad_out[t][f];
            grad.bias[f] += g;
            for (std::size_t k = 0; k < conv.width; ++k) {
                const auto &x = input[start + k];
                auto &dx = grad_in[start + k];
                for (std::size_t c = 0; c < conv.in_channels; ++c) {
                    const auto idx = k * conv.in_channels + c;
                    grad.weight(f, idx) += g * x[c];
                    dx[c] += conv.weight(f, idx) * g;
                }
            }
        }
    }
    return grad_in;
}

Vec softmax(std::span<const double> logits) {
    if (logits.empty()) throw ShapeError("softmax: empty input");
    double peak = logits[0];
    for (double z : logits) peak = std::max(peak, z);
    Vec out(logits.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - peak);
        total += out[k];
    }
    for (auto &p : out) p /= total;
    return out;
}

Vec softmax_backward(std::span<const double> probs, std::span<const double> grad_probs) {
    require(probs.size() == grad_probs.size(), "softmax_backward: length mismatch");
    double dot = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) dot += probs[k] * grad_probs[k];
    Vec out(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) out[k] = probs[k] * (grad_probs[k] - dot);
    return out;
}

Vec tanh(std::span<const double> x) {
    Vec out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = std::tanh(x[k]);
    return out;
}

Vec tanh_backward(std::span<const double> y, std::span<const double> grad_y) {
    require(y.size() == grad_y.size(), "tanh_backward: length mismatch");
    Vec out(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) out[k] = grad_y[k] * (1.0 - y[k] * y[k]);
    return out;
}

void adam_update(AdamState &state, std::span<double> params, std::span<const double> grads) {
    require(params.size() == grads.size(), "adam_update: params/grads length mismatch");
    require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
            "adam_update: moment length mismatch");
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!std::isfinite(grads[k]))
            throw TrainingError("adam_update: non-finite gradient at index " + std::to_string(k));
    }

    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto &m = state.first_moment[k];
        auto &v = state.second_moment[k];
        m = state.beta1 * m + (1.0 - state.beta1) * grads[k];
        v = state.beta2 * v + (1.0 - state.beta2) * grads[k] * grads[k];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

GradCheckResult finite_diff_check(const LossFn &loss, std::span<const double> params,
                                  std::span<const double> analytic, double tolerance, double step) {
    require(params.size() == analytic.size(), "finite_diff_check: params/analytic length mismatch");
    Vec probe(params.begin(), params.end());
    GradCheckResult result;
    for (std::size_t k = 0; k < probe.size(); ++k) {
        const double saved = probe[k];
        probe[k] = saved + step;
        const double up = loss(probe);
        probe[k] = saved - step;
        const double down = loss(probe);
        probe[k] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw TrainingError("finite_diff_check: non-finite loss at coordinate " + std::to_string(k));
        const double numeric = (up - down) / (2.0 * step);
        const double rel = std::abs(analytic[k] - numeric) / std::max(1e-8, std::abs(numeric));
        if (rel > result.max_relative_error) {
            result.max_relative_error = rel;
            result.worst_index = k;
        }
    }
    result.passed = result.max_relative_error < tolerance;
    return result;
}

void assign_flat(ParamList<double> &list, std::span<const double> flat) {
    if (flat.size() != list.total_size()) throw ShapeError("assign_flat: flat vector length != parameter count");
    std::size_t offset = 0;
    for (auto &item : list.items) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), item.values.size(), item.values.begin());
        offset += item.values.size();
    }
}

void init_uniform(Linear &layer, Rng &rng) {
    const double bound = fan_in_bound(layer.in_dim());
    fill_uniform(layer.weight.data, bound, rng);
    fill_uniform(layer.bias, bound, rng);
}

void init_uniform(LstmCellParams &cell, Rng &rng) {
    const double bound = fan_in_bound(cell.input_dim + cell.hidden_dim);
    for (auto *w : {&cell.w_input, &cell.w_forget, &cell.w_output, &cell.w_candidate}) fill_uniform(w->data, bound, rng);
    for (auto *b : {&cell.b_input, &cell.b_forget, &cell.b_output, &cell.b_candidate}) fill_uniform(*b, bound, rng);
}

void init_uniform(Conv1d &conv, Rng &rng) {
    const double bound = fan_in_bound(conv.width * conv.in_channels);
    fill_uniform(conv.weight.data, bound, rng);
    fill_uniform(conv.bias, bound, rng);
}

} // namespace srl360::nn
