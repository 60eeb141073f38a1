#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace srl360::nn {

using Vec = std::vector<double>;
using Sequence = std::vector<Vec>;
using Rng = std::mt19937_64;

/// Dense row-major matrix of doubles.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0) : rows(rows), cols(cols), data(rows * cols, fill) {}

    double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    [[nodiscard]] std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Fully connected layer y = W x + b.
struct Linear {
    Tensor2 weight; ///< (out, in)
    Vec bias;       ///< out

    Linear() = default;
    Linear(std::size_t in_dim, std::size_t out_dim) : weight(out_dim, in_dim), bias(out_dim, 0.0) {}

    [[nodiscard]] std::size_t in_dim() const { return weight.cols; }
    [[nodiscard]] std::size_t out_dim() const { return weight.rows; }
};

Vec linear_forward(const Linear &layer, std::span<const double> input);

/// Accumulates dW, db into `grad` and returns dL/dinput.
Vec linear_backward(const Linear &layer, std::span<const double> input, std::span<const double> grad_out, Linear &grad);

/// One LSTM cell. Every gate matrix acts on the concatenation [input; prev_hidden].
struct LstmCellParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Tensor2 w_input, w_forget, w_output, w_candidate;
    Vec b_input, b_forget, b_output, b_candidate;

    LstmCellParams() = default;
    LstmCellParams(std::size_t input_dim, std::size_t hidden_dim);

    /// Throws ShapeError when a gate matrix or bias disagrees with the declared dimensions.
    void validate() const;
};

struct LstmState {
    Vec hidden;
    Vec cell;
};

/// Activations kept from a forward step for the backward pass.
struct LstmStepCache {
    Vec concat; // [x; h_prev]
    Vec input_gate, forget_gate, output_gate, candidate;
    Vec prev_cell;
    Vec tanh_cell;
};

LstmState lstm_step(const LstmCellParams &params, std::span<const double> input, std::span<const double> prev_hidden,
                    std::span<const double> prev_cell, LstmStepCache *cache = nullptr);

struct LstmStepGrads {
    Vec input;
    Vec prev_hidden;
    Vec prev_cell;
};

/// Backward through one step. `grad_hidden`/`grad_cell` are dL/dh_t and dL/dc_t (from above and from t+1).
LstmStepGrads lstm_step_backward(const LstmCellParams &params, const LstmStepCache &cache,
                                 std::span<const double> grad_hidden, std::span<const double> grad_cell,
                                 LstmCellParams &grad);

/// Bank of 1-D filters. weight(f, k * in_channels + c) is tap k of channel c for filter f.
struct Conv1d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t width = 0;
    Tensor2 weight;
    Vec bias;

    Conv1d() = default;
    Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t width)
        : in_channels(in_channels), out_channels(out_channels), width(width),
          weight(out_channels, width * in_channels), bias(out_channels, 0.0) {}
};

[[nodiscard]] std::size_t conv1d_output_length(std::size_t input_length, std::size_t width, std::size_t stride);

/// Valid (unpadded) cross-correlation. `input[t]` holds the in_channels values at position t.
Sequence conv1d_forward(const Conv1d &conv, const Sequence &input, std::size_t stride = 1);

/// Accumulates filter gradients into `grad` and returns dL/dinput.
Sequence conv1d_backward(const Conv1d &conv, const Sequence &input, const Sequence &grad_out, std::size_t stride,
                         Conv1d &grad);

/// Max-subtracted softmax. Throws ShapeError on empty input.
Vec softmax(std::span<const double> logits);

/// Given p = softmax(z) and dL/dp, returns dL/dz.
Vec softmax_backward(std::span<const double> probs, std::span<const double> grad_probs);

Vec tanh(std::span<const double> x);

/// Given y = tanh(x) and dL/dy, returns dL/dx.
Vec tanh_backward(std::span<const double> y, std::span<const double> grad_y);

[[nodiscard]] inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Adam optimizer state for one flat parameter vector.
struct AdamState {
    Vec first_moment;
    Vec second_moment;
    std::uint64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;

    AdamState() = default;
    AdamState(std::size_t size, double learning_rate)
        : first_moment(size, 0.0), second_moment(size, 0.0), learning_rate(learning_rate) {}
};

/// One bias-corrected Adam step (descent on `grads`). Throws TrainingError on a non-finite gradient.
void adam_update(AdamState &state, std::span<double> params, std::span<const double> grads);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
};

using LossFn = std::function<double(std::span<const double>)>;

/// Compares `analytic` to central differences of `loss` around `params`.
/// Relative error per coordinate is |analytic - numeric| / max(1e-8, |numeric|).
GradCheckResult finite_diff_check(const LossFn &loss, std::span<const double> params,
                                  std::span<const double> analytic, double tolerance, double step = 1e-5);

// ---------------------------------------------------------------------------
// Parameter registry: every network exposes its arrays as named spans so the
// optimizer, initializer and checkpoint code can treat it as one flat vector.
// ---------------------------------------------------------------------------

template <class T>
struct ParamRef {
    std::string name;
    std::span<T> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

template <class Self>
using param_elem_t = std::conditional_t<std::is_const_v<Self>, const double, double>;

template <class T>
struct ParamList {
    std::vector<ParamRef<T>> items;

    template <class Tensor>
    void add(std::string name, Tensor &t) {
        if constexpr (std::is_same_v<std::remove_const_t<Tensor>, Tensor2>)
            items.push_back({std::move(name), std::span<T>(t.data), t.rows, t.cols});
        else
            items.push_back({std::move(name), std::span<T>(t), 1, t.size()});
    }

    [[nodiscard]] std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto &item : items) n += item.values.size();
        return n;
    }
};

template <class Self>
    requires std::is_same_v<std::remove_const_t<Self>, Linear>
void collect_params(Self &p, ParamList<param_elem_t<Self>> &list, const std::string &prefix) {
    list.add(prefix + "weight", p.weight);
    list.add(prefix + "bias", p.bias);
}

template <class Self>
    requires std::is_same_v<std::remove_const_t<Self>, LstmCellParams>
void collect_params(Self &p, ParamList<param_elem_t<Self>> &list, const std::string &prefix) {
    list.add(prefix + "w_input", p.w_input);
    list.add(prefix + "w_forget", p.w_forget);
    list.add(prefix + "w_output", p.w_output);
    list.add(prefix + "w_candidate", p.w_candidate);
    list.add(prefix + "b_input", p.b_input);
    list.add(prefix + "b_forget", p.b_forget);
    list.add(prefix + "b_output", p.b_output);
    list.add(prefix + "b_candidate", p.b_candidate);
}

template <class Self>
    requires std::is_same_v<std::remove_const_t<Self>, Conv1d>
void collect_params(Self &p, ParamList<param_elem_t<Self>> &list, const std::string &prefix) {
    list.add(prefix + "weight", p.weight);
    list.add(prefix + "bias", p.bias);
}

template <class Params>
ParamList<param_elem_t<Params>> params_of(Params &p) {
    ParamList<param_elem_t<Params>> list;
    collect_params(p, list, "");
    return list;
}

template <class Params>
Vec flatten(const Params &p) {
    const auto list = params_of(p);
    Vec out;
    out.reserve(list.total_size());
    for (const auto &item : list.items) out.insert(out.end(), item.values.begin(), item.values.end());
    return out;
}

/// Copies a flat vector back into the arrays of `p`. Throws ShapeError on a size mismatch.
void assign_flat(ParamList<double> &list, std::span<const double> flat);

template <class Params>
void unflatten(Params &p, std::span<const double> flat) {
    auto list = params_of(p);
    assign_flat(list, flat);
}

template <class Params>
Params zeros_like(const Params &p) {
    Params out = p;
    auto list = params_of(out);
    for (auto &item : list.items) std::fill(item.values.begin(), item.values.end(), 0.0);
    return out;
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Linear &layer, Rng &rng);
void init_uniform(LstmCellParams &cell, Rng &rng);
void init_uniform(Conv1d &conv, Rng &rng);

} // namespace srl360::nn
