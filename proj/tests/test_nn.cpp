#include "srl360/checkpoint.hpp"
#include "srl360/errors.hpp"
#include "srl360/nn.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <numeric>

using namespace srl360;
using namespace srl360::nn;
using srl360::testing::max_abs_diff;
using srl360::testing::random_vector;

namespace {

// Scalar reference LSTM step written directly from the gate equations, one unit at a time.
LstmState scalar_lstm_reference(const LstmCellParams &p, const Vec &x, const Vec &h, const Vec &c) {
    const auto n = p.hidden_dim;
    LstmState out{Vec(n), Vec(n)};
    for (std::size_t u = 0; u < n; ++u) {
        double zi = p.b_input[u], zf = p.b_forget[u], zo = p.b_output[u], zg = p.b_candidate[u];
        for (std::size_t j = 0; j < p.input_dim; ++j) {
            zi += p.w_input(u, j) * x[j];
            zf += p.w_forget(u, j) * x[j];
            zo += p.w_output(u, j) * x[j];
            zg += p.w_candidate(u, j) * x[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            const auto col = p.input_dim + j;
            zi += p.w_input(u, col) * h[j];
            zf += p.w_forget(u, col) * h[j];
            zo += p.w_output(u, col) * h[j];
            zg += p.w_candidate(u, col) * h[j];
        }
        const double i = 1.0 / (1.0 + std::exp(-zi));
        const double f = 1.0 / (1.0 + std::exp(-zf));
        const double o = 1.0 / (1.0 + std::exp(-zo));
        const double g = std::tanh(zg);
        out.cell[u] = f * c[u] + i * g;
        out.hidden[u] = o * std::tanh(out.cell[u]);
    }
    return out;
}

LstmCellParams random_cell(std::size_t in, std::size_t hidden, Rng &rng) {
    LstmCellParams p(in, hidden);
    init_uniform(p, rng);
    return p;
}

} // namespace

TEST_CASE("linear_forward identity, zero and oracle cases") {
    Linear id(2, 2);
    id.weight(0, 0) = 1.0;
    id.weight(1, 1) = 1.0;
    CHECK(linear_forward(id, Vec{1.0, 2.0}) == Vec{1.0, 2.0});

    Linear zero(4, 1);
    zero.bias[0] = 3.0;
    CHECK(linear_forward(zero, Vec{5, -1, 2, 7}) == Vec{3.0});

    Rng rng(11);
    Linear layer(3, 4);
    init_uniform(layer, rng);
    const auto x = random_vector(3, rng);
    Vec expected(4);
    for (std::size_t k = 0; k < 4; ++k) {
        expected[k] = layer.bias[k];
        for (std::size_t j = 0; j < 3; ++j) expected[k] += layer.weight.data[k * 3 + j] * x[j];
    }
    CHECK(max_abs_diff(linear_forward(layer, x), expected) < 1e-12);

    CHECK_THROWS_AS(linear_forward(layer, Vec{1.0, 2.0}), ShapeError);
}

TEST_CASE("lstm_step zero params give zero hidden") {
    LstmCellParams p(3, 4);
    const auto out = lstm_step(p, Vec{0.3, -0.2, 0.9}, Vec(4, 0.0), Vec(4, 0.0));
    for (double h : out.hidden) CHECK(h == 0.0);
}

TEST_CASE("lstm_step saturated forget gate carries the cell") {
    Rng rng(5);
    auto p = random_cell(2, 3, rng);
    std::fill(p.b_forget.begin(), p.b_forget.end(), 50.0);
    std::fill(p.w_forget.data.begin(), p.w_forget.data.end(), 0.0);
    const Vec x{0.4, -0.7}, h{0.1, 0.2, -0.3}, c{0.5, -1.5, 2.0};
    LstmStepCache cache;
    const auto out = lstm_step(p, x, h, c, &cache);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(out.cell[k] == doctest::Approx(c[k] + cache.input_gate[k] * cache.candidate[k]).epsilon(1e-12));
}

TEST_CASE("lstm_step matches scalar reference and stays in (-1, 1)") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_cell(5, 6, rng);
        for (auto *w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_candidate}) testing::randomize(*w, rng, 2.0);
        const auto x = random_vector(5, rng, -3, 3), h = random_vector(6, rng), c = random_vector(6, rng, -4, 4);
        const auto fast = lstm_step(p, x, h, c);
        const auto ref = scalar_lstm_reference(p, x, h, c);
        CHECK(max_abs_diff(fast.hidden, ref.hidden) < 1e-12);
        CHECK(max_abs_diff(fast.cell, ref.cell) < 1e-12);
        for (double v : fast.hidden) CHECK(std::abs(v) < 1.0);
    }
    LstmCellParams p(2, 2);
    CHECK_THROWS_AS(lstm_step(p, Vec{1.0}, Vec(2), Vec(2)), ShapeError);
}

TEST_CASE("conv1d_forward constant, delta and nested-loop oracle") {
    Conv1d avg(1, 1, 3);
    avg.weight.data = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto a = conv1d_forward(avg, Sequence{{3}, {3}, {3}, {3}});
    REQUIRE(a.size() == 2);
    CHECK(a[0][0] == doctest::Approx(3.0));
    CHECK(a[1][0] == doctest::Approx(3.0));

    Conv1d delta(1, 1, 3);
    delta.weight.data = {0, 1, 0};
    const auto d = conv1d_forward(delta, Sequence{{1}, {2}, {3}, {4}});
    CHECK(d == Sequence{{2}, {3}});

    Rng rng(3);
    Conv1d bank(2, 5, 3);
    init_uniform(bank, rng);
    Sequence input(9);
    for (auto &x : input) x = random_vector(2, rng);
    for (std::size_t stride : {1u, 2u, 3u}) {
        const auto out = conv1d_forward(bank, input, stride);
        const std::size_t expected_len = (9 - 3) / stride + 1;
        REQUIRE(out.size() == expected_len);
        for (std::size_t t = 0; t < expected_len; ++t)
            for (std::size_t f = 0; f < 5; ++f) {
                double acc = bank.bias[f];
                for (std::size_t k = 0; k < 3; ++k)
                    for (std::size_t c = 0; c < 2; ++c) acc += bank.weight.data[f * 6 + k * 2 + c] * input[t * stride + k][c];
                CHECK(std::abs(out[t][f] - acc) < 1e-12);
            }
    }
    CHECK_THROWS_AS(conv1d_forward(bank, Sequence{{1, 2}, {3, 4}}), ShapeError);
}

TEST_CASE("softmax symmetry, stability, direct formula, shift invariance") {
    const auto u = softmax(Vec{0, 0, 0});
    for (double p : u) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-14));

    const auto s = softmax(Vec{1000, 0});
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] >= 0.0);
    CHECK(std::isfinite(s[1]));

    const auto p = softmax(Vec{1, 2, 3});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(std::abs(p[0] - std::exp(1.0) / z) < 1e-12);
    CHECK(std::abs(p[1] - std::exp(2.0) / z) < 1e-12);
    CHECK(std::abs(p[2] - std::exp(3.0) / z) < 1e-12);

    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const auto logits = random_vector(7, rng, -20, 20);
        const auto q = softmax(logits);
        CHECK(std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1.0) < 1e-12);
        auto shifted = logits;
        for (auto &x : shifted) x += 13.5;
        CHECK(max_abs_diff(softmax(shifted), q) < 1e-12);
    }
    CHECK_THROWS_AS(softmax(Vec{}), ShapeError);
}

TEST_CASE("adam_update zero gradient, first step and steady state") {
    AdamState fresh(3, 0.01);
    Vec params{1.0, -2.0, 0.5};
    adam_update(fresh, params, Vec{0, 0, 0});
    CHECK(params == Vec{1.0, -2.0, 0.5});
    CHECK(fresh.step_count == 1);

    // Scalar hand computation for the first step: m = 0.1 g, v = 0.001 g^2,
    // m_hat = g, v_hat = g^2, delta = -lr g / (|g| + eps).
    AdamState one(1, 0.01);
    Vec w{0.0};
    const double g = 0.37;
    adam_update(one, w, Vec{g});
    CHECK(std::abs(w[0] - (-0.01 * g / (std::abs(g) + 1e-8))) < 1e-15);

    AdamState steady(1, 0.001);
    Vec v{0.0};
    double last = 0.0;
    for (int k = 0; k < 2000; ++k) {
        const double before = v[0];
        adam_update(steady, v, Vec{-2.5});
        last = v[0] - before;
    }
    CHECK(last == doctest::Approx(0.001).epsilon(1e-6));

    AdamState bad(1, 0.1);
    Vec x{0.0};
    CHECK_THROWS_AS(adam_update(bad, x, Vec{std::nan("")}), TrainingError);
}

TEST_CASE("finite_diff_check on quadratic and linear-layer L1 loss") {
    Vec p{0.3, -1.2, 2.0, 0.7};
    const auto quad = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += 0.5 * v * v;
        return s;
    };
    const auto r = finite_diff_check(quad, p, p, 1e-6);
    CHECK(r.passed);
    CHECK(r.max_relative_error < 1e-6);

    Rng rng(23);
    Linear layer(4, 3);
    init_uniform(layer, rng);
    const auto x = random_vector(4, rng);
    const Vec target{0.9, -0.8, 0.05};
    const auto l1 = [&](std::span<const double> flat) {
        Linear tmp = layer;
        unflatten(tmp, flat);
        const auto y = linear_forward(tmp, x);
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += std::abs(y[k] - target[k]);
        return s;
    };
    Linear grad = zeros_like(layer);
    const auto y = linear_forward(layer, x);
    Vec gy(3);
    for (std::size_t k = 0; k < 3; ++k) gy[k] = y[k] > target[k] ? 1.0 : -1.0;
    linear_backward(layer, x, gy, grad);
    const auto check = finite_diff_check(l1, flatten(layer), flatten(grad), 1e-4);
    CHECK(check.max_relative_error < 1e-4);

    const auto nan_loss = [](std::span<const double>) { return std::nan(""); };
    CHECK_THROWS_AS(finite_diff_check(nan_loss, p, p, 1e-3), TrainingError);
}

TEST_CASE("lstm and conv backward agree with central differences") {
    Rng rng(31);
    auto cell = random_cell(3, 4, rng);
    const auto x = random_vector(3, rng), h = random_vector(4, rng), c = random_vector(4, rng);
    const auto wh = random_vector(4, rng), wc = random_vector(4, rng);
    const auto loss_of = [&](const LstmCellParams &p) {
        const auto out = lstm_step(p, x, h, c);
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += wh[k] * out.hidden[k] + wc[k] * out.cell[k];
        return s;
    };
    LstmStepCache cache;
    lstm_step(cell, x, h, c, &cache);
    auto grad = zeros_like(cell);
    lstm_step_backward(cell, cache, wh, wc, grad);
    const auto lstm_check = finite_diff_check(
        [&](std::span<const double> flat) {
            auto tmp = cell;
            unflatten(tmp, flat);
            return loss_of(tmp);
        },
        flatten(cell), flatten(grad), 1e-6);
    CHECK(lstm_check.max_relative_error < 1e-6);

    Conv1d conv(2, 3, 3);
    init_uniform(conv, rng);
    Sequence input(6);
    for (auto &v : input) v = random_vector(2, rng);
    Sequence weights(4);
    for (auto &v : weights) v = random_vector(3, rng);
    auto cgrad = zeros_like(conv);
    conv1d_backward(conv, input, weights, 1, cgrad);
    const auto conv_check = finite_diff_check(
        [&](std::span<const double> flat) {
            auto tmp = conv;
            unflatten(tmp, flat);
            const auto out = conv1d_forward(tmp, input);
            double s = 0.0;
            for (std::size_t t = 0; t < out.size(); ++t)
                for (std::size_t f = 0; f < 3; ++f) s += weights[t][f] * out[t][f];
            return s;
        },
        flatten(conv), flatten(cgrad), 1e-6);
    CHECK(conv_check.max_relative_error < 1e-6);
}

TEST_CASE("checkpoint container preserves names, shapes and values") {
    Rng rng(41);
    Linear layer(3, 2);
    init_uniform(layer, rng);
    const auto path = std::filesystem::temp_directory_path() / "srl360_ckpt_test.bin";
    save_checkpoint(path, to_named_arrays(params_of(std::as_const(layer)), "dec."));

    const auto arrays = load_checkpoint(path);
    REQUIRE(arrays.size() == 2);
    CHECK(arrays[0].name == "dec.weight");
    CHECK(arrays[0].rows == 2);
    CHECK(arrays[0].cols == 3);

    Linear restored(3, 2);
    auto list = params_of(restored);
    restore_from(list, arrays, "dec.");
    CHECK(flatten(restored) == flatten(layer));

    Linear wrong(4, 2);
    auto wrong_list = params_of(wrong);
    CHECK_THROWS_AS(restore_from(wrong_list, arrays, "dec."), ShapeError);
    std::filesystem::remove(path);
}
