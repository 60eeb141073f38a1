#pragma once

#include "srl360/nn.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace srl360::testing {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto &x : v) x = dist(rng);
    return v;
}

inline void randomize(nn::Tensor2 &t, std::mt19937_64 &rng, double scale = 1.0) {
    for (auto &x : t.data) x = std::uniform_real_distribution<double>(-scale, scale)(rng);
}

inline double max_abs_diff(const std::vector<double> &a, const std::vector<double> &b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return a.size() == b.size() ? m : INFINITY;
}

} // namespace srl360::testing
