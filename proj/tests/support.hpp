#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "atx/data.hpp"
#include "atx/model.hpp"
#include "atx/rng.hpp"
#include "atx/tensor.hpp"

namespace atx::testing {

struct GradCheck {
    double max_rel = 0.0;
    std::string worst;  // name[index] of the worst entry
};

/// Relative error with a small absolute floor so that entries whose true
/// gradient is ~0 are judged on absolute agreement.
inline double rel_error(double a, double n, double floor = 1e-6) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares reverse-mode gradients of `loss` with central differences for every
/// entry of every named parameter.
inline GradCheck check_gradients(const std::function<Tensor()>& loss,
                                 const std::vector<std::pair<std::string, Tensor>>& params, double h = 1e-5) {
    for (auto [_, p] : params) p.zero_grad();
    backward(loss());
    GradCheck out;
    for (auto [name, p] : params) {
        const auto analytic = p.grad();
        auto values = p.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double keep = values[i];
            double plus, minus;
            {
                NoGradGuard g;
                values[i] = keep + h;
                plus = loss().item();
                values[i] = keep - h;
                minus = loss().item();
            }
            values[i] = keep;
            const double numeric = (plus - minus) / (2.0 * h);
            const double e = rel_error(analytic[i], numeric);
            if (e > out.max_rel) {
                out.max_rel = e;
                out.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return out;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.normal(0.0, scale);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Sinusoid window with a little noise, n × d.
inline Tensor sine_window(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n * d);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < d; ++c)
            v[t * d + c] = std::sin(0.5 * static_cast<double>(t) + static_cast<double>(c)) + rng.normal(0.0, 0.1);
    return Tensor::from({n, d}, std::move(v));
}

inline ModelConfig tiny_config(std::size_t n = 8, std::size_t d = 1) {
    ModelConfig c;
    c.window = n;
    c.input_dim = d;
    c.d_model = 8;
    c.heads = 2;
    c.layers = 1;
    return c;
}

}  // namespace atx::testing
