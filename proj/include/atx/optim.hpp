#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "atx/rng.hpp"
#include "atx/tensor.hpp"

namespace atx {

enum class InitScheme { uniform_fan, zeros, ones };

InitScheme parse_init_scheme(std::string_view name);

/// Deterministic given (shape, seed, scheme). uniform_fan draws from
/// U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); for a matrix fan_in is
/// rows and fan_out is cols.
Tensor seeded_init(const Shape& shape, std::uint64_t seed, InitScheme scheme, bool requires_grad = true);

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamOptions options = {});

    // Applies one bias-corrected update from the accumulated grads.
    // Every parameter must hold a grad; call zero_grad() afterwards.
    void step();
    // Resets every grad to an allocated zero buffer, so parameters that the
    // next loss does not reach still count as having a (zero) grad.
    void zero_grad();

    std::uint64_t steps() const { return step_; }
    const AdamOptions& options() const { return opt_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamOptions opt_;
    std::uint64_t step_ = 0;
};

}  // namespace atx
