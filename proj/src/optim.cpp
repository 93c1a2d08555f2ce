#include "atx/optim.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace atx {

InitScheme parse_init_scheme(std::string_view name) {
    if (name == "uniform_fan") return InitScheme::uniform_fan;
    if (name == "zeros") return InitScheme::zeros;
    if (name == "ones") return InitScheme::ones;
    throw ConfigError("unknown init scheme '" + std::string(name) + "'");
}

Tensor seeded_init(const Shape& shape, std::uint64_t seed, InitScheme scheme, bool requires_grad) {
    const std::size_t n = numel(shape);
    switch (scheme) {
        case InitScheme::zeros:
            return Tensor::full(shape, 0.0, requires_grad);
        case InitScheme::ones:
            return Tensor::full(shape, 1.0, requires_grad);
        case InitScheme::uniform_fan: {
            std::size_t fan_in = shape.empty() ? 1 : shape.front();
            std::size_t fan_out = shape.size() < 2 ? 1 : shape.back();
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            Rng rng(seed);
            std::vector<double> data(n);
            for (auto& v : data) v = rng.uniform(-bound, bound);
            return Tensor::from(shape, std::move(data), requires_grad);
        }
    }
    throw ConfigError("unknown init scheme");
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
        if (!p.requires_grad()) throw ContractError("Adam: parameter does not require grad");
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    for (const auto& p : params_) {
        if (!p.has_grad()) throw ContractError("Adam::step: parameter of shape " + shape_str(p.shape()) + " has no grad");
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(opt_.beta1, t);
    const double c2 = 1.0 - std::pow(opt_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto w = params_[k].mutable_data();
        const auto& g = params_[k].node()->grad;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
            v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
        }
        check_finite(w, "Adam::step");
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.node()->grad.assign(p.size(), 0.0);
}

}  // namespace atx
