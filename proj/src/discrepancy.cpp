#include "atx/discrepancy.hpp"

#include <algorithm>
#include <cmath>

#include "atx/ops.hpp"

namespace atx {

DiscrepancyMetric parse_metric(std::string_view name) {
    if (name == "sym_kl") return DiscrepancyMetric::sym_kl;
    if (name == "jsd") return DiscrepancyMetric::jsd;
    if (name == "cross_entropy") return DiscrepancyMetric::cross_entropy;
    if (name == "l2") return DiscrepancyMetric::l2;
    throw ConfigError("unknown discrepancy metric '" + std::string(name) + "'");
}

std::string_view to_string(DiscrepancyMetric metric) {
    switch (metric) {
        case DiscrepancyMetric::sym_kl: return "sym_kl";
        case DiscrepancyMetric::jsd: return "jsd";
        case DiscrepancyMetric::cross_entropy: return "cross_entropy";
        case DiscrepancyMetric::l2: return "l2";
    }
    return "?";
}

void DiscrepancyConfig::validate(std::size_t layer_count) const {
    if (!(prob_floor > 0.0)) throw ConfigError("discrepancy: prob_floor must be positive");
    for (auto l : layers) {
        if (l >= layer_count) {
            throw ConfigError("discrepancy: layer " + std::to_string(l + 1) + " selected but model has " +
                              std::to_string(layer_count) + " layers");
        }
    }
}

void to_json(nlohmann::json& j, const DiscrepancyConfig& c) {
    std::vector<std::size_t> one_based;
    for (auto l : c.layers) one_based.push_back(l + 1);
    j = {{"metric", std::string(to_string(c.metric))}, {"layers", one_based}, {"prob_floor", c.prob_floor}};
}

void from_json(const nlohmann::json& j, DiscrepancyConfig& c) {
    if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("layers")) {
        c.layers.clear();
        for (auto l : j.at("layers").get<std::vector<std::size_t>>()) {
            if (l == 0) throw ConfigError("discrepancy: layers are numbered from 1");
            c.layers.push_back(l - 1);
        }
    }
    c.prob_floor = j.value("prob_floor", c.prob_floor);
}

namespace {

void require_distributions(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) throw ContractError("distribution pair of unequal or zero length");
    for (auto d : {p, q}) {
        double s = 0.0;
        for (double v : d) {
            if (!(v >= 0.0)) throw ContractError("distribution has a negative entry");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-6) throw ContractError("distribution sums to " + std::to_string(s));
    }
}

double clamped_log(double v, double floor) { return std::log(std::max(v, floor)); }

// Per-element value and partial derivatives of each metric's summand.
struct Term {
    double value, dp, dq;
};

Term term(DiscrepancyMetric metric, double p, double q, double floor) {
    switch (metric) {
        case DiscrepancyMetric::sym_kl: {
            const double lp = clamped_log(p, floor), lq = clamped_log(q, floor);
            const double dlp = p > floor ? 1.0 / p : 0.0, dlq = q > floor ? 1.0 / q : 0.0;
            return {(p - q) * (lp - lq), (lp - lq) + (p - q) * dlp, -(lp - lq) - (p - q) * dlq};
        }
        case DiscrepancyMetric::jsd: {
            const double m = 0.5 * (p + q);
            const double lp = clamped_log(p, floor), lq = clamped_log(q, floor), lm = clamped_log(m, floor);
            const double ip = p > floor ? 1.0 : 0.0, iq = q > floor ? 1.0 : 0.0, im = m > floor ? 1.0 : 0.0;
            return {0.5 * p * (lp - lm) + 0.5 * q * (lq - lm), 0.5 * (lp - lm) + 0.5 * ip - 0.5 * im,
                    0.5 * (lq - lm) + 0.5 * iq - 0.5 * im};
        }
        case DiscrepancyMetric::cross_entropy: {
            const double lq = clamped_log(q, floor);
            return {-p * lq, -lq, q > floor ? -p / q : 0.0};
        }
        case DiscrepancyMetric::l2:
            return {(p - q) * (p - q), 2.0 * (p - q), -2.0 * (p - q)};
    }
    return {0.0, 0.0, 0.0};
}

double row_value(DiscrepancyMetric metric, std::span<const double> p, std::span<const double> q, double floor) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) s += term(metric, p[j], q[j], floor).value;
    return s;
}

}  // namespace

double row_sym_kl(std::span<const double> p, std::span<const double> q, double prob_floor) {
    return row_metric(DiscrepancyMetric::sym_kl, p, q, prob_floor);
}

double row_jsd(std::span<const double> p, std::span<const double> q, double prob_floor) {
    return row_metric(DiscrepancyMetric::jsd, p, q, prob_floor);
}

double row_cross_entropy(std::span<const double> p, std::span<const double> q, double prob_floor) {
    return row_metric(DiscrepancyMetric::cross_entropy, p, q, prob_floor);
}

double row_l2(std::span<const double> p, std::span<const double> q) {
    return row_metric(DiscrepancyMetric::l2, p, q, 1e-12);
}

double row_metric(DiscrepancyMetric metric, std::span<const double> p, std::span<const double> q, double prob_floor) {
    require_distributions(p, q);
    if (!(prob_floor > 0.0)) throw ContractError("prob_floor must be positive");
    return row_value(metric, p, q, prob_floor);
}

Tensor row_divergence(const Tensor& prior, const Tensor& series, DiscrepancyMetric metric, double prob_floor) {
    if (prior.shape() != series.shape() || prior.dim() != 2) {
        throw ShapeError("row_divergence: maps differ " + shape_str(prior.shape()) + " vs " + shape_str(series.shape()));
    }
    const std::size_t n = prior.rows(), c = prior.cols();
    auto p = prior.data(), q = series.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = row_value(metric, p.subspan(i * c, c), q.subspan(i * c, c), prob_floor);
    return Tensor::make_result({n, 1}, std::move(out), {prior, series}, [n, c, metric, prob_floor](detail::Node& nd) {
        auto& pn = *nd.parents[0];
        auto& qn = *nd.parents[1];
        auto* gp = pn.requires_grad ? &pn.grad_buffer() : nullptr;
        auto* gq = qn.requires_grad ? &qn.grad_buffer() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = nd.grad[i];
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t k = i * c + j;
                const auto t = term(metric, pn.value[k], qn.value[k], prob_floor);
                if (gp) (*gp)[k] += g * t.dp;
                if (gq) (*gq)[k] += g * t.dq;
            }
        }
    });
}

Tensor assoc_discrepancy(std::span<const AttentionOutput> layers, const DiscrepancyConfig& cfg, StopGradient stop) {
    if (layers.empty()) throw ContractError("assoc_discrepancy: no layers");
    cfg.validate(layers.size());
    std::vector<std::size_t> selected = cfg.layers;
    if (selected.empty()) {
        for (std::size_t l = 0; l < layers.size(); ++l) selected.push_back(l);
    }

    std::vector<Tensor> per_layer;
    per_layer.reserve(selected.size());
    for (auto l : selected) {
        auto prior = ops::average(layers[l].prior);
        auto series = ops::average(layers[l].series);
        if (stop == StopGradient::prior) prior = ops::detach(prior);
        if (stop == StopGradient::series) series = ops::detach(series);
        per_layer.push_back(row_divergence(prior, series, cfg.metric, cfg.prob_floor));
    }
    return ops::average(per_layer);
}

}  // namespace atx
