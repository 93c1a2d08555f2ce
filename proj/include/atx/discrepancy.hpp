#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "atx/attention.hpp"
#include "atx/tensor.hpp"

namespace atx {

enum class DiscrepancyMetric { sym_kl, jsd, cross_entropy, l2 };

DiscrepancyMetric parse_metric(std::string_view name);
std::string_view to_string(DiscrepancyMetric metric);

struct DiscrepancyConfig {
    DiscrepancyMetric metric = DiscrepancyMetric::sym_kl;
    // 0-based layer indices (1-based in JSON); empty selects every layer.
    std::vector<std::size_t> layers;
    double prob_floor = 1e-12;

    void validate(std::size_t layer_count) const;
};

void to_json(nlohmann::json& j, const DiscrepancyConfig& c);
void from_json(const nlohmann::json& j, DiscrepancyConfig& c);

/// Which association map the gradient must not flow through.
enum class StopGradient { none, prior, series };

// Scalar metrics on a single pair of distributions. Inputs must be nonnegative
// and sum to 1 within 1e-6; logs see values clamped below at prob_floor.
double row_sym_kl(std::span<const double> p, std::span<const double> q, double prob_floor = 1e-12);
double row_jsd(std::span<const double> p, std::span<const double> q, double prob_floor = 1e-12);
double row_cross_entropy(std::span<const double> p, std::span<const double> q, double prob_floor = 1e-12);
double row_l2(std::span<const double> p, std::span<const double> q);
double row_metric(DiscrepancyMetric metric, std::span<const double> p, std::span<const double> q,
                  double prob_floor = 1e-12);

/// Differentiable row-wise metric between two N×N row-stochastic maps; returns N×1.
Tensor row_divergence(const Tensor& prior, const Tensor& series, DiscrepancyMetric metric, double prob_floor);

/// Association discrepancy per time point (N×1): per layer, prior and series are
/// averaged over heads, the metric is taken row by row, and the selected
/// layers are averaged.
Tensor assoc_discrepancy(std::span<const AttentionOutput> layers, const DiscrepancyConfig& cfg,
                         StopGradient stop = StopGradient::none);

}  // namespace atx
