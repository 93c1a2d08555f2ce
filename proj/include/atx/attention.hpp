#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "atx/tensor.hpp"

namespace atx {

enum class PriorKind { gaussian, power_law };

PriorKind parse_prior_kind(std::string_view name);
std::string_view to_string(PriorKind kind);

struct AttentionConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    double sigma_floor = 1e-4;
    PriorKind prior_kind = PriorKind::gaussian;

    void validate() const;
    std::size_t head_dim() const { return d_model / heads; }
};

/// Squared relative distances (j - i)^2 for a window of n points.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n);
    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }

private:
    std::size_t n_;
    std::vector<double> values_;
};

struct AttentionWeights {
    Tensor w_q;      // d_model × d_model
    Tensor w_k;      // d_model × d_model
    Tensor w_v;      // d_model × d_model
    Tensor w_sigma;  // d_model × heads
    Tensor w_out;    // d_model × d_model
    Tensor b_out;    // 1 × d_model
};

struct Projections {
    Tensor q, k, v;
    Tensor sigma_raw;  // N × heads, before the positivity transform
};

/// One Anomaly-Attention block's result. prior[m] and series[m] are the N×N
/// row-stochastic maps of head m.
struct AttentionOutput {
    Tensor z_hat;  // N × d_model
    std::vector<Tensor> prior;
    std::vector<Tensor> series;
    Tensor sigma;  // N × heads, strictly positive
};

Projections project_qkvs(const Tensor& x, const AttentionWeights& w);

/// softplus(raw) + floor.
Tensor sigma_transform(const Tensor& sigma_raw, double sigma_floor);

/// Prior association for one head from its N×1 scale column.
///
/// gaussian: row i is G(|j-i|; sigma_i) rescaled by its row sum. The
/// 1/(sqrt(2pi) sigma_i) factor is constant along a row and cancels in the
/// rescale, so the row is evaluated as softmax_j(-(j-i)^2 / (2 sigma_i^2)).
/// power_law: row i is (|j-i|+1)^(-alpha_i) rescaled, alpha_i = the column value.
Tensor compute_prior(const Tensor& scale_column, const DistanceMatrix& dist, PriorKind kind);

/// One map per head, from the N×heads scale matrix.
std::vector<Tensor> compute_prior_heads(const Tensor& sigma, const DistanceMatrix& dist, PriorKind kind);

/// Per head m: softmax(Q_m K_m^T * sqrt(heads / d_model)).
std::vector<Tensor> compute_series(const Tensor& q, const Tensor& k, std::size_t heads);

/// Per head S_m V_m, concatenated along channels, then projected with w_out / b_out.
Tensor attend(std::span<const Tensor> series, const Tensor& v, const Tensor& w_out, const Tensor& b_out);

AttentionOutput anomaly_attention(const Tensor& x, const AttentionWeights& w, const AttentionConfig& cfg,
                                  const DistanceMatrix& dist);

}  // namespace atx
