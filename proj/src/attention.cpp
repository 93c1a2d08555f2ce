#include "atx/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atx/ops.hpp"

namespace atx {

PriorKind parse_prior_kind(std::string_view name) {
    if (name == "gaussian") return PriorKind::gaussian;
    if (name == "power_law") return PriorKind::power_law;
    throw ConfigError("unknown prior kind '" + std::string(name) + "'");
}

std::string_view to_string(PriorKind kind) { return kind == PriorKind::gaussian ? "gaussian" : "power_law"; }

void AttentionConfig::validate() const {
    if (d_model == 0 || heads == 0) throw ConfigError("d_model and heads must be positive");
    if (d_model % heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") is not divisible by heads (" +
                                    std::to_string(heads) + ")");
    }
    if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
}

DistanceMatrix::DistanceMatrix(std::size_t n) : n_(n), values_(n * n) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(j) - static_cast<double>(i);
            values_[i * n + j] = d * d;
        }
}

Projections project_qkvs(const Tensor& x, const AttentionWeights& w) {
    return {ops::matmul(x, w.w_q), ops::matmul(x, w.w_k), ops::matmul(x, w.w_v), ops::matmul(x, w.w_sigma)};
}

Tensor sigma_transform(const Tensor& sigma_raw, double sigma_floor) {
    return ops::add_scalar(ops::softplus(sigma_raw), sigma_floor);
}

Tensor compute_prior(const Tensor& scale_column, const DistanceMatrix& dist, PriorKind kind) {
    const std::size_t n = dist.size();
    if (scale_column.size() != n) {
        throw ShapeError("compute_prior: scale column " + shape_str(scale_column.shape()) + " for window " +
                         std::to_string(n));
    }
    auto s = scale_column.data();
    for (double v : s) {
        if (!(v > 0.0)) throw ContractError("compute_prior: scale must be positive, got " + std::to_string(v));
    }

    // Row i is softmax_j(-w_i * phi_ij); dlogit/dscale_i is stored for the backward pass.
    std::vector<double> phi(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            phi[i * n + j] = kind == PriorKind::gaussian ? dist(i, j) : std::log(std::sqrt(dist(i, j)) + 1.0);

    std::vector<double> out(n * n);
    std::vector<double> dlogit(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double si = s[i];
        const double w = kind == PriorKind::gaussian ? 1.0 / (2.0 * si * si) : si;
        double* row = out.data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = -w * phi[i * n + j];
            mx = std::max(mx, row[j]);
            dlogit[i * n + j] = kind == PriorKind::gaussian ? phi[i * n + j] / (si * si * si) : -phi[i * n + j];
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += (row[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) row[j] /= total;
    }

    return Tensor::make_result({n, n}, std::move(out), {scale_column}, [n, dlogit = std::move(dlogit)](detail::Node& nd) {
        auto& parent = *nd.parents[0];
        if (!parent.requires_grad) return;
        auto& g = parent.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = nd.value.data() + i * n;
            const double* gp = nd.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gp[j] * p[j];
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += p[j] * (gp[j] - dot) * dlogit[i * n + j];
            g[i] += acc;
        }
    });
}

std::vector<Tensor> compute_prior_heads(const Tensor& sigma, const DistanceMatrix& dist, PriorKind kind) {
    const std::size_t heads = sigma.cols();
    std::vector<Tensor> maps;
    maps.reserve(heads);
    for (std::size_t m = 0; m < heads; ++m) maps.push_back(compute_prior(ops::slice_cols(sigma, m, m + 1), dist, kind));
    return maps;
}

std::vector<Tensor> compute_series(const Tensor& q, const Tensor& k, std::size_t heads) {
    if (q.shape() != k.shape()) throw ShapeError("compute_series: Q and K shapes differ");
    if (heads == 0 || q.cols() % heads != 0) throw ShapeError("compute_series: channels not divisible by heads");
    const std::size_t dh = q.cols() / heads;
    const double factor = std::sqrt(static_cast<double>(heads) / static_cast<double>(q.cols()));
    std::vector<Tensor> maps;
    maps.reserve(heads);
    for (std::size_t m = 0; m < heads; ++m) {
        auto qm = ops::slice_cols(q, m * dh, (m + 1) * dh);
        auto km = ops::slice_cols(k, m * dh, (m + 1) * dh);
        maps.push_back(ops::softmax_lastdim(ops::scale(ops::matmul(qm, ops::transpose(km)), factor)));
    }
    return maps;
}

Tensor attend(std::span<const Tensor> series, const Tensor& v, const Tensor& w_out, const Tensor& b_out) {
    const std::size_t heads = series.size();
    if (heads == 0 || v.cols() % heads != 0) throw ShapeError("attend: channels not divisible by heads");
    const std::size_t dh = v.cols() / heads;
    std::vector<Tensor> parts;
    parts.reserve(heads);
    for (std::size_t m = 0; m < heads; ++m) {
        parts.push_back(ops::matmul(series[m], ops::slice_cols(v, m * dh, (m + 1) * dh)));
    }
    return ops::add_row(ops::matmul(ops::concat_cols(parts), w_out), b_out);
}

AttentionOutput anomaly_attention(const Tensor& x, const AttentionWeights& w, const AttentionConfig& cfg,
                                  const DistanceMatrix& dist) {
    if (x.rows() != dist.size()) throw ShapeError("anomaly_attention: window length differs from distance matrix");
    auto proj = project_qkvs(x, w);
    AttentionOutput out;
    out.sigma = sigma_transform(proj.sigma_raw, cfg.sigma_floor);
    out.prior = compute_prior_heads(out.sigma, dist, cfg.prior_kind);
    out.series = compute_series(proj.q, proj.k, cfg.heads);
    out.z_hat = attend(out.series, proj.v, w.w_out, w.b_out);
    return out;
}

}  // namespace atx
