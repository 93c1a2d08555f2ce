#include "atx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace atx::ops {

using detail::Node;

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (t.dim() != 2) throw ShapeError(std::string(op) + ": expected matrix, got " + shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

// Parent grad buffer, or nullptr if the parent is outside the graph.
std::vector<double>* parent_grad(Node& n, std::size_t i) {
    auto& p = *n.parents[i];
    return p.requires_grad ? &p.grad_buffer() : nullptr;
}

// C += A·B with A: m×k, B: k×p.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * p;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            if (av == 0.0) continue;
            const double* brow = b + l * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A·Bᵀ with A: m×k, B: p×k.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[j * k + l];
            c[i * p + j] += s;
        }
    }
}

// C += Aᵀ·B with A: k×m, B: k×p.
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t p) {
    for (std::size_t l = 0; l < k; ++l) {
        const double* brow = b + l * p;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[l * m + i];
            if (av == 0.0) continue;
            double* crow = c + i * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
    std::vector<double> out(a.size());
    auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return Tensor::make_result(a.shape(), std::move(out), {a}, [dfdx](Node& n) {
        auto* ga = parent_grad(n, 0);
        if (!ga) return;
        const auto& x = n.parents[0]->value;
        for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += n.grad[i] * dfdx(x[i], n.value[i]);
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(m * p, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, p);
    return Tensor::make_result({m, p}, std::move(out), {a, b}, [m, k, p](Node& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (auto* ga = parent_grad(n, 0)) gemm_nt(n.grad.data(), bv.data(), ga->data(), m, p, k);
        if (auto* gb = parent_grad(n, 1)) gemm_tn(av.data(), n.grad.data(), gb->data(), m, k, p);
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    auto in = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
    return Tensor::make_result({c, r}, std::move(out), {a}, [r, c](Node& n) {
        auto* ga = parent_grad(n, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += n.grad[j * r + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<double> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
        for (std::size_t k = 0; k < 2; ++k)
            if (auto* g = parent_grad(n, k))
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    std::vector<double> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= n.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<double> out(a.size());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
        const auto& x = n.parents[0]->value;
        const auto& y = n.parents[1]->value;
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * y[i];
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * x[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
    require_matrix(a, "add_row");
    const std::size_t r = a.rows(), c = a.cols();
    if (bias.size() != c) {
        throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(a.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    auto b = bias.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b[j];
    return Tensor::make_result(a.shape(), std::move(out), {a, bias}, [r, c](Node& n) {
        if (auto* g = parent_grad(n, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
        if (auto* g = parent_grad(n, 1))
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*g)[j] += n.grad[i * c + j];
    });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softplus(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor gelu(const Tensor& a) {
    using std::numbers::sqrt2;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / sqrt2)); },
        [](double x, double) { return 0.5 * (1.0 + std::erf(x / sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x); });
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.dim() == 0) throw ShapeError("softmax_lastdim: scalar input");
    const std::size_t n = x.shape().back();
    const std::size_t rows = n ? x.size() / n : 0;
    std::vector<double> out(x.size());
    auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= s;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, n](Node& nd) {
        auto* g = parent_grad(nd, 0);
        if (!g) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = nd.value.data() + r * n;
            const double* gy = nd.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
            for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += y[j] * (gy[j] - dot);
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::make_result({}, {s}, {a}, [](Node& n) {
        if (auto* g = parent_grad(n, 0))
            for (auto& v : *g) v += n.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor average(std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("average of no tensors");
    for (const auto& t : items) require_same(items[0], t, "average");
    const double w = 1.0 / static_cast<double>(items.size());
    std::vector<double> out(items[0].size(), 0.0);
    for (const auto& t : items) {
        auto d = t.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    }
    for (auto& v : out) v *= w;
    std::vector<Tensor> inputs(items.begin(), items.end());
    return Tensor::make_result(items[0].shape(), std::move(out), std::move(inputs), [w](Node& n) {
        for (std::size_t k = 0; k < n.parents.size(); ++k)
            if (auto* g = parent_grad(n, k))
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += w * n.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    require_matrix(a, "slice_cols");
    const std::size_t r = a.rows(), c = a.cols();
    if (begin >= end || end > c) throw ShapeError("slice_cols: bad column range");
    const std::size_t w = end - begin;
    std::vector<double> out(r * w);
    auto in = a.data();
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(in.data() + i * c + begin, w, out.data() + i * w);
    return Tensor::make_result({r, w}, std::move(out), {a}, [r, c, w, begin](Node& n) {
        auto* g = parent_grad(n, 0);
        if (!g) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) (*g)[i * c + begin + j] += n.grad[i * w + j];
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = parts[0].rows();
    std::size_t c = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
        offsets.push_back(c);
        c += p.cols();
    }
    std::vector<double> out(r * c);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = parts[k].cols();
        auto in = parts[k].data();
        for (std::size_t i = 0; i < r; ++i) std::copy_n(in.data() + i * w, w, out.data() + i * c + offsets[k]);
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return Tensor::make_result({r, c}, std::move(out), std::move(inputs), [r, c, offsets](Node& n) {
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            auto* g = parent_grad(n, k);
            if (!g) continue;
            const std::size_t w = n.parents[k]->shape[1];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += n.grad[i * c + offsets[k] + j];
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t r = x.rows(), c = x.cols();
    if (gain.size() != c || bias.size() != c) throw ShapeError("layer_norm: gain/bias length mismatch");
    std::vector<double> xhat(r * c), inv_std(r), out(r * c);
    auto in = x.data();
    auto g = gain.data();
    auto b = bias.data();
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = in.data() + i * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * inv_std[i];
            out[i * c + j] = xhat[i * c + j] * g[j] + b[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
            const auto& gv = n.parents[1]->value;
            auto* gx = parent_grad(n, 0);
            auto* gg = parent_grad(n, 1);
            auto* gb = parent_grad(n, 2);
            for (std::size_t i = 0; i < r; ++i) {
                const double* dy = n.grad.data() + i * c;
                const double* xh = xhat.data() + i * c;
                if (gg)
                    for (std::size_t j = 0; j < c; ++j) (*gg)[j] += dy[j] * xh[j];
                if (gb)
                    for (std::size_t j = 0; j < c; ++j) (*gb)[j] += dy[j];
                if (gx) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double dxh = dy[j] * gv[j];
                        s1 += dxh;
                        s2 += dxh * xh[j];
                    }
                    const double cn = static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double dxh = dy[j] * gv[j];
                        (*gx)[i * c + j] += inv_std[i] * (dxh - s1 / cn - xh[j] * s2 / cn);
                    }
                }
            }
        });
}

Tensor detach(const Tensor& x) {
    return Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), false);
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    if (p == 0.0) return x;
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
    return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

}  // namespace atx::ops
