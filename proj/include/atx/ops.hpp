#pragma once

#include <span>
#include <vector>

#include "atx/rng.hpp"
#include "atx/tensor.hpp"

// Differentiable primitives. Matrices are rank-2 tensors; "column vector" means N×1.
namespace atx::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// a: M×K, bias: 1×K or K, broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);

Tensor square(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor softmax_lastdim(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean of equally shaped tensors.
Tensor average(std::span<const Tensor> items);

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);

/// Per-row normalization over the last dimension with learnable gain/bias (length = cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Same values, no gradient path.
Tensor detach(const Tensor& x);

/// Inverted dropout with a mask drawn from rng; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

/// Mean squared error over all entries.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace atx::ops
