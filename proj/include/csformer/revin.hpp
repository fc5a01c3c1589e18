#pragma once

#include <cstddef>
#include <utility>

#include "csformer/tensor.hpp"

namespace csformer {

struct RevinParams {
    Tensor gamma; // [N], learnable
    Tensor beta;  // [N], learnable
    double eps = 1e-5;
};

RevinParams make_revin(std::size_t channels);

// Per-window per-channel statistics captured at normalization time.
// Treated as constants by the gradient rules (stats are detached).
struct RevinStats {
    Tensor mean; // [B, N]
    Tensor var;  // [B, N], population variance over the look-back axis
};

// x is [B, N, L]: y[b,k,:] = gamma_k * (x[b,k,:] - mean_bk) / sqrt(var_bk + eps) + beta_k.
std::pair<Tensor, RevinStats> revin_normalize(const RevinParams& p, const Tensor& x);

// yhat is [B, N, T]: inverts the affine map using the captured stats:
// out = (yhat - beta_k) / gamma_k * sqrt(var_bk + eps) + mean_bk.
Tensor revin_denormalize(const RevinParams& p, const Tensor& yhat, const RevinStats& stats);

} // namespace csformer
