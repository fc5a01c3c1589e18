#pragma once

#include <cstdint>
#include <cstddef>

#include "csformer/tensor.hpp"

namespace csformer {

// Glorot-uniform samples in [-a, a] with a = sqrt(6 / (fan_in + fan_out)),
// deterministic given the seed.
Tensor init_params(Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

struct LinearLayer {
    Tensor weight; // [in, out]
    Tensor bias;   // [out]; default-constructed (undefined) when the layer has none
};

LinearLayer make_linear(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                        bool with_bias = true);

// y = x . weight (+ bias), broadcast over leading axes; rank-1 x is treated as
// a single row.
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);

struct BatchNorm {
    Tensor gamma;        // [D], learnable
    Tensor beta;         // [D], learnable
    Tensor running_mean; // [D], tracked, not learnable
    Tensor running_var;  // [D], tracked, not learnable
    double eps = 1e-5;
    double momentum = 0.1;
    bool training = false;
};

BatchNorm make_batchnorm(std::size_t dim);

// x is [B_eff, D]. Train mode normalizes per feature with batch statistics
// (population variance) and folds the batch into the running stats; eval mode
// replays the running stats. Train mode needs B_eff >= 2.
Tensor batchnorm_forward(BatchNorm& bn, const Tensor& x);

struct MsaWeights {
    std::size_t dim = 0;   // D
    std::size_t heads = 1; // h, must divide D
    Tensor wq, wk, wv, wo; // each [D, D], no biases
};

MsaWeights make_msa(std::size_t dim, std::size_t heads, std::uint64_t seed);

struct MsaOutput {
    Tensor out;    // [B_eff, S, D]
    Tensor scores; // [B_eff, h, S, S]
};

// Standard multi-head self-attention over the middle (token) axis of
// x [B_eff, S, D]: per head softmax(Q K^T / sqrt(D_k)) V, heads concatenated,
// then the output projection. Scores are returned for export.
MsaOutput msa_forward(const MsaWeights& w, const Tensor& x);

struct AdapterWeights {
    LinearLayer down; // [D, D_b]
    LinearLayer up;   // [D_b, D]
};

AdapterWeights make_adapter(std::size_t dim, std::size_t bottleneck, std::uint64_t seed);

// up(relu(down(x))); the caller adds the residual.
Tensor adapter_forward(const AdapterWeights& a, const Tensor& x);

} // namespace csformer
