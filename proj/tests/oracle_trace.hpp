#pragma once

// Scalar re-derivation of every layer, written with plain loops and flat
// vectors so expected values come from the formulas rather than from the
// tensor engine under test. Shared by the unit tests and the acceptance runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "csformer/model.hpp"

namespace oracle {

inline std::vector<double> vec(const csformer::Tensor& t) {
    return {t.data().begin(), t.data().end()};
}

inline std::vector<double> matmul(const std::vector<double>& x, std::size_t rows, std::size_t in,
                                  const std::vector<double>& w, std::size_t out) {
    std::vector<double> y(rows * out, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j)
            for (std::size_t k = 0; k < in; ++k) y[r * out + j] += x[r * in + k] * w[k * out + j];
    return y;
}

// Single-head attention on one [S, D] token matrix.
inline std::vector<double> msa_h1(const std::vector<double>& x, std::size_t s, std::size_t d,
                                  const std::vector<double>& wq, const std::vector<double>& wk,
                                  const std::vector<double>& wv, const std::vector<double>& wo,
                                  std::vector<double>* scores_out = nullptr) {
    std::vector<double> q = matmul(x, s, d, wq, d);
    std::vector<double> k = matmul(x, s, d, wk, d);
    std::vector<double> v = matmul(x, s, d, wv, d);
    std::vector<double> scores(s * s);
    for (std::size_t i = 0; i < s; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < s; ++j) {
            double dot = 0.0;
            for (std::size_t a = 0; a < d; ++a) dot += q[i * d + a] * k[j * d + a];
            scores[i * s + j] = dot / std::sqrt(double(d));
            mx = std::max(mx, scores[i * s + j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
            scores[i * s + j] = std::exp(scores[i * s + j] - mx);
            total += scores[i * s + j];
        }
        for (std::size_t j = 0; j < s; ++j) scores[i * s + j] /= total;
    }
    if (scores_out) *scores_out = scores;
    std::vector<double> ctx = matmul(scores, s, s, v, d);
    return matmul(ctx, s, d, wo, d);
}

inline std::vector<double> bn_eval(const std::vector<double>& x, std::size_t rows, std::size_t d,
                                   const std::vector<double>& gamma,
                                   const std::vector<double>& beta, const std::vector<double>& rm,
                                   const std::vector<double>& rv, double eps) {
    std::vector<double> y(rows * d);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j)
            y[r * d + j] = gamma[j] * (x[r * d + j] - rm[j]) / std::sqrt(rv[j] + eps) + beta[j];
    return y;
}

inline std::vector<double> adapter(const std::vector<double>& x, std::size_t rows, std::size_t d,
                                   std::size_t db, const std::vector<double>& dw,
                                   const std::vector<double>& dbias,
                                   const std::vector<double>& uw,
                                   const std::vector<double>& ubias) {
    std::vector<double> hidden = matmul(x, rows, d, dw, db);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < db; ++j) {
            hidden[r * db + j] += dbias[j];
            hidden[r * db + j] = std::max(0.0, hidden[r * db + j]);
        }
    std::vector<double> y = matmul(hidden, rows, db, uw, d);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) y[r * d + j] += ubias[j];
    return y;
}

// Channel stage on h[1, N, L, D] in eval mode: attention over channels at each
// time step, batch norm, adapter, residual to the permuted input.
inline std::vector<double> channel_stage_1batch(const std::vector<double>& h, std::size_t n,
                                                std::size_t l, std::size_t d,
                                                const csformer::Block& block, std::size_t db) {
    std::vector<double> hc(l * n * d); // [L, N, D]
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t a = 0; a < d; ++a)
                hc[(t * n + i) * d + a] = h[(i * l + t) * d + a];

    std::vector<double> z(l * n * d);
    for (std::size_t t = 0; t < l; ++t) {
        std::vector<double> slice(hc.begin() + t * n * d, hc.begin() + (t + 1) * n * d);
        std::vector<double> zs = msa_h1(slice, n, d, vec(block.msa.wq), vec(block.msa.wk),
                                        vec(block.msa.wv), vec(block.msa.wo));
        std::copy(zs.begin(), zs.end(), z.begin() + t * n * d);
    }
    std::vector<double> nrm =
        bn_eval(z, l * n, d, vec(block.channel_norm.gamma), vec(block.channel_norm.beta),
                vec(block.channel_norm.running_mean), vec(block.channel_norm.running_var),
                block.channel_norm.eps);
    std::vector<double> fused =
        adapter(nrm, l * n, d, db, vec(block.channel_adapter.down.weight),
                vec(block.channel_adapter.down.bias), vec(block.channel_adapter.up.weight),
                vec(block.channel_adapter.up.bias));
    std::vector<double> out(n * l * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t a = 0; a < d; ++a)
                out[(i * l + t) * d + a] = fused[(t * n + i) * d + a] + hc[(t * n + i) * d + a];
    return out;
}

// Sequence stage on h[1, N, L, D] in eval mode: attention over time steps per
// channel with the block's shared weights.
inline std::vector<double> sequence_stage_1batch(const std::vector<double>& h, std::size_t n,
                                                 std::size_t l, std::size_t d,
                                                 const csformer::Block& block, std::size_t db) {
    std::vector<double> out(n * l * d);
    std::vector<double> z(n * l * d);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> slice(h.begin() + i * l * d, h.begin() + (i + 1) * l * d);
        std::vector<double> zs = msa_h1(slice, l, d, vec(block.msa.wq), vec(block.msa.wk),
                                        vec(block.msa.wv), vec(block.msa.wo));
        std::copy(zs.begin(), zs.end(), z.begin() + i * l * d);
    }
    std::vector<double> nrm =
        bn_eval(z, n * l, d, vec(block.sequence_norm.gamma), vec(block.sequence_norm.beta),
                vec(block.sequence_norm.running_mean), vec(block.sequence_norm.running_var),
                block.sequence_norm.eps);
    std::vector<double> fused =
        adapter(nrm, n * l, d, db, vec(block.sequence_adapter.down.weight),
                vec(block.sequence_adapter.down.bias), vec(block.sequence_adapter.up.weight),
                vec(block.sequence_adapter.up.bias));
    for (std::size_t i = 0; i < n * l * d; ++i) out[i] = fused[i] + h[i];
    return out;
}

// Full eval-mode forward of a single-block, single-batch model with the
// default stage order: instance-normalize per channel, embed, channel stage,
// sequence stage, flattened head, denormalize. x is [N, L] flattened.
inline std::vector<double> full_model_1batch(const std::vector<double>& x,
                                             const csformer::CsformerModel& m) {
    const std::size_t n = m.config.channels, l = m.config.lookback, d = m.config.dim;
    const std::size_t horizon = m.config.horizon;
    const std::size_t db = m.config.bottleneck();

    std::vector<double> mu(n), var(n);
    std::vector<double> normed(n * l);
    const std::vector<double> rg = vec(m.revin.gamma), rb = vec(m.revin.beta);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t < l; ++t) s += x[k * l + t];
        mu[k] = s / double(l);
        double v2 = 0.0;
        for (std::size_t t = 0; t < l; ++t) {
            const double c = x[k * l + t] - mu[k];
            v2 += c * c;
        }
        var[k] = v2 / double(l);
        for (std::size_t t = 0; t < l; ++t) {
            normed[k * l + t] =
                rg[k] * (x[k * l + t] - mu[k]) / std::sqrt(var[k] + m.revin.eps) + rb[k];
        }
    }

    std::vector<double> nu = vec(m.nu);
    std::vector<double> h(n * l * d);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t a = 0; a < d; ++a) h[(k * l + t) * d + a] = normed[k * l + t] * nu[a];

    h = channel_stage_1batch(h, n, l, d, m.blocks[0], db);
    h = sequence_stage_1batch(h, n, l, d, m.blocks[0], db);

    std::vector<double> flat_head = matmul(h, n, l * d, vec(m.head.weight), horizon);
    const std::vector<double> hb = vec(m.head.bias);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < horizon; ++t) flat_head[k * horizon + t] += hb[t];

    std::vector<double> out(n * horizon);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < horizon; ++t)
            out[k * horizon + t] = (flat_head[k * horizon + t] - rb[k]) / rg[k] *
                                       std::sqrt(var[k] + m.revin.eps) +
                                   mu[k];
    return out;
}

} // namespace oracle
