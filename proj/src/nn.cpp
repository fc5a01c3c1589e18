#include "csformer/nn.hpp"

#include <cmath>
#include <string>

#include "csformer/error.hpp"
#include "csformer/rng.hpp"

namespace csformer {

Tensor init_params(Shape shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    if (fan_in == 0 || fan_out == 0) {
        throw ContractError("init_params: fan_in and fan_out must be positive");
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(seed, "init");
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.next_uniform_sym(a);
    return t;
}

LinearLayer make_linear(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                        bool with_bias) {
    LinearLayer layer;
    layer.weight = init_params({in_dim, out_dim}, in_dim, out_dim, seed);
    layer.weight.set_requires_grad();
    if (with_bias) {
        layer.bias = Tensor::zeros({out_dim});
        layer.bias.set_requires_grad();
    }
    return layer;
}

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
    const std::size_t in_dim = layer.weight.shape()[0];
    if (x.shape().back() != in_dim) {
        throw ShapeError("linear_forward: input " + shape_str(x.shape()) +
                         " does not end in in_dim " + std::to_string(in_dim));
    }
    const bool row_vector = x.rank() == 1;
    Tensor h = row_vector ? reshape(x, {1, in_dim}) : x;
    Tensor y = matmul(h, layer.weight);
    if (layer.bias.defined()) y = add(y, layer.bias);
    if (row_vector) y = reshape(y, {layer.weight.shape()[1]});
    return y;
}

BatchNorm make_batchnorm(std::size_t dim) {
    BatchNorm bn;
    bn.gamma = Tensor::full({dim}, 1.0);
    bn.gamma.set_requires_grad();
    bn.beta = Tensor::zeros({dim});
    bn.beta.set_requires_grad();
    bn.running_mean = Tensor::zeros({dim});
    bn.running_var = Tensor::full({dim}, 1.0);
    return bn;
}

Tensor batchnorm_forward(BatchNorm& bn, const Tensor& x) {
    if (x.rank() != 2) {
        throw ShapeError("batchnorm_forward: expected [batch, features], got " +
                         shape_str(x.shape()));
    }
    const std::size_t rows = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (d != bn.gamma.size()) {
        throw ShapeError("batchnorm_forward: feature axis " + std::to_string(d) +
                         " does not match the layer width " + std::to_string(bn.gamma.size()));
    }
    if (bn.training && rows < 2) {
        throw ContractError("batchnorm_forward: train mode needs a batch of at least 2 rows");
    }

    const double* px = x.data().data();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    if (bn.training) {
        for (std::size_t i = 0; i < rows; ++i) {
            const double* row = px + i * d;
            for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
        }
        for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* row = px + i * d;
            for (std::size_t j = 0; j < d; ++j) {
                const double c = row[j] - mean[j];
                var[j] += c * c;
            }
        }
        for (std::size_t j = 0; j < d; ++j) var[j] /= static_cast<double>(rows);

        std::span<double> rm = bn.running_mean.data();
        std::span<double> rv = bn.running_var.data();
        for (std::size_t j = 0; j < d; ++j) {
            rm[j] = (1.0 - bn.momentum) * rm[j] + bn.momentum * mean[j];
            rv[j] = (1.0 - bn.momentum) * rv[j] + bn.momentum * var[j];
        }
    } else {
        std::span<const double> rm = bn.running_mean.data();
        std::span<const double> rv = bn.running_var.data();
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] = rm[j];
            var[j] = rv[j];
        }
    }

    std::vector<double> inv_sigma(d);
    for (std::size_t j = 0; j < d; ++j) inv_sigma[j] = 1.0 / std::sqrt(var[j] + bn.eps);

    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(rows * d);
    {
        const double* g = bn.gamma.data().data();
        const double* b = bn.beta.data().data();
        double* po = out.data().data();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double h = (px[i * d + j] - mean[j]) * inv_sigma[j];
                xhat[i * d + j] = h;
                po[i * d + j] = g[j] * h + b[j];
            }
        }
    }

    GradTape* tape = GradTape::active();
    const bool track = tape != nullptr &&
                       (x.requires_grad() || bn.gamma.requires_grad() || bn.beta.requires_grad());
    if (track) {
        out.set_requires_grad(true);
        Tensor xv = x, gv = bn.gamma, bv = bn.beta, ov = out;
        const bool batch_stats = bn.training;
        tape->record(
            {x, bn.gamma, bn.beta}, out,
            [xv, gv, bv, ov, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), rows, d,
             batch_stats]() mutable {
                std::span<const double> dy = ov.grad();
                if (gv.requires_grad()) {
                    std::span<double> dg = gv.grad();
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < d; ++j) dg[j] += dy[i * d + j] * xhat[i * d + j];
                }
                if (bv.requires_grad()) {
                    std::span<double> db = bv.grad();
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
                }
                if (xv.requires_grad()) {
                    std::span<double> dx = xv.grad();
                    const double* g = gv.data().data();
                    if (batch_stats) {
                        // Batch statistics depend on x, so the gradient carries
                        // the mean and the xhat-projection corrections.
                        std::vector<double> mean_dy(d, 0.0), mean_dyxh(d, 0.0);
                        for (std::size_t i = 0; i < rows; ++i) {
                            for (std::size_t j = 0; j < d; ++j) {
                                mean_dy[j] += dy[i * d + j];
                                mean_dyxh[j] += dy[i * d + j] * xhat[i * d + j];
                            }
                        }
                        for (std::size_t j = 0; j < d; ++j) {
                            mean_dy[j] /= static_cast<double>(rows);
                            mean_dyxh[j] /= static_cast<double>(rows);
                        }
                        for (std::size_t i = 0; i < rows; ++i) {
                            for (std::size_t j = 0; j < d; ++j) {
                                const std::size_t k = i * d + j;
                                dx[k] += g[j] * inv_sigma[j] *
                                         (dy[k] - mean_dy[j] - xhat[k] * mean_dyxh[j]);
                            }
                        }
                    } else {
                        for (std::size_t i = 0; i < rows; ++i) {
                            for (std::size_t j = 0; j < d; ++j) {
                                dx[i * d + j] += dy[i * d + j] * g[j] * inv_sigma[j];
                            }
                        }
                    }
                }
            },
            "batchnorm");
    }
    return out;
}

MsaWeights make_msa(std::size_t dim, std::size_t heads, std::uint64_t seed) {
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("make_msa: head count " + std::to_string(heads) +
                          " must divide dim " + std::to_string(dim));
    }
    MsaWeights w;
    w.dim = dim;
    w.heads = heads;
    w.wq = init_params({dim, dim}, dim, dim, substream_seed(seed, "wq")).set_requires_grad();
    w.wk = init_params({dim, dim}, dim, dim, substream_seed(seed, "wk")).set_requires_grad();
    w.wv = init_params({dim, dim}, dim, dim, substream_seed(seed, "wv")).set_requires_grad();
    w.wo = init_params({dim, dim}, dim, dim, substream_seed(seed, "wo")).set_requires_grad();
    return w;
}

MsaOutput msa_forward(const MsaWeights& w, const Tensor& x) {
    if (x.rank() != 3 || x.shape()[2] != w.dim) {
        throw ShapeError("msa_forward: expected [batch, tokens, " + std::to_string(w.dim) +
                         "], got " + shape_str(x.shape()));
    }
    if (w.heads == 0 || w.dim % w.heads != 0) {
        throw ConfigError("msa_forward: head count must divide dim");
    }
    const std::size_t b = x.shape()[0];
    const std::size_t s = x.shape()[1];
    const std::size_t h = w.heads;
    const std::size_t dk = w.dim / h;

    auto split_heads = [&](const Tensor& t) {
        return permute(reshape(t, {b, s, h, dk}), {0, 2, 1, 3}); // [b, h, s, dk]
    };
    Tensor q = split_heads(matmul(x, w.wq));
    Tensor k = split_heads(matmul(x, w.wk));
    Tensor v = split_heads(matmul(x, w.wv));

    Tensor logits = scale(matmul(q, permute(k, {0, 1, 3, 2})), 1.0 / std::sqrt(double(dk)));
    Tensor scores = softmax_lastaxis(logits); // [b, h, s, s]

    Tensor ctx = matmul(scores, v);                               // [b, h, s, dk]
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {b, s, w.dim});
    return MsaOutput{matmul(merged, w.wo), scores};
}

AdapterWeights make_adapter(std::size_t dim, std::size_t bottleneck, std::uint64_t seed) {
    if (bottleneck == 0 || bottleneck >= dim) {
        throw ConfigError("make_adapter: bottleneck " + std::to_string(bottleneck) +
                          " must be in [1, dim)");
    }
    AdapterWeights a;
    a.down = make_linear(dim, bottleneck, substream_seed(seed, "down"));
    a.up = make_linear(bottleneck, dim, substream_seed(seed, "up"));
    return a;
}

Tensor adapter_forward(const AdapterWeights& a, const Tensor& x) {
    return linear_forward(a.up, relu(linear_forward(a.down, x)));
}

} // namespace csformer
