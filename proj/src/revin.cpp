#include "csformer/revin.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "csformer/error.hpp"

namespace csformer {

RevinParams make_revin(std::size_t channels) {
    RevinParams p;
    p.gamma = Tensor::full({channels}, 1.0);
    p.gamma.set_requires_grad();
    p.beta = Tensor::zeros({channels});
    p.beta.set_requires_grad();
    return p;
}

std::pair<Tensor, RevinStats> revin_normalize(const RevinParams& p, const Tensor& x) {
    if (x.rank() != 3) {
        throw ShapeError("revin_normalize: expected [batch, channels, length], got " +
                         shape_str(x.shape()));
    }
    const std::size_t b = x.shape()[0];
    const std::size_t n = x.shape()[1];
    const std::size_t l = x.shape()[2];
    if (n != p.gamma.size()) {
        throw ShapeError("revin_normalize: channel axis " + std::to_string(n) +
                         " does not match the parameter width " + std::to_string(p.gamma.size()));
    }
    if (l == 0) throw ContractError("revin_normalize: look-back axis must be nonempty");

    RevinStats stats{Tensor::zeros({b, n}), Tensor::zeros({b, n})};
    Tensor out = Tensor::zeros(x.shape());

    const double* px = x.data().data();
    double* pm = stats.mean.data().data();
    double* pv = stats.var.data().data();
    double* po = out.data().data();
    const double* g = p.gamma.data().data();
    const double* be = p.beta.data().data();

    std::vector<double> inv_sigma(b * n);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double* row = px + (i * n + k) * l;
            double mu = 0.0;
            for (std::size_t t = 0; t < l; ++t) mu += row[t];
            mu /= static_cast<double>(l);
            double var = 0.0;
            for (std::size_t t = 0; t < l; ++t) {
                const double c = row[t] - mu;
                var += c * c;
            }
            var /= static_cast<double>(l);
            pm[i * n + k] = mu;
            pv[i * n + k] = var;
            const double inv = 1.0 / std::sqrt(var + p.eps);
            inv_sigma[i * n + k] = inv;
            double* orow = po + (i * n + k) * l;
            for (std::size_t t = 0; t < l; ++t) {
                orow[t] = g[k] * (row[t] - mu) * inv + be[k];
            }
        }
    }

    GradTape* tape = GradTape::active();
    const bool track = tape != nullptr && (x.requires_grad() || p.gamma.requires_grad() ||
                                           p.beta.requires_grad());
    if (track) {
        out.set_requires_grad(true);
        Tensor xv = x, gv = p.gamma, bv = p.beta, ov = out;
        Tensor mv = stats.mean, vv = stats.var;
        const double eps = p.eps;
        tape->record(
            {x, p.gamma, p.beta}, out,
            [xv, gv, bv, ov, mv, vv, inv_sigma = std::move(inv_sigma), b, n, l, eps]() mutable {
                std::span<const double> dy = ov.grad();
                const double* pxv = xv.data().data();
                const double* pmv = mv.data().data();
                const double* pgv = gv.data().data();
                for (std::size_t i = 0; i < b; ++i) {
                    for (std::size_t k = 0; k < n; ++k) {
                        const std::size_t base = (i * n + k) * l;
                        const double inv = inv_sigma[i * n + k];
                        const double mu = pmv[i * n + k];
                        if (gv.requires_grad()) {
                            double acc = 0.0;
                            for (std::size_t t = 0; t < l; ++t) {
                                acc += dy[base + t] * (pxv[base + t] - mu) * inv;
                            }
                            gv.grad()[k] += acc;
                        }
                        if (bv.requires_grad()) {
                            double acc = 0.0;
                            for (std::size_t t = 0; t < l; ++t) acc += dy[base + t];
                            bv.grad()[k] += acc;
                        }
                        if (xv.requires_grad()) {
                            // Stats are detached: x only enters through the
                            // numerator, so the chain is a per-element scale.
                            const double c = pgv[k] * inv;
                            std::span<double> dx = xv.grad();
                            for (std::size_t t = 0; t < l; ++t) dx[base + t] += c * dy[base + t];
                        }
                    }
                }
            },
            "revin_normalize");
    }
    return {out, stats};
}

Tensor revin_denormalize(const RevinParams& p, const Tensor& yhat, const RevinStats& stats) {
    if (yhat.rank() != 3) {
        throw ShapeError("revin_denormalize: expected [batch, channels, horizon], got " +
                         shape_str(yhat.shape()));
    }
    const std::size_t b = yhat.shape()[0];
    const std::size_t n = yhat.shape()[1];
    const std::size_t t_len = yhat.shape()[2];
    if (stats.mean.shape() != Shape{b, n}) {
        throw ShapeError("revin_denormalize: stats shape " + shape_str(stats.mean.shape()) +
                         " does not match batch " + shape_str(yhat.shape()));
    }
    const double* g = p.gamma.data().data();
    for (std::size_t k = 0; k < n; ++k) {
        if (std::abs(g[k]) < 1e-12) {
            throw NumericsError("revin_denormalize: gamma for channel " + std::to_string(k) +
                                " is too close to zero to invert");
        }
    }

    Tensor out = Tensor::zeros(yhat.shape());
    const double* py = yhat.data().data();
    const double* pm = stats.mean.data().data();
    const double* pv = stats.var.data().data();
    const double* be = p.beta.data().data();
    double* po = out.data().data();

    std::vector<double> sigma(b * n);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double s = std::sqrt(pv[i * n + k] + p.eps);
            sigma[i * n + k] = s;
            const std::size_t base = (i * n + k) * t_len;
            for (std::size_t t = 0; t < t_len; ++t) {
                po[base + t] = (py[base + t] - be[k]) / g[k] * s + pm[i * n + k];
            }
        }
    }

    GradTape* tape = GradTape::active();
    const bool track = tape != nullptr && (yhat.requires_grad() || p.gamma.requires_grad() ||
                                           p.beta.requires_grad());
    if (track) {
        out.set_requires_grad(true);
        Tensor yv = yhat, gv = p.gamma, bv = p.beta, ov = out;
        tape->record(
            {yhat, p.gamma, p.beta}, out,
            [yv, gv, bv, ov, sigma = std::move(sigma), b, n, t_len]() mutable {
                std::span<const double> dout = ov.grad();
                const double* pyv = yv.data().data();
                const double* pgv = gv.data().data();
                const double* pbv = bv.data().data();
                for (std::size_t i = 0; i < b; ++i) {
                    for (std::size_t k = 0; k < n; ++k) {
                        const std::size_t base = (i * n + k) * t_len;
                        const double s = sigma[i * n + k];
                        const double inv_g = 1.0 / pgv[k];
                        if (yv.requires_grad()) {
                            std::span<double> dy = yv.grad();
                            for (std::size_t t = 0; t < t_len; ++t) {
                                dy[base + t] += dout[base + t] * s * inv_g;
                            }
                        }
                        if (gv.requires_grad()) {
                            double acc = 0.0;
                            for (std::size_t t = 0; t < t_len; ++t) {
                                acc += dout[base + t] * (pyv[base + t] - pbv[k]);
                            }
                            gv.grad()[k] += -acc * s * inv_g * inv_g;
                        }
                        if (bv.requires_grad()) {
                            double acc = 0.0;
                            for (std::size_t t = 0; t < t_len; ++t) acc += dout[base + t];
                            bv.grad()[k] += -acc * s * inv_g;
                        }
                    }
                }
            },
            "revin_denormalize");
    }
    return out;
}

} // namespace csformer
