#include "csformer/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "csformer/error.hpp"
#include "csformer/rng.hpp"

namespace csformer {

void TrainConfig::validate() const {
    if (learning_rate <= 0) throw ConfigError("train config: learning rate must be positive");
    if (batch_size == 0) throw ConfigError("train config: batch size must be positive");
    if (max_epochs > 0 && (patience == 0 || patience > max_epochs)) {
        throw ConfigError("train config: patience must be in [1, max_epochs]");
    }
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("mse_loss: shapes " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()) + " differ");
    }
    Tensor diff = sub(pred, target);
    return mean(mul(diff, diff));
}

void adam_step(AdamState& state, std::vector<Tensor>& params, double lr) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), 0.0);
            state.v[i].assign(params[i].size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ContractError("adam_step: parameter list changed size mid-run");
    }
    for (const Tensor& p : params) {
        if (!p.has_grad()) {
            throw ContractError("adam_step: a parameter is missing its gradient");
        }
    }

    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::span<double> w = params[i].data();
        std::span<const double> g = std::as_const(params[i]).grad();
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

namespace {

// Stacks windows[first..first+count) into x [B,N,L] and y [B,N,T].
void assemble_batch(const std::vector<WindowSample>& windows,
                    const std::vector<std::size_t>& order, std::size_t first, std::size_t count,
                    Tensor& x, Tensor& y) {
    const Shape& ls = windows[order[first]].lookback.shape();
    const Shape& hs = windows[order[first]].horizon.shape();
    x = Tensor::zeros({count, ls[0], ls[1]});
    y = Tensor::zeros({count, hs[0], hs[1]});
    const std::size_t lb_size = ls[0] * ls[1];
    const std::size_t hz_size = hs[0] * hs[1];
    for (std::size_t i = 0; i < count; ++i) {
        const WindowSample& w = windows[order[first + i]];
        std::copy(w.lookback.data().begin(), w.lookback.data().end(),
                  x.data().begin() + i * lb_size);
        std::copy(w.horizon.data().begin(), w.horizon.data().end(),
                  y.data().begin() + i * hz_size);
    }
}

std::vector<std::pair<Tensor, Tensor>> snapshot_state(const CsformerModel& model) {
    std::vector<std::pair<Tensor, Tensor>> out;
    for (auto& [name, t] : named_state(model)) out.emplace_back(t, t.clone());
    return out;
}

void restore_state(std::vector<std::pair<Tensor, Tensor>>& snapshot) {
    for (auto& [live, saved] : snapshot) {
        std::copy(saved.data().begin(), saved.data().end(), live.data().begin());
    }
}

} // namespace

FitResult fit(CsformerModel& model, const std::vector<WindowSample>& train,
              const std::vector<WindowSample>& val, const TrainConfig& tc) {
    tc.validate();
    FitResult result;
    if (tc.max_epochs == 0) {
        set_training(model, false);
        return result;
    }
    if (train.empty() || val.empty()) {
        throw DataError("fit: train and validation splits must be nonempty");
    }

    std::vector<Tensor> params = parameters(model);
    AdamState adam;
    Rng shuffle_rng(tc.seed, "shuffle");

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    double best_val = std::numeric_limits<double>::infinity();
    auto best = snapshot_state(model);
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        set_training(model, true);
        shuffle_rng.shuffle(order);

        double train_sse = 0.0;
        std::size_t train_windows = 0;
        for (std::size_t first = 0; first < order.size(); first += tc.batch_size) {
            const std::size_t count = std::min(tc.batch_size, order.size() - first);
            Tensor x, y;
            assemble_batch(train, order, first, count, x, y);

            for (Tensor& p : params) p.drop_grad();
            GradTape tape;
            double loss_value;
            {
                TapeScope scope(tape);
                Tensor pred = model_forward(model, x);
                Tensor loss = mse_loss(pred, y);
                loss_value = loss.value();
                if (!std::isfinite(loss_value)) {
                    restore_state(best);
                    set_training(model, false);
                    throw NumericsError("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                        "; best checkpoint restored");
                }
                tape.backward(loss);
            }
            adam_step(adam, params, tc.learning_rate);
            result.steps += 1;
            train_sse += loss_value * double(count);
            train_windows += count;
        }

        const double val_mse = evaluate(model, val).mse;
        result.history.push_back({epoch, train_sse / double(train_windows), val_mse});

        if (val_mse < best_val) {
            best_val = val_mse;
            best = snapshot_state(model);
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if (epochs_since_best >= tc.patience) break;
        }
    }

    restore_state(best);
    set_training(model, false);
    result.best_val_mse = best_val;
    return result;
}

EvalResult evaluate(CsformerModel& model, const std::vector<WindowSample>& windows,
                    std::size_t batch_size) {
    if (windows.empty()) throw DataError("evaluate: no windows");
    set_training(model, false);

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);

    double sse = 0.0, sae = 0.0;
    std::size_t elements = 0;
    for (std::size_t first = 0; first < windows.size(); first += batch_size) {
        const std::size_t count = std::min(batch_size, windows.size() - first);
        Tensor x, y;
        assemble_batch(windows, order, first, count, x, y);
        Tensor pred = model_forward(model, x);
        const double* pp = pred.data().data();
        const double* pt = y.data().data();
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pp[i] - pt[i];
            sse += d * d;
            sae += std::abs(d);
        }
        elements += pred.size();
    }
    return {sse / double(elements), sae / double(elements)};
}

} // namespace csformer
