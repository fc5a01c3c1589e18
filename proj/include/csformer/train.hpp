#pragma once

#include <cstdint>
#include <vector>

#include "csformer/data.hpp"
#include "csformer/model.hpp"
#include "csformer/tensor.hpp"

namespace csformer {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 10;
    std::size_t patience = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m; // first moments, one slab per parameter
    std::vector<std::vector<double>> v; // second moments
};

// Mean over all elements of (pred - target)^2; differentiable.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Bias-corrected Adam update applied in place. Lazily sizes the state on the
// first call; every parameter must carry a gradient.
void adam_step(AdamState& state, std::vector<Tensor>& params, double lr);

struct EpochStats {
    std::size_t epoch = 0; // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct FitResult {
    std::vector<EpochStats> history;
    double best_val_mse = 0.0;
    std::size_t best_epoch = 0; // 1-based; 0 when no epoch ran
    std::size_t steps = 0;      // optimizer steps taken
};

struct EvalResult {
    double mse = 0.0;
    double mae = 0.0;
};

// Seeded shuffled mini-batches, MSE on the model output, Adam, per-epoch
// validation with early stopping on val MSE. The model is left holding the
// best-validation weights, in eval mode. A NaN loss restores those weights and
// raises a numerics error.
FitResult fit(CsformerModel& model, const std::vector<WindowSample>& train,
              const std::vector<WindowSample>& val, const TrainConfig& tc);

// Eval-mode forward over all windows; element-averaged MSE and MAE on the
// model's output scale. Leaves the model in eval mode.
EvalResult evaluate(CsformerModel& model, const std::vector<WindowSample>& windows,
                    std::size_t batch_size = 128);

} // namespace csformer
