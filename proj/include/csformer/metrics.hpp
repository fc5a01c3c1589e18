#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csformer/checkpoint.hpp"
#include "csformer/data.hpp"
#include "csformer/tensor.hpp"

namespace csformer {

struct MseMae {
    double mse = 0.0;
    double mae = 0.0;
};

// Element-mean squared and absolute error over all entries; shapes must match.
MseMae compute_mse_mae(const Tensor& pred, const Tensor& target);

// One evaluation row, serializable as a single JSON line for table assembly.
struct MetricsReport {
    std::string dataset_id;
    std::size_t horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    std::string variant; // AblationConfig::tag()
    double runtime_seconds = 0.0;
    std::size_t parameter_count = 0;

    std::string to_json_line() const;
    static MetricsReport from_json_line(const std::string& line);
};

// Per-channel linear reference model: one ridge least-squares map from the L
// look-back values to the T horizon values, shared across channels. A sanity
// diagnostic, not a tuned competitor.
struct LinearBaseline {
    Tensor weight; // [L, T]
    Tensor bias;   // [T]
};

LinearBaseline linear_baseline_fit(const std::vector<WindowSample>& train_windows,
                                   double ridge = 1e-3);

// lookback [N, L] (or [B, N, L]) -> predictions of matching leading shape.
Tensor linear_baseline_predict(const LinearBaseline& baseline, const Tensor& lookback);

MseMae linear_baseline_eval(const LinearBaseline& baseline,
                            const std::vector<WindowSample>& windows);

// Transfer evaluation: a model trained on dataset A scored on dataset B's test
// split, standardized with B's own train statistics. Channel counts must
// match; everything else (L, T) comes from the checkpoint.
MetricsReport cross_dataset_eval(const std::string& checkpoint_path, const SeriesTable& dataset_b,
                                 const std::string& dataset_b_id, const SplitSpec& split,
                                 std::size_t stride = 1);

} // namespace csformer
