#include "csformer/metrics.hpp"

#include <chrono>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "csformer/error.hpp"
#include "csformer/train.hpp"

namespace csformer {

MseMae compute_mse_mae(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("compute_mse_mae: shapes " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()) + " differ");
    }
    double sse = 0.0, sae = 0.0;
    const std::span<const double> p = pred.data();
    const std::span<const double> t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        sse += d * d;
        sae += std::abs(d);
    }
    return {sse / double(p.size()), sae / double(p.size())};
}

std::string MetricsReport::to_json_line() const {
    nlohmann::json j;
    j["dataset_id"] = dataset_id;
    j["horizon"] = horizon;
    j["mse"] = mse;
    j["mae"] = mae;
    j["variant"] = variant;
    j["runtime_seconds"] = runtime_seconds;
    j["parameter_count"] = parameter_count;
    return j.dump();
}

MetricsReport MetricsReport::from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
        MetricsReport r;
        r.dataset_id = j.at("dataset_id").get<std::string>();
        r.horizon = j.at("horizon").get<std::size_t>();
        r.mse = j.at("mse").get<double>();
        r.mae = j.at("mae").get<double>();
        r.variant = j.at("variant").get<std::string>();
        r.runtime_seconds = j.at("runtime_seconds").get<double>();
        r.parameter_count = j.at("parameter_count").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("metrics report: bad record: ") + e.what());
    }
}

namespace {

// Solves (A)W = B in place for SPD A [k,k], B [k,t] via Cholesky.
void cholesky_solve(std::vector<double>& a, std::vector<double>& b, std::size_t k,
                    std::size_t t) {
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * k + j];
            for (std::size_t m = 0; m < j; ++m) s -= a[i * k + m] * a[j * k + m];
            if (i == j) {
                if (s <= 0) throw NumericsError("linear baseline: normal equations not positive");
                a[i * k + j] = std::sqrt(s);
            } else {
                a[i * k + j] = s / a[j * k + j];
            }
        }
    }
    // Forward then back substitution, one horizon column at a time.
    for (std::size_t col = 0; col < t; ++col) {
        for (std::size_t i = 0; i < k; ++i) {
            double s = b[i * t + col];
            for (std::size_t m = 0; m < i; ++m) s -= a[i * k + m] * b[m * t + col];
            b[i * t + col] = s / a[i * k + i];
        }
        for (std::size_t ii = k; ii-- > 0;) {
            double s = b[ii * t + col];
            for (std::size_t m = ii + 1; m < k; ++m) s -= a[m * k + ii] * b[m * t + col];
            b[ii * t + col] = s / a[ii * k + ii];
        }
    }
}

} // namespace

LinearBaseline linear_baseline_fit(const std::vector<WindowSample>& train_windows, double ridge) {
    if (train_windows.empty()) throw DataError("linear baseline: no training windows");

    const Shape& ls = train_windows.front().lookback.shape();
    const Shape& hs = train_windows.front().horizon.shape();
    const std::size_t n = ls[0], lb = ls[1], t = hs[1];
    const std::size_t k = lb + 1; // look-back features plus an intercept column

    std::vector<double> a(k * k, 0.0);  // X^T X
    std::vector<double> bm(k * t, 0.0); // X^T Y
    std::vector<double> row(k, 1.0);
    for (const WindowSample& w : train_windows) {
        for (std::size_t c = 0; c < n; ++c) {
            const double* x = w.lookback.data().data() + c * lb;
            const double* y = w.horizon.data().data() + c * t;
            for (std::size_t i = 0; i < lb; ++i) row[i] = x[i];
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j <= i; ++j) a[i * k + j] += row[i] * row[j];
                for (std::size_t j = 0; j < t; ++j) bm[i * t + j] += row[i] * y[j];
            }
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) a[i * k + j] = a[j * k + i];
        a[i * k + i] += ridge;
    }

    cholesky_solve(a, bm, k, t);

    LinearBaseline out;
    out.weight = Tensor::zeros({lb, t});
    out.bias = Tensor::zeros({t});
    std::copy(bm.begin(), bm.begin() + std::ptrdiff_t(lb * t), out.weight.data().begin());
    std::copy(bm.begin() + std::ptrdiff_t(lb * t), bm.end(), out.bias.data().begin());
    return out;
}

Tensor linear_baseline_predict(const LinearBaseline& baseline, const Tensor& lookback) {
    return add(matmul(lookback, baseline.weight), baseline.bias);
}

MseMae linear_baseline_eval(const LinearBaseline& baseline,
                            const std::vector<WindowSample>& windows) {
    if (windows.empty()) throw DataError("linear baseline: no windows to evaluate");
    double sse = 0.0, sae = 0.0;
    std::size_t elements = 0;
    for (const WindowSample& w : windows) {
        Tensor pred = linear_baseline_predict(baseline, w.lookback);
        const MseMae m = compute_mse_mae(pred, w.horizon);
        sse += m.mse * double(pred.size());
        sae += m.mae * double(pred.size());
        elements += pred.size();
    }
    return {sse / double(elements), sae / double(elements)};
}

MetricsReport cross_dataset_eval(const std::string& checkpoint_path, const SeriesTable& dataset_b,
                                 const std::string& dataset_b_id, const SplitSpec& split,
                                 std::size_t stride) {
    const auto started = std::chrono::steady_clock::now();

    LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    CsformerModel& model = loaded.model;
    if (model.config.channels != dataset_b.channels()) {
        throw DataError("cross-dataset eval: model expects " +
                        std::to_string(model.config.channels) + " channels, dataset '" +
                        dataset_b_id + "' has " + std::to_string(dataset_b.channels()));
    }

    // The target dataset is standardized with its own train-split statistics.
    Splits raw = split_chrono(dataset_b, split);
    ChannelStats stats = compute_channel_stats(raw.train);
    SeriesTable z = standardize(dataset_b, stats);
    SplitWindows windows =
        make_split_windows(z, split, model.config.lookback, model.config.horizon, stride);
    if (windows.test.empty()) {
        throw DataError("cross-dataset eval: dataset '" + dataset_b_id + "' has no test windows");
    }

    EvalResult eval = evaluate(model, windows.test);

    MetricsReport report;
    report.dataset_id = loaded.meta.dataset_id + "->" + dataset_b_id;
    report.horizon = model.config.horizon;
    report.mse = eval.mse;
    report.mae = eval.mae;
    report.variant = model.ablation.tag();
    report.parameter_count = count_parameters(model);
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

} // namespace csformer
