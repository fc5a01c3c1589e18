#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csformer/tensor.hpp"

namespace csformer {

struct SeriesTable {
    std::vector<std::string> timestamps; // empty when the source had no date column
    Tensor values;                       // [rows, N]
    std::vector<std::string> channel_names;

    std::size_t rows() const { return values.defined() ? values.shape()[0] : 0; }
    std::size_t channels() const { return values.defined() ? values.shape()[1] : 0; }
};

enum class NanPolicy { Reject, ForwardFill };

// Sniffs whether the first column is a timestamp: a header cell named "date"
// or a non-numeric first field on the first data row.
bool csv_has_date_column(const std::string& path);

SeriesTable load_csv(const std::string& path, bool has_timestamp_column,
                     NanPolicy policy = NanPolicy::Reject);

// Full round-trippable precision (17 significant digits).
void write_csv(const SeriesTable& table, const std::string& path);

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;

    // "default" -> 0.7/0.1/0.2, "ett" -> 0.6/0.2/0.2, or "a,b,c".
    static SplitSpec parse(const std::string& text);
    void validate() const;
};

struct Splits {
    SeriesTable train, val, test;
};

// Contiguous prefix/middle/suffix; val and test get floor shares, the
// remainder goes to train.
Splits split_chrono(const SeriesTable& table, const SplitSpec& spec);

struct ChannelStats {
    Tensor mean; // [N]
    Tensor std;  // [N]; constant channels fall back to 1
};

// Population statistics over the given table's rows (normally the train split).
ChannelStats compute_channel_stats(const SeriesTable& table);

SeriesTable standardize(const SeriesTable& table, const ChannelStats& stats);
SeriesTable destandardize(const SeriesTable& table, const ChannelStats& stats);

struct WindowSample {
    Tensor lookback;          // [N, L]
    Tensor horizon;           // [N, T]
    std::size_t origin_row = 0; // first look-back row in the source table
};

// Windows at origins 0, stride, ..., rows - L - T.
std::vector<WindowSample> make_windows(const SeriesTable& table, std::size_t lookback,
                                       std::size_t horizon, std::size_t stride = 1);

struct SplitWindows {
    std::vector<WindowSample> train, val, test;
};

// Windows the three chronological regions of one standardized table. Val and
// test horizons stay inside their own region; their look-backs may reach into
// the preceding region unless strict is set, which drops straddling windows.
SplitWindows make_split_windows(const SeriesTable& table, const SplitSpec& spec,
                                std::size_t lookback, std::size_t horizon,
                                std::size_t stride = 1, bool strict = false);

struct SyntheticSpec {
    std::size_t n_points = 20000;
    std::size_t n_vars = 10;
    std::vector<double> amplitudes = {1, 2, 4, 6, 8, 10, 12, 14, 16, 18};
    std::vector<double> phases = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8};
    std::vector<double> periods = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double noise_std = 0.0;
    double noisy_frac = 0.9;
    double dt = 0.01; // sampling step: t = row * dt
    std::uint64_t seed = 0;

    void validate() const;
};

// value[r, i] = amplitude_i * sin(2*pi*t / period_i + phase_i) at t = r*dt,
// with seeded Gaussian noise on the first noisy_frac of the rows.
SeriesTable synth_generate(const SyntheticSpec& spec);

// Adds seeded N(0, std^2) noise to the first frac of the rows of x [rows, N].
Tensor add_gaussian_noise(const Tensor& x, double noise_std, double frac, std::uint64_t seed);

} // namespace csformer
