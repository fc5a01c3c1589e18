#include "csformer/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "csformer/error.hpp"
#include "csformer/rng.hpp"

namespace csformer {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

bool parse_double(const std::string& text, double& out) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
    if (begin == end) return false;
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

} // namespace

bool csv_has_date_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string header, first_row;
    if (!std::getline(in, header)) throw DataError(path + ": empty file");
    std::vector<std::string> head_cells = split_line(header);
    if (!head_cells.empty()) {
        std::string name = trim(head_cells[0]);
        for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (name == "date" || name == "timestamp" || name == "time") return true;
    }
    if (!std::getline(in, first_row)) return false;
    std::vector<std::string> cells = split_line(first_row);
    double unused;
    return !cells.empty() && !parse_double(cells[0], unused);
}

SeriesTable load_csv(const std::string& path, bool has_timestamp_column, NanPolicy policy) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    std::vector<std::string> header = split_line(line);
    const std::size_t first_channel = has_timestamp_column ? 1 : 0;
    if (header.size() <= first_channel) {
        throw DataError(path + ": header has no channel columns");
    }

    SeriesTable table;
    for (std::size_t c = first_channel; c < header.size(); ++c) {
        table.channel_names.push_back(trim(header[c]));
    }
    const std::size_t n = table.channel_names.size();

    std::vector<double> values;
    std::vector<double> last_seen(n, 0.0);
    std::vector<bool> have_last(n, false);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size()) {
            throw DataError(path + ": row " + std::to_string(row + 2) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        }
        if (has_timestamp_column) table.timestamps.push_back(trim(cells[0]));
        for (std::size_t c = 0; c < n; ++c) {
            const std::string& cell = cells[first_channel + c];
            double v;
            const bool ok = parse_double(cell, v) && !std::isnan(v);
            if (!ok) {
                if (policy == NanPolicy::ForwardFill && have_last[c]) {
                    v = last_seen[c];
                } else {
                    throw DataError(path + ": bad numeric cell at row " + std::to_string(row + 2) +
                                    ", column " + table.channel_names[c]);
                }
            }
            last_seen[c] = v;
            have_last[c] = true;
            values.push_back(v);
        }
        ++row;
    }
    if (row == 0) throw DataError(path + ": no data rows");

    table.values = Tensor::from_data({row, n}, std::move(values));
    return table;
}

void write_csv(const SeriesTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    const bool dates = !table.timestamps.empty();
    if (dates) out << "date";
    for (std::size_t c = 0; c < table.channels(); ++c) {
        if (dates || c > 0) out << ',';
        out << table.channel_names[c];
    }
    out << '\n';
    char buf[40];
    const double* p = table.values.data().data();
    for (std::size_t r = 0; r < table.rows(); ++r) {
        if (dates) out << table.timestamps[r];
        for (std::size_t c = 0; c < table.channels(); ++c) {
            if (dates || c > 0) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", p[r * table.channels() + c]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

SplitSpec SplitSpec::parse(const std::string& text) {
    if (text == "default") return SplitSpec{};
    if (text == "ett") return SplitSpec{0.6, 0.2, 0.2};
    std::vector<std::string> parts = split_line(text);
    SplitSpec spec;
    double vals[3];
    if (parts.size() != 3 || !parse_double(parts[0], vals[0]) || !parse_double(parts[1], vals[1]) ||
        !parse_double(parts[2], vals[2])) {
        throw ConfigError("split spec must be 'default', 'ett', or three comma-separated "
                          "fractions, got '" + text + "'");
    }
    spec.train_frac = vals[0];
    spec.val_frac = vals[1];
    spec.test_frac = vals[2];
    spec.validate();
    return spec;
}

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0) {
        throw ConfigError("split fractions must be nonnegative");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
}

namespace {

SeriesTable slice_rows(const SeriesTable& table, std::size_t begin, std::size_t count) {
    SeriesTable out;
    out.channel_names = table.channel_names;
    const std::size_t n = table.channels();
    if (!table.timestamps.empty()) {
        out.timestamps.assign(table.timestamps.begin() + begin,
                              table.timestamps.begin() + begin + count);
    }
    std::vector<double> values(table.values.data().begin() + begin * n,
                               table.values.data().begin() + (begin + count) * n);
    out.values = Tensor::from_data({count, n}, std::move(values));
    return out;
}

struct SplitRows {
    std::size_t train, val, test;
};

SplitRows split_row_counts(std::size_t rows, const SplitSpec& spec) {
    const auto val = static_cast<std::size_t>(std::floor(double(rows) * spec.val_frac + 1e-9));
    const auto test = static_cast<std::size_t>(std::floor(double(rows) * spec.test_frac + 1e-9));
    if (val + test > rows) throw DataError("split: too few rows to split");
    return {rows - val - test, val, test};
}

} // namespace

Splits split_chrono(const SeriesTable& table, const SplitSpec& spec) {
    spec.validate();
    const SplitRows counts = split_row_counts(table.rows(), spec);
    Splits out;
    out.train = slice_rows(table, 0, counts.train);
    out.val = slice_rows(table, counts.train, counts.val);
    out.test = slice_rows(table, counts.train + counts.val, counts.test);
    return out;
}

ChannelStats compute_channel_stats(const SeriesTable& table) {
    if (table.rows() == 0) throw DataError("channel stats: empty table");
    const std::size_t rows = table.rows(), n = table.channels();
    const double* p = table.values.data().data();
    ChannelStats stats{Tensor::zeros({n}), Tensor::zeros({n})};
    for (std::size_t c = 0; c < n; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mean += p[r * n + c];
        mean /= double(rows);
        double var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = p[r * n + c] - mean;
            var += d * d;
        }
        var /= double(rows);
        stats.mean.data()[c] = mean;
        stats.std.data()[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return stats;
}

SeriesTable standardize(const SeriesTable& table, const ChannelStats& stats) {
    const std::size_t n = table.channels();
    if (stats.mean.size() != n) {
        throw ShapeError("standardize: stats cover " + std::to_string(stats.mean.size()) +
                         " channels, table has " + std::to_string(n));
    }
    SeriesTable out;
    out.channel_names = table.channel_names;
    out.timestamps = table.timestamps;
    out.values = table.values.clone();
    double* p = out.values.data().data();
    const double* mean = stats.mean.data().data();
    const double* sd = stats.std.data().data();
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) p[r * n + c] = (p[r * n + c] - mean[c]) / sd[c];
    }
    return out;
}

SeriesTable destandardize(const SeriesTable& table, const ChannelStats& stats) {
    const std::size_t n = table.channels();
    if (stats.mean.size() != n) {
        throw ShapeError("destandardize: stats cover " + std::to_string(stats.mean.size()) +
                         " channels, table has " + std::to_string(n));
    }
    SeriesTable out;
    out.channel_names = table.channel_names;
    out.timestamps = table.timestamps;
    out.values = table.values.clone();
    double* p = out.values.data().data();
    const double* mean = stats.mean.data().data();
    const double* sd = stats.std.data().data();
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) p[r * n + c] = p[r * n + c] * sd[c] + mean[c];
    }
    return out;
}

namespace {

WindowSample cut_window(const SeriesTable& table, std::size_t origin, std::size_t lookback,
                        std::size_t horizon) {
    const std::size_t n = table.channels();
    const double* p = table.values.data().data();
    WindowSample w;
    w.origin_row = origin;
    w.lookback = Tensor::zeros({n, lookback});
    w.horizon = Tensor::zeros({n, horizon});
    double* lb = w.lookback.data().data();
    double* hz = w.horizon.data().data();
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t t = 0; t < lookback; ++t) lb[c * lookback + t] = p[(origin + t) * n + c];
        for (std::size_t t = 0; t < horizon; ++t) {
            hz[c * horizon + t] = p[(origin + lookback + t) * n + c];
        }
    }
    return w;
}

// Windows whose origins lie in [first_origin, last_origin] stepping by stride.
std::vector<WindowSample> windows_in_range(const SeriesTable& table, std::size_t first_origin,
                                           std::size_t last_origin, std::size_t lookback,
                                           std::size_t horizon, std::size_t stride) {
    std::vector<WindowSample> out;
    for (std::size_t o = first_origin; o <= last_origin; o += stride) {
        out.push_back(cut_window(table, o, lookback, horizon));
        if (last_origin - o < stride) break; // unsigned wrap guard
    }
    return out;
}

} // namespace

std::vector<WindowSample> make_windows(const SeriesTable& table, std::size_t lookback,
                                       std::size_t horizon, std::size_t stride) {
    if (lookback == 0 || horizon == 0 || stride == 0) {
        throw ContractError("make_windows: lookback, horizon, and stride must be positive");
    }
    if (table.rows() < lookback + horizon) {
        throw DataError("make_windows: table has " + std::to_string(table.rows()) +
                        " rows, need at least " + std::to_string(lookback + horizon));
    }
    return windows_in_range(table, 0, table.rows() - lookback - horizon, lookback, horizon,
                            stride);
}

SplitWindows make_split_windows(const SeriesTable& table, const SplitSpec& spec,
                                std::size_t lookback, std::size_t horizon, std::size_t stride,
                                bool strict) {
    if (lookback == 0 || horizon == 0 || stride == 0) {
        throw ContractError("make_split_windows: lookback, horizon, and stride must be positive");
    }
    spec.validate();
    const std::size_t span = lookback + horizon;
    const SplitRows counts = split_row_counts(table.rows(), spec);
    const std::size_t train_end = counts.train;
    const std::size_t val_end = counts.train + counts.val;
    const std::size_t rows = table.rows();

    SplitWindows out;
    if (counts.train >= span) {
        out.train = windows_in_range(table, 0, train_end - span, lookback, horizon, stride);
    }
    // Later regions may borrow up to L rows of history from the region before
    // them so a window's horizon starts exactly at the region boundary.
    auto region = [&](std::size_t begin, std::size_t end) -> std::vector<WindowSample> {
        // Any origin >= begin - L keeps the horizon inside [begin, end).
        const std::size_t first = strict ? begin : (begin > lookback ? begin - lookback : 0);
        if (end < span || first > end - span) return {};
        return windows_in_range(table, first, end - span, lookback, horizon, stride);
    };
    if (counts.val > 0) out.val = region(train_end, val_end);
    if (counts.test > 0) out.test = region(val_end, rows);
    return out;
}

void SyntheticSpec::validate() const {
    if (n_points == 0 || n_vars == 0) throw ConfigError("synthetic spec: empty dimensions");
    if (amplitudes.size() != n_vars || phases.size() != n_vars || periods.size() != n_vars) {
        throw ConfigError("synthetic spec: amplitude/phase/period lists must have n_vars entries");
    }
    for (double p : periods) {
        if (p <= 0) throw ConfigError("synthetic spec: periods must be positive");
    }
    if (noise_std < 0) throw ConfigError("synthetic spec: noise std must be nonnegative");
    if (noisy_frac < 0 || noisy_frac > 1) throw ConfigError("synthetic spec: noisy_frac in [0,1]");
    if (dt <= 0) throw ConfigError("synthetic spec: dt must be positive");
}

SeriesTable synth_generate(const SyntheticSpec& spec) {
    spec.validate();
    SeriesTable table;
    for (std::size_t i = 0; i < spec.n_vars; ++i) {
        table.channel_names.push_back("Variable_" + std::to_string(i + 1));
    }
    std::vector<double> values(spec.n_points * spec.n_vars);
    for (std::size_t r = 0; r < spec.n_points; ++r) {
        const double t = double(r) * spec.dt;
        for (std::size_t i = 0; i < spec.n_vars; ++i) {
            values[r * spec.n_vars + i] =
                spec.amplitudes[i] *
                std::sin(2.0 * std::numbers::pi * t / spec.periods[i] + spec.phases[i]);
        }
    }
    table.values = Tensor::from_data({spec.n_points, spec.n_vars}, std::move(values));
    if (spec.noise_std > 0.0 && spec.noisy_frac > 0.0) {
        table.values = add_gaussian_noise(table.values, spec.noise_std, spec.noisy_frac, spec.seed);
    }
    return table;
}

Tensor add_gaussian_noise(const Tensor& x, double noise_std, double frac, std::uint64_t seed) {
    if (noise_std < 0) throw ContractError("add_gaussian_noise: std must be nonnegative");
    if (frac < 0 || frac > 1) throw ContractError("add_gaussian_noise: frac must be in [0,1]");
    if (x.rank() != 2) throw ShapeError("add_gaussian_noise: expected [rows, channels]");
    Tensor out = x.clone();
    if (noise_std == 0.0 || frac == 0.0) return out;
    const std::size_t rows = x.shape()[0];
    const std::size_t n = x.shape()[1];
    const auto noisy_rows = static_cast<std::size_t>(std::floor(double(rows) * frac + 1e-9));
    Rng rng(seed, "noise");
    double* p = out.data().data();
    for (std::size_t r = 0; r < noisy_rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) p[r * n + c] += noise_std * rng.next_normal();
    }
    return out;
}

} // namespace csformer
