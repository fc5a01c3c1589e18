#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csformer/data.hpp"
#include "csformer/error.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

using namespace csformer;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& contents = "") {
        path = (std::filesystem::temp_directory_path() / name).string();
        if (!contents.empty()) {
            std::ofstream out(path);
            out << contents;
        }
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("load_csv round-trips literal values") {
    TempFile f("csf_literal.csv", "a,b\n1,2\n3,4\n5,6\n");
    SeriesTable t = load_csv(f.path, false);
    CHECK(t.rows() == 3);
    CHECK(t.channels() == 2);
    CHECK(t.channel_names == std::vector<std::string>{"a", "b"});
    CHECK(t.values.at({0, 0}) == 1.0);
    CHECK(t.values.at({2, 1}) == 6.0);
    CHECK(t.timestamps.empty());
}

TEST_CASE("load_csv rejects a header-only file") {
    TempFile f("csf_header.csv", "a,b\n");
    CHECK_THROWS_AS(load_csv(f.path, false), DataError);
}

TEST_CASE("a date column is excluded from the channels") {
    TempFile f("csf_ett.csv", "date,HUFL,HULL\n2016-07-01 00:00:00,5.8,2.0\n"
                              "2016-07-01 01:00:00,5.7,2.1\n");
    CHECK(csv_has_date_column(f.path));
    SeriesTable t = load_csv(f.path, true);
    CHECK(t.channels() == 2);
    CHECK(t.channel_names == std::vector<std::string>{"HUFL", "HULL"});
    CHECK(t.timestamps.size() == 2);
    CHECK(t.values.at({1, 0}) == doctest::Approx(5.7));

    TempFile g("csf_noheader_date.csv", "a,b\n1,2\n3,4\n");
    CHECK(!csv_has_date_column(g.path));
}

TEST_CASE("load_csv names the broken cell") {
    TempFile f("csf_bad.csv", "a,b\n1,2\n3,oops\n");
    try {
        load_csv(f.path, false);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("row 3") != std::string::npos);
        CHECK(what.find("b") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects ragged rows") {
    TempFile f("csf_ragged.csv", "a,b\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(f.path, false), DataError);
}

TEST_CASE("forward fill replaces bad cells with the previous value") {
    TempFile f("csf_fill.csv", "a\n1\nnan\n4\n");
    SeriesTable t = load_csv(f.path, false, NanPolicy::ForwardFill);
    CHECK(t.values.at({0, 0}) == 1.0);
    CHECK(t.values.at({1, 0}) == 1.0);
    CHECK(t.values.at({2, 0}) == 4.0);

    // A bad cell in the first row has nothing to fill from.
    TempFile g("csf_fill2.csv", "a\nx\n2\n");
    CHECK_THROWS_AS(load_csv(g.path, false, NanPolicy::ForwardFill), DataError);
}

TEST_CASE("write_csv then load_csv reproduces doubles exactly") {
    SeriesTable t;
    t.channel_names = {"x", "y"};
    t.values = Tensor::from_data({2, 2}, {1.0 / 3.0, std::numbers::pi, -2.5e-13, 7});
    TempFile f("csf_roundtrip.csv");
    write_csv(t, f.path);
    SeriesTable u = load_csv(f.path, false);
    for (std::size_t i = 0; i < 4; ++i) CHECK(u.values.data()[i] == t.values.data()[i]);
}

TEST_CASE("standardize is a no-op on zero-mean unit-variance data") {
    SeriesTable t;
    t.channel_names = {"a"};
    t.values = Tensor::from_data({4, 1}, {-1, 1, -1, 1}); // mean 0, population var 1
    ChannelStats stats = compute_channel_stats(t);
    SeriesTable s = standardize(t, stats);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(s.values.data()[i] - t.values.data()[i]) < 1e-9);
    }
}

TEST_CASE("a constant channel standardizes to zeros via the std fallback") {
    SeriesTable t;
    t.channel_names = {"c"};
    t.values = Tensor::from_data({3, 1}, {4, 4, 4});
    ChannelStats stats = compute_channel_stats(t);
    CHECK(stats.std.value() == 1.0);
    SeriesTable s = standardize(t, stats);
    for (double v : s.values.data()) CHECK(v == 0.0);
}

TEST_CASE("standardize matches direct arithmetic") {
    SeriesTable t;
    t.channel_names = {"a"};
    t.values = Tensor::from_data({2, 1}, {1, 3});
    ChannelStats stats = compute_channel_stats(t);
    CHECK(stats.mean.value() == 2.0);
    CHECK(stats.std.value() == 1.0);
    SeriesTable s = standardize(t, stats);
    CHECK(s.values.at({0, 0}) == -1.0);
    CHECK(s.values.at({1, 0}) == 1.0);

    SeriesTable back = destandardize(s, stats);
    CHECK(back.values.at({0, 0}) == 1.0);
    CHECK(back.values.at({1, 0}) == 3.0);
}

TEST_CASE("split (1,0,0) puts everything in train") {
    SeriesTable t;
    t.channel_names = {"a"};
    t.values = Tensor::from_data({5, 1}, {1, 2, 3, 4, 5});
    Splits s = split_chrono(t, SplitSpec{1.0, 0.0, 0.0});
    CHECK(s.train.rows() == 5);
    CHECK(s.val.rows() == 0);
    CHECK(s.test.rows() == 0);
}

TEST_CASE("floor allocation sends the remainder to train") {
    SeriesTable t;
    t.channel_names = {"a"};
    std::vector<double> v(10);
    for (int i = 0; i < 10; ++i) v[i] = i;
    t.values = Tensor::from_data({10, 1}, std::move(v));
    Splits s = split_chrono(t, SplitSpec{0.7, 0.1, 0.2});
    CHECK(s.train.rows() == 7);
    CHECK(s.val.rows() == 1);
    CHECK(s.test.rows() == 2);
}

TEST_CASE("concatenating the splits reproduces the table") {
    SeriesTable t;
    t.channel_names = {"a", "b"};
    std::vector<double> v(26);
    for (std::size_t i = 0; i < 26; ++i) v[i] = double(i) * 0.5;
    t.values = Tensor::from_data({13, 2}, std::move(v));
    Splits s = split_chrono(t, SplitSpec{0.6, 0.2, 0.2});
    std::vector<double> merged;
    for (const SeriesTable* part : {&s.train, &s.val, &s.test}) {
        merged.insert(merged.end(), part->values.data().begin(), part->values.data().end());
    }
    REQUIRE(merged.size() == t.values.size());
    for (std::size_t i = 0; i < merged.size(); ++i) CHECK(merged[i] == t.values.data()[i]);
}

TEST_CASE("windowing yields exactly one window at the minimum size") {
    SeriesTable t;
    t.channel_names = {"a"};
    t.values = Tensor::from_data({5, 1}, {0, 1, 2, 3, 4});
    std::vector<WindowSample> w = make_windows(t, 3, 2);
    REQUIRE(w.size() == 1);
    CHECK(w[0].lookback.shape() == Shape{1, 3});
    CHECK(w[0].horizon.shape() == Shape{1, 2});
    CHECK(w[0].lookback.at({0, 2}) == 2.0);
    CHECK(w[0].horizon.at({0, 0}) == 3.0);
}

TEST_CASE("window count follows the counting formula") {
    SeriesTable t;
    t.channel_names = {"a"};
    std::vector<double> v(9);
    for (int i = 0; i < 9; ++i) v[i] = i;
    t.values = Tensor::from_data({9, 1}, std::move(v));
    CHECK(make_windows(t, 4, 3).size() == 3); // rows = L+T+2, stride 1
    CHECK(make_windows(t, 4, 3, 2).size() == 2);
    CHECK(make_windows(t, 4, 3, 5).size() == 1);
    CHECK_THROWS_AS(make_windows(t, 7, 3), DataError);
}

TEST_CASE("each horizon immediately follows its look-back") {
    SeriesTable t;
    t.channel_names = {"a", "b"};
    std::vector<double> v(24);
    for (std::size_t i = 0; i < 24; ++i) v[i] = double(i);
    t.values = Tensor::from_data({12, 2}, std::move(v));
    for (const WindowSample& w : make_windows(t, 4, 2)) {
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(w.horizon.at({c, 0}) == t.values.at({w.origin_row + 4, c}));
            for (std::size_t l = 0; l < 4; ++l) {
                CHECK(w.lookback.at({c, l}) == t.values.at({w.origin_row + l, c}));
            }
        }
    }
}

TEST_CASE("split windows keep horizons inside their region") {
    SeriesTable t;
    t.channel_names = {"a"};
    std::vector<double> v(40);
    for (std::size_t i = 0; i < 40; ++i) v[i] = double(i);
    t.values = Tensor::from_data({40, 1}, std::move(v));
    const SplitSpec spec{0.5, 0.25, 0.25}; // rows 20 / 10 / 10
    const std::size_t L = 6, T = 2;

    SplitWindows sw = make_split_windows(t, spec, L, T);
    // Train windows stay inside rows [0, 20).
    for (const WindowSample& w : sw.train) CHECK(w.origin_row + L + T <= 20);
    // Val horizons inside [20, 30); look-backs may reach into train.
    REQUIRE(!sw.val.empty());
    bool any_borrow = false;
    for (const WindowSample& w : sw.val) {
        CHECK(w.origin_row + L >= 20);
        CHECK(w.origin_row + L + T <= 30);
        any_borrow = any_borrow || w.origin_row < 20;
    }
    CHECK(any_borrow);
    for (const WindowSample& w : sw.test) {
        CHECK(w.origin_row + L >= 30);
        CHECK(w.origin_row + L + T <= 40);
    }

    SplitWindows strict = make_split_windows(t, spec, L, T, 1, true);
    for (const WindowSample& w : strict.val) CHECK(w.origin_row >= 20);
    for (const WindowSample& w : strict.test) CHECK(w.origin_row >= 30);
    CHECK(strict.val.size() < sw.val.size());
}

TEST_CASE("synthetic value is zero at the origin for zero phase") {
    SyntheticSpec spec;
    spec.n_points = 10;
    spec.n_vars = 1;
    spec.amplitudes = {1};
    spec.phases = {0};
    spec.periods = {1};
    SeriesTable t = synth_generate(spec);
    CHECK(t.values.at({0, 0}) == 0.0);
}

TEST_CASE("synthetic value matches the analytic sine") {
    SyntheticSpec spec;
    spec.n_points = 200;
    spec.n_vars = 1;
    spec.amplitudes = {2};
    spec.phases = {0};
    spec.periods = {4};
    SeriesTable t = synth_generate(spec);
    // t = 1 at row 100 with dt = 0.01: 2*sin(2*pi/4) = 2
    CHECK(t.values.at({100, 0}) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("zero noise leaves every row on the clean sinusoid") {
    SyntheticSpec spec;
    spec.n_points = 50;
    spec.n_vars = 2;
    spec.amplitudes = {1, 3};
    spec.phases = {0.5, 1.0};
    spec.periods = {2, 5};
    spec.noise_std = 0.0;
    SeriesTable t = synth_generate(spec);
    for (std::size_t r = 0; r < 50; ++r) {
        const double time = double(r) * spec.dt;
        for (std::size_t i = 0; i < 2; ++i) {
            const double clean = spec.amplitudes[i] *
                                 std::sin(2.0 * std::numbers::pi * time / spec.periods[i] +
                                          spec.phases[i]);
            CHECK(t.values.at({r, i}) == clean);
        }
    }
}

TEST_CASE("defaults produce the 20000 x 10 dataset") {
    SyntheticSpec spec;
    SeriesTable t = synth_generate(spec);
    CHECK(t.rows() == 20000);
    CHECK(t.channels() == 10);
}

TEST_CASE("synthetic generation is deterministic") {
    SyntheticSpec spec;
    spec.n_points = 500;
    spec.noise_std = 0.5;
    spec.seed = 9;
    SeriesTable a = synth_generate(spec);
    SeriesTable b = synth_generate(spec);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(a.values.data()[i] == b.values.data()[i]);
    }
}

TEST_CASE("noise touches only the first fraction of rows") {
    SyntheticSpec spec;
    spec.n_points = 100;
    spec.n_vars = 1;
    spec.amplitudes = {1};
    spec.phases = {0};
    spec.periods = {1};
    SeriesTable clean = synth_generate(spec);
    spec.noise_std = 0.7;
    spec.noisy_frac = 0.9;
    spec.seed = 4;
    SeriesTable noisy = synth_generate(spec);
    bool any_changed = false;
    for (std::size_t r = 0; r < 90; ++r) {
        any_changed = any_changed || noisy.values.at({r, 0}) != clean.values.at({r, 0});
    }
    CHECK(any_changed);
    for (std::size_t r = 90; r < 100; ++r) {
        CHECK(noisy.values.at({r, 0}) == clean.values.at({r, 0}));
    }
}

TEST_CASE("add_gaussian_noise no-ops on zero std or zero fraction") {
    Tensor x = Tensor::from_data({4, 1}, {1, 2, 3, 4});
    Tensor a = add_gaussian_noise(x, 0.0, 1.0, 1);
    Tensor b = add_gaussian_noise(x, 1.0, 0.0, 1);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.data()[i] == x.data()[i]);
        CHECK(b.data()[i] == x.data()[i]);
    }
}

TEST_CASE("noise has the requested standard deviation") {
    Tensor x = Tensor::zeros({100000, 1});
    Tensor noisy = add_gaussian_noise(x, 1.0, 1.0, 77);
    double mean = 0.0, sq = 0.0;
    for (double v : noisy.data()) {
        mean += v;
        sq += v * v;
    }
    mean /= double(noisy.size());
    const double sd = std::sqrt(sq / double(noisy.size()) - mean * mean);
    CHECK(std::abs(sd - 1.0) < 0.02);
    CHECK(std::abs(mean) < 0.02);
}

TEST_CASE("split spec parsing") {
    SplitSpec ett = SplitSpec::parse("ett");
    CHECK(ett.train_frac == doctest::Approx(0.6));
    CHECK(ett.val_frac == doctest::Approx(0.2));
    SplitSpec dflt = SplitSpec::parse("default");
    CHECK(dflt.train_frac == doctest::Approx(0.7));
    SplitSpec custom = SplitSpec::parse("0.8,0.1,0.1");
    CHECK(custom.train_frac == doctest::Approx(0.8));
    CHECK_THROWS_AS(SplitSpec::parse("0.5,0.1"), ConfigError);
    CHECK_THROWS_AS(SplitSpec::parse("0.5,0.4,0.4"), ConfigError);
}
