#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csformer/checkpoint.hpp"
#include "csformer/error.hpp"
#include "csformer/rng.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace csformer;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) {
        path = (std::filesystem::temp_directory_path() / name).string();
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// A model whose running stats have moved off their init values, so the
// round trip covers non-parameter state too.
CsformerModel fixture_model(CheckpointMeta& meta) {
    meta.config.channels = 2;
    meta.config.lookback = 5;
    meta.config.horizon = 3;
    meta.config.dim = 4;
    meta.config.blocks = 2;
    meta.dataset_id = "fixture";
    meta.seed = 42;
    meta.stats.mean = Tensor::from_data({2}, {0.25, -1.5});
    meta.stats.std = Tensor::from_data({2}, {1.75, 0.5});

    CsformerModel model = make_model(meta.config, meta.ablation, meta.seed);
    Rng rng(meta.seed, "fixture-input");
    Tensor x = Tensor::zeros({3, 2, 5});
    for (double& v : x.data()) v = rng.next_normal();
    set_training(model, true);
    model_forward(model, x);
    set_training(model, false);
    return model;
}

} // namespace

TEST_CASE("a checkpoint restores every tensor and the metadata") {
    CheckpointMeta meta;
    CsformerModel model = fixture_model(meta);
    TempFile f("csf_ckpt.bin");
    save_checkpoint(model, meta, f.path);

    LoadedCheckpoint loaded = load_checkpoint(f.path);
    CHECK(loaded.meta.config.channels == meta.config.channels);
    CHECK(loaded.meta.config.lookback == meta.config.lookback);
    CHECK(loaded.meta.config.horizon == meta.config.horizon);
    CHECK(loaded.meta.config.dim == meta.config.dim);
    CHECK(loaded.meta.config.blocks == meta.config.blocks);
    CHECK(loaded.meta.config.revin == meta.config.revin);
    CHECK(loaded.meta.ablation.tag() == meta.ablation.tag());
    CHECK(loaded.meta.dataset_id == "fixture");
    CHECK(loaded.meta.seed == 42);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded.meta.stats.mean.data()[i] == meta.stats.mean.data()[i]);
        CHECK(loaded.meta.stats.std.data()[i] == meta.stats.std.data()[i]);
    }

    auto expect = named_state(model);
    auto got = named_state(loaded.model);
    REQUIRE(expect.size() == got.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(expect[i].first == got[i].first);
        REQUIRE(expect[i].second.shape() == got[i].second.shape());
        for (std::size_t j = 0; j < expect[i].second.size(); ++j) {
            CHECK(expect[i].second.data()[j] == got[i].second.data()[j]);
        }
    }
}

TEST_CASE("save, load, save is byte-identical") {
    CheckpointMeta meta;
    CsformerModel model = fixture_model(meta);
    TempFile a("csf_ckpt_a.bin");
    TempFile b("csf_ckpt_b.bin");
    save_checkpoint(model, meta, a.path);
    LoadedCheckpoint loaded = load_checkpoint(a.path);
    save_checkpoint(loaded.model, loaded.meta, b.path);
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("the loaded model forwards identically") {
    CheckpointMeta meta;
    CsformerModel model = fixture_model(meta);
    TempFile f("csf_ckpt_fw.bin");
    save_checkpoint(model, meta, f.path);
    LoadedCheckpoint loaded = load_checkpoint(f.path);

    Rng rng(9, "probe");
    Tensor x = Tensor::zeros({2, 2, 5});
    for (double& v : x.data()) v = rng.next_normal();
    Tensor y0 = model_forward(model, x);
    Tensor y1 = model_forward(loaded.model, x);
    for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y0.data()[i] == y1.data()[i]);
}

TEST_CASE("missing standardization stats survive the round trip") {
    CheckpointMeta meta;
    CsformerModel model = fixture_model(meta);
    meta.stats = ChannelStats{};
    TempFile f("csf_ckpt_nostats.bin");
    save_checkpoint(model, meta, f.path);
    LoadedCheckpoint loaded = load_checkpoint(f.path);
    CHECK(!loaded.meta.stats.mean.defined());
    CHECK(!loaded.meta.stats.std.defined());
}

TEST_CASE("corrupt files are rejected with data errors") {
    CheckpointMeta meta;
    CsformerModel model = fixture_model(meta);
    TempFile f("csf_ckpt_corrupt.bin");
    save_checkpoint(model, meta, f.path);
    const std::string good = slurp(f.path);

    auto rewrite = [&](const std::string& bytes) {
        std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
        out << bytes;
    };

    SUBCASE("wrong magic") {
        std::string bad = good;
        bad[0] = 'X';
        rewrite(bad);
        CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
    }
    SUBCASE("unsupported version") {
        std::string bad = good;
        bad[4] = 99;
        rewrite(bad);
        CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
    }
    SUBCASE("truncation") {
        rewrite(good.substr(0, good.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
    }
    SUBCASE("trailing garbage") {
        rewrite(good + "extra");
        CHECK_THROWS_AS(load_checkpoint(f.path), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(f.path + ".nope"), DataError);
    }
}
