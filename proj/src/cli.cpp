#include "csformer/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csformer/checkpoint.hpp"
#include "csformer/data.hpp"
#include "csformer/error.hpp"
#include "csformer/metrics.hpp"
#include "csformer/model.hpp"
#include "csformer/train.hpp"

namespace csformer {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string path_stem(const std::string& path) { return fs::path(path).stem().string(); }

void write_text(const std::string& path, const std::string& text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError("write to '" + path + "' failed");
}

// First column left-aligned, the rest right-aligned, two spaces between.
std::string align_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& row : rows) {
        if (width.size() < row.size()) width.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i) {
            width[i] = std::max(width[i], row[i].size());
        }
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line += "  ";
            const std::size_t pad = width[i] - row[i].size();
            if (i == 0) {
                line += row[i];
                line.append(pad, ' ');
            } else {
                line.append(pad, ' ');
                line += row[i];
            }
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line;
        out += '\n';
    }
    return out;
}

// ---- option bundles shared across subcommands ------------------------------

struct ModelFlags {
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t dim = 16;
    std::size_t blocks = 1;
    std::size_t heads = 1;
    std::size_t bottleneck = 0;
    bool no_revin = false;

    bool no_channel_msa = false;
    bool no_sequence_msa = false;
    bool no_share = false;
    std::string order = "cs";
    bool no_channel_adapter = false;
    bool no_sequence_adapter = false;
    bool no_adapters = false;

    ModelConfig model_config(std::size_t channels) const {
        ModelConfig mc;
        mc.channels = channels;
        mc.lookback = lookback;
        mc.horizon = horizon;
        mc.dim = dim;
        mc.blocks = blocks;
        mc.heads = heads;
        mc.adapter_bottleneck = bottleneck;
        mc.revin = !no_revin;
        return mc;
    }

    AblationConfig ablation_config() const {
        AblationConfig ab;
        ab.channel_msa = !no_channel_msa;
        ab.sequence_msa = !no_sequence_msa;
        ab.share_parameters = !no_share;
        ab.stage_order =
            order == "sc" ? StageOrder::SequenceThenChannel : StageOrder::ChannelThenSequence;
        ab.channel_adapter = !(no_channel_adapter || no_adapters);
        ab.sequence_adapter = !(no_sequence_adapter || no_adapters);
        return ab;
    }
};

void add_model_options(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--lookback", f.lookback, "look-back window length L")->capture_default_str();
    cmd->add_option("--horizon", f.horizon, "forecast horizon T")->capture_default_str();
    cmd->add_option("--dim", f.dim, "embedding width D")->capture_default_str();
    cmd->add_option("--blocks", f.blocks, "number of two-stage blocks M")->capture_default_str();
    cmd->add_option("--heads", f.heads, "attention heads")->capture_default_str();
    cmd->add_option("--bottleneck", f.bottleneck, "adapter bottleneck width, 0 means D/4")
        ->capture_default_str();
    cmd->add_flag("--no-revin", f.no_revin, "disable reversible instance normalization");
}

void add_ablation_options(CLI::App* cmd, ModelFlags& f) {
    cmd->add_flag("--no-channel-msa", f.no_channel_msa, "drop the channel attention stage");
    cmd->add_flag("--no-sequence-msa", f.no_sequence_msa, "drop the sequence attention stage");
    cmd->add_flag("--no-share", f.no_share, "give each stage its own attention weights");
    cmd->add_option("--order", f.order, "stage order: cs (channel first) or sc")
        ->check(CLI::IsMember({"cs", "sc"}))
        ->capture_default_str();
    cmd->add_flag("--no-channel-adapter", f.no_channel_adapter, "drop the channel adapter");
    cmd->add_flag("--no-sequence-adapter", f.no_sequence_adapter, "drop the sequence adapter");
    cmd->add_flag("--no-adapters", f.no_adapters, "drop both adapters");
}

struct TrainFlags {
    double lr = 1e-4;
    std::size_t batch = 64;
    std::size_t epochs = 10;
    std::size_t patience = 3;

    TrainConfig train_config(std::uint64_t seed) const {
        TrainConfig tc;
        tc.learning_rate = lr;
        tc.batch_size = batch;
        tc.max_epochs = epochs;
        // Patience past the epoch budget can never fire; resolve it down so a
        // lone --epochs override stays valid.
        tc.patience = epochs > 0 ? std::min(patience, epochs) : patience;
        tc.seed = seed;
        return tc;
    }
};

void add_train_options(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch", f.batch, "mini-batch size")->capture_default_str();
    cmd->add_option("--epochs", f.epochs, "maximum training epochs")->capture_default_str();
    cmd->add_option("--patience", f.patience, "early-stopping patience in epochs")
        ->capture_default_str();
}

struct DataFlags {
    std::string data;
    std::string split = "default";
    std::size_t stride = 1;
    std::string nan_policy = "reject";
    std::string dataset_id;

    std::string id() const { return dataset_id.empty() ? path_stem(data) : dataset_id; }
};

void add_data_options(CLI::App* cmd, DataFlags& f) {
    cmd->add_option("--data", f.data, "input CSV path")->required();
    cmd->add_option("--split", f.split, "train/val/test fractions: default, ett, or a,b,c")
        ->capture_default_str();
    cmd->add_option("--stride", f.stride, "window stride in rows")->capture_default_str();
    cmd->add_option("--nan-policy", f.nan_policy, "bad cell handling")
        ->check(CLI::IsMember({"reject", "ffill"}))
        ->capture_default_str();
    cmd->add_option("--dataset-id", f.dataset_id, "dataset name for reports (default: file stem)");
}

SeriesTable load_table(const DataFlags& f) {
    const NanPolicy policy =
        f.nan_policy == "ffill" ? NanPolicy::ForwardFill : NanPolicy::Reject;
    return load_csv(f.data, csv_has_date_column(f.data), policy);
}

struct PreparedData {
    SeriesTable raw;
    ChannelStats stats; // train-split statistics used for standardization
    SplitWindows windows;
    std::string dataset_id;
};

PreparedData prepare_data(const DataFlags& f, std::size_t lookback, std::size_t horizon) {
    PreparedData p;
    p.raw = load_table(f);
    const SplitSpec split = SplitSpec::parse(f.split);
    Splits raw_splits = split_chrono(p.raw, split);
    if (raw_splits.train.rows() == 0) {
        throw DataError("'" + f.data + "': the train split is empty");
    }
    p.stats = compute_channel_stats(raw_splits.train);
    SeriesTable z = standardize(p.raw, p.stats);
    p.windows = make_split_windows(z, split, lookback, horizon, f.stride);
    p.dataset_id = f.id();
    return p;
}

// ---- manifests --------------------------------------------------------------

json model_config_json(const ModelConfig& mc) {
    return {{"channels", mc.channels},   {"lookback", mc.lookback},
            {"horizon", mc.horizon},     {"dim", mc.dim},
            {"blocks", mc.blocks},       {"heads", mc.heads},
            {"adapter_bottleneck", mc.adapter_bottleneck},
            {"revin", mc.revin}};
}

json ablation_json(const AblationConfig& ab) {
    return {{"channel_msa", ab.channel_msa},
            {"sequence_msa", ab.sequence_msa},
            {"share_parameters", ab.share_parameters},
            {"stage_order", ab.stage_order == StageOrder::ChannelThenSequence ? "cs" : "sc"},
            {"channel_adapter", ab.channel_adapter},
            {"sequence_adapter", ab.sequence_adapter},
            {"tag", ab.tag()}};
}

json train_config_json(const TrainConfig& tc) {
    return {{"learning_rate", tc.learning_rate},
            {"batch_size", tc.batch_size},
            {"max_epochs", tc.max_epochs},
            {"patience", tc.patience}};
}

json split_json(const SplitSpec& s) {
    return {{"train", s.train_frac}, {"val", s.val_frac}, {"test", s.test_frac}};
}

// One manifest per run. Outputs list the result files only; replaying the
// stored argv rewrites each of them byte for byte (wall clock lives here, not
// in any output).
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& argv, std::uint64_t seed, json config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double seconds) {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["seed"] = seed;
    m["config"] = std::move(config);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["wall_clock_seconds"] = seconds;
    write_text(out_dir + "/manifest.json", m.dump(2) + "\n");
}

// Persisted reports carry a zero runtime so replayed runs emit identical
// bytes; live timings go to stdout and the manifest wall clock.
std::string report_lines(std::vector<MetricsReport> reports) {
    std::string out;
    for (MetricsReport& r : reports) {
        r.runtime_seconds = 0.0;
        out += r.to_json_line();
        out += '\n';
    }
    return out;
}

// ---- subcommand payloads ----------------------------------------------------

struct TrainOpts {
    DataFlags data;
    ModelFlags model;
    TrainFlags train;
    std::uint64_t seed = 0;
    std::string out_dir = "csformer-out";
    bool export_scores = false;
};

void export_score_csv(CsformerModel& model, const std::vector<WindowSample>& windows,
                      const std::string& path) {
    if (windows.empty()) return;
    const std::size_t count = std::min<std::size_t>(windows.size(), 8);
    Tensor x = Tensor::zeros({count, windows[0].lookback.shape()[0], model.config.lookback});
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(windows[i].lookback.data().begin(), windows[i].lookback.data().end(),
                  x.data().begin() + std::ptrdiff_t(i * windows[i].lookback.size()));
    }
    set_training(model, false);
    std::vector<ScoreMap> maps;
    model_forward(model, x, &maps);

    std::string csv = "block,stage,head,row,col,value\n";
    for (const ExportedScores& s : export_attention_scores(maps)) {
        for (std::size_t r = 0; r < s.tokens; ++r) {
            for (std::size_t c = 0; c < s.tokens; ++c) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%zu,%zu,%.17g\n", s.block,
                              s.stage.c_str(), s.head, r, c, s.values[r * s.tokens + c]);
                csv += buf;
            }
        }
    }
    write_text(path, csv);
}

int cmd_train(const TrainOpts& o, const std::vector<std::string>& argv) {
    Timer timer;
    PreparedData data = prepare_data(o.data, o.model.lookback, o.model.horizon);
    const ModelConfig mc = o.model.model_config(data.raw.channels());
    const AblationConfig ab = o.model.ablation_config();
    const TrainConfig tc = o.train.train_config(o.seed);

    CsformerModel model = make_model(mc, ab, o.seed);
    FitResult result = fit(model, data.windows.train, data.windows.val, tc);
    for (const EpochStats& e : result.history) {
        std::cout << "epoch " << e.epoch << ": train mse " << fmt("%.6f", e.train_mse)
                  << ", val mse " << fmt("%.6f", e.val_mse) << "\n";
    }

    fs::create_directories(o.out_dir);
    const std::string ckpt_path = o.out_dir + "/checkpoint.bin";
    CheckpointMeta meta;
    meta.config = mc;
    meta.ablation = ab;
    meta.dataset_id = data.dataset_id;
    meta.stats = data.stats;
    meta.seed = o.seed;
    save_checkpoint(model, meta, ckpt_path);

    std::string history;
    for (const EpochStats& e : result.history) {
        json j;
        j["epoch"] = e.epoch;
        j["train_mse"] = e.train_mse;
        j["val_mse"] = e.val_mse;
        history += j.dump();
        history += '\n';
    }
    const std::string history_path = o.out_dir + "/history.jsonl";
    write_text(history_path, history);

    std::vector<std::string> outputs{ckpt_path, history_path};
    if (o.export_scores) {
        const std::string scores_path = o.out_dir + "/scores.csv";
        const std::vector<WindowSample>& probe =
            !data.windows.val.empty() ? data.windows.val : data.windows.train;
        export_score_csv(model, probe, scores_path);
        if (!probe.empty()) outputs.push_back(scores_path);
    }

    json config;
    config["model"] = model_config_json(mc);
    config["ablation"] = ablation_json(ab);
    config["train"] = train_config_json(tc);
    config["split"] = split_json(SplitSpec::parse(o.data.split));
    config["stride"] = o.data.stride;
    config["result"] = {{"best_val_mse", result.best_val_mse},
                        {"best_epoch", result.best_epoch},
                        {"steps", result.steps}};
    write_manifest(o.out_dir, "train", argv, o.seed, std::move(config), {o.data.data}, outputs,
                   timer.seconds());

    std::cout << "trained " << ab.tag() << " (" << count_parameters(model) << " parameters) on "
              << data.dataset_id << ": " << result.history.size() << " epochs, best val mse "
              << fmt("%.6f", result.best_val_mse) << "\n"
              << "checkpoint: " << ckpt_path << "\n";
    return 0;
}

struct EvalOpts {
    DataFlags data;
    std::vector<std::string> checkpoints;
    std::vector<std::size_t> horizons;
    bool cross_data = false;
    std::uint64_t seed = 0;
    std::string out_dir = "csformer-out";
};

int cmd_eval(const EvalOpts& o, const std::vector<std::string>& argv) {
    Timer timer;
    SeriesTable table = load_table(o.data);
    const SplitSpec split = SplitSpec::parse(o.data.split);

    std::vector<MetricsReport> reports;
    for (const std::string& ckpt : o.checkpoints) {
        MetricsReport r = cross_dataset_eval(ckpt, table, o.data.id(), split, o.data.stride);
        if (!o.cross_data) r.dataset_id = o.data.id();
        reports.push_back(std::move(r));
    }

    if (!o.horizons.empty()) {
        std::vector<std::size_t> want = o.horizons;
        std::vector<std::size_t> got;
        for (const MetricsReport& r : reports) got.push_back(r.horizon);
        std::sort(want.begin(), want.end());
        std::sort(got.begin(), got.end());
        if (want != got) {
            throw UsageError("eval: --horizons does not match the checkpoints' horizons");
        }
    }
    if (reports.size() > 1) {
        MetricsReport avg;
        avg.dataset_id = reports.front().dataset_id;
        avg.variant = "average";
        for (const MetricsReport& r : reports) {
            avg.mse += r.mse;
            avg.mae += r.mae;
            avg.runtime_seconds += r.runtime_seconds;
        }
        avg.mse /= double(reports.size());
        avg.mae /= double(reports.size());
        reports.push_back(std::move(avg));
    }

    std::vector<std::vector<std::string>> rows{
        {"dataset", "variant", "horizon", "params", "mse", "mae", "seconds"}};
    for (const MetricsReport& r : reports) {
        rows.push_back({r.dataset_id, r.variant, std::to_string(r.horizon),
                        std::to_string(r.parameter_count), fmt("%.6f", r.mse),
                        fmt("%.6f", r.mae), fmt("%.2f", r.runtime_seconds)});
    }
    std::cout << align_table(rows);

    const std::string report_path = o.out_dir + "/report.jsonl";
    write_text(report_path, report_lines(reports));
    json config;
    config["checkpoints"] = o.checkpoints;
    config["split"] = split_json(split);
    config["stride"] = o.data.stride;
    config["cross_data"] = o.cross_data;
    std::vector<std::string> inputs = o.checkpoints;
    inputs.push_back(o.data.data);
    write_manifest(o.out_dir, "eval", argv, o.seed, std::move(config), inputs, {report_path},
                   timer.seconds());
    return 0;
}

struct ForecastOpts {
    DataFlags data;
    std::string checkpoint;
    std::string out_dir = "csformer-out";
};

int cmd_forecast(const ForecastOpts& o, const std::vector<std::string>& argv) {
    Timer timer;
    LoadedCheckpoint loaded = load_checkpoint(o.checkpoint);
    CsformerModel& model = loaded.model;
    SeriesTable table = load_table(o.data);

    const std::size_t n = model.config.channels;
    const std::size_t lb = model.config.lookback;
    const std::size_t t = model.config.horizon;
    if (table.channels() != n) {
        throw DataError("forecast: model expects " + std::to_string(n) + " channels, '" +
                        o.data.data + "' has " + std::to_string(table.channels()));
    }
    if (table.rows() < lb) {
        throw UsageError("forecast: need at least " + std::to_string(lb) + " rows, '" +
                         o.data.data + "' has " + std::to_string(table.rows()));
    }

    const bool standardized = loaded.meta.stats.mean.defined();
    const std::size_t first = table.rows() - lb;
    Tensor x = Tensor::zeros({1, n, lb});
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t l = 0; l < lb; ++l) {
            double v = table.values.at({first + l, c});
            if (standardized) {
                v = (v - loaded.meta.stats.mean.data()[c]) / loaded.meta.stats.std.data()[c];
            }
            x.data()[c * lb + l] = v;
        }
    }

    set_training(model, false);
    Tensor yhat = model_forward(model, x); // [1, N, T]

    SeriesTable out;
    out.channel_names = table.channel_names;
    out.values = Tensor::zeros({t, n});
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t step = 0; step < t; ++step) {
            double v = yhat.at({0, c, step});
            if (standardized) {
                v = v * loaded.meta.stats.std.data()[c] + loaded.meta.stats.mean.data()[c];
            }
            out.values.data()[step * n + c] = v;
        }
    }
    const std::string csv_path = o.out_dir + "/forecast.csv";
    fs::create_directories(o.out_dir);
    write_csv(out, csv_path);

    json config;
    config["checkpoint"] = o.checkpoint;
    config["horizon"] = t;
    write_manifest(o.out_dir, "forecast", argv, loaded.meta.seed, std::move(config),
                   {o.checkpoint, o.data.data}, {csv_path}, timer.seconds());
    std::cout << "forecast: " << t << " steps x " << n << " channels -> " << csv_path << "\n";
    return 0;
}

struct AblateOpts {
    DataFlags data;
    ModelFlags model;
    TrainFlags train;
    std::vector<std::string> variants{"full",
                                      "no-channel-msa",
                                      "no-sequence-msa",
                                      "no-share",
                                      "order-sc",
                                      "no-adapters",
                                      "no-channel-adapter",
                                      "no-sequence-adapter"};
    std::uint64_t seed = 0;
    std::string out_dir = "csformer-out";
};

AblationConfig variant_ablation(const std::string& name, const ModelFlags& base) {
    ModelFlags f = base;
    if (name == "full") {
    } else if (name == "no-channel-msa") {
        f.no_channel_msa = true;
    } else if (name == "no-sequence-msa") {
        f.no_sequence_msa = true;
    } else if (name == "no-share") {
        f.no_share = true;
    } else if (name == "order-sc") {
        f.order = "sc";
    } else if (name == "no-adapters") {
        f.no_adapters = true;
    } else if (name == "no-channel-adapter") {
        f.no_channel_adapter = true;
    } else if (name == "no-sequence-adapter") {
        f.no_sequence_adapter = true;
    } else {
        throw UsageError("ablate: unknown variant '" + name + "'");
    }
    return f.ablation_config();
}

int cmd_ablate(const AblateOpts& o, const std::vector<std::string>& argv) {
    Timer timer;
    PreparedData data = prepare_data(o.data, o.model.lookback, o.model.horizon);
    if (data.windows.train.empty() || data.windows.val.empty() || data.windows.test.empty()) {
        throw DataError("ablate: every split needs at least one window");
    }
    const ModelConfig mc = o.model.model_config(data.raw.channels());
    const TrainConfig tc = o.train.train_config(o.seed);

    std::vector<MetricsReport> reports;
    std::vector<std::vector<std::string>> rows{
        {"variant", "params", "mse", "mae", "seconds"}};
    for (const std::string& name : o.variants) {
        Timer one;
        try {
            const AblationConfig ab = variant_ablation(name, o.model);
            CsformerModel model = make_model(mc, ab, o.seed);
            fit(model, data.windows.train, data.windows.val, tc);
            EvalResult ev = evaluate(model, data.windows.test);

            MetricsReport r;
            r.dataset_id = data.dataset_id;
            r.horizon = mc.horizon;
            r.mse = ev.mse;
            r.mae = ev.mae;
            r.variant = ab.tag();
            r.runtime_seconds = one.seconds();
            r.parameter_count = count_parameters(model);
            reports.push_back(r);
            rows.push_back({name, std::to_string(r.parameter_count), fmt("%.6f", r.mse),
                            fmt("%.6f", r.mae), fmt("%.2f", r.runtime_seconds)});
        } catch (const Error& e) {
            // A broken variant must not sink the rest of the sweep.
            std::cerr << "ablate: variant '" << name << "' failed: " << e.what() << "\n";
            rows.push_back({name, "-", "failed", "failed", fmt("%.2f", one.seconds())});
        }
    }

    std::cout << align_table(rows);
    const std::string table_path = o.out_dir + "/ablation.txt";
    std::vector<std::vector<std::string>> file_rows;
    for (const auto& row : rows) {
        file_rows.push_back({row[0], row[1], row[2], row[3]}); // no wall clock in outputs
    }
    write_text(table_path, align_table(file_rows));
    const std::string report_path = o.out_dir + "/ablation.jsonl";
    write_text(report_path, report_lines(reports));

    json config;
    config["model"] = model_config_json(mc);
    config["train"] = train_config_json(tc);
    config["split"] = split_json(SplitSpec::parse(o.data.split));
    config["stride"] = o.data.stride;
    config["variants"] = o.variants;
    write_manifest(o.out_dir, "ablate", argv, o.seed, std::move(config), {o.data.data},
                   {table_path, report_path}, timer.seconds());
    return 0;
}

struct SynthOpts {
    std::size_t points = 20000;
    std::size_t vars = 10;
    double noise_std = 0.0;
    double noisy_frac = 0.9;
    double dt = 0.01;
    std::uint64_t seed = 0;
    std::string out_dir = "csformer-out";
};

SyntheticSpec synth_spec(const SynthOpts& o) {
    SyntheticSpec spec;
    if (o.vars == 0 || o.vars > spec.amplitudes.size()) {
        throw UsageError("synth: --vars must be between 1 and " +
                         std::to_string(spec.amplitudes.size()) +
                         " (the first k parameter triples are used)");
    }
    spec.n_points = o.points;
    spec.n_vars = o.vars;
    spec.amplitudes.resize(o.vars);
    spec.phases.resize(o.vars);
    spec.periods.resize(o.vars);
    spec.noise_std = o.noise_std;
    spec.noisy_frac = o.noisy_frac;
    spec.dt = o.dt;
    spec.seed = o.seed;
    return spec;
}

int cmd_synth(const SynthOpts& o, const std::vector<std::string>& argv) {
    Timer timer;
    const SyntheticSpec spec = synth_spec(o);
    SeriesTable table = synth_generate(spec);
    const std::string csv_path = o.out_dir + "/synthetic.csv";
    fs::create_directories(o.out_dir);
    write_csv(table, csv_path);

    json config;
    config["points"] = spec.n_points;
    config["vars"] = spec.n_vars;
    config["noise_std"] = spec.noise_std;
    config["noisy_frac"] = spec.noisy_frac;
    config["dt"] = spec.dt;
    write_manifest(o.out_dir, "synth", argv, o.seed, std::move(config), {}, {csv_path},
                   timer.seconds());
    std::cout << "wrote " << table.rows() << " rows x " << table.channels() << " channels -> "
              << csv_path << "\n";
    return 0;
}

struct RobustnessOpts {
    std::vector<double> noise{0.1, 0.5, 1.0};
    std::size_t points = 20000;
    std::size_t vars = 10;
    std::size_t stride = 1;
    ModelFlags model;
    TrainFlags train;
    std::uint64_t seed = 0;
    std::string out_dir = "csformer-out";
};

int cmd_robustness(const RobustnessOpts& o, const std::vector<std::string>& argv) {
    Timer timer;
    // First 90% of each series feeds training, with validation carved out of
    // the training region; the last 10% is the held-out test span.
    const SplitSpec split{0.8, 0.1, 0.1};
    const std::vector<std::string> variants{"full", "no-channel-msa"};

    std::vector<MetricsReport> reports;
    std::vector<std::vector<std::string>> rows{
        {"noise", "variant", "params", "mse", "mae", "seconds"}};
    for (double std_level : o.noise) {
        SynthOpts gen;
        gen.points = o.points;
        gen.vars = o.vars;
        gen.noise_std = std_level;
        gen.seed = o.seed;
        SeriesTable table = synth_generate(synth_spec(gen));

        Splits raw = split_chrono(table, split);
        ChannelStats stats = compute_channel_stats(raw.train);
        SeriesTable z = standardize(table, stats);
        SplitWindows windows =
            make_split_windows(z, split, o.model.lookback, o.model.horizon, o.stride);
        if (windows.train.empty() || windows.val.empty() || windows.test.empty()) {
            throw DataError("robustness: every split needs at least one window");
        }
        const std::string id = "synthetic-noise" + fmt("%g", std_level);

        for (const std::string& name : variants) {
            Timer one;
            const AblationConfig ab = variant_ablation(name, o.model);
            CsformerModel model = make_model(o.model.model_config(o.vars), ab, o.seed);
            fit(model, windows.train, windows.val, o.train.train_config(o.seed));
            EvalResult ev = evaluate(model, windows.test);

            MetricsReport r;
            r.dataset_id = id;
            r.horizon = o.model.horizon;
            r.mse = ev.mse;
            r.mae = ev.mae;
            r.variant = ab.tag();
            r.runtime_seconds = one.seconds();
            r.parameter_count = count_parameters(model);
            reports.push_back(r);
            rows.push_back({fmt("%g", std_level), name, std::to_string(r.parameter_count),
                            fmt("%.6f", r.mse), fmt("%.6f", r.mae),
                            fmt("%.2f", r.runtime_seconds)});
        }
    }

    std::cout << align_table(rows);
    const std::string table_path = o.out_dir + "/robustness.txt";
    std::vector<std::vector<std::string>> file_rows;
    for (const auto& row : rows) {
        file_rows.push_back({row[0], row[1], row[2], row[3], row[4]});
    }
    write_text(table_path, align_table(file_rows));
    const std::string report_path = o.out_dir + "/robustness.jsonl";
    write_text(report_path, report_lines(reports));

    json config;
    config["noise"] = o.noise;
    config["points"] = o.points;
    config["vars"] = o.vars;
    config["stride"] = o.stride;
    config["model"] = model_config_json(o.model.model_config(o.vars));
    config["train"] = train_config_json(o.train.train_config(o.seed));
    write_manifest(o.out_dir, "robustness", argv, o.seed, std::move(config), {},
                   {table_path, report_path}, timer.seconds());
    return 0;
}

int cmd_replay(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("replay: cannot open '" + manifest_path + "'");
    json m;
    try {
        m = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(std::string("replay: bad manifest: ") + e.what());
    }
    if (!m.contains("argv") || !m["argv"].is_array()) {
        throw DataError("replay: manifest has no argv record");
    }
    std::vector<std::string> args = m["argv"].get<std::vector<std::string>>();
    std::cout << "replaying " << m.value("command", "?") << " from " << manifest_path << "\n";
    return run_cli(args);
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"CSformer: two-stage attention forecasting over channels and time"};
    app.require_subcommand(1);

    TrainOpts train_o;
    CLI::App* train = app.add_subcommand("train", "fit a model and write a checkpoint");
    add_data_options(train, train_o.data);
    add_model_options(train, train_o.model);
    add_ablation_options(train, train_o.model);
    add_train_options(train, train_o.train);
    train->add_option("--seed", train_o.seed, "master random seed")->capture_default_str();
    train->add_option("--out-dir", train_o.out_dir, "output directory")->capture_default_str();
    train->add_flag("--export-scores", train_o.export_scores,
                    "write attention score maps for plotting");

    EvalOpts eval_o;
    CLI::App* eval = app.add_subcommand("eval", "score checkpoints on a dataset's test split");
    add_data_options(eval, eval_o.data);
    eval->add_option("--checkpoint", eval_o.checkpoints, "checkpoint path (repeatable)")
        ->required();
    eval->add_option("--horizons", eval_o.horizons,
                     "expected horizons, e.g. 96,192,336,720; must match the checkpoints")
        ->delimiter(',');
    eval->add_flag("--cross-data", eval_o.cross_data,
                   "transfer mode: report tags the run as train-dataset->eval-dataset");
    eval->add_option("--out-dir", eval_o.out_dir, "output directory")->capture_default_str();

    ForecastOpts fc_o;
    CLI::App* fc = app.add_subcommand("forecast", "predict the next T steps after a CSV");
    add_data_options(fc, fc_o.data);
    fc->add_option("--checkpoint", fc_o.checkpoint, "checkpoint path")->required();
    fc->add_option("--out-dir", fc_o.out_dir, "output directory")->capture_default_str();

    AblateOpts ab_o;
    CLI::App* ab = app.add_subcommand("ablate", "train and score a sweep of model variants");
    add_data_options(ab, ab_o.data);
    add_model_options(ab, ab_o.model);
    add_train_options(ab, ab_o.train);
    ab->add_option("--variants", ab_o.variants, "comma-separated variant names")
        ->delimiter(',')
        ->capture_default_str();
    ab->add_option("--seed", ab_o.seed, "master random seed")->capture_default_str();
    ab->add_option("--out-dir", ab_o.out_dir, "output directory")->capture_default_str();

    SynthOpts sy_o;
    CLI::App* sy = app.add_subcommand("synth", "generate the sinusoid benchmark CSV");
    sy->add_option("--points", sy_o.points, "number of rows")->capture_default_str();
    sy->add_option("--vars", sy_o.vars, "number of channels")->capture_default_str();
    sy->add_option("--noise-std", sy_o.noise_std, "Gaussian noise std")->capture_default_str();
    sy->add_option("--noisy-frac", sy_o.noisy_frac, "leading fraction of rows that get noise")
        ->capture_default_str();
    sy->add_option("--dt", sy_o.dt, "sampling step between rows")->capture_default_str();
    sy->add_option("--seed", sy_o.seed, "noise seed")->capture_default_str();
    sy->add_option("--out-dir", sy_o.out_dir, "output directory")->capture_default_str();

    RobustnessOpts rb_o;
    CLI::App* rb = app.add_subcommand(
        "robustness", "full model vs sequence-only ablation across noise levels");
    rb->add_option("--noise", rb_o.noise, "noise std levels")
        ->delimiter(',')
        ->capture_default_str();
    rb->add_option("--points", rb_o.points, "rows per generated dataset")->capture_default_str();
    rb->add_option("--vars", rb_o.vars, "channels per generated dataset")->capture_default_str();
    rb->add_option("--stride", rb_o.stride, "window stride in rows")->capture_default_str();
    add_model_options(rb, rb_o.model);
    add_train_options(rb, rb_o.train);
    rb->add_option("--seed", rb_o.seed, "master random seed")->capture_default_str();
    rb->add_option("--out-dir", rb_o.out_dir, "output directory")->capture_default_str();

    std::string replay_path;
    CLI::App* rp = app.add_subcommand("replay", "rerun a command from its manifest");
    rp->add_option("manifest", replay_path, "manifest.json written by a previous run")
        ->required();

    std::vector<const char*> cargv;
    cargv.push_back("csformer");
    for (const std::string& a : args) cargv.push_back(a.c_str());
    try {
        app.parse(int(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (train->parsed()) return cmd_train(train_o, args);
    if (eval->parsed()) return cmd_eval(eval_o, args);
    if (fc->parsed()) return cmd_forecast(fc_o, args);
    if (ab->parsed()) return cmd_ablate(ab_o, args);
    if (sy->parsed()) return cmd_synth(sy_o, args);
    if (rb->parsed()) return cmd_robustness(rb_o, args);
    if (rp->parsed()) return cmd_replay(replay_path);
    return 2; // require_subcommand makes this unreachable
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

} // namespace csformer
