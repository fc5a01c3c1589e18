#include "csformer/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "csformer/error.hpp"

namespace csformer {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'F', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

// Cursor over the raw file bytes; every read checks the remaining length.
struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw DataError("checkpoint: file truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

nlohmann::json stats_to_json(const ChannelStats& stats) {
    nlohmann::json j;
    j["mean"] = nlohmann::json::array();
    j["std"] = nlohmann::json::array();
    if (stats.mean.defined()) {
        for (double v : stats.mean.data()) j["mean"].push_back(v);
        for (double v : stats.std.data()) j["std"].push_back(v);
    }
    return j;
}

ChannelStats stats_from_json(const nlohmann::json& j) {
    ChannelStats stats;
    std::vector<double> mean = j.at("mean").get<std::vector<double>>();
    std::vector<double> std_ = j.at("std").get<std::vector<double>>();
    if (!mean.empty()) {
        const std::size_t n = mean.size();
        if (std_.size() != n) throw DataError("checkpoint: channel stats lengths differ");
        stats.mean = Tensor::from_data({n}, std::move(mean));
        stats.std = Tensor::from_data({n}, std::move(std_));
    }
    return stats;
}

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
    nlohmann::json j;
    j["config"] = {{"channels", meta.config.channels},
                   {"lookback", meta.config.lookback},
                   {"horizon", meta.config.horizon},
                   {"dim", meta.config.dim},
                   {"blocks", meta.config.blocks},
                   {"heads", meta.config.heads},
                   {"adapter_bottleneck", meta.config.adapter_bottleneck},
                   {"revin", meta.config.revin}};
    j["ablation"] = {
        {"channel_msa", meta.ablation.channel_msa},
        {"sequence_msa", meta.ablation.sequence_msa},
        {"share_parameters", meta.ablation.share_parameters},
        {"stage_order",
         meta.ablation.stage_order == StageOrder::ChannelThenSequence ? "cs" : "sc"},
        {"channel_adapter", meta.ablation.channel_adapter},
        {"sequence_adapter", meta.ablation.sequence_adapter}};
    j["dataset_id"] = meta.dataset_id;
    j["channel_stats"] = stats_to_json(meta.stats);
    j["seed"] = meta.seed;
    return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta meta;
    const nlohmann::json& c = j.at("config");
    meta.config.channels = c.at("channels").get<std::size_t>();
    meta.config.lookback = c.at("lookback").get<std::size_t>();
    meta.config.horizon = c.at("horizon").get<std::size_t>();
    meta.config.dim = c.at("dim").get<std::size_t>();
    meta.config.blocks = c.at("blocks").get<std::size_t>();
    meta.config.heads = c.at("heads").get<std::size_t>();
    meta.config.adapter_bottleneck = c.at("adapter_bottleneck").get<std::size_t>();
    meta.config.revin = c.at("revin").get<bool>();
    const nlohmann::json& a = j.at("ablation");
    meta.ablation.channel_msa = a.at("channel_msa").get<bool>();
    meta.ablation.sequence_msa = a.at("sequence_msa").get<bool>();
    meta.ablation.share_parameters = a.at("share_parameters").get<bool>();
    const std::string order = a.at("stage_order").get<std::string>();
    if (order != "cs" && order != "sc") {
        throw DataError("checkpoint: unknown stage order '" + order + "'");
    }
    meta.ablation.stage_order =
        order == "cs" ? StageOrder::ChannelThenSequence : StageOrder::SequenceThenChannel;
    meta.ablation.channel_adapter = a.at("channel_adapter").get<bool>();
    meta.ablation.sequence_adapter = a.at("sequence_adapter").get<bool>();
    meta.dataset_id = j.at("dataset_id").get<std::string>();
    meta.stats = stats_from_json(j.at("channel_stats"));
    meta.seed = j.at("seed").get<std::uint64_t>();
    return meta;
}

} // namespace

void save_checkpoint(const CsformerModel& model, const CheckpointMeta& meta,
                     const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);

    const std::string header = meta_to_json(meta).dump();
    put_u64(out, header.size());
    out += header;

    const auto state = named_state(model);
    put_u64(out, state.size());
    for (const auto& [name, t] : state) {
        put_u64(out, name.size());
        out += name;
        put_u64(out, t.rank());
        for (std::size_t d : t.shape()) put_u64(out, d);
        for (double v : t.data()) put_f64(out, v);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    file.write(out.data(), std::streamsize(out.size()));
    if (!file) throw DataError("checkpoint: write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    Reader r{bytes};
    if (r.str(4) != std::string(kMagic, 4)) {
        throw DataError("checkpoint: '" + path + "' is not a checkpoint file");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str(r.u64()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata header: ") + e.what());
    }

    LoadedCheckpoint loaded;
    try {
        loaded.meta = meta_from_json(header);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata header: ") + e.what());
    }
    loaded.model = make_model(loaded.meta.config, loaded.meta.ablation, loaded.meta.seed);

    auto state = named_state(loaded.model);
    const std::uint64_t count = r.u64();
    if (count != state.size()) {
        throw DataError("checkpoint: expected " + std::to_string(state.size()) +
                        " tensors, file has " + std::to_string(count));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u64());
        const std::uint64_t rank = r.u64();
        if (rank > 16) throw DataError("checkpoint: implausible tensor rank");
        Shape shape(rank);
        for (std::size_t& d : shape) d = r.u64();

        Tensor* target = nullptr;
        for (auto& [n, t] : state) {
            if (n == name) {
                target = &t;
                break;
            }
        }
        if (!target) throw DataError("checkpoint: unexpected tensor '" + name + "'");
        if (target->shape() != shape) {
            throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(target->shape()));
        }
        for (double& v : target->data()) v = r.f64();
    }
    if (r.pos != bytes.size()) throw DataError("checkpoint: trailing bytes after last tensor");
    return loaded;
}

} // namespace csformer
