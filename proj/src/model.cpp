#include "csformer/model.hpp"

#include <string>

#include "csformer/error.hpp"
#include "csformer/rng.hpp"

namespace csformer {

void ModelConfig::validate() const {
    if (channels == 0 || lookback == 0 || horizon == 0 || dim == 0 || blocks == 0 || heads == 0) {
        throw ConfigError("model config: all dimensions must be positive");
    }
    if (dim % heads != 0) {
        throw ConfigError("model config: heads " + std::to_string(heads) + " must divide dim " +
                          std::to_string(dim));
    }
    if (bottleneck() >= dim) {
        throw ConfigError("model config: adapter bottleneck " + std::to_string(bottleneck()) +
                          " must be smaller than dim " + std::to_string(dim));
    }
}

void AblationConfig::validate() const {
    if (!channel_msa && !sequence_msa) {
        throw ConfigError("ablation: at least one attention stage must stay on");
    }
}

std::string AblationConfig::tag() const {
    std::vector<std::string> parts;
    if (!channel_msa) parts.push_back("no-channel-msa");
    if (!sequence_msa) parts.push_back("no-sequence-msa");
    if (!share_parameters) parts.push_back("no-share");
    if (stage_order == StageOrder::SequenceThenChannel) parts.push_back("order-sc");
    if (!channel_adapter) parts.push_back("no-channel-adapter");
    if (!sequence_adapter) parts.push_back("no-sequence-adapter");
    if (parts.empty()) return "full";
    std::string out = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
    return out;
}

CsformerModel make_model(const ModelConfig& config, const AblationConfig& ablation,
                         std::uint64_t seed) {
    config.validate();
    ablation.validate();

    CsformerModel m;
    m.config = config;
    m.ablation = ablation;
    m.nu = init_params({1, config.dim}, 1, config.dim, substream_seed(seed, "nu"));
    m.nu.set_requires_grad();

    const std::size_t db = config.bottleneck();
    for (std::size_t i = 0; i < config.blocks; ++i) {
        const std::string prefix = "block" + std::to_string(i);
        Block b;
        b.msa = make_msa(config.dim, config.heads, substream_seed(seed, prefix + ".msa"));
        if (!ablation.share_parameters && ablation.channel_msa && ablation.sequence_msa) {
            b.msa_seq =
                make_msa(config.dim, config.heads, substream_seed(seed, prefix + ".msa_seq"));
        }
        if (ablation.channel_msa) {
            b.channel_norm = make_batchnorm(config.dim);
            if (ablation.channel_adapter) {
                b.channel_adapter =
                    make_adapter(config.dim, db, substream_seed(seed, prefix + ".channel_adapter"));
            }
        }
        if (ablation.sequence_msa) {
            b.sequence_norm = make_batchnorm(config.dim);
            if (ablation.sequence_adapter) {
                b.sequence_adapter = make_adapter(config.dim, db,
                                                  substream_seed(seed, prefix + ".sequence_adapter"));
            }
        }
        m.blocks.push_back(std::move(b));
    }

    m.head = make_linear(config.lookback * config.dim, config.horizon,
                         substream_seed(seed, "head"));
    if (config.revin) m.revin = make_revin(config.channels);
    return m;
}

Tensor embed_augment(const Tensor& nu, const Tensor& x) {
    if (x.rank() != 3) {
        throw ShapeError("embed_augment: expected [batch, channels, length], got " +
                         shape_str(x.shape()));
    }
    if (nu.rank() != 2 || nu.shape()[0] != 1) {
        throw ShapeError("embed_augment: nu must be [1, dim], got " + shape_str(nu.shape()));
    }
    const Shape& s = x.shape();
    // Outer product of each scalar with nu: [B,N,L,1] x [1,D] -> [B,N,L,D].
    return matmul(reshape(x, {s[0], s[1], s[2], 1}), nu);
}

namespace {

void guard_stage_output(const Tensor& t, std::size_t block_index, const char* stage) {
    if (has_nan(t)) {
        throw NumericsError("model_forward: NaN out of block " + std::to_string(block_index) +
                            " " + stage + " stage");
    }
}

} // namespace

Tensor channel_stage(Block& block, const Tensor& h, const AblationConfig& ablation,
                     std::size_t block_index, std::vector<ScoreMap>* scores) {
    if (!ablation.channel_msa) return h;
    const Shape& s = h.shape();
    const std::size_t b = s[0], n = s[1], l = s[2], d = s[3];

    Tensor hc = reshape(permute(h, {0, 2, 1, 3}), {b * l, n, d});
    MsaOutput z = msa_forward(block.msa, hc);
    if (scores) scores->push_back({block_index, "channel", z.scores});

    Tensor nrm = reshape(batchnorm_forward(block.channel_norm, reshape(z.out, {b * l * n, d})),
                         {b * l, n, d});
    Tensor fused = ablation.channel_adapter ? adapter_forward(block.channel_adapter, nrm) : nrm;
    Tensor out = add(fused, hc);
    return permute(reshape(out, {b, l, n, d}), {0, 2, 1, 3});
}

Tensor sequence_stage(Block& block, const Tensor& h, const AblationConfig& ablation,
                      std::size_t block_index, std::vector<ScoreMap>* scores) {
    if (!ablation.sequence_msa) return h;
    const Shape& s = h.shape();
    const std::size_t b = s[0], n = s[1], l = s[2], d = s[3];

    Tensor hs = reshape(h, {b * n, l, d});
    const bool own_weights =
        !ablation.share_parameters && ablation.channel_msa && ablation.sequence_msa;
    MsaOutput z = msa_forward(own_weights ? block.msa_seq : block.msa, hs);
    if (scores) scores->push_back({block_index, "sequence", z.scores});

    Tensor nrm = reshape(batchnorm_forward(block.sequence_norm, reshape(z.out, {b * n * l, d})),
                         {b * n, l, d});
    Tensor fused = ablation.sequence_adapter ? adapter_forward(block.sequence_adapter, nrm) : nrm;
    Tensor out = add(fused, hs);
    return reshape(out, {b, n, l, d});
}

Tensor model_forward(CsformerModel& m, const Tensor& x, std::vector<ScoreMap>* scores) {
    const ModelConfig& cfg = m.config;
    if (x.rank() != 3 || x.shape()[1] != cfg.channels || x.shape()[2] != cfg.lookback) {
        throw ShapeError("model_forward: expected [batch, " + std::to_string(cfg.channels) +
                         ", " + std::to_string(cfg.lookback) + "], got " + shape_str(x.shape()));
    }
    if (has_nan(x)) throw NumericsError("model_forward: NaN in the input window");
    if (scores) scores->clear();

    Tensor cur = x;
    RevinStats stats;
    if (cfg.revin) {
        auto normed = revin_normalize(m.revin, cur);
        cur = normed.first;
        stats = normed.second;
    }

    Tensor h = embed_augment(m.nu, cur); // [B, N, L, D]
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        if (m.ablation.stage_order == StageOrder::ChannelThenSequence) {
            h = channel_stage(m.blocks[i], h, m.ablation, i, scores);
            guard_stage_output(h, i, "channel");
            h = sequence_stage(m.blocks[i], h, m.ablation, i, scores);
            guard_stage_output(h, i, "sequence");
        } else {
            h = sequence_stage(m.blocks[i], h, m.ablation, i, scores);
            guard_stage_output(h, i, "sequence");
            h = channel_stage(m.blocks[i], h, m.ablation, i, scores);
            guard_stage_output(h, i, "channel");
        }
    }

    const std::size_t b = x.shape()[0];
    Tensor flat = reshape(h, {b, cfg.channels, cfg.lookback * cfg.dim});
    Tensor out = linear_forward(m.head, flat); // [B, N, T]
    if (has_nan(out)) throw NumericsError("model_forward: NaN out of the prediction head");

    if (cfg.revin) out = revin_denormalize(m.revin, out, stats);
    return out;
}

void set_training(CsformerModel& m, bool on) {
    for (Block& b : m.blocks) {
        if (b.channel_norm.gamma.defined()) b.channel_norm.training = on;
        if (b.sequence_norm.gamma.defined()) b.sequence_norm.training = on;
    }
}

namespace {

void collect_linear(const std::string& prefix, const LinearLayer& layer,
                    std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".weight", layer.weight);
    if (layer.bias.defined()) out.emplace_back(prefix + ".bias", layer.bias);
}

void collect_msa(const std::string& prefix, const MsaWeights& w,
                 std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".wq", w.wq);
    out.emplace_back(prefix + ".wk", w.wk);
    out.emplace_back(prefix + ".wv", w.wv);
    out.emplace_back(prefix + ".wo", w.wo);
}

void collect_adapter(const std::string& prefix, const AdapterWeights& a,
                     std::vector<std::pair<std::string, Tensor>>& out) {
    collect_linear(prefix + ".down", a.down, out);
    collect_linear(prefix + ".up", a.up, out);
}

} // namespace

std::vector<std::pair<std::string, Tensor>> named_parameters(const CsformerModel& m) {
    std::vector<std::pair<std::string, Tensor>> out;
    if (m.config.revin) {
        out.emplace_back("revin.gamma", m.revin.gamma);
        out.emplace_back("revin.beta", m.revin.beta);
    }
    out.emplace_back("nu", m.nu);
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const Block& b = m.blocks[i];
        const std::string prefix = "block" + std::to_string(i);
        collect_msa(prefix + ".msa", b.msa, out);
        if (b.msa_seq.wq.defined()) collect_msa(prefix + ".msa_seq", b.msa_seq, out);
        if (b.channel_norm.gamma.defined()) {
            out.emplace_back(prefix + ".channel_norm.gamma", b.channel_norm.gamma);
            out.emplace_back(prefix + ".channel_norm.beta", b.channel_norm.beta);
        }
        if (b.channel_adapter.down.weight.defined()) {
            collect_adapter(prefix + ".channel_adapter", b.channel_adapter, out);
        }
        if (b.sequence_norm.gamma.defined()) {
            out.emplace_back(prefix + ".sequence_norm.gamma", b.sequence_norm.gamma);
            out.emplace_back(prefix + ".sequence_norm.beta", b.sequence_norm.beta);
        }
        if (b.sequence_adapter.down.weight.defined()) {
            collect_adapter(prefix + ".sequence_adapter", b.sequence_adapter, out);
        }
    }
    collect_linear("head", m.head, out);
    return out;
}

std::vector<Tensor> parameters(const CsformerModel& m) {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters(m)) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Tensor>> named_state(const CsformerModel& m) {
    std::vector<std::pair<std::string, Tensor>> out = named_parameters(m);
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const Block& b = m.blocks[i];
        const std::string prefix = "block" + std::to_string(i);
        if (b.channel_norm.gamma.defined()) {
            out.emplace_back(prefix + ".channel_norm.running_mean", b.channel_norm.running_mean);
            out.emplace_back(prefix + ".channel_norm.running_var", b.channel_norm.running_var);
        }
        if (b.sequence_norm.gamma.defined()) {
            out.emplace_back(prefix + ".sequence_norm.running_mean", b.sequence_norm.running_mean);
            out.emplace_back(prefix + ".sequence_norm.running_var", b.sequence_norm.running_var);
        }
    }
    return out;
}

std::size_t count_parameters(const CsformerModel& m) {
    std::size_t total = 0;
    for (const Tensor& t : parameters(m)) total += t.size();
    return total;
}

std::vector<ExportedScores> export_attention_scores(const std::vector<ScoreMap>& scores) {
    std::vector<ExportedScores> out;
    for (const ScoreMap& map : scores) {
        const Shape& s = map.scores.shape();
        const std::size_t beff = s[0], heads = s[1], tokens = s[2];
        const double* p = map.scores.data().data();
        for (std::size_t h = 0; h < heads; ++h) {
            ExportedScores e;
            e.block = map.block;
            e.stage = map.stage;
            e.head = h;
            e.tokens = tokens;
            e.values.assign(tokens * tokens, 0.0);
            for (std::size_t b = 0; b < beff; ++b) {
                const double* slice = p + ((b * heads + h) * tokens) * tokens;
                for (std::size_t i = 0; i < tokens * tokens; ++i) e.values[i] += slice[i];
            }
            for (double& v : e.values) v /= static_cast<double>(beff);
            out.push_back(std::move(e));
        }
    }
    return out;
}

} // namespace csformer
