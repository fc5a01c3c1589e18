#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csformer/nn.hpp"
#include "csformer/revin.hpp"
#include "csformer/tensor.hpp"

namespace csformer {

struct ModelConfig {
    std::size_t channels = 7;           // N
    std::size_t lookback = 96;          // L
    std::size_t horizon = 96;           // T
    std::size_t dim = 16;               // D
    std::size_t blocks = 1;             // M
    std::size_t heads = 1;              // h
    std::size_t adapter_bottleneck = 0; // D_b; 0 means max(1, D/4)
    bool revin = true;

    std::size_t bottleneck() const {
        return adapter_bottleneck ? adapter_bottleneck : std::max<std::size_t>(1, dim / 4);
    }
    void validate() const;
};

enum class StageOrder { ChannelThenSequence, SequenceThenChannel };

struct AblationConfig {
    bool channel_msa = true;
    bool sequence_msa = true;
    bool share_parameters = true;
    StageOrder stage_order = StageOrder::ChannelThenSequence;
    bool channel_adapter = true;
    bool sequence_adapter = true;

    void validate() const;
    // Short label for reports: "full" or a '+'-joined list of deviations.
    std::string tag() const;
};

// One two-stage unit. msa serves both stages; msa_seq is allocated only when
// sharing is off and both stages are on. Norms and adapters exist only for
// stages (and switches) that are enabled.
struct Block {
    MsaWeights msa;
    MsaWeights msa_seq;
    BatchNorm channel_norm;
    AdapterWeights channel_adapter;
    BatchNorm sequence_norm;
    AdapterWeights sequence_adapter;
};

struct CsformerModel {
    ModelConfig config;
    AblationConfig ablation;
    Tensor nu; // [1, D] embedding vector
    std::vector<Block> blocks;
    LinearLayer head; // [L*D, T], shared across channels
    RevinParams revin;
};

CsformerModel make_model(const ModelConfig& config, const AblationConfig& ablation,
                         std::uint64_t seed);

// Attention scores captured during one forward pass.
struct ScoreMap {
    std::size_t block = 0;
    std::string stage; // "channel" or "sequence"
    Tensor scores;     // [B_eff, h, S, S]
};

// H[b,n,l,d] = x[b,n,l] * nu[0,d]
Tensor embed_augment(const Tensor& nu, const Tensor& x);

// Attention over the channel axis: tokens = N, effective batch = B*L.
// Output = Adapter(Norm(MSA(H_c))) + H_c, mapped back to [B,N,L,D]; identity
// when the stage is disabled.
Tensor channel_stage(Block& block, const Tensor& h, const AblationConfig& ablation,
                     std::size_t block_index, std::vector<ScoreMap>* scores = nullptr);

// Attention over the sequence axis: tokens = L, effective batch = B*N. Reuses
// the block's shared MSA weights unless sharing is off.
Tensor sequence_stage(Block& block, const Tensor& h, const AblationConfig& ablation,
                      std::size_t block_index, std::vector<ScoreMap>* scores = nullptr);

// Full pass: ReVIN -> embed -> M blocks (stage order per ablation) -> flatten
// (L-major, D-minor) -> head -> ReVIN inverse. Appends score maps when a sink
// is given.
Tensor model_forward(CsformerModel& m, const Tensor& x, std::vector<ScoreMap>* scores = nullptr);

void set_training(CsformerModel& m, bool on);

std::vector<Tensor> parameters(const CsformerModel& m);
std::vector<std::pair<std::string, Tensor>> named_parameters(const CsformerModel& m);
// Parameters plus non-learnable tracked state (batch-norm running stats).
std::vector<std::pair<std::string, Tensor>> named_state(const CsformerModel& m);

std::size_t count_parameters(const CsformerModel& m);

// One S x S table per (block, stage, head), averaged over the effective batch.
struct ExportedScores {
    std::size_t block = 0;
    std::string stage;
    std::size_t head = 0;
    std::size_t tokens = 0;
    std::vector<double> values; // tokens * tokens, row-major
};

std::vector<ExportedScores> export_attention_scores(const std::vector<ScoreMap>& scores);

} // namespace csformer
