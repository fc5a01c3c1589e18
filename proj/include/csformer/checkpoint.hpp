#pragma once

#include <cstdint>
#include <string>

#include "csformer/data.hpp"
#include "csformer/model.hpp"

namespace csformer {

// Everything needed to rebuild a trained model and interpret its raw-scale
// inputs: architecture, ablation switches, the train-split standardization
// stats, and provenance.
struct CheckpointMeta {
    ModelConfig config;
    AblationConfig ablation;
    std::string dataset_id;
    ChannelStats stats; // undefined tensors when the run skipped standardization
    std::uint64_t seed = 0;
};

// Single file: "CSFM" magic, u32 format version, a JSON metadata header, then
// one (name, dims, f64 payload) record per state tensor. All integers and
// doubles are stored little-endian, so files travel across machines.
void save_checkpoint(const CsformerModel& model, const CheckpointMeta& meta,
                     const std::string& path);

struct LoadedCheckpoint {
    CsformerModel model;
    CheckpointMeta meta;
};

// Rebuilds the model from the stored config and overwrites every named state
// tensor with the stored payload. Corrupt or mismatched files raise DataError.
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace csformer
