#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "surgseg/model.hpp"
#include "surgseg/registry.hpp"

namespace surgseg {

// On-disk layout: 8-byte magic "SSEGCKPT", u32 format version, u64 header
// length, JSON header (model config, label registry, step counter, parameter
// manifest with names/shapes/dtype), then the raw little-endian float32
// buffers in manifest order. Parameters are float32-exact in memory, so a
// save/load cycle reproduces forward passes bit for bit.
struct CheckpointMeta {
    ModelConfig model;
    LabelRegistry registry;
    int64_t step = 0;
};

void save_checkpoint(const std::string& path, const SegModel& model, const LabelRegistry& registry,
                     int64_t step);

CheckpointMeta load_checkpoint_meta(const std::string& path);

// Rebuilds the model described by the header and fills in its weights.
std::unique_ptr<SegModel> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace surgseg
