#pragma once

#include <cstdint>
#include <string>

#include "surgseg/registry.hpp"

namespace surgseg {

// Procedural scene generator: smooth textured tissue blobs for the anatomy
// head, thin bright capsules for the tool head. Capsules occlude blobs, so
// tool pixels are background in the anatomy mask. Every sample is a pure
// function of (seed, split, index).
struct SynthSpec {
    uint64_t seed = 0;
    int n_train = 0;
    int n_val = 0;
    int n_test = 0;
    int size = 64;  // square side, must be a positive multiple of 32

    void validate() const;
};

// Builds a registry with the given class counts: anatomy classes take global
// ids 1..n_anatomy, tool classes follow. Colors are spread over distinct hues.
LabelRegistry default_synth_registry(int n_anatomy, int n_tool);

// Writes classes.json plus images/ masks_anatomy/ masks_tool/ under out_root.
// The registry needs at least one class per head.
void synth_generate(const std::string& out_root, const SynthSpec& spec,
                    const LabelRegistry& registry);

}  // namespace surgseg
