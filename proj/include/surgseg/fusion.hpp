#pragma once

#include "surgseg/registry.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

// One head's prediction for a single image: class scores plus the derived
// argmax label map and per-pixel max-probability confidence.
struct SegOutput {
    Head head = Head::anatomy;
    int num_classes = 0;
    Tensor probs;       // (K, H, W), softmax over K
    LabelMask labels;   // argmax, ties to the lowest class index
    Tensor confidence;  // (H, W), max probability, in [1/K, 1]
};

// Materializes labels and confidence from per-pixel class scores.
// Rejects rows whose scores deviate from a distribution by more than 1e-4.
SegOutput derive_output(const Tensor& probs, Head head);

enum class FusionRule {
    priority,  // confidence-gated instrument priority (the default)
    plain_or,  // union of foregrounds, instrument first; baseline for comparison
};

// Per-pixel combination of the two heads into global ids. A pixel is
// background only when both heads predict background; overlaps go to the
// instrument head when its confidence is strictly higher.
LabelMask priority_fuse(const SegOutput& inst, const SegOutput& anat, const LabelRegistry& registry,
                        FusionRule rule = FusionRule::priority);

// Per-class binary opening then closing with a (2r+1)^2 square element.
// Pixels claimed by several classes afterwards keep their input label.
LabelMask morph_refine(const LabelMask& fused, int radius);

}  // namespace surgseg
