#pragma once

#include <string>
#include <vector>

#include "surgseg/registry.hpp"
#include "surgseg/rng.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

// One frame with its two head-local supervision masks.
struct Sample {
    std::string id;
    Tensor image;        // (3,H,W), values in [0,1]
    LabelMask anat_mask;
    LabelMask tool_mask;
};

// Geometric-only augmentation; photometric changes are deliberately absent.
struct AugmentationSpec {
    double hflip_prob = 0.0;
    double vflip_prob = 0.0;
    std::vector<int> rotation_degrees = {0};  // subset of {0, 90, 180, 270}
    double crop_fraction = 1.0;               // side fraction in (0, 1]
    uint64_t seed = 0;

    void validate() const;
};

enum class HeadSelect { anatomy, tool, both };

// Reads root/images/<split> plus the mask folder(s) for the selected heads.
// Samples come back ordered lexicographically by id; every mask value is
// checked against the registry's head-local id range.
std::vector<Sample> load_dataset(const std::string& root, const std::string& split,
                                 const LabelRegistry& registry, HeadSelect heads = HeadSelect::both);

// Applies one random draw of the spec to image and masks alike. Flips and
// right-angle rotations are exact permutations; a crop is resized back to the
// original size (bilinear image, nearest-neighbor masks).
Sample augment(const Sample& sample, const AugmentationSpec& spec, Rng& draw);

// Exact geometric primitives, exposed for reuse and tests.
Tensor hflip(const Tensor& chw);
Tensor vflip(const Tensor& chw);
Tensor rot90cw(const Tensor& chw);
LabelMask hflip(const LabelMask& m);
LabelMask vflip(const LabelMask& m);
LabelMask rot90cw(const LabelMask& m);
LabelMask nearest_resize(const LabelMask& m, int out_h, int out_w);

}  // namespace surgseg
