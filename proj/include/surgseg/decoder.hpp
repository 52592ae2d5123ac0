#pragma once

#include <array>
#include <string>
#include <vector>

#include "surgseg/params.hpp"

namespace surgseg {

struct DecoderConfig {
    int embed_dim = 32;       // width every pyramid level is projected to
    int num_classes = 0;      // head-local classes including background
    bool ablate_skip = false; // skip decoder only: zero the skip connections

    void validate() const;
};

// Bilinearly grows every map to the spatial size of the first (finest) one.
std::vector<ad::Var> upsample_to_highest(const std::vector<ad::Var>& xs);

// Shared front half of both decoders: per-level 1x1 projection to a common
// width, upsample to the finest grid, channel concat (finest level first),
// then a 1x1 fuse conv + GroupNorm + GELU.
struct MultiScaleFuser {
    std::vector<ConvLayer> proj;
    ConvLayer fuse;
    GroupNormLayer fuse_norm;

    static MultiScaleFuser make(ParamStore& ps, const std::string& name,
                                const std::array<int64_t, 4>& in_channels, int embed_dim);
    std::vector<ad::Var> project(const std::vector<ad::Var>& feats) const;
    ad::Var fuse_multiscale(const std::vector<ad::Var>& projected) const;
};

// All-MLP style head: fuse the pyramid, classify with a 1x1 conv at stride 4,
// then a 4x bilinear upsample back to input resolution.
class MlpDecoder {
public:
    MlpDecoder(const DecoderConfig& cfg, const std::array<int64_t, 4>& in_channels,
               ParamStore& params, const std::string& prefix);
    // feats: the four encoder maps, finest first. Returns logits (B,K,H,W).
    ad::Var forward(const std::vector<ad::Var>& feats) const;
    const DecoderConfig& config() const { return cfg_; }

private:
    DecoderConfig cfg_;
    MultiScaleFuser fuser_;
    ConvLayer classifier_;
};

// Dense-skip head: after the fuse, two 3x3 refinement blocks each concatenate
// the projected stride-4 feature back in before convolving, keeping fine
// spatial detail alive for thin structures.
class SkipDecoder {
public:
    SkipDecoder(const DecoderConfig& cfg, const std::array<int64_t, 4>& in_channels,
                ParamStore& params, const std::string& prefix);
    ad::Var forward(const std::vector<ad::Var>& feats) const;
    const DecoderConfig& config() const { return cfg_; }

private:
    DecoderConfig cfg_;
    MultiScaleFuser fuser_;
    ConvLayer refine1_, refine2_;
    GroupNormLayer norm1_, norm2_;
    ConvLayer classifier_;
};

}  // namespace surgseg
