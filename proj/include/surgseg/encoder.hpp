#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "surgseg/params.hpp"

namespace surgseg {

struct EncoderStage {
    int channels = 0;
    int depth = 0;
    int heads = 0;
    int sr_ratio = 1;  // key/value spatial reduction factor
};

struct EncoderConfig {
    std::array<EncoderStage, 4> stages{};
    int ffn_expansion = 4;
    std::string preset_name = "custom";

    // "tiny" (8/16/32/64, one block per stage), "b2-like" (64/128/320/512,
    // depths 3/4/6/3) or "b5-like" (same widths, depths 3/6/40/3).
    static EncoderConfig preset(const std::string& name);
    void validate() const;
};

// Softmax attention rows recorded during a forward pass, one tensor per
// attention layer in execution order, each (B*heads, N, N_kv).
struct AttnCapture {
    std::vector<Tensor> maps;
};

// Four-stage hierarchical transformer over images. Stage s emits a feature
// map of stride 2^(s+2), i.e. strides 4/8/16/32. Each stage is an overlapping
// strided-conv patch embed followed by pre-norm blocks of spatially-reduced
// self-attention and a mix FFN (pointwise expand, 3x3 depthwise conv, GELU).
class MixEncoder {
public:
    MixEncoder(const EncoderConfig& cfg, ParamStore& params, const std::string& prefix);

    // image: (B, 3, H, W) with H and W multiples of 32.
    std::vector<ad::Var> forward(const ad::Var& image, AttnCapture* capture = nullptr) const;

    const EncoderConfig& config() const { return cfg_; }
    static constexpr std::array<int, 4> strides{4, 8, 16, 32};

private:
    struct Impl;
    EncoderConfig cfg_;
    std::shared_ptr<Impl> impl_;
};

}  // namespace surgseg
