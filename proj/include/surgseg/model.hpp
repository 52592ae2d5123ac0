#pragma once

#include <array>
#include <memory>
#include <string>

#include "surgseg/decoder.hpp"
#include "surgseg/encoder.hpp"
#include "surgseg/fusion.hpp"
#include "surgseg/params.hpp"

namespace surgseg {

enum class DecoderKind { mlp, skip };

const char* decoder_kind_name(DecoderKind k);
DecoderKind decoder_kind_from_name(const std::string& s);

struct ModelConfig {
    std::string encoder_preset = "tiny";
    DecoderKind decoder = DecoderKind::skip;
    int embed_dim = 32;
    int num_classes = 0;  // head-local classes including background
    Head head = Head::tool;
    bool ablate_skip = false;
    uint64_t init_seed = 0;
    // Per-channel input normalization applied before the encoder and stored
    // in checkpoints so inference always matches training.
    std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
    std::array<double, 3> norm_std{0.25, 0.25, 0.25};

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    void validate() const;
};

// One segmentation instance: hierarchical transformer encoder plus either the
// all-MLP head (anatomy) or the dense-skip head (tools).
class SegModel {
public:
    explicit SegModel(const ModelConfig& cfg);

    Tensor normalize(const Tensor& images) const;  // (B,3,H,W) in [0,1]

    ad::Var logits(const Tensor& images, AttnCapture* capture = nullptr) const;  // (B,K,H,W)
    ad::Var probs(const Tensor& images, AttnCapture* capture = nullptr) const;   // channel softmax

    SegOutput infer(const Tensor& image) const;  // single (3,H,W) image

    ParamStore& params() { return *params_; }
    const ParamStore& params() const { return *params_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    std::unique_ptr<ParamStore> params_;
    std::unique_ptr<MixEncoder> encoder_;
    std::unique_ptr<MlpDecoder> mlp_;
    std::unique_ptr<SkipDecoder> skip_;
};

// Softmax over dim 1 of a (B,K,H,W) tensor.
ad::Var softmax_channels(const ad::Var& logits);

}  // namespace surgseg
