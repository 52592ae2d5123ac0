#include "surgseg/decoder.hpp"

#include <stdexcept>

namespace surgseg {

using ad::Var;

void DecoderConfig::validate() const {
    if (embed_dim <= 0) throw std::invalid_argument("decoder embed_dim must be positive");
    if (num_classes < 2) throw std::invalid_argument("decoder num_classes must be at least 2");
}

std::vector<Var> upsample_to_highest(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("upsample_to_highest: empty input");
    const int64_t h = xs[0]->value.dim(2), w = xs[0]->value.dim(3);
    std::vector<Var> out;
    out.reserve(xs.size());
    for (const Var& x : xs) {
        out.push_back(x->value.dim(2) == h && x->value.dim(3) == w ? x
                                                                   : ad::bilinear_resize(x, int(h), int(w)));
    }
    return out;
}

MultiScaleFuser MultiScaleFuser::make(ParamStore& ps, const std::string& name,
                                      const std::array<int64_t, 4>& in_channels, int embed_dim) {
    MultiScaleFuser f;
    for (int i = 0; i < 4; ++i) {
        f.proj.push_back(ConvLayer::make(ps, name + ".proj" + std::to_string(i), in_channels[size_t(i)],
                                         embed_dim, 1, 1, 0));
    }
    f.fuse = ConvLayer::make(ps, name + ".fuse", 4 * embed_dim, embed_dim, 1, 1, 0);
    f.fuse_norm = GroupNormLayer::make(ps, name + ".fusenorm", embed_dim);
    return f;
}

std::vector<Var> MultiScaleFuser::project(const std::vector<Var>& feats) const {
    if (feats.size() != 4) throw std::invalid_argument("expected four pyramid levels");
    std::vector<Var> out;
    out.reserve(4);
    for (size_t i = 0; i < 4; ++i) out.push_back(proj[i].fwd(feats[i]));
    return out;
}

Var MultiScaleFuser::fuse_multiscale(const std::vector<Var>& projected) const {
    return ad::gelu(fuse_norm.fwd(fuse.fwd(ad::concat_channels(upsample_to_highest(projected)))));
}

MlpDecoder::MlpDecoder(const DecoderConfig& cfg, const std::array<int64_t, 4>& in_channels,
                       ParamStore& params, const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    fuser_ = MultiScaleFuser::make(params, prefix, in_channels, cfg_.embed_dim);
    classifier_ = ConvLayer::make(params, prefix + ".cls", cfg_.embed_dim, cfg_.num_classes, 1, 1, 0);
}

Var MlpDecoder::forward(const std::vector<Var>& feats) const {
    Var fused = fuser_.fuse_multiscale(fuser_.project(feats));
    Var logits = classifier_.fwd(fused);
    return ad::bilinear_resize(logits, int(logits->value.dim(2) * 4), int(logits->value.dim(3) * 4));
}

SkipDecoder::SkipDecoder(const DecoderConfig& cfg, const std::array<int64_t, 4>& in_channels,
                         ParamStore& params, const std::string& prefix)
    : cfg_(cfg) {
    cfg_.validate();
    fuser_ = MultiScaleFuser::make(params, prefix, in_channels, cfg_.embed_dim);
    const int e = cfg_.embed_dim;
    refine1_ = ConvLayer::make(params, prefix + ".refine1", 2 * e, e, 3, 1, 1);
    norm1_ = GroupNormLayer::make(params, prefix + ".refine1norm", e);
    refine2_ = ConvLayer::make(params, prefix + ".refine2", 2 * e, e, 3, 1, 1);
    norm2_ = GroupNormLayer::make(params, prefix + ".refine2norm", e);
    classifier_ = ConvLayer::make(params, prefix + ".cls", e, cfg_.num_classes, 1, 1, 0);
}

Var SkipDecoder::forward(const std::vector<Var>& feats) const {
    std::vector<Var> projected = fuser_.project(feats);
    Var skip = projected[0];  // stride-4 detail, reused by both refinements
    if (cfg_.ablate_skip) skip = ad::scale(skip, 0.0);
    Var f = fuser_.fuse_multiscale(projected);
    f = ad::gelu(norm1_.fwd(refine1_.fwd(ad::concat_channels({f, skip}))));
    f = ad::gelu(norm2_.fwd(refine2_.fwd(ad::concat_channels({f, skip}))));
    Var logits = classifier_.fwd(f);
    return ad::bilinear_resize(logits, int(logits->value.dim(2) * 4), int(logits->value.dim(3) * 4));
}

}  // namespace surgseg
