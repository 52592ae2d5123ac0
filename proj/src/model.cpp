#include "surgseg/model.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace surgseg {

using ad::Var;
using nlohmann::json;

const char* decoder_kind_name(DecoderKind k) { return k == DecoderKind::mlp ? "mlp" : "skip"; }

DecoderKind decoder_kind_from_name(const std::string& s) {
    if (s == "mlp") return DecoderKind::mlp;
    if (s == "skip") return DecoderKind::skip;
    throw std::invalid_argument("unknown decoder kind: " + s + " (expected 'mlp' or 'skip')");
}

void ModelConfig::validate() const {
    if (num_classes < 2) throw std::invalid_argument("model num_classes must be at least 2");
    if (embed_dim <= 0) throw std::invalid_argument("model embed_dim must be positive");
    for (double s : norm_std) {
        if (!(s > 0.0)) throw std::invalid_argument("norm_std entries must be positive");
    }
}

std::string ModelConfig::to_json() const {
    json j;
    j["encoder_preset"] = encoder_preset;
    j["decoder"] = decoder_kind_name(decoder);
    j["embed_dim"] = embed_dim;
    j["num_classes"] = num_classes;
    j["head"] = head_name(head);
    j["ablate_skip"] = ablate_skip;
    j["init_seed"] = init_seed;
    j["norm_mean"] = norm_mean;
    j["norm_std"] = norm_std;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelConfig cfg;
    cfg.encoder_preset = j.at("encoder_preset").get<std::string>();
    cfg.decoder = decoder_kind_from_name(j.at("decoder").get<std::string>());
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.head = head_from_name(j.at("head").get<std::string>());
    cfg.ablate_skip = j.at("ablate_skip").get<bool>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    cfg.norm_mean = j.at("norm_mean").get<std::array<double, 3>>();
    cfg.norm_std = j.at("norm_std").get<std::array<double, 3>>();
    cfg.validate();
    return cfg;
}

SegModel::SegModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    params_ = std::make_unique<ParamStore>(cfg_.init_seed);
    const EncoderConfig enc_cfg = EncoderConfig::preset(cfg_.encoder_preset);
    encoder_ = std::make_unique<MixEncoder>(enc_cfg, *params_, "enc");
    std::array<int64_t, 4> widths{};
    for (int i = 0; i < 4; ++i) widths[size_t(i)] = enc_cfg.stages[size_t(i)].channels;
    DecoderConfig dec_cfg;
    dec_cfg.embed_dim = cfg_.embed_dim;
    dec_cfg.num_classes = cfg_.num_classes;
    dec_cfg.ablate_skip = cfg_.ablate_skip;
    if (cfg_.decoder == DecoderKind::mlp) {
        mlp_ = std::make_unique<MlpDecoder>(dec_cfg, widths, *params_, "dec");
    } else {
        skip_ = std::make_unique<SkipDecoder>(dec_cfg, widths, *params_, "dec");
    }
    params_->round_to_f32();
}

Tensor SegModel::normalize(const Tensor& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3) {
        throw std::invalid_argument("expected images (B,3,H,W), got " + images.shape_str());
    }
    Tensor out = images;
    const int64_t plane = images.dim(2) * images.dim(3);
    for (int64_t b = 0; b < images.dim(0); ++b) {
        for (int64_t c = 0; c < 3; ++c) {
            double* p = out.ptr() + (b * 3 + c) * plane;
            const double mean = cfg_.norm_mean[size_t(c)], inv = 1.0 / cfg_.norm_std[size_t(c)];
            for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
        }
    }
    return out;
}

Var SegModel::logits(const Tensor& images, AttnCapture* capture) const {
    Var x = ad::constant(normalize(images));
    std::vector<Var> feats = encoder_->forward(x, capture);
    return mlp_ ? mlp_->forward(feats) : skip_->forward(feats);
}

Var softmax_channels(const Var& logits) {
    return ad::permute(ad::softmax_lastdim(ad::permute(logits, {0, 2, 3, 1})), {0, 3, 1, 2});
}

Var SegModel::probs(const Tensor& images, AttnCapture* capture) const {
    return softmax_channels(logits(images, capture));
}

SegOutput SegModel::infer(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("expected a single (3,H,W) image, got " + image.shape_str());
    }
    const Tensor batch = image.reshaped({1, 3, image.dim(1), image.dim(2)});
    const Tensor p = probs(batch)->value;
    return derive_output(p.reshaped({p.dim(1), p.dim(2), p.dim(3)}), cfg_.head);
}

}  // namespace surgseg
