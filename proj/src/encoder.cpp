#include "surgseg/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace surgseg {

using ad::Var;

EncoderConfig EncoderConfig::preset(const std::string& name) {
    EncoderConfig cfg;
    cfg.preset_name = name;
    const std::array<int, 4> heads{1, 2, 4, 8};
    const std::array<int, 4> sr{8, 4, 2, 1};
    if (name == "tiny") {
        const std::array<int, 4> ch{8, 16, 32, 64};
        for (int i = 0; i < 4; ++i) cfg.stages[i] = {ch[i], 1, heads[i], sr[i]};
    } else if (name == "b2-like" || name == "b5-like") {
        const std::array<int, 4> ch{64, 128, 320, 512};
        const std::array<int, 4> wide_heads{1, 2, 5, 8};
        const std::array<int, 4> depth =
            name == "b2-like" ? std::array<int, 4>{3, 4, 6, 3} : std::array<int, 4>{3, 6, 40, 3};
        for (int i = 0; i < 4; ++i) cfg.stages[i] = {ch[i], depth[i], wide_heads[i], sr[i]};
    } else {
        throw std::invalid_argument("unknown encoder preset: " + name);
    }
    cfg.validate();
    return cfg;
}

void EncoderConfig::validate() const {
    for (int i = 0; i < 4; ++i) {
        const EncoderStage& s = stages[i];
        if (s.channels <= 0 || s.depth <= 0 || s.heads <= 0 || s.sr_ratio <= 0) {
            throw std::invalid_argument("encoder stage fields must be positive");
        }
        if (s.channels % s.heads != 0) {
            throw std::invalid_argument("stage channels must divide evenly into heads");
        }
    }
    if (ffn_expansion <= 0) throw std::invalid_argument("ffn_expansion must be positive");
}

namespace {

// (B,C,H,W) -> tokens (B, H*W, C)
Var to_tokens(const Var& x) {
    const Shape& s = x->value.shape;
    return ad::reshape(ad::permute(x, {0, 2, 3, 1}), {s[0], s[2] * s[3], s[1]});
}

// tokens (B, N, C) -> (B, C, H, W)
Var to_map(const Var& x, int64_t h, int64_t w) {
    const Shape& s = x->value.shape;
    return ad::permute(ad::reshape(x, {s[0], h, w, s[2]}), {0, 3, 1, 2});
}

struct Attention {
    LinearLayer q, k, v, proj;
    ConvLayer sr;      // used when sr_ratio > 1
    NormLayer srnorm;  // ditto
    int heads = 1;
    int sr_ratio = 1;

    static Attention make(ParamStore& ps, const std::string& name, int ch, int heads, int sr_ratio) {
        Attention a;
        a.q = LinearLayer::make(ps, name + ".q", ch, ch);
        a.k = LinearLayer::make(ps, name + ".k", ch, ch);
        a.v = LinearLayer::make(ps, name + ".v", ch, ch);
        a.proj = LinearLayer::make(ps, name + ".proj", ch, ch);
        if (sr_ratio > 1) {
            a.sr = ConvLayer::make(ps, name + ".sr", ch, ch, sr_ratio, sr_ratio, 0);
            a.srnorm = NormLayer::make(ps, name + ".srnorm", ch);
        }
        a.heads = heads;
        a.sr_ratio = sr_ratio;
        return a;
    }

    // x: tokens (B, N, C) over an h x w grid.
    Var fwd(const Var& x, int64_t h, int64_t w, AttnCapture* capture) const {
        const int64_t B = x->value.dim(0), N = x->value.dim(1), C = x->value.dim(2);
        const int64_t dh = C / heads;

        Var kv_src = x;
        if (sr_ratio > 1) {
            // Strided conv shrinks the key/value grid, then a fresh LayerNorm.
            Var m = sr.fwd(to_map(x, h, w));
            kv_src = srnorm.fwd(to_tokens(m));
        }
        const int64_t Nkv = kv_src->value.dim(1);

        auto split_heads = [&](const Var& t, int64_t n) {
            return ad::reshape(ad::permute(ad::reshape(t, {B, n, heads, dh}), {0, 2, 1, 3}),
                               {B * heads, n, dh});
        };
        Var qh = split_heads(q.fwd(x), N);
        Var kh = split_heads(k.fwd(kv_src), Nkv);
        Var vh = split_heads(v.fwd(kv_src), Nkv);

        Var attn = ad::softmax_lastdim(ad::scale(ad::bmm_nt(qh, kh), 1.0 / std::sqrt(double(dh))));
        if (capture) capture->maps.push_back(attn->value);
        Var out = ad::bmm_nn(attn, vh);  // (B*heads, N, dh)
        out = ad::reshape(ad::permute(ad::reshape(out, {B, heads, N, dh}), {0, 2, 1, 3}), {B, N, C});
        return proj.fwd(out);
    }
};

struct MixFfn {
    LinearLayer fc1, fc2;
    ConvLayer dw;  // 3x3 depthwise between the two pointwise maps

    static MixFfn make(ParamStore& ps, const std::string& name, int ch, int expansion) {
        MixFfn f;
        const int hidden = ch * expansion;
        f.fc1 = LinearLayer::make(ps, name + ".fc1", ch, hidden);
        f.dw = ConvLayer::make(ps, name + ".dw", hidden, hidden, 3, 1, 1, hidden);
        f.fc2 = LinearLayer::make(ps, name + ".fc2", hidden, ch);
        return f;
    }

    Var fwd(const Var& x, int64_t h, int64_t w) const {
        Var t = fc1.fwd(x);
        t = to_tokens(dw.fwd(to_map(t, h, w)));
        return fc2.fwd(ad::gelu(t));
    }
};

struct Block {
    NormLayer ln1, ln2;
    Attention attn;
    MixFfn ffn;

    static Block make(ParamStore& ps, const std::string& name, const EncoderStage& st, int expansion) {
        Block b;
        b.ln1 = NormLayer::make(ps, name + ".ln1", st.channels);
        b.attn = Attention::make(ps, name + ".attn", st.channels, st.heads, st.sr_ratio);
        b.ln2 = NormLayer::make(ps, name + ".ln2", st.channels);
        b.ffn = MixFfn::make(ps, name + ".ffn", st.channels, expansion);
        return b;
    }

    Var fwd(const Var& x, int64_t h, int64_t w, AttnCapture* capture) const {
        Var y = ad::add(x, attn.fwd(ln1.fwd(x), h, w, capture));
        return ad::add(y, ffn.fwd(ln2.fwd(y), h, w));
    }
};

struct Stage {
    ConvLayer patch;
    NormLayer patch_norm;
    std::vector<Block> blocks;
    NormLayer out_norm;
};

}  // namespace

struct MixEncoder::Impl {
    std::vector<Stage> stages;
};

MixEncoder::MixEncoder(const EncoderConfig& cfg, ParamStore& params, const std::string& prefix)
    : cfg_(cfg), impl_(std::make_shared<Impl>()) {
    cfg_.validate();
    int in_ch = 3;
    for (int i = 0; i < 4; ++i) {
        const EncoderStage& st = cfg_.stages[i];
        const std::string sname = prefix + ".s" + std::to_string(i);
        Stage stage;
        const int k = i == 0 ? 7 : 3;
        const int stride = i == 0 ? 4 : 2;
        stage.patch = ConvLayer::make(params, sname + ".patch", in_ch, st.channels, k, stride, k / 2);
        stage.patch_norm = NormLayer::make(params, sname + ".patchnorm", st.channels);
        for (int j = 0; j < st.depth; ++j) {
            stage.blocks.push_back(
                Block::make(params, sname + ".blk" + std::to_string(j), st, cfg_.ffn_expansion));
        }
        stage.out_norm = NormLayer::make(params, sname + ".norm", st.channels);
        impl_->stages.push_back(std::move(stage));
        in_ch = st.channels;
    }
}

std::vector<Var> MixEncoder::forward(const ad::Var& image, AttnCapture* capture) const {
    const Shape& s = image->value.shape;
    if (s.size() != 4 || s[1] != 3) {
        throw std::invalid_argument("encoder input must be (B,3,H,W), got " + image->value.shape_str());
    }
    if (s[2] % 32 != 0 || s[3] % 32 != 0) {
        throw std::invalid_argument("encoder input height and width must be multiples of 32, got " +
                                    std::to_string(s[2]) + "x" + std::to_string(s[3]));
    }

    std::vector<Var> features;
    Var x = image;
    for (const Stage& stage : impl_->stages) {
        Var m = stage.patch.fwd(x);
        const int64_t h = m->value.dim(2), w = m->value.dim(3);
        Var t = stage.patch_norm.fwd(to_tokens(m));
        for (const Block& b : stage.blocks) t = b.fwd(t, h, w, capture);
        x = to_map(stage.out_norm.fwd(t), h, w);
        features.push_back(x);
    }
    return features;
}

}  // namespace surgseg
