#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "surgseg/checkpoint.hpp"
#include "surgseg/config.hpp"
#include "surgseg/encoder.hpp"
#include "surgseg/model.hpp"
#include "surgseg/optim.hpp"

using namespace surgseg;
using testsup::TempDir;

namespace {

Tensor random_image(Rng& r, int64_t b, int64_t h, int64_t w) {
    Tensor t({b, 3, h, w});
    for (double& v : t.data) v = r.uniform();
    return t;
}

ModelConfig tiny_config(int k = 3, DecoderKind dec = DecoderKind::skip, uint64_t seed = 0) {
    ModelConfig cfg;
    cfg.encoder_preset = "tiny";
    cfg.decoder = dec;
    cfg.num_classes = k;
    cfg.head = dec == DecoderKind::mlp ? Head::anatomy : Head::tool;
    cfg.init_seed = seed;
    return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

// ----------------------------------------------------------- encoder cfg ---

TEST_CASE("encoder presets carry the published width/depth ladder") {
    const EncoderConfig tiny = EncoderConfig::preset("tiny");
    CHECK(tiny.stages[0].channels == 8);
    CHECK(tiny.stages[3].channels == 64);
    for (const auto& s : tiny.stages) CHECK(s.depth == 1);

    const EncoderConfig b2 = EncoderConfig::preset("b2-like");
    CHECK(b2.stages[0].channels == 64);
    CHECK(b2.stages[2].channels == 320);
    CHECK(b2.stages[3].channels == 512);
    CHECK(b2.stages[0].depth == 3);
    CHECK(b2.stages[1].depth == 4);
    CHECK(b2.stages[2].depth == 6);
    CHECK(b2.stages[3].depth == 3);

    const EncoderConfig b5 = EncoderConfig::preset("b5-like");
    CHECK(b5.stages[2].depth == 40);
    CHECK(b5.stages[1].depth == 6);

    for (const auto& cfg : {tiny, b2, b5}) {
        CHECK(cfg.ffn_expansion == 4);
        int sr[4] = {8, 4, 2, 1};
        for (int i = 0; i < 4; ++i) CHECK(cfg.stages[size_t(i)].sr_ratio == sr[i]);
        CHECK_NOTHROW(cfg.validate());
    }
    CHECK_THROWS(EncoderConfig::preset("b9"));

    EncoderConfig bad = tiny;
    bad.stages[1].channels = 10;  // not divisible by its head count
    bad.stages[1].heads = 4;
    CHECK_THROWS(bad.validate());
}

// --------------------------------------------------------- encoder shapes --

TEST_CASE("encoder: pyramid shapes follow the stride-4/8/16/32 law") {
    ParamStore ps(1);
    MixEncoder enc(EncoderConfig::preset("tiny"), ps, "enc");
    Rng r(2);

    const auto feats = enc.forward(ad::constant(random_image(r, 1, 64, 64)));
    REQUIRE(feats.size() == 4);
    CHECK(feats[0]->value.shape == Shape{1, 8, 16, 16});
    CHECK(feats[1]->value.shape == Shape{1, 16, 8, 8});
    CHECK(feats[2]->value.shape == Shape{1, 32, 4, 4});
    CHECK(feats[3]->value.shape == Shape{1, 64, 2, 2});
    for (const auto& f : feats) {
        for (double v : f->value.data) CHECK(std::isfinite(v));
    }

    const auto rect = enc.forward(ad::constant(random_image(r, 2, 96, 64)));
    CHECK(rect[0]->value.shape == Shape{2, 8, 24, 16});
    CHECK(rect[3]->value.shape == Shape{2, 64, 3, 2});

    CHECK_THROWS(enc.forward(ad::constant(Tensor({1, 3, 50, 50}, 0.1))));
    CHECK_THROWS(enc.forward(ad::constant(Tensor({1, 1, 64, 64}, 0.1))));
}

TEST_CASE("encoder: attention rows are convex combinations") {
    ParamStore ps(3);
    MixEncoder enc(EncoderConfig::preset("tiny"), ps, "enc");
    Rng r(4);
    AttnCapture cap;
    enc.forward(ad::constant(random_image(r, 1, 64, 64)), &cap);
    REQUIRE(cap.maps.size() == 4);  // one block per stage
    for (const Tensor& m : cap.maps) {
        REQUIRE(m.ndim() == 3);
        const int64_t rows = m.dim(0) * m.dim(1), nkv = m.dim(2);
        for (int64_t row = 0; row < rows; ++row) {
            double sum = 0.0;
            for (int64_t c = 0; c < nkv; ++c) {
                const double a = m[row * nkv + c];
                CHECK(a >= 0.0);
                sum += a;
            }
            CHECK(std::abs(sum - 1.0) < 1e-5);
        }
    }
    // Deepest stage attends over the full token set (no reduction).
    CHECK(cap.maps[3].dim(1) == cap.maps[3].dim(2));
}

TEST_CASE("encoder: batch entries do not leak into each other") {
    ParamStore ps(5);
    MixEncoder enc(EncoderConfig::preset("tiny"), ps, "enc");
    Rng r(6);
    const Tensor a = random_image(r, 1, 32, 32);
    const Tensor b = random_image(r, 1, 32, 32);
    Tensor both({2, 3, 32, 32});
    std::copy(a.data.begin(), a.data.end(), both.data.begin());
    std::copy(b.data.begin(), b.data.end(), both.data.begin() + a.numel());

    const auto fa = enc.forward(ad::constant(a));
    const auto fb = enc.forward(ad::constant(b));
    const auto fboth = enc.forward(ad::constant(both));
    for (int lvl = 0; lvl < 4; ++lvl) {
        const int64_t n = fa[size_t(lvl)]->value.numel();
        for (int64_t i = 0; i < n; ++i) {
            CHECK(std::abs(fboth[size_t(lvl)]->value[i] - fa[size_t(lvl)]->value[i]) < 1e-5);
            CHECK(std::abs(fboth[size_t(lvl)]->value[n + i] - fb[size_t(lvl)]->value[i]) < 1e-5);
        }
    }
}

TEST_CASE("encoder: every parameter participates in the pyramid") {
    ParamStore ps(7);
    MixEncoder enc(EncoderConfig::preset("tiny"), ps, "enc");
    Rng r(8);
    const auto feats = enc.forward(ad::constant(random_image(r, 1, 32, 32)));
    ad::Var loss = ad::mean_all(feats[0]);
    for (int lvl = 1; lvl < 4; ++lvl) loss = ad::add(loss, ad::mean_all(feats[size_t(lvl)]));
    ad::backward(loss);
    for (const auto& [name, var] : ps.items()) {
        CHECK_MESSAGE(!var->grad.data.empty(), "dead parameter: ", name);
    }
}

TEST_CASE("encoder: with value/proj/fc2 zeroed, q/k/fc1 cannot matter") {
    ParamStore ps(9);
    MixEncoder enc(EncoderConfig::preset("tiny"), ps, "enc");
    Rng r(10);
    const Tensor img = random_image(r, 1, 32, 32);

    auto zero_if = [&](const char* suffix_a, const char* suffix_b) {
        for (const auto& [name, var] : ps.items()) {
            if (name.find(suffix_a) != std::string::npos &&
                name.find(suffix_b) != std::string::npos) {
                for (double& v : var->value.data) v = 0.0;
            }
        }
    };
    zero_if(".attn.v.", ".");
    zero_if(".attn.proj.", ".");
    zero_if(".ffn.fc2.", ".");
    const auto before = enc.forward(ad::constant(img));

    // Scramble the now-unreachable halves of each block.
    Rng noise(11);
    for (const auto& [name, var] : ps.items()) {
        if (name.find(".attn.q.") != std::string::npos ||
            name.find(".attn.k.") != std::string::npos ||
            name.find(".ffn.fc1.") != std::string::npos) {
            for (double& v : var->value.data) v = noise.normal();
        }
    }
    const auto after = enc.forward(ad::constant(img));
    for (int lvl = 0; lvl < 4; ++lvl) {
        CHECK(max_abs_diff(before[size_t(lvl)]->value, after[size_t(lvl)]->value) == 0.0);
    }
}

// ----------------------------------------------------------------- decoder -

TEST_CASE("decoder: upsample_to_highest grows everything to the finest grid") {
    Rng r(12);
    std::vector<ad::Var> maps{
        ad::constant(Tensor::randn(r, {1, 2, 8, 8})),
        ad::constant(Tensor::randn(r, {1, 2, 4, 4})),
        ad::constant(Tensor({1, 2, 2, 2}, 3.25)),
        ad::constant(Tensor::randn(r, {1, 2, 1, 1})),
    };
    const auto up = upsample_to_highest(maps);
    for (const auto& u : up) CHECK(u->value.shape == Shape{1, 2, 8, 8});
    // Finest level passes through untouched, constant maps stay constant.
    CHECK(up[0]->value.data == maps[0]->value.data);
    for (double v : up[2]->value.data) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("decoder: 1x1 projection with identity weights is the identity") {
    ParamStore ps(13);
    MultiScaleFuser fuser = MultiScaleFuser::make(ps, "f", {4, 4, 4, 4}, 4);
    // proj0 weight has shape (4,4,1,1); bias starts at zero.
    ad::Var w = ps.find("f.proj0.w");
    for (double& v : w->value.data) v = 0.0;
    for (int64_t o = 0; o < 4; ++o) w->value[o * 4 + o] = 1.0;

    Rng r(14);
    std::vector<ad::Var> feats;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const int64_t side = 8 >> lvl;
        feats.push_back(ad::constant(Tensor::randn(r, {1, 4, side, side})));
    }
    const auto projected = fuser.project(feats);
    CHECK(projected[0]->value.data == feats[0]->value.data);

    // Zero weights + bias b: every position reads back b.
    ad::Var b = ps.find("f.proj1.b");
    ad::Var w1 = ps.find("f.proj1.w");
    for (double& v : w1->value.data) v = 0.0;
    b->value[0] = 0.5;
    b->value[1] = -1.5;
    const auto projected2 = fuser.project(feats);
    const Tensor& p1 = projected2[1]->value;
    const int64_t hw = p1.dim(2) * p1.dim(3);
    for (int64_t i = 0; i < hw; ++i) {
        CHECK(p1[0 * hw + i] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(p1[1 * hw + i] == doctest::Approx(-1.5).epsilon(1e-12));
    }
}

TEST_CASE("decoder: fuse is sensitive to the level order") {
    ParamStore ps(15);
    MultiScaleFuser fuser = MultiScaleFuser::make(ps, "f", {4, 4, 4, 4}, 4);
    Rng r(16);
    std::vector<ad::Var> feats;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const int64_t side = 8 >> lvl;
        feats.push_back(ad::constant(Tensor::randn(r, {1, 4, side, side})));
    }
    auto projected = fuser.project(feats);
    const Tensor straight = fuser.fuse_multiscale(projected)->value;
    std::swap(projected[1], projected[2]);
    projected = upsample_to_highest(projected);  // re-align sizes after the swap
    const Tensor swapped = fuser.fuse_multiscale(projected)->value;
    CHECK(max_abs_diff(straight, swapped) > 1e-9);
}

TEST_CASE("decoder: logits land at input resolution for both heads") {
    for (DecoderKind kind : {DecoderKind::mlp, DecoderKind::skip}) {
        SegModel model(tiny_config(5, kind));
        Rng r(17);
        const ad::Var out = model.logits(random_image(r, 1, 64, 64));
        CHECK(out->value.shape == Shape{1, 5, 64, 64});
        for (double v : out->value.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("decoder: zeroed classifier broadcasts its bias to every pixel") {
    SegModel model(tiny_config(3, DecoderKind::skip));
    ad::Var w = model.params().find("dec.cls.w");
    ad::Var b = model.params().find("dec.cls.b");
    for (double& v : w->value.data) v = 0.0;
    b->value[0] = 0.5;
    b->value[1] = -0.25;
    b->value[2] = 1.5;
    Rng r(18);
    const Tensor logits = model.logits(random_image(r, 1, 32, 32))->value;
    const int64_t hw = 32 * 32;
    for (int64_t i = 0; i < hw; ++i) {
        CHECK(logits[0 * hw + i] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(logits[1 * hw + i] == doctest::Approx(-0.25).epsilon(1e-12));
        CHECK(logits[2 * hw + i] == doctest::Approx(1.5).epsilon(1e-12));
    }
}

TEST_CASE("decoder: the skip path is alive") {
    ModelConfig with = tiny_config(3, DecoderKind::skip, 21);
    ModelConfig without = with;
    without.ablate_skip = true;
    SegModel a(with), b(without);
    Rng r(19);
    const Tensor img = random_image(r, 1, 32, 32);
    CHECK(a.params().value_hash() == b.params().value_hash());  // same weights
    CHECK(max_abs_diff(a.logits(img)->value, b.logits(img)->value) > 1e-9);
}

TEST_CASE("decoder config validation") {
    DecoderConfig cfg;
    cfg.num_classes = 2;
    CHECK_NOTHROW(cfg.validate());
    cfg.num_classes = 1;
    CHECK_THROWS(cfg.validate());
    cfg.num_classes = 3;
    cfg.embed_dim = 0;
    CHECK_THROWS(cfg.validate());
}

// ------------------------------------------------------------------ model --

TEST_CASE("model: normalization applies the stored mean/std per channel") {
    ModelConfig cfg = tiny_config(2);
    SegModel model(cfg);
    Tensor img({1, 3, 1, 1});
    img[0] = 0.5;
    img[1] = 0.75;
    img[2] = 0.0;
    const Tensor n = model.normalize(img);
    CHECK(n[0] == doctest::Approx((0.5 - 0.5) / 0.25).epsilon(1e-12));
    CHECK(n[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n[2] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("model: infer yields a distribution, its argmax and max") {
    SegModel model(tiny_config(4));
    Rng r(20);
    Tensor img({3, 32, 32});
    for (double& v : img.data) v = r.uniform();
    const SegOutput out = model.infer(img);
    CHECK(out.num_classes == 4);
    CHECK(out.labels.h == 32);
    const int64_t hw = 32 * 32;
    for (int64_t i = 0; i < hw; ++i) {
        double sum = 0.0, best = -1.0;
        int arg = -1;
        for (int c = 0; c < 4; ++c) {
            const double p = out.probs[c * hw + i];
            sum += p;
            if (p > best) {
                best = p;
                arg = c;
            }
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(out.labels.v[size_t(i)] == uint8_t(arg));
        CHECK(out.confidence[i] == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("model: same seed, same bits; different seed, different weights") {
    SegModel a(tiny_config(3, DecoderKind::skip, 5));
    SegModel b(tiny_config(3, DecoderKind::skip, 5));
    SegModel c(tiny_config(3, DecoderKind::skip, 6));
    CHECK(a.params().value_hash() == b.params().value_hash());
    CHECK(a.params().value_hash() != c.params().value_hash());
    Rng r(21);
    const Tensor img = random_image(r, 1, 32, 32);
    CHECK(a.logits(img)->value.data == b.logits(img)->value.data);
}

TEST_CASE("model: every parameter is reachable from the loss") {
    SegModel model(tiny_config(3, DecoderKind::skip));
    Rng r(22);
    ad::Var probs = model.probs(random_image(r, 1, 32, 32));
    std::vector<uint8_t> target(32 * 32);
    for (auto& t : target) t = uint8_t(r.uniform_int(3));
    ad::Var loss = combined_loss(probs, target, LossConfig{});
    ad::backward(loss);
    for (const auto& [name, var] : model.params().items()) {
        CHECK_MESSAGE(!var->grad.data.empty(), "dead parameter: ", name);
    }
}

TEST_CASE("model config json round-trip") {
    ModelConfig cfg = tiny_config(4, DecoderKind::mlp, 99);
    cfg.norm_mean = {0.4, 0.5, 0.6};
    cfg.ablate_skip = true;
    const ModelConfig back = ModelConfig::from_json(cfg.to_json());
    CHECK(back.encoder_preset == "tiny");
    CHECK(back.decoder == DecoderKind::mlp);
    CHECK(back.num_classes == 4);
    CHECK(back.head == Head::anatomy);
    CHECK(back.init_seed == 99);
    CHECK(back.ablate_skip);
    CHECK(back.norm_mean == std::array<double, 3>{0.4, 0.5, 0.6});
    CHECK_THROWS(ModelConfig::from_json("{"));
}

// -------------------------------------------------------------- optimizer --

TEST_CASE("scheduler: triangular wave hits base, peak, base") {
    OptimConfig cfg;
    cfg.lr_base = 5e-6;
    cfg.lr_max = 5e-5;
    cfg.cycle_steps = 10;
    CHECK(lr_at_step(cfg, 0) == doctest::Approx(5e-6).epsilon(1e-15));
    CHECK(lr_at_step(cfg, 5) == doctest::Approx(5e-5).epsilon(1e-15));
    CHECK(lr_at_step(cfg, 10) == doctest::Approx(5e-6).epsilon(1e-15));
}

TEST_CASE("scheduler: 100-step trace matches the closed form") {
    OptimConfig cfg;
    cfg.lr_base = 1e-5;
    cfg.lr_max = 9e-5;
    cfg.cycle_steps = 14;
    for (int64_t t = 0; t < 100; ++t) {
        const double phase = double(t % cfg.cycle_steps) / double(cfg.cycle_steps);
        const double want = cfg.lr_max - (cfg.lr_max - cfg.lr_base) * std::abs(1.0 - 2.0 * phase);
        CHECK(lr_at_step(cfg, t) == doctest::Approx(want).epsilon(1e-15));
    }
    // Degenerate cases: no cycle or flat range means a constant rate.
    cfg.cycle_steps = 0;
    CHECK(lr_at_step(cfg, 57) == cfg.lr_base);
    cfg.cycle_steps = 10;
    cfg.lr_max = cfg.lr_base;
    CHECK(lr_at_step(cfg, 3) == cfg.lr_base);
}

TEST_CASE("adam: first step matches the closed form") {
    ParamStore ps(1);
    ad::Var p = ps.zeros("p", {2});
    p->value[0] = 1.0;
    p->value[1] = -2.0;
    OptimConfig cfg;
    cfg.lr_base = 0.1;
    cfg.lr_max = 0.1;
    cfg.weight_decay = 0.0;
    Adam opt(ps, cfg);

    ad::Var loss = ad::sum_all(ad::mul(p, p));  // grad = 2p
    opt.zero_grad();
    ad::backward(loss);
    const double lr = opt.step();
    CHECK(lr == doctest::Approx(0.1));
    // At t=1 the bias corrections cancel: step = lr * g / (|g| + eps).
    const double g0 = 2.0, g1 = -4.0;
    CHECK(p->value[0] ==
          doctest::Approx(double(float(1.0 - 0.1 * g0 / (std::abs(g0) + cfg.eps)))).epsilon(1e-7));
    CHECK(p->value[1] ==
          doctest::Approx(double(float(-2.0 - 0.1 * g1 / (std::abs(g1) + cfg.eps)))).epsilon(1e-7));
    CHECK(opt.steps_done() == 1);
}

TEST_CASE("adam: weight decay adds the classic L2 pull") {
    ParamStore ps(1);
    ad::Var p = ps.zeros("p", {1});
    p->value[0] = 10.0;
    OptimConfig cfg;
    cfg.lr_base = 0.01;
    cfg.lr_max = 0.01;
    cfg.weight_decay = 0.5;
    {
        // No graph at all: parameter has no grad buffer, step must skip it.
        Adam opt(ps, cfg);
        opt.step();
        CHECK(p->value[0] == 10.0);
        CHECK(opt.steps_done() == 1);  // time still advances
    }

    Adam opt(ps, cfg);  // fresh moments, t starts at 0
    ad::Var loss = ad::sum_all(ad::mul(p, ad::constant(Tensor({1}, 0.0))));
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
    // grad 0 + wd*p = 5; at t=1 bias corrections cancel -> step of ~lr.
    CHECK(p->value[0] == doctest::Approx(10.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("adam: parameters stay float32-exact after updates") {
    ParamStore ps(2);
    ad::Var p = ps.trunc_normal("p", {16});
    OptimConfig cfg;
    cfg.lr_base = 1e-3;
    cfg.lr_max = 1e-3;
    Adam opt(ps, cfg);
    ad::Var loss = ad::mean_all(ad::mul(p, p));
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
    for (double v : p->value.data) CHECK(v == double(float(v)));
}

TEST_CASE("optim config validation") {
    OptimConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr_base = -1.0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.lr_max = 1e-7;  // below lr_base
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.beta1 = 1.0;
    CHECK_THROWS(cfg.validate());
}

// -------------------------------------------------------------- checkpoint -

TEST_CASE("checkpoint: save/load reproduces the forward pass bit for bit") {
    TempDir dir("ckpt-roundtrip");
    LabelRegistry reg;
    reg.add(1, Head::tool, "probe", {9, 9, 9});
    SegModel model(tiny_config(2, DecoderKind::skip, 31));
    Rng r(32);
    const Tensor img = random_image(r, 1, 32, 32);
    const Tensor before = model.logits(img)->value;

    save_checkpoint(dir.sub("m.ckpt"), model, reg, 123);
    CheckpointMeta meta;
    const auto loaded = load_checkpoint(dir.sub("m.ckpt"), &meta);
    CHECK(meta.step == 123);
    CHECK(meta.registry == reg);
    CHECK(meta.model.num_classes == 2);
    CHECK(meta.model.init_seed == 31);
    CHECK(loaded->params().value_hash() == model.params().value_hash());
    CHECK(loaded->logits(img)->value.data == before.data);
}

TEST_CASE("checkpoint: corrupted magic or truncation is rejected") {
    TempDir dir("ckpt-bad");
    LabelRegistry reg;
    reg.add(1, Head::tool, "probe", {9, 9, 9});
    SegModel model(tiny_config(2));
    save_checkpoint(dir.sub("m.ckpt"), model, reg, 1);

    {  // flip a magic byte
        std::fstream f(dir.sub("m.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
        f.put('X');
    }
    CHECK_THROWS(load_checkpoint(dir.sub("m.ckpt")));

    save_checkpoint(dir.sub("m2.ckpt"), model, reg, 1);
    const auto full = testsup::read_bytes(dir.sub("m2.ckpt"));
    std::ofstream cut(dir.sub("cut.ckpt"), std::ios::binary);
    cut.write(reinterpret_cast<const char*>(full.data()), int64_t(full.size()) - 64);
    cut.close();
    CHECK_THROWS(load_checkpoint(dir.sub("cut.ckpt")));
    CHECK_THROWS(load_checkpoint(dir.sub("never-written.ckpt")));
}

// ------------------------------------------------------------ train config -

TEST_CASE("train config: defaults line up with the documented values") {
    const TrainConfig cfg = TrainConfig::from_json_text("{}");
    CHECK(cfg.epochs == 100);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.optim.lr_base == doctest::Approx(5e-6));
    CHECK(cfg.optim.weight_decay == doctest::Approx(1e-4));
    CHECK(cfg.loss.alpha == doctest::Approx(0.7));
    CHECK(cfg.loss.beta == doctest::Approx(0.3));
    CHECK(cfg.loss.lambda_combined == doctest::Approx(0.7));
    CHECK(cfg.head == Head::tool);
    CHECK(cfg.decoder == "auto");
}

TEST_CASE("train config: unknown keys are named in the error") {
    try {
        TrainConfig::from_json_text(R"({"optim": {"lr_basis": 1e-4}})");
        FAIL("expected a throw");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("optim.lr_basis") != std::string::npos);
    }
    CHECK_THROWS(TrainConfig::from_json_text(R"({"surprise": 1})"));
}

TEST_CASE("train config: sections parse and auto decoder resolves per head") {
    TrainConfig cfg = TrainConfig::from_json_text(R"({
        "data": {"root": "/tmp/d", "val_split": "check"},
        "model": {"head": "anatomy", "embed_dim": 16},
        "optim": {"lr_base": 1e-4, "cycle_steps": 20},
        "loss": {"lambda": 0.5},
        "train": {"epochs": 3, "batch_size": 2, "seed": 9},
        "augment": {"hflip_prob": 0.5, "rotation_degrees": [0, 180]}
    })");
    CHECK(cfg.data_root == "/tmp/d");
    CHECK(cfg.val_split == "check");
    CHECK(cfg.head == Head::anatomy);
    CHECK(cfg.embed_dim == 16);
    CHECK(cfg.optim.lr_base == doctest::Approx(1e-4));
    CHECK(cfg.optim.lr_max == doctest::Approx(1e-4));  // follows lr_base by default
    CHECK(cfg.optim.cycle_steps == 20);
    CHECK(cfg.loss.lambda_combined == doctest::Approx(0.5));
    CHECK(cfg.epochs == 3);
    CHECK(cfg.seed == 9);
    CHECK(cfg.augment.rotation_degrees == std::vector<int>{0, 180});
    CHECK(cfg.resolved_decoder() == DecoderKind::mlp);

    cfg.head = Head::tool;
    CHECK(cfg.resolved_decoder() == DecoderKind::skip);
    cfg.decoder = "mlp";
    CHECK(cfg.resolved_decoder() == DecoderKind::mlp);
    cfg.decoder = "what";
    CHECK_THROWS(cfg.resolved_decoder());
}

TEST_CASE("train config: dotted overrides parse as json or fall back to text") {
    std::string doc = "{}";
    doc = apply_config_override(doc, "optim.lr_base=0.001");
    doc = apply_config_override(doc, "data.root=/somewhere/else");
    doc = apply_config_override(doc, "augment.rotation_degrees=[0,90]");
    doc = apply_config_override(doc, "model.ablate_skip=true");
    const TrainConfig cfg = TrainConfig::from_json_text(doc);
    CHECK(cfg.optim.lr_base == doctest::Approx(1e-3));
    CHECK(cfg.data_root == "/somewhere/else");
    CHECK(cfg.augment.rotation_degrees == std::vector<int>{0, 90});
    CHECK(cfg.ablate_skip);
    CHECK_THROWS(apply_config_override(doc, "no-equals-sign"));
}

TEST_CASE("train config: to_json round-trips") {
    TrainConfig cfg = TrainConfig::from_json_text("{}");
    cfg.data_root = "/data";
    cfg.epochs = 7;
    cfg.loss.alpha = 0.6;
    const TrainConfig back = TrainConfig::from_json_text(cfg.to_json());
    CHECK(back.data_root == "/data");
    CHECK(back.epochs == 7);
    CHECK(back.loss.alpha == doctest::Approx(0.6));
}
