#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "surgseg/fusion.hpp"
#include "surgseg/registry.hpp"
#include "surgseg/rng.hpp"

using namespace surgseg;
using testsup::scalar_fuse_reference;

namespace {

// 2 anatomy classes (globals 1,2) + 2 tool classes (globals 3,4).
LabelRegistry two_two_registry() {
    LabelRegistry reg;
    reg.add(1, Head::anatomy, "tissue_a", {200, 60, 60});
    reg.add(2, Head::anatomy, "tissue_b", {60, 200, 60});
    reg.add(3, Head::tool, "shaft", {60, 60, 200});
    reg.add(4, Head::tool, "tip", {200, 200, 60});
    return reg;
}

// An arbitrary but self-consistent head output: labels, confidences and a
// prob stack whose argmax/max agree with them.
SegOutput random_output(Rng& r, Head head, int num_local, int h, int w) {
    SegOutput out;
    out.head = head;
    out.num_classes = num_local;
    out.labels = LabelMask(h, w);
    out.confidence = Tensor({h, w});
    out.probs = Tensor({num_local, h, w});
    const int64_t hw = int64_t(h) * w;
    for (int64_t i = 0; i < hw; ++i) {
        const int win = int(r.uniform_int(num_local));
        // Winner gets a confidence in (1/K, 1], every loser an equal share.
        double conf = r.uniform(1.0 / num_local + 1e-6, 1.0);
        if (r.uniform() < 0.1) conf = 0.5;  // plant exact-tie material
        out.labels.v[size_t(i)] = uint8_t(win);
        out.confidence[i] = conf;
        for (int c = 0; c < num_local; ++c) {
            out.probs[c * hw + i] = c == win ? conf : (1.0 - conf) / (num_local - 1);
        }
    }
    return out;
}

SegOutput uniform_output(Head head, int num_local, int h, int w, uint8_t label, double conf) {
    SegOutput out;
    out.head = head;
    out.num_classes = num_local;
    out.labels = LabelMask(h, w, label);
    out.confidence = Tensor({h, w}, conf);
    out.probs = Tensor({num_local, h, w}, (1.0 - conf) / (num_local - 1));
    const int64_t hw = int64_t(h) * w;
    for (int64_t i = 0; i < hw; ++i) out.probs[label * hw + i] = conf;
    return out;
}

}  // namespace

// ---------------------------------------------------------------- registry -

TEST_CASE("registry: local ids are assigned per head in global order") {
    LabelRegistry reg = two_two_registry();
    CHECK(reg.num_global() == 5);
    CHECK(reg.num_local(Head::anatomy) == 3);  // background + 2
    CHECK(reg.num_local(Head::tool) == 3);
    CHECK(reg.entry(1).local_id == 1);
    CHECK(reg.entry(2).local_id == 2);
    CHECK(reg.entry(3).local_id == 1);  // first tool class
    CHECK(reg.entry(4).local_id == 2);
    CHECK(reg.global_from_local(Head::tool, 1) == 3);
    CHECK(reg.global_from_local(Head::anatomy, 0) == 0);
    CHECK_THROWS(reg.global_from_local(Head::tool, 9));
}

TEST_CASE("registry: insertion order does not matter for local ids") {
    LabelRegistry a;
    a.add(4, Head::tool, "tip", {1, 2, 3});
    a.add(1, Head::anatomy, "tissue", {4, 5, 6});
    a.add(3, Head::tool, "shaft", {7, 8, 9});
    CHECK(a.entry(3).local_id == 1);
    CHECK(a.entry(4).local_id == 2);
}

TEST_CASE("registry: rejects duplicate, zero and reserved ids") {
    LabelRegistry reg;
    reg.add(1, Head::anatomy, "x", {0, 0, 0});
    CHECK_THROWS(reg.add(1, Head::tool, "y", {0, 0, 0}));
    CHECK_THROWS(reg.add(0, Head::tool, "bg", {0, 0, 0}));
    CHECK_THROWS(reg.add(255, Head::tool, "ignore", {0, 0, 0}));
    CHECK_THROWS(reg.entry(9));
}

TEST_CASE("registry: json round-trip preserves everything") {
    LabelRegistry reg = two_two_registry();
    LabelRegistry back = LabelRegistry::from_json(reg.to_json());
    CHECK(back == reg);
    CHECK(back.entry(3).name == "shaft");
    CHECK(back.entry(3).color == std::array<uint8_t, 3>{60, 60, 200});
    CHECK_THROWS(LabelRegistry::from_json("not json"));
}

// ------------------------------------------------------------ derive_output

TEST_CASE("derive_output: argmax label and max-prob confidence") {
    Tensor probs({3, 1, 1});
    probs[0] = 0.1;
    probs[1] = 0.7;
    probs[2] = 0.2;
    SegOutput out = derive_output(probs, Head::anatomy);
    CHECK(out.labels.at(0, 0) == 1);
    CHECK(out.confidence[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(out.num_classes == 3);
}

TEST_CASE("derive_output: uniform scores tie to the lowest class") {
    Tensor probs({4, 2, 2}, 0.25);
    SegOutput out = derive_output(probs, Head::tool);
    for (uint8_t v : out.labels.v) CHECK(v == 0);
    for (double c : out.confidence.data) CHECK(c == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("derive_output: one-hot rows give confidence 1") {
    Tensor probs = Tensor::zeros({2, 1, 2});
    probs[0 * 2 + 0] = 1.0;  // px0 class 0
    probs[1 * 2 + 1] = 1.0;  // px1 class 1
    SegOutput out = derive_output(probs, Head::tool);
    CHECK(out.labels.at(0, 0) == 0);
    CHECK(out.labels.at(0, 1) == 1);
    CHECK(out.confidence[0] == 1.0);
    CHECK(out.confidence[1] == 1.0);
}

TEST_CASE("derive_output: rejects rows that are not distributions") {
    Tensor probs({2, 1, 1});
    probs[0] = 0.9;
    probs[1] = 0.3;  // sums to 1.2
    CHECK_THROWS(derive_output(probs, Head::tool));
    Tensor neg({2, 1, 1});
    neg[0] = 1.2;
    neg[1] = -0.2;
    CHECK_THROWS(derive_output(neg, Head::tool));
}

// ------------------------------------------------------------ priority_fuse

TEST_CASE("fusion: single-pixel paper cases") {
    LabelRegistry reg = two_two_registry();

    // Anatomy background, instrument class -> instrument label wins outright.
    SegOutput inst = uniform_output(Head::tool, 3, 1, 1, 2, 0.6);  // local 2 -> global 4
    SegOutput anat = uniform_output(Head::anatomy, 3, 1, 1, 0, 0.9);
    CHECK(priority_fuse(inst, anat, reg).at(0, 0) == 4);

    // Instrument background -> anatomy label regardless of confidence.
    inst = uniform_output(Head::tool, 3, 1, 1, 0, 0.99);
    anat = uniform_output(Head::anatomy, 3, 1, 1, 1, 0.4);  // local 1 -> global 1
    CHECK(priority_fuse(inst, anat, reg).at(0, 0) == 1);

    // Overlap, instrument more confident -> instrument.
    inst = uniform_output(Head::tool, 3, 1, 1, 1, 0.9);  // global 3
    anat = uniform_output(Head::anatomy, 3, 1, 1, 2, 0.6);
    CHECK(priority_fuse(inst, anat, reg).at(0, 0) == 3);

    // Overlap, anatomy more confident -> anatomy.
    inst = uniform_output(Head::tool, 3, 1, 1, 1, 0.4);
    anat = uniform_output(Head::anatomy, 3, 1, 1, 2, 0.8);  // global 2
    CHECK(priority_fuse(inst, anat, reg).at(0, 0) == 2);

    // Exact tie -> anatomy.
    inst = uniform_output(Head::tool, 3, 1, 1, 1, 0.5);
    anat = uniform_output(Head::anatomy, 3, 1, 1, 2, 0.5);
    CHECK(priority_fuse(inst, anat, reg).at(0, 0) == 2);

    // Both background -> background.
    inst = uniform_output(Head::tool, 3, 1, 1, 0, 0.8);
    anat = uniform_output(Head::anatomy, 3, 1, 1, 0, 0.8);
    CHECK(priority_fuse(inst, anat, reg).at(0, 0) == 0);
}

TEST_CASE("fusion: equals the scalar reference on random instances") {
    LabelRegistry reg = two_two_registry();
    Rng r(41);
    for (int rep = 0; rep < 20; ++rep) {
        SegOutput inst = random_output(r, Head::tool, 3, 16, 16);
        SegOutput anat = random_output(r, Head::anatomy, 3, 16, 16);
        const LabelMask got = priority_fuse(inst, anat, reg);
        const LabelMask want = scalar_fuse_reference(inst, anat, reg);
        CHECK(got == want);

        // OR-coverage: fused foreground exactly where either head fires.
        for (size_t i = 0; i < got.v.size(); ++i) {
            const bool any = inst.labels.v[i] != 0 || anat.labels.v[i] != 0;
            CHECK((got.v[i] != 0) == any);
        }
    }
}

TEST_CASE("fusion: plain-or baseline always prefers instrument foreground") {
    LabelRegistry reg = two_two_registry();
    SegOutput inst = uniform_output(Head::tool, 3, 2, 2, 1, 0.1);   // low confidence
    SegOutput anat = uniform_output(Head::anatomy, 3, 2, 2, 2, 0.9);
    CHECK(priority_fuse(inst, anat, reg, FusionRule::priority).at(0, 0) == 2);
    CHECK(priority_fuse(inst, anat, reg, FusionRule::plain_or).at(0, 0) == 3);

    // Baseline still falls back to anatomy where the instrument is silent.
    inst.labels.at(1, 1) = 0;
    CHECK(priority_fuse(inst, anat, reg, FusionRule::plain_or).at(1, 1) == 2);
}

TEST_CASE("fusion: spatial permutation equivariance") {
    LabelRegistry reg = two_two_registry();
    Rng r(42);
    SegOutput inst = random_output(r, Head::tool, 3, 8, 8);
    SegOutput anat = random_output(r, Head::anatomy, 3, 8, 8);
    const LabelMask fused = priority_fuse(inst, anat, reg);

    std::vector<size_t> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    for (size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[size_t(r.uniform_int(int64_t(i)))]);
    }
    auto permute_output = [&](const SegOutput& o) {
        SegOutput p = o;
        for (size_t i = 0; i < 64; ++i) {
            p.labels.v[perm[i]] = o.labels.v[i];
            p.confidence[int64_t(perm[i])] = o.confidence[int64_t(i)];
            for (int c = 0; c < o.num_classes; ++c) {
                p.probs[c * 64 + int64_t(perm[i])] = o.probs[c * 64 + int64_t(i)];
            }
        }
        return p;
    };
    const LabelMask fused_p = priority_fuse(permute_output(inst), permute_output(anat), reg);
    for (size_t i = 0; i < 64; ++i) CHECK(fused_p.v[perm[i]] == fused.v[i]);
}

TEST_CASE("fusion: mismatched sizes and heads are rejected") {
    LabelRegistry reg = two_two_registry();
    SegOutput inst = uniform_output(Head::tool, 3, 2, 2, 0, 0.5);
    SegOutput anat = uniform_output(Head::anatomy, 3, 2, 3, 0, 0.5);
    CHECK_THROWS(priority_fuse(inst, anat, reg));
    SegOutput wrong = uniform_output(Head::anatomy, 3, 2, 2, 0, 0.5);
    CHECK_THROWS(priority_fuse(wrong, wrong, reg));
}

// ------------------------------------------------------------ morph_refine -

TEST_CASE("morph: isolated single-pixel island is removed") {
    LabelMask m(5, 5, 0);
    m.at(2, 2) = 3;
    const LabelMask out = morph_refine(m, 1);
    for (uint8_t v : out.v) CHECK(v == 0);
}

TEST_CASE("morph: solid square survives open-then-close unchanged") {
    LabelMask m(14, 14, 0);
    for (int r = 2; r < 12; ++r) {
        for (int c = 2; c < 12; ++c) m.at(r, c) = 2;
    }
    CHECK(morph_refine(m, 1) == m);
}

TEST_CASE("morph: all-background is a fixed point, radius must be positive") {
    LabelMask bg(6, 6, 0);
    CHECK(morph_refine(bg, 1) == bg);
    LabelMask m(6, 6, 0);
    m.at(1, 1) = 1;
    CHECK_THROWS(morph_refine(m, 0));
    CHECK_THROWS(morph_refine(m, -2));
}

TEST_CASE("morph: deterministic and never invents labels") {
    Rng r(43);
    for (int rep = 0; rep < 8; ++rep) {
        // Structured blobs rather than pixel noise: a few filled rectangles.
        LabelMask m(24, 24, 0);
        for (int b = 0; b < 4; ++b) {
            const int r0 = int(r.uniform_int(18)), c0 = int(r.uniform_int(18));
            const int hh = 2 + int(r.uniform_int(5)), ww = 2 + int(r.uniform_int(5));
            const uint8_t cls = uint8_t(1 + r.uniform_int(3));
            for (int rr = r0; rr < std::min(24, r0 + hh); ++rr) {
                for (int cc = c0; cc < std::min(24, c0 + ww); ++cc) m.at(rr, cc) = cls;
            }
        }
        const LabelMask once = morph_refine(m, 1);
        CHECK(morph_refine(m, 1) == once);  // pure function of its input

        // Each pass may only reassign to background or to surviving classes;
        // per-class open/close interacts across classes, so no idempotence
        // claim is made here.
        std::set<uint8_t> before(m.v.begin(), m.v.end());
        for (const LabelMask& stage : {once, morph_refine(once, 1)}) {
            std::set<uint8_t> after(stage.v.begin(), stage.v.end());
            for (uint8_t v : after) CHECK(before.count(v) == 1);
        }
    }
}
