#include "surgseg/fusion.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace surgseg {

SegOutput derive_output(const Tensor& probs, Head head) {
    if (probs.ndim() != 3) throw std::invalid_argument("derive_output: probs must be (K,H,W)");
    const int64_t k = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
    if (k < 1 || k > 255) throw std::invalid_argument("derive_output: class count out of range");
    SegOutput out;
    out.head = head;
    out.num_classes = static_cast<int>(k);
    out.probs = probs;
    out.labels = LabelMask(static_cast<int>(h), static_cast<int>(w));
    out.confidence = Tensor({h, w});
    const int64_t hw = h * w;
    for (int64_t pix = 0; pix < hw; ++pix) {
        double sum = 0.0;
        int best = 0;
        double best_p = probs[pix];
        for (int64_t c = 0; c < k; ++c) {
            const double p = probs[c * hw + pix];
            if (p < 0.0) throw std::invalid_argument("derive_output: negative probability");
            sum += p;
            if (p > best_p) {
                best_p = p;
                best = static_cast<int>(c);
            }
        }
        if (std::abs(sum - 1.0) > 1e-4) {
            throw std::invalid_argument("derive_output: probabilities not normalized (sum " +
                                        std::to_string(sum) + ")");
        }
        out.labels.v[static_cast<size_t>(pix)] = static_cast<uint8_t>(best);
        out.confidence[pix] = best_p;
    }
    return out;
}

LabelMask priority_fuse(const SegOutput& inst, const SegOutput& anat, const LabelRegistry& registry,
                        FusionRule rule) {
    if (inst.labels.h != anat.labels.h || inst.labels.w != anat.labels.w) {
        throw std::invalid_argument("priority_fuse: head outputs differ in size");
    }
    if (inst.head != Head::tool || anat.head != Head::anatomy) {
        throw std::invalid_argument("priority_fuse: expected (instrument, anatomy) outputs");
    }
    const int64_t n = inst.labels.numel();
    LabelMask fused(inst.labels.h, inst.labels.w);
    for (int64_t i = 0; i < n; ++i) {
        const int m_inst = inst.labels.v[static_cast<size_t>(i)];
        const int m_anat = anat.labels.v[static_cast<size_t>(i)];
        int pick_global;
        if (m_anat == 0) {
            pick_global = m_inst == 0 ? 0 : registry.global_from_local(Head::tool, m_inst);
        } else if (m_inst == 0) {
            pick_global = registry.global_from_local(Head::anatomy, m_anat);
        } else if (rule == FusionRule::plain_or ||
                   inst.confidence[i] > anat.confidence[i]) {
            pick_global = registry.global_from_local(Head::tool, m_inst);
        } else {
            pick_global = registry.global_from_local(Head::anatomy, m_anat);
        }
        fused.v[static_cast<size_t>(i)] = static_cast<uint8_t>(pick_global);
    }
    return fused;
}

namespace {

using BinMask = std::vector<uint8_t>;

// Square-element erosion/dilation via two 1-d passes.
BinMask erode(const BinMask& m, int h, int w, int r) {
    BinMask tmp(m.size()), out(m.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            uint8_t v = 1;
            for (int dx = -r; dx <= r && v; ++dx) {
                const int xx = x + dx;
                if (xx < 0 || xx >= w || !m[static_cast<size_t>(y) * w + xx]) v = 0;
            }
            tmp[static_cast<size_t>(y) * w + x] = v;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            uint8_t v = 1;
            for (int dy = -r; dy <= r && v; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h || !tmp[static_cast<size_t>(yy) * w + x]) v = 0;
            }
            out[static_cast<size_t>(y) * w + x] = v;
        }
    }
    return out;
}

BinMask dilate(const BinMask& m, int h, int w, int r) {
    BinMask tmp(m.size()), out(m.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int dx = -r; dx <= r && !v; ++dx) {
                const int xx = x + dx;
                if (xx >= 0 && xx < w && m[static_cast<size_t>(y) * w + xx]) v = 1;
            }
            tmp[static_cast<size_t>(y) * w + x] = v;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int dy = -r; dy <= r && !v; ++dy) {
                const int yy = y + dy;
                if (yy >= 0 && yy < h && tmp[static_cast<size_t>(yy) * w + x]) v = 1;
            }
            out[static_cast<size_t>(y) * w + x] = v;
        }
    }
    return out;
}

BinMask open_close(const BinMask& m, int h, int w, int r) {
    BinMask opened = dilate(erode(m, h, w, r), h, w, r);
    return erode(dilate(opened, h, w, r), h, w, r);
}

}  // namespace

LabelMask morph_refine(const LabelMask& fused, int radius) {
    if (radius < 1) throw std::invalid_argument("morph_refine: radius must be >= 1");
    const int h = fused.h, w = fused.w;
    std::set<uint8_t> classes(fused.v.begin(), fused.v.end());
    classes.erase(0);

    LabelMask out(h, w, 0);
    std::vector<uint8_t> claims(fused.v.size(), 0);      // number of claimants
    std::vector<uint8_t> claimant(fused.v.size(), 0);    // last claiming class
    for (uint8_t cls : classes) {
        BinMask m(fused.v.size());
        for (size_t i = 0; i < m.size(); ++i) m[i] = fused.v[i] == cls;
        BinMask refined = open_close(m, h, w, radius);
        for (size_t i = 0; i < refined.size(); ++i) {
            if (refined[i]) {
                ++claims[i];
                claimant[i] = cls;
            }
        }
    }
    for (size_t i = 0; i < fused.v.size(); ++i) {
        if (claims[i] == 1) {
            out.v[i] = claimant[i];
        } else if (claims[i] > 1) {
            out.v[i] = fused.v[i];  // contested: keep the pre-refinement label
        }
    }
    return out;
}

}  // namespace surgseg
