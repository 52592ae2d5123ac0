#include "surgseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <unordered_set>

#include "surgseg/autodiff.hpp"
#include "surgseg/png_io.hpp"

namespace fs = std::filesystem;

namespace surgseg {

void AugmentationSpec::validate() const {
    auto check_prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw std::invalid_argument(std::string(name) + " must lie in [0,1]");
        }
    };
    check_prob(hflip_prob, "hflip_prob");
    check_prob(vflip_prob, "vflip_prob");
    if (rotation_degrees.empty()) {
        throw std::invalid_argument("rotation_degrees must not be empty");
    }
    for (int deg : rotation_degrees) {
        if (deg != 0 && deg != 90 && deg != 180 && deg != 270) {
            throw std::invalid_argument("rotation_degrees entries must be one of 0/90/180/270");
        }
    }
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
        throw std::invalid_argument("crop_fraction must lie in (0,1]");
    }
}

namespace {

void validate_mask(const LabelMask& m, Head head, const LabelRegistry& registry,
                   const std::string& path, const std::string& id) {
    const int num_local = registry.num_local(head);
    for (int r = 0; r < m.h; ++r) {
        for (int c = 0; c < m.w; ++c) {
            const uint8_t v = m.at(r, c);
            if (v == 255) continue;  // ignore label
            if (v >= num_local) {
                throw std::runtime_error("sample '" + id + "': mask " + path + " holds label " +
                                         std::to_string(int(v)) + " but head '" +
                                         std::string(head_name(head)) + "' defines only " +
                                         std::to_string(num_local - 1) + " foreground classes");
            }
        }
    }
}

LabelMask load_mask(const fs::path& path, Head head, const LabelRegistry& registry,
                    int h, int w, const std::string& id) {
    if (!fs::exists(path)) {
        throw std::runtime_error("sample '" + id + "': missing mask file " + path.string());
    }
    LabelMask m = read_mask_png(path.string());
    if (m.h != h || m.w != w) {
        throw std::runtime_error("sample '" + id + "': mask " + path.string() + " is " +
                                 std::to_string(m.w) + "x" + std::to_string(m.h) +
                                 " but the image is " + std::to_string(w) + "x" + std::to_string(h));
    }
    validate_mask(m, head, registry, path.string(), id);
    return m;
}

}  // namespace

std::vector<Sample> load_dataset(const std::string& root, const std::string& split,
                                 const LabelRegistry& registry, HeadSelect heads) {
    const fs::path image_dir = fs::path(root) / "images" / split;
    if (!fs::is_directory(image_dir)) {
        throw std::runtime_error("dataset split directory not found: " + image_dir.string());
    }

    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path& p = entry.path();
        if (p.extension() != ".png") continue;
        ids.push_back(p.stem().string());
    }
    std::sort(ids.begin(), ids.end());

    const bool want_anat = heads != HeadSelect::tool;
    const bool want_tool = heads != HeadSelect::anatomy;

    std::vector<Sample> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        Sample s;
        s.id = id;
        const fs::path img_path = image_dir / (id + ".png");
        ImageU8 img = read_image_png(img_path.string());
        s.image = image_to_tensor(img);
        if (want_anat) {
            s.anat_mask = load_mask(fs::path(root) / "masks_anatomy" / split / (id + ".png"),
                                    Head::anatomy, registry, img.h, img.w, id);
        } else {
            s.anat_mask = LabelMask(img.h, img.w, 255);
        }
        if (want_tool) {
            s.tool_mask = load_mask(fs::path(root) / "masks_tool" / split / (id + ".png"),
                                    Head::tool, registry, img.h, img.w, id);
        } else {
            s.tool_mask = LabelMask(img.h, img.w, 255);
        }
        out.push_back(std::move(s));
    }
    return out;
}

Tensor hflip(const Tensor& chw) {
    const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out = Tensor::zeros({C, H, W});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t r = 0; r < H; ++r)
            for (int64_t x = 0; x < W; ++x)
                out.data[(c * H + r) * W + x] = chw.data[(c * H + r) * W + (W - 1 - x)];
    return out;
}

Tensor vflip(const Tensor& chw) {
    const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out = Tensor::zeros({C, H, W});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t r = 0; r < H; ++r)
            for (int64_t x = 0; x < W; ++x)
                out.data[(c * H + r) * W + x] = chw.data[(c * H + (H - 1 - r)) * W + x];
    return out;
}

// Clockwise quarter turn: source (r,c) lands at (c, H-1-r); output is W x H.
Tensor rot90cw(const Tensor& chw) {
    const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out = Tensor::zeros({C, W, H});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t r = 0; r < H; ++r)
            for (int64_t x = 0; x < W; ++x)
                out.data[(c * W + x) * H + (H - 1 - r)] = chw.data[(c * H + r) * W + x];
    return out;
}

LabelMask hflip(const LabelMask& m) {
    LabelMask out(m.h, m.w);
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c) out.at(r, c) = m.at(r, m.w - 1 - c);
    return out;
}

LabelMask vflip(const LabelMask& m) {
    LabelMask out(m.h, m.w);
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c) out.at(r, c) = m.at(m.h - 1 - r, c);
    return out;
}

LabelMask rot90cw(const LabelMask& m) {
    LabelMask out(m.w, m.h);
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c) out.at(c, m.h - 1 - r) = m.at(r, c);
    return out;
}

LabelMask nearest_resize(const LabelMask& m, int out_h, int out_w) {
    LabelMask out(out_h, out_w);
    const double sy = double(m.h) / out_h;
    const double sx = double(m.w) / out_w;
    for (int r = 0; r < out_h; ++r) {
        // Same half-pixel grid as the bilinear resize, snapped to the nearest source cell.
        int sr = int(std::llround((r + 0.5) * sy - 0.5));
        sr = std::clamp(sr, 0, m.h - 1);
        for (int c = 0; c < out_w; ++c) {
            int sc = int(std::llround((c + 0.5) * sx - 0.5));
            sc = std::clamp(sc, 0, m.w - 1);
            out.at(r, c) = m.at(sr, sc);
        }
    }
    return out;
}

namespace {

Tensor crop_image(const Tensor& chw, int top, int left, int ch, int cw) {
    const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    (void)H;
    Tensor out = Tensor::zeros({C, ch, cw});
    for (int64_t c = 0; c < C; ++c)
        for (int r = 0; r < ch; ++r)
            for (int x = 0; x < cw; ++x)
                out.data[(c * ch + r) * cw + x] = chw.data[(c * chw.dim(1) + (top + r)) * W + (left + x)];
    return out;
}

LabelMask crop_mask(const LabelMask& m, int top, int left, int ch, int cw) {
    LabelMask out(ch, cw);
    for (int r = 0; r < ch; ++r)
        for (int c = 0; c < cw; ++c) out.at(r, c) = m.at(top + r, left + c);
    return out;
}

}  // namespace

Sample augment(const Sample& sample, const AugmentationSpec& spec, Rng& draw) {
    spec.validate();
    Sample out = sample;

    if (draw.bernoulli(spec.hflip_prob)) {
        out.image = hflip(out.image);
        out.anat_mask = hflip(out.anat_mask);
        out.tool_mask = hflip(out.tool_mask);
    }
    if (draw.bernoulli(spec.vflip_prob)) {
        out.image = vflip(out.image);
        out.anat_mask = vflip(out.anat_mask);
        out.tool_mask = vflip(out.tool_mask);
    }
    const int deg = spec.rotation_degrees[size_t(draw.uniform_int(int64_t(spec.rotation_degrees.size())))];
    for (int k = 0; k < deg / 90; ++k) {
        out.image = rot90cw(out.image);
        out.anat_mask = rot90cw(out.anat_mask);
        out.tool_mask = rot90cw(out.tool_mask);
    }
    if (spec.crop_fraction < 1.0) {
        const int H = int(out.image.dim(1)), W = int(out.image.dim(2));
        const int ch = std::max(1, int(std::llround(H * spec.crop_fraction)));
        const int cw = std::max(1, int(std::llround(W * spec.crop_fraction)));
        const int top = int(draw.uniform_int(int64_t(H - ch + 1)));
        const int left = int(draw.uniform_int(int64_t(W - cw + 1)));
        out.image = ad::bilinear_resize_value(crop_image(out.image, top, left, ch, cw)
                                                  .reshaped({1, out.image.dim(0), ch, cw}),
                                              H, W)
                        .reshaped({out.image.dim(0), H, W});
        out.anat_mask = nearest_resize(crop_mask(out.anat_mask, top, left, ch, cw), H, W);
        out.tool_mask = nearest_resize(crop_mask(out.tool_mask, top, left, ch, cw), H, W);
    }
    return out;
}

}  // namespace surgseg
