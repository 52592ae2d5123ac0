#include "surgseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "surgseg/autodiff.hpp"
#include "surgseg/png_io.hpp"
#include "surgseg/rng.hpp"
#include "surgseg/tensor.hpp"

namespace fs = std::filesystem;

namespace surgseg {

void SynthSpec::validate() const {
    if (size <= 0 || size % 32 != 0) {
        throw std::invalid_argument("synth size must be a positive multiple of 32");
    }
    if (n_train < 0 || n_val < 0 || n_test < 0) {
        throw std::invalid_argument("synth sample counts must be non-negative");
    }
    if (n_train + n_val + n_test == 0) {
        throw std::invalid_argument("synth spec requests no samples");
    }
}

namespace {

struct Rgb {
    double r, g, b;
};

Rgb hsv(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (int(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

constexpr double kGolden = 0.6180339887498949;

Rgb render_color(Head head, int local) {
    if (head == Head::anatomy) return hsv(0.02 + (local - 1) * kGolden, 0.55, 0.62);
    return hsv(0.55 + (local - 1) * kGolden, 0.35, 0.92);
}

// Low-frequency value noise: a coarse random grid blown up bilinearly.
Tensor value_noise(Rng& rng, int size, int cells) {
    Tensor g = Tensor::zeros({1, 1, cells, cells});
    for (double& v : g.data) v = rng.uniform();
    return ad::bilinear_resize_value(g, size, size).reshaped({size, size});
}

struct Scene {
    Tensor image;  // (3,S,S)
    LabelMask anat;
    LabelMask tool;
};

void paint(Scene& sc, int r, int c, const Rgb& col) {
    const int S = sc.anat.h;
    double* px = sc.image.ptr();
    px[(0 * S + r) * S + c] = col.r;
    px[(1 * S + r) * S + c] = col.g;
    px[(2 * S + r) * S + c] = col.b;
}

void draw_blob(Scene& sc, Rng& rng, int local) {
    const int S = sc.anat.h;
    const double cy = rng.uniform(0.22, 0.78) * S;
    const double cx = rng.uniform(0.22, 0.78) * S;
    const double R = rng.uniform(0.13, 0.22) * S;
    double amp[3], phase[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = rng.uniform(0.0, 0.22 / (k + 1));
        phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    }
    const Rgb base = render_color(Head::anatomy, local);
    const double tex_seed = rng.uniform(0.0, 100.0);
    const int lo = std::max(0, int(cy - 1.6 * R)), hi = std::min(S - 1, int(cy + 1.6 * R));
    const int lo2 = std::max(0, int(cx - 1.6 * R)), hi2 = std::min(S - 1, int(cx + 1.6 * R));
    for (int r = lo; r <= hi; ++r) {
        for (int c = lo2; c <= hi2; ++c) {
            const double dy = r - cy, dx = c - cx;
            const double d = std::hypot(dy, dx);
            const double th = std::atan2(dy, dx);
            const double rim = R * (1.0 + amp[0] * std::sin(th + phase[0]) +
                                    amp[1] * std::sin(2 * th + phase[1]) +
                                    amp[2] * std::sin(3 * th + phase[2]));
            if (d > rim) continue;
            const double shade = 1.0 - 0.28 * (d / rim) * (d / rim);
            const double wave = 0.05 * std::sin(0.55 * r + tex_seed) * std::cos(0.48 * c - tex_seed);
            paint(sc, r, c,
                  {std::clamp(base.r * shade + wave, 0.0, 1.0),
                   std::clamp(base.g * shade + wave, 0.0, 1.0),
                   std::clamp(base.b * shade + wave, 0.0, 1.0)});
            sc.anat.at(r, c) = uint8_t(local);
        }
    }
}

void draw_capsule(Scene& sc, Rng& rng, int local) {
    const int S = sc.anat.h;
    const double y0 = rng.uniform(0.12, 0.88) * S;
    const double x0 = rng.uniform(0.12, 0.88) * S;
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double len = rng.uniform(0.28, 0.55) * S;
    const double y1 = y0 + len * std::sin(ang);
    const double x1 = x0 + len * std::cos(ang);
    const double rad = std::clamp(rng.uniform(1.5, 2.8) * (S / 64.0), 1.2, 6.0);
    const Rgb base = render_color(Head::tool, local);
    const int lo = std::clamp(int(std::min(y0, y1) - rad - 1), 0, S - 1);
    const int hi = std::clamp(int(std::max(y0, y1) + rad + 1), 0, S - 1);
    const int lo2 = std::clamp(int(std::min(x0, x1) - rad - 1), 0, S - 1);
    const int hi2 = std::clamp(int(std::max(x0, x1) + rad + 1), 0, S - 1);
    const double vy = y1 - y0, vx = x1 - x0;
    const double vv = vy * vy + vx * vx;
    for (int r = lo; r <= hi; ++r) {
        for (int c = lo2; c <= hi2; ++c) {
            const double t = vv > 0 ? std::clamp(((r - y0) * vy + (c - x0) * vx) / vv, 0.0, 1.0) : 0.0;
            const double d = std::hypot(r - (y0 + t * vy), c - (x0 + t * vx));
            if (d > rad) continue;
            const double axial = 0.92 + 0.10 * t;                   // soft gradient along the shaft
            const double spec = d < 0.45 * rad ? 0.10 : 0.0;        // bright core line
            paint(sc, r, c,
                  {std::clamp(base.r * axial + spec, 0.0, 1.0),
                   std::clamp(base.g * axial + spec, 0.0, 1.0),
                   std::clamp(base.b * axial + spec, 0.0, 1.0)});
            sc.tool.at(r, c) = uint8_t(local);
            sc.anat.at(r, c) = 0;  // the instrument occludes tissue
        }
    }
}

Scene render_sample(Rng& rng, int S, int n_anat, int n_tool) {
    Scene sc;
    sc.image = Tensor::zeros({3, S, S});
    sc.anat = LabelMask(S, S, 0);
    sc.tool = LabelMask(S, S, 0);

    const Tensor noise = value_noise(rng, S, std::max(2, S / 16));
    const Rgb tissue{0.42, 0.20, 0.16};
    const double chan_gain[3] = {0.10, 0.06, 0.05};
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            const double n = noise.data[size_t(r) * S + c] - 0.5;
            paint(sc, r, c,
                  {std::clamp(tissue.r + chan_gain[0] * n, 0.0, 1.0),
                   std::clamp(tissue.g + chan_gain[1] * n, 0.0, 1.0),
                   std::clamp(tissue.b + chan_gain[2] * n, 0.0, 1.0)});
        }
    }

    for (int a = 1; a <= n_anat; ++a) {
        if (rng.bernoulli(0.95)) draw_blob(sc, rng, a);
        if (rng.bernoulli(0.30)) draw_blob(sc, rng, a);
    }
    for (int t = 1; t <= n_tool; ++t) {
        if (rng.bernoulli(0.90)) draw_capsule(sc, rng, t);
        if (rng.bernoulli(0.25)) draw_capsule(sc, rng, t);
    }

    // Faint sensor noise on top of everything, masks untouched.
    for (double& v : sc.image.data) v = std::clamp(v + 0.01 * rng.normal(), 0.0, 1.0);
    return sc;
}

Palette head_palette(const LabelRegistry& registry, Head head) {
    Palette pal(size_t(registry.num_local(head)), {0, 0, 0});
    for (const auto* e : registry.entries_for(head)) pal[size_t(e->local_id)] = e->color;
    return pal;
}

}  // namespace

LabelRegistry default_synth_registry(int n_anatomy, int n_tool) {
    if (n_anatomy < 1 || n_tool < 1) {
        throw std::invalid_argument("need at least one class per head");
    }
    LabelRegistry reg;
    auto to_u8 = [](const Rgb& c) {
        return std::array<uint8_t, 3>{uint8_t(std::lround(c.r * 255.0)),
                                      uint8_t(std::lround(c.g * 255.0)),
                                      uint8_t(std::lround(c.b * 255.0))};
    };
    for (int i = 0; i < n_anatomy; ++i) {
        reg.add(1 + i, Head::anatomy, "anatomy_" + std::to_string(i + 1),
                to_u8(hsv(0.02 + i * kGolden, 0.85, 0.95)));
    }
    for (int i = 0; i < n_tool; ++i) {
        reg.add(1 + n_anatomy + i, Head::tool, "tool_" + std::to_string(i + 1),
                to_u8(hsv(0.55 + i * kGolden, 0.80, 0.98)));
    }
    return reg;
}

void synth_generate(const std::string& out_root, const SynthSpec& spec,
                    const LabelRegistry& registry) {
    spec.validate();
    const int n_anat = registry.num_local(Head::anatomy) - 1;
    const int n_tool = registry.num_local(Head::tool) - 1;
    if (n_anat < 1 || n_tool < 1) {
        throw std::invalid_argument("registry needs at least one class per head");
    }

    const fs::path root(out_root);
    fs::create_directories(root);
    {
        std::ofstream f(root / "classes.json");
        if (!f) throw std::runtime_error("cannot write " + (root / "classes.json").string());
        f << registry.to_json() << "\n";
    }

    const Palette anat_pal = head_palette(registry, Head::anatomy);
    const Palette tool_pal = head_palette(registry, Head::tool);

    const struct {
        const char* name;
        uint64_t tag;
        int count;
    } splits[] = {{"train", 1, spec.n_train}, {"val", 2, spec.n_val}, {"test", 3, spec.n_test}};

    for (const auto& sp : splits) {
        if (sp.count == 0) continue;
        fs::create_directories(root / "images" / sp.name);
        fs::create_directories(root / "masks_anatomy" / sp.name);
        fs::create_directories(root / "masks_tool" / sp.name);
        for (int i = 0; i < sp.count; ++i) {
            Rng rng = Rng::derive(spec.seed, sp.tag, uint64_t(i));
            Scene sc = render_sample(rng, spec.size, n_anat, n_tool);
            char id[16];
            std::snprintf(id, sizeof(id), "%06d", i);
            const std::string name = std::string(id) + ".png";
            write_image_png((root / "images" / sp.name / name).string(), tensor_to_image(sc.image));
            write_mask_png((root / "masks_anatomy" / sp.name / name).string(), sc.anat, anat_pal);
            write_mask_png((root / "masks_tool" / sp.name / name).string(), sc.tool, tool_pal);
        }
    }
}

}  // namespace surgseg
