#include "surgseg/png_io.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace surgseg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("png: " + what + " (" + path + ")");
}

struct Reader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~Reader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct Writer {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~Writer() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

void open_reader(Reader& r, FILE* f, const std::string& path) {
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) fail(path, "read init failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) fail(path, "info init failed");
    if (setjmp(png_jmpbuf(r.png))) fail(path, "corrupt or unreadable file");
    png_init_io(r.png, f);
    png_read_info(r.png, r.info);
}

}  // namespace

ImageU8 read_image_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(path, "cannot open");
    Reader r;
    open_reader(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) fail(path, "read error");

    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);

    if (depth == 16) png_set_strip_16(r.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(r.png);
    }
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);

    ImageU8 img(static_cast<int>(h), static_cast<int>(w));
    if (png_get_rowbytes(r.png, r.info) != static_cast<size_t>(w) * 3) {
        fail(path, "unexpected row size after conversion");
    }
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.rgb.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return img;
}

void write_image_png(const std::string& path, const ImageU8& img) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(path, "cannot open for writing");
    Writer wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) fail(path, "write init failed");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) fail(path, "info init failed");
    if (setjmp(png_jmpbuf(wr.png))) fail(path, "write error");

    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png, wr.info);
    std::vector<png_const_bytep> rows(img.h);
    for (int y = 0; y < img.h; ++y) rows[y] = img.rgb.data() + static_cast<size_t>(y) * img.w * 3;
    png_write_image(wr.png, const_cast<png_bytepp>(rows.data()));
    png_write_end(wr.png, nullptr);
}

LabelMask read_mask_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(path, "cannot open");
    Reader r;
    open_reader(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) fail(path, "read error");

    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);

    if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
        fail(path, "mask must be 8-bit indexed or grayscale");
    }
    if (depth < 8) png_set_packing(r.png);
    if (depth == 16) fail(path, "mask must be 8-bit, got 16-bit");
    png_read_update_info(r.png, r.info);
    if (png_get_rowbytes(r.png, r.info) != static_cast<size_t>(w)) {
        fail(path, "unexpected mask row size");
    }

    LabelMask mask(static_cast<int>(h), static_cast<int>(w));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = mask.v.data() + static_cast<size_t>(y) * w;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return mask;
}

Palette read_mask_palette(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(path, "cannot open");
    Reader r;
    open_reader(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) fail(path, "read error");

    Palette out;
    if (png_get_color_type(r.png, r.info) == PNG_COLOR_TYPE_PALETTE) {
        png_colorp plte = nullptr;
        int n = 0;
        png_get_PLTE(r.png, r.info, &plte, &n);
        for (int i = 0; i < n; ++i) out.push_back({plte[i].red, plte[i].green, plte[i].blue});
    }
    return out;
}

void write_mask_png(const std::string& path, const LabelMask& mask, const Palette& palette) {
    if (palette.empty() || palette.size() > 256) {
        throw std::invalid_argument("mask palette must have 1..256 entries");
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail(path, "cannot open for writing");
    Writer wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) fail(path, "write init failed");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) fail(path, "info init failed");
    if (setjmp(png_jmpbuf(wr.png))) fail(path, "write error");

    png_init_io(wr.png, f.get());
    png_set_IHDR(wr.png, wr.info, mask.w, mask.h, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> plte(palette.size());
    for (size_t i = 0; i < palette.size(); ++i) {
        plte[i].red = palette[i][0];
        plte[i].green = palette[i][1];
        plte[i].blue = palette[i][2];
    }
    png_set_PLTE(wr.png, wr.info, plte.data(), static_cast<int>(plte.size()));
    png_write_info(wr.png, wr.info);
    std::vector<png_const_bytep> rows(mask.h);
    for (int y = 0; y < mask.h; ++y) rows[y] = mask.v.data() + static_cast<size_t>(y) * mask.w;
    png_write_image(wr.png, const_cast<png_bytepp>(rows.data()));
    png_write_end(wr.png, nullptr);
}

Tensor image_to_tensor(const ImageU8& img) {
    Tensor t({3, img.h, img.w});
    const int64_t hw = static_cast<int64_t>(img.h) * img.w;
    for (int64_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) t[c * hw + i] = img.rgb[static_cast<size_t>(i) * 3 + c] / 255.0;
    }
    return t;
}

ImageU8 tensor_to_image(const Tensor& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) {
        throw std::invalid_argument("tensor_to_image: expected (3,H,W)");
    }
    ImageU8 img(static_cast<int>(chw.dim(1)), static_cast<int>(chw.dim(2)));
    const int64_t hw = chw.dim(1) * chw.dim(2);
    for (int64_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) {
            double v = std::round(chw[c * hw + i] * 255.0);
            img.rgb[static_cast<size_t>(i) * 3 + c] =
                static_cast<uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
        }
    }
    return img;
}

}  // namespace surgseg
