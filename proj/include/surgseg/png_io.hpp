#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "surgseg/tensor.hpp"

namespace surgseg {

// Interleaved 8-bit RGB image.
struct ImageU8 {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> rgb;  // h*w*3

    ImageU8() = default;
    ImageU8(int h_, int w_) : h(h_), w(w_), rgb(static_cast<size_t>(h_) * w_ * 3, 0) {}
    uint8_t* px(int r, int c) { return rgb.data() + (static_cast<size_t>(r) * w + c) * 3; }
    const uint8_t* px(int r, int c) const { return rgb.data() + (static_cast<size_t>(r) * w + c) * 3; }
};

using Palette = std::vector<std::array<uint8_t, 3>>;  // up to 256 entries

ImageU8 read_image_png(const std::string& path);
void write_image_png(const std::string& path, const ImageU8& img);

// Masks are stored as 8-bit single-channel PNGs; palette images are read as
// raw index values, never expanded to RGB.
LabelMask read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const LabelMask& mask, const Palette& palette);

// PLTE chunk of a palette PNG, empty for grayscale masks.
Palette read_mask_palette(const std::string& path);

// [0,1] CHW tensor <-> 8-bit image.
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& chw);

}  // namespace surgseg
