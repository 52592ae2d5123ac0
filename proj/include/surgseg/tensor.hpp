#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "surgseg/rng.hpp"

namespace surgseg {

using Shape = std::vector<int64_t>;

// Dense row-major tensor of doubles. Compute runs in double throughout;
// checkpoints store parameters as float32 (see checkpoint.hpp).
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(Shape s, double fill) : shape(std::move(s)), data(count(shape), fill) {}

    static int64_t count(const Shape& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor randn(Rng& rng, Shape s, double std_dev = 1.0) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = rng.normal() * std_dev;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // Reinterpret as a new shape with the same element count.
    Tensor reshaped(Shape s) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

// Integer label image; 255 is the conventional ignore value.
struct LabelMask {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> v;

    LabelMask() = default;
    LabelMask(int h_, int w_, uint8_t fill = 0)
        : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    bool operator==(const LabelMask& o) const { return h == o.h && w == o.w && v == o.v; }
};

}  // namespace surgseg
