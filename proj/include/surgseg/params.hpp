#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "surgseg/autodiff.hpp"

namespace surgseg {

uint64_t fnv1a(const void* data, size_t n, uint64_t basis = 0xcbf29ce484222325ULL);
uint64_t fnv1a(const std::string& s, uint64_t basis = 0xcbf29ce484222325ULL);

// Named trainable leaves. Each parameter draws from an independent stream
// keyed by its name, so init does not depend on construction order. Values
// are kept exactly float32-representable (rounded after init and after every
// optimizer step) so that float32 checkpoints round-trip bit-identically.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed) : seed_(seed) {}

    ad::Var trunc_normal(const std::string& name, Shape shape, double std_dev = 0.02);
    ad::Var zeros(const std::string& name, Shape shape);
    ad::Var ones(const std::string& name, Shape shape);

    const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
    ad::Var find(const std::string& name) const;  // throws on unknown name
    bool has(const std::string& name) const;
    int64_t total_elements() const;
    uint64_t seed() const { return seed_; }

    void round_to_f32();
    // Order-sensitive FNV-1a over the float32 image of every parameter.
    uint64_t value_hash() const;

private:
    ad::Var insert(const std::string& name, Tensor value);

    uint64_t seed_;
    std::vector<std::pair<std::string, ad::Var>> items_;
};

// Thin parameter-owning wrappers over the autodiff ops.

struct LinearLayer {
    ad::Var w;  // (out, in)
    ad::Var b;  // (out)
    static LinearLayer make(ParamStore& ps, const std::string& name, int64_t in, int64_t out);
    ad::Var fwd(const ad::Var& x) const;  // x: (..., in) -> (..., out)
};

struct NormLayer {  // LayerNorm over the last dimension
    ad::Var g, b;
    static NormLayer make(ParamStore& ps, const std::string& name, int64_t dim);
    ad::Var fwd(const ad::Var& x) const;
};

struct ConvLayer {
    ad::Var w;  // (out, in/groups, k, k)
    ad::Var b;  // (out)
    int stride = 1, pad = 0, groups = 1;
    static ConvLayer make(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
                          int k, int stride, int pad, int groups = 1);
    ad::Var fwd(const ad::Var& x) const;  // x: (B, in, H, W)
};

struct GroupNormLayer {  // single-group GroupNorm: per-sample over (C,H,W)
    ad::Var g, b;
    static GroupNormLayer make(ParamStore& ps, const std::string& name, int64_t channels);
    ad::Var fwd(const ad::Var& x) const;
};

}  // namespace surgseg
