#include "surgseg/params.hpp"

#include <stdexcept>

#include "surgseg/rng.hpp"

namespace surgseg {

uint64_t fnv1a(const void* data, size_t n, uint64_t basis) {
    uint64_t h = basis;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a(const std::string& s, uint64_t basis) { return fnv1a(s.data(), s.size(), basis); }

namespace {

void round_f32_inplace(Tensor& t) {
    for (double& v : t.data) v = double(float(v));
}

}  // namespace

ad::Var ParamStore::insert(const std::string& name, Tensor value) {
    if (has(name)) throw std::logic_error("duplicate parameter name: " + name);
    round_f32_inplace(value);
    ad::Var v = ad::leaf(std::move(value), /*requires_grad=*/true);
    items_.emplace_back(name, v);
    return v;
}

ad::Var ParamStore::trunc_normal(const std::string& name, Shape shape, double std_dev) {
    Rng rng = Rng::derive(seed_, fnv1a(name));
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.trunc_normal(std_dev);
    return insert(name, std::move(t));
}

ad::Var ParamStore::zeros(const std::string& name, Shape shape) {
    return insert(name, Tensor::zeros(std::move(shape)));
}

ad::Var ParamStore::ones(const std::string& name, Shape shape) {
    return insert(name, Tensor::full(std::move(shape), 1.0));
}

ad::Var ParamStore::find(const std::string& name) const {
    for (const auto& [n, v] : items_) {
        if (n == name) return v;
    }
    throw std::out_of_range("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, v] : items_) {
        if (n == name) return true;
    }
    return false;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, v] : items_) n += v->value.numel();
    return n;
}

void ParamStore::round_to_f32() {
    for (auto& [name, v] : items_) round_f32_inplace(v->value);
}

uint64_t ParamStore::value_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, v] : items_) {
        h = fnv1a(name, h);
        for (double d : v->value.data) {
            const float f = float(d);
            h = fnv1a(&f, sizeof(f), h);
        }
    }
    return h;
}

LinearLayer LinearLayer::make(ParamStore& ps, const std::string& name, int64_t in, int64_t out) {
    return {ps.trunc_normal(name + ".w", {out, in}), ps.zeros(name + ".b", {out})};
}

ad::Var LinearLayer::fwd(const ad::Var& x) const { return ad::linear(x, w, b); }

NormLayer NormLayer::make(ParamStore& ps, const std::string& name, int64_t dim) {
    return {ps.ones(name + ".g", {dim}), ps.zeros(name + ".b", {dim})};
}

ad::Var NormLayer::fwd(const ad::Var& x) const { return ad::layernorm(x, g, b); }

ConvLayer ConvLayer::make(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
                          int k, int stride, int pad, int groups) {
    ConvLayer layer;
    layer.w = ps.trunc_normal(name + ".w", {out, in / groups, k, k});
    layer.b = ps.zeros(name + ".b", {out});
    layer.stride = stride;
    layer.pad = pad;
    layer.groups = groups;
    return layer;
}

ad::Var ConvLayer::fwd(const ad::Var& x) const { return ad::conv2d(x, w, b, stride, pad, groups); }

GroupNormLayer GroupNormLayer::make(ParamStore& ps, const std::string& name, int64_t channels) {
    return {ps.ones(name + ".g", {channels}), ps.zeros(name + ".b", {channels})};
}

ad::Var GroupNormLayer::fwd(const ad::Var& x) const { return ad::groupnorm_unit(x, g, b); }

}  // namespace surgseg
