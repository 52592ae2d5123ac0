#include "surgseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "surgseg/gemm.hpp"

namespace surgseg::ad {

namespace {

bool any_requires(const std::vector<Var>& vs) {
    for (const auto& v : vs) {
        if (v->requires_grad) return true;
    }
    return false;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
    }
}

}  // namespace

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

Var leaf(Tensor v, bool requires_grad) { return std::make_shared<Node>(std::move(v), requires_grad); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>(std::move(value), any_requires(parents));
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward = std::move(bwd);
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) {
        throw std::invalid_argument("backward: root must be a scalar");
    }
    // Iterative post-order DFS; reverse order then respects data dependencies.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->g().data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.data.empty()) n->backward(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        const Tensor& g = self.grad;
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        const Tensor& g = self.grad;
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        const Tensor& g = self.grad;
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& x : out.data) x *= s;
    return make_op(std::move(out), {a}, [a, s](Node& self) {
        Tensor& ga = a->g();
        for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += s * self.grad[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (double& x : out.data) x += s;
    return make_op(std::move(out), {a}, [a](Node& self) {
        Tensor& ga = a->g();
        for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
    });
}

Var gelu(const Var& x) {
    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    Tensor out = x->value;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = x->g();
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            double v = x->value[i];
            double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

Var relu(const Var& x) {
    Tensor out = x->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = x->g();
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            if (x->value[i] > 0.0) gx[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var linear(const Var& x, const Var& w, const Var& b) {
    const int64_t k = x->value.shape.back();
    const int64_t n = w->value.dim(0);
    if (w->value.ndim() != 2 || w->value.dim(1) != k) {
        throw std::invalid_argument("linear: weight shape " + w->value.shape_str() +
                                    " incompatible with input " + x->value.shape_str());
    }
    const int64_t r = x->value.numel() / k;
    Shape out_shape = x->value.shape;
    out_shape.back() = n;
    Tensor out(out_shape);
    gemm_nt(x->value.ptr(), w->value.ptr(), out.ptr(), r, k, n);
    if (b && b->value.numel() > 0) {
        if (b->value.numel() != n) throw std::invalid_argument("linear: bias size mismatch");
        for (int64_t i = 0; i < r; ++i) {
            double* row = out.ptr() + i * n;
            for (int64_t j = 0; j < n; ++j) row[j] += b->value[j];
        }
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [x, w, b, r, k, n](Node& self) {
        const double* g = self.grad.ptr();
        if (x->requires_grad) gemm_nn(g, w->value.ptr(), x->g().ptr(), r, n, k);
        if (w->requires_grad) gemm_tn(g, x->value.ptr(), w->g().ptr(), n, r, k);
        if (b && b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < r; ++i) {
                const double* row = g + i * n;
                for (int64_t j = 0; j < n; ++j) gb[j] += row[j];
            }
        }
    });
}

namespace {

void check_bmm(const Var& a, const Var& b, const char* op) {
    if (a->value.ndim() != 3 || b->value.ndim() != 3 || a->value.dim(0) != b->value.dim(0)) {
        throw std::invalid_argument(std::string(op) + ": expected matching 3-d batches, got " +
                                    a->value.shape_str() + " and " + b->value.shape_str());
    }
}

}  // namespace

Var bmm_nn(const Var& a, const Var& b) {
    check_bmm(a, b, "bmm_nn");
    const int64_t gs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2), n = b->value.dim(2);
    if (b->value.dim(1) != k) throw std::invalid_argument("bmm_nn: inner dim mismatch");
    Tensor out({gs, m, n});
    for (int64_t gi = 0; gi < gs; ++gi) {
        gemm_nn(a->value.ptr() + gi * m * k, b->value.ptr() + gi * k * n, out.ptr() + gi * m * n, m, k, n);
    }
    return make_op(std::move(out), {a, b}, [a, b, gs, m, k, n](Node& self) {
        for (int64_t gi = 0; gi < gs; ++gi) {
            const double* g = self.grad.ptr() + gi * m * n;
            if (a->requires_grad)
                gemm_nt(g, b->value.ptr() + gi * k * n, a->g().ptr() + gi * m * k, m, n, k);
            if (b->requires_grad)
                gemm_tn(a->value.ptr() + gi * m * k, g, b->g().ptr() + gi * k * n, k, m, n);
        }
    });
}

Var bmm_nt(const Var& a, const Var& b) {
    check_bmm(a, b, "bmm_nt");
    const int64_t gs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2), n = b->value.dim(1);
    if (b->value.dim(2) != k) throw std::invalid_argument("bmm_nt: inner dim mismatch");
    Tensor out({gs, m, n});
    for (int64_t gi = 0; gi < gs; ++gi) {
        gemm_nt(a->value.ptr() + gi * m * k, b->value.ptr() + gi * n * k, out.ptr() + gi * m * n, m, k, n);
    }
    return make_op(std::move(out), {a, b}, [a, b, gs, m, k, n](Node& self) {
        for (int64_t gi = 0; gi < gs; ++gi) {
            const double* g = self.grad.ptr() + gi * m * n;
            if (a->requires_grad)
                gemm_nn(g, b->value.ptr() + gi * n * k, a->g().ptr() + gi * m * k, m, n, k);
            if (b->requires_grad)
                gemm_tn(g, a->value.ptr() + gi * m * k, b->g().ptr() + gi * n * k, n, m, k);
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization / shaping

Tensor softmax_lastdim_value(const Tensor& x) {
    const int64_t c = x.shape.back();
    const int64_t r = x.numel() / c;
    Tensor out = x;
    for (int64_t i = 0; i < r; ++i) {
        double* row = out.ptr() + i * c;
        double mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < c; ++j) row[j] *= inv;
    }
    return out;
}

Var softmax_lastdim(const Var& x) {
    Tensor out = softmax_lastdim_value(x->value);
    return make_op(std::move(out), {x}, [x](Node& self) {
        const int64_t c = self.value.shape.back();
        const int64_t r = self.value.numel() / c;
        Tensor& gx = x->g();
        for (int64_t i = 0; i < r; ++i) {
            const double* y = self.value.ptr() + i * c;
            const double* g = self.grad.ptr() + i * c;
            double dot = 0.0;
            for (int64_t j = 0; j < c; ++j) dot += g[j] * y[j];
            double* out = gx.ptr() + i * c;
            for (int64_t j = 0; j < c; ++j) out[j] += y[j] * (g[j] - dot);
        }
    });
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const int64_t c = x->value.shape.back();
    if (gamma->value.numel() != c || beta->value.numel() != c) {
        throw std::invalid_argument("layernorm: affine size mismatch");
    }
    const int64_t r = x->value.numel() / c;
    Tensor out(x->value.shape);
    Tensor xhat(x->value.shape);
    Tensor inv_std({r});
    for (int64_t i = 0; i < r; ++i) {
        const double* row = x->value.ptr() + i * c;
        double mean = 0.0;
        for (int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = istd;
        double* xh = xhat.ptr() + i * c;
        double* o = out.ptr() + i * c;
        for (int64_t j = 0; j < c; ++j) {
            xh[j] = (row[j] - mean) * istd;
            o[j] = xh[j] * gamma->value[j] + beta->value[j];
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](Node& self) {
        const double* g = self.grad.ptr();
        if (gamma->requires_grad) {
            Tensor& gg = gamma->g();
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * xhat[i * c + j];
        }
        if (beta->requires_grad) {
            Tensor& gb = beta->g();
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (x->requires_grad) {
            Tensor& gx = x->g();
            const double invc = 1.0 / static_cast<double>(c);
            for (int64_t i = 0; i < r; ++i) {
                const double* gr = g + i * c;
                const double* xh = xhat.ptr() + i * c;
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int64_t j = 0; j < c; ++j) {
                    double dxh = gr[j] * gamma->value[j];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xh[j];
                }
                double* go = gx.ptr() + i * c;
                for (int64_t j = 0; j < c; ++j) {
                    double dxh = gr[j] * gamma->value[j];
                    go[j] += inv_std[i] * (dxh - invc * sum_dxhat - xh[j] * invc * sum_dxhat_xhat);
                }
            }
        }
    });
}

Var groupnorm_unit(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x->value.ndim() != 4) throw std::invalid_argument("groupnorm_unit: expected (B,C,H,W)");
    const int64_t b = x->value.dim(0), c = x->value.dim(1);
    const int64_t hw = x->value.dim(2) * x->value.dim(3);
    const int64_t m = c * hw;
    if (gamma->value.numel() != c || beta->value.numel() != c) {
        throw std::invalid_argument("groupnorm_unit: affine size mismatch");
    }
    Tensor out(x->value.shape);
    Tensor xhat(x->value.shape);
    Tensor inv_std({b});
    for (int64_t bi = 0; bi < b; ++bi) {
        const double* px = x->value.ptr() + bi * m;
        double mean = 0.0;
        for (int64_t i = 0; i < m; ++i) mean += px[i];
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            double d = px[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[bi] = istd;
        double* xh = xhat.ptr() + bi * m;
        double* o = out.ptr() + bi * m;
        for (int64_t ci = 0; ci < c; ++ci) {
            const double gm = gamma->value[ci], bt = beta->value[ci];
            for (int64_t s = 0; s < hw; ++s) {
                int64_t idx = ci * hw + s;
                xh[idx] = (px[idx] - mean) * istd;
                o[idx] = xh[idx] * gm + bt;
            }
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), b, c, hw, m](Node& self) {
        if (gamma->requires_grad || beta->requires_grad) {
            Tensor& gg = gamma->g();
            Tensor& gb = beta->g();
            for (int64_t bi = 0; bi < b; ++bi) {
                const double* g = self.grad.ptr() + bi * m;
                const double* xh = xhat.ptr() + bi * m;
                for (int64_t ci = 0; ci < c; ++ci) {
                    double sg = 0.0, sgx = 0.0;
                    for (int64_t s = 0; s < hw; ++s) {
                        sg += g[ci * hw + s];
                        sgx += g[ci * hw + s] * xh[ci * hw + s];
                    }
                    gg[ci] += sgx;
                    gb[ci] += sg;
                }
            }
        }
        if (x->requires_grad) {
            Tensor& gx = x->g();
            const double invm = 1.0 / static_cast<double>(m);
            for (int64_t bi = 0; bi < b; ++bi) {
                const double* g = self.grad.ptr() + bi * m;
                const double* xh = xhat.ptr() + bi * m;
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int64_t ci = 0; ci < c; ++ci) {
                    const double gm = gamma->value[ci];
                    for (int64_t s = 0; s < hw; ++s) {
                        double dxh = g[ci * hw + s] * gm;
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[ci * hw + s];
                    }
                }
                double* go = gx.ptr() + bi * m;
                for (int64_t ci = 0; ci < c; ++ci) {
                    const double gm = gamma->value[ci];
                    for (int64_t s = 0; s < hw; ++s) {
                        int64_t idx = ci * hw + s;
                        double dxh = g[idx] * gm;
                        go[idx] += inv_std[bi] * (dxh - invm * sum_dxhat - xh[idx] * invm * sum_dxhat_xhat);
                    }
                }
            }
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = x->g();
        for (int64_t i = 0; i < self.grad.numel(); ++i) gx[i] += self.grad[i];
    });
}

namespace {

void permute_copy(const Tensor& in, Tensor& out, const std::vector<int>& axes) {
    const int nd = in.ndim();
    std::vector<int64_t> in_strides(nd, 1), out_dims(nd);
    for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in.dim(i + 1);
    for (int i = 0; i < nd; ++i) out_dims[i] = in.dim(axes[i]);
    std::vector<int64_t> idx(nd, 0);
    const int64_t n = in.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t src = 0;
        for (int i = 0; i < nd; ++i) src += idx[i] * in_strides[axes[i]];
        out.data[static_cast<size_t>(flat)] = in.data[static_cast<size_t>(src)];
        for (int i = nd - 1; i >= 0; --i) {
            if (++idx[i] < out_dims[i]) break;
            idx[i] = 0;
        }
    }
}

}  // namespace

Var permute(const Var& x, const std::vector<int>& axes) {
    const int nd = x->value.ndim();
    if (static_cast<int>(axes.size()) != nd) throw std::invalid_argument("permute: axes rank mismatch");
    Shape out_shape(nd);
    for (int i = 0; i < nd; ++i) out_shape[i] = x->value.dim(axes[i]);
    Tensor out(out_shape);
    permute_copy(x->value, out, axes);
    return make_op(std::move(out), {x}, [x, axes, nd](Node& self) {
        std::vector<int> inv(nd);
        for (int i = 0; i < nd; ++i) inv[axes[i]] = i;
        Tensor gperm(x->value.shape);
        permute_copy(self.grad, gperm, inv);
        Tensor& gx = x->g();
        for (int64_t i = 0; i < gperm.numel(); ++i) gx[i] += gperm[i];
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
    const int64_t b = xs[0]->value.dim(0), h = xs[0]->value.dim(2), w = xs[0]->value.dim(3);
    int64_t ctot = 0;
    for (const auto& x : xs) {
        if (x->value.ndim() != 4 || x->value.dim(0) != b || x->value.dim(2) != h || x->value.dim(3) != w) {
            throw std::invalid_argument("concat_channels: spatial/batch mismatch at input " +
                                        x->value.shape_str());
        }
        ctot += x->value.dim(1);
    }
    Tensor out({b, ctot, h, w});
    const int64_t hw = h * w;
    int64_t coff = 0;
    for (const auto& x : xs) {
        const int64_t ci = x->value.dim(1);
        for (int64_t bi = 0; bi < b; ++bi) {
            std::copy_n(x->value.ptr() + bi * ci * hw, ci * hw,
                        out.ptr() + (bi * ctot + coff) * hw);
        }
        coff += ci;
    }
    return make_op(std::move(out), xs, [xs, b, ctot, hw](Node& self) {
        int64_t coff = 0;
        for (const auto& x : xs) {
            const int64_t ci = x->value.dim(1);
            if (x->requires_grad) {
                Tensor& gx = x->g();
                for (int64_t bi = 0; bi < b; ++bi) {
                    const double* src = self.grad.ptr() + (bi * ctot + coff) * hw;
                    double* dst = gx.ptr() + bi * ci * hw;
                    for (int64_t i = 0; i < ci * hw; ++i) dst[i] += src[i];
                }
            }
            coff += ci;
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvDims {
    int64_t b, cin, h, w, cout, kh, kw, oh, ow;
    int stride, pad, groups;
    int64_t cin_g, cout_g, kcol;  // per-group channels, col rows
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, int groups) {
    if (x.ndim() != 4 || w.ndim() != 4) throw std::invalid_argument("conv2d: expected 4-d tensors");
    ConvDims d;
    d.b = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    d.pad = pad;
    d.groups = groups;
    if (d.cin % groups != 0 || d.cout % groups != 0 || w.dim(1) != d.cin / groups) {
        throw std::invalid_argument("conv2d: channel/group mismatch, x " + x.shape_str() + " w " +
                                    w.shape_str());
    }
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) throw std::invalid_argument("conv2d: output would be empty");
    d.cin_g = d.cin / groups;
    d.cout_g = d.cout / groups;
    d.kcol = d.cin_g * d.kh * d.kw;
    return d;
}

// col: (cin_g*kh*kw, oh*ow) for one (batch, group) slice.
void im2col(const double* x, const ConvDims& d, int64_t g, double* col) {
    const int64_t ohw = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin_g; ++c) {
        const double* plane = x + (g * d.cin_g + c) * d.h * d.w;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj) {
                double* row = col + ((c * d.kh + ki) * d.kw + kj) * ohw;
                for (int64_t oi = 0; oi < d.oh; ++oi) {
                    const int64_t si = oi * d.stride - d.pad + ki;
                    if (si < 0 || si >= d.h) {
                        std::fill_n(row + oi * d.ow, d.ow, 0.0);
                        continue;
                    }
                    for (int64_t oj = 0; oj < d.ow; ++oj) {
                        const int64_t sj = oj * d.stride - d.pad + kj;
                        row[oi * d.ow + oj] = (sj < 0 || sj >= d.w) ? 0.0 : plane[si * d.w + sj];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvDims& d, int64_t g, double* x) {
    const int64_t ohw = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin_g; ++c) {
        double* plane = x + (g * d.cin_g + c) * d.h * d.w;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj) {
                const double* row = col + ((c * d.kh + ki) * d.kw + kj) * ohw;
                for (int64_t oi = 0; oi < d.oh; ++oi) {
                    const int64_t si = oi * d.stride - d.pad + ki;
                    if (si < 0 || si >= d.h) continue;
                    for (int64_t oj = 0; oj < d.ow; ++oj) {
                        const int64_t sj = oj * d.stride - d.pad + kj;
                        if (sj >= 0 && sj < d.w) plane[si * d.w + sj] += row[oi * d.ow + oj];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int groups) {
    const ConvDims d = conv_dims(x->value, w->value, stride, pad, groups);
    if (b && b->value.numel() > 0 && b->value.numel() != d.cout) {
        throw std::invalid_argument("conv2d: bias size mismatch");
    }
    const int64_t ohw = d.oh * d.ow;
    Tensor out({d.b, d.cout, d.oh, d.ow});
    std::vector<double> col(static_cast<size_t>(d.kcol * ohw));
    for (int64_t bi = 0; bi < d.b; ++bi) {
        const double* xb = x->value.ptr() + bi * d.cin * d.h * d.w;
        double* ob = out.ptr() + bi * d.cout * ohw;
        for (int64_t g = 0; g < d.groups; ++g) {
            im2col(xb, d, g, col.data());
            gemm_nn(w->value.ptr() + g * d.cout_g * d.kcol, col.data(), ob + g * d.cout_g * ohw,
                    d.cout_g, d.kcol, ohw);
        }
        if (b && b->value.numel() > 0) {
            for (int64_t c = 0; c < d.cout; ++c) {
                const double bv = b->value[c];
                double* plane = ob + c * ohw;
                for (int64_t i = 0; i < ohw; ++i) plane[i] += bv;
            }
        }
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_op(std::move(out), std::move(parents), [x, w, b, d, ohw](Node& self) {
        std::vector<double> col(static_cast<size_t>(d.kcol * ohw));
        std::vector<double> dcol(static_cast<size_t>(d.kcol * ohw));
        for (int64_t bi = 0; bi < d.b; ++bi) {
            const double* xb = x->value.ptr() + bi * d.cin * d.h * d.w;
            const double* gb = self.grad.ptr() + bi * d.cout * ohw;
            for (int64_t g = 0; g < d.groups; ++g) {
                const double* gout = gb + g * d.cout_g * ohw;
                if (w->requires_grad || x->requires_grad) im2col(xb, d, g, col.data());
                if (w->requires_grad) {
                    gemm_nt(gout, col.data(), w->g().ptr() + g * d.cout_g * d.kcol, d.cout_g, ohw,
                            d.kcol);
                }
                if (x->requires_grad) {
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    gemm_tn(w->value.ptr() + g * d.cout_g * d.kcol, gout, dcol.data(), d.kcol,
                            d.cout_g, ohw);
                    col2im_add(dcol.data(), d, g, x->g().ptr() + bi * d.cin * d.h * d.w);
                }
            }
            if (b && b->requires_grad) {
                Tensor& gbias = b->g();
                for (int64_t c = 0; c < d.cout; ++c) {
                    const double* plane = gb + c * ohw;
                    double acc = 0.0;
                    for (int64_t i = 0; i < ohw; ++i) acc += plane[i];
                    gbias[c] += acc;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Bilinear resize (align_corners = false)

namespace {

struct AxisMap {
    std::vector<int64_t> i0, i1;
    std::vector<double> t;
};

AxisMap make_axis_map(int64_t in, int64_t out) {
    AxisMap m;
    m.i0.resize(out);
    m.i1.resize(out);
    m.t.resize(out);
    const double r = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        double s = (static_cast<double>(o) + 0.5) * r - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        const int64_t i0 = static_cast<int64_t>(std::floor(s));
        m.i0[o] = i0;
        m.i1[o] = std::min(i0 + 1, in - 1);
        m.t[o] = s - static_cast<double>(i0);
    }
    return m;
}

}  // namespace

Tensor bilinear_resize_value(const Tensor& x, int out_h, int out_w) {
    if (x.ndim() != 4) throw std::invalid_argument("bilinear_resize: expected (B,C,H,W)");
    const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const AxisMap my = make_axis_map(h, out_h);
    const AxisMap mx = make_axis_map(w, out_w);
    Tensor out({b, c, out_h, out_w});
    for (int64_t p = 0; p < b * c; ++p) {
        const double* src = x.ptr() + p * h * w;
        double* dst = out.ptr() + p * static_cast<int64_t>(out_h) * out_w;
        for (int64_t oi = 0; oi < out_h; ++oi) {
            const double ty = my.t[oi];
            const double* r0 = src + my.i0[oi] * w;
            const double* r1 = src + my.i1[oi] * w;
            for (int64_t oj = 0; oj < out_w; ++oj) {
                const double tx = mx.t[oj];
                const double a = r0[mx.i0[oj]] * (1 - tx) + r0[mx.i1[oj]] * tx;
                const double bv = r1[mx.i0[oj]] * (1 - tx) + r1[mx.i1[oj]] * tx;
                dst[oi * out_w + oj] = a * (1 - ty) + bv * ty;
            }
        }
    }
    return out;
}

Var bilinear_resize(const Var& x, int out_h, int out_w) {
    Tensor out = bilinear_resize_value(x->value, out_h, out_w);
    return make_op(std::move(out), {x}, [x, out_h, out_w](Node& self) {
        const int64_t b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
        const AxisMap my = make_axis_map(h, out_h);
        const AxisMap mx = make_axis_map(w, out_w);
        Tensor& gx = x->g();
        for (int64_t p = 0; p < b * c; ++p) {
            const double* g = self.grad.ptr() + p * static_cast<int64_t>(out_h) * out_w;
            double* dst = gx.ptr() + p * h * w;
            for (int64_t oi = 0; oi < out_h; ++oi) {
                const double ty = my.t[oi];
                for (int64_t oj = 0; oj < out_w; ++oj) {
                    const double tx = mx.t[oj];
                    const double gv = g[oi * out_w + oj];
                    dst[my.i0[oi] * w + mx.i0[oj]] += gv * (1 - ty) * (1 - tx);
                    dst[my.i0[oi] * w + mx.i1[oj]] += gv * (1 - ty) * tx;
                    dst[my.i1[oi] * w + mx.i0[oj]] += gv * ty * (1 - tx);
                    dst[my.i1[oi] * w + mx.i1[oj]] += gv * ty * tx;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum_all(const Var& x) {
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    Tensor out({1});
    out[0] = acc;
    return make_op(std::move(out), {x}, [x](Node& self) {
        const double g = self.grad[0];
        Tensor& gx = x->g();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

Var mean_all(const Var& x) {
    const double inv = 1.0 / static_cast<double>(x->value.numel());
    double acc = 0.0;
    for (double v : x->value.data) acc += v;
    Tensor out({1});
    out[0] = acc * inv;
    return make_op(std::move(out), {x}, [x, inv](Node& self) {
        const double g = self.grad[0] * inv;
        Tensor& gx = x->g();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

}  // namespace surgseg::ad
