#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "surgseg/tensor.hpp"

namespace surgseg::ad {

class Node;
using Var = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `backward` reads this node's grad and
// accumulates into the parents' grads; it is only attached when some ancestor
// is a trainable leaf.
class Node {
public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward;

    Node() = default;
    explicit Node(Tensor v, bool req = false) : value(std::move(v)), requires_grad(req) {}

    // Grad buffer, zero-initialized on first touch.
    Tensor& g() {
        if (grad.data.empty()) grad = Tensor::zeros(value.shape);
        return grad;
    }
    void clear_grad() { grad = Tensor(); }
};

Var constant(Tensor v);
Var leaf(Tensor v, bool requires_grad = true);

// Generic op constructor for custom nodes (used by the loss functions).
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Runs reverse-mode accumulation from a scalar root (numel == 1).
void backward(const Var& root);

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var gelu(const Var& x);
Var relu(const Var& x);

// Linear algebra
// x: (..., K), w: (N, K), b: (N) or empty -> (..., N)
Var linear(const Var& x, const Var& w, const Var& b);
// a: (G, M, K), b: (G, K, N) -> (G, M, N)
Var bmm_nn(const Var& a, const Var& b);
// a: (G, M, K), b: (G, N, K) -> (G, M, N)
Var bmm_nt(const Var& a, const Var& b);

// Normalization / shaping
Var softmax_lastdim(const Var& x);
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// GroupNorm with a single group: per-sample stats over (C,H,W), per-channel affine.
Var groupnorm_unit(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<int>& axes);
Var concat_channels(const std::vector<Var>& xs);

// Convolution / resampling
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int groups = 1);
Var bilinear_resize(const Var& x, int out_h, int out_w);

// Reductions (result shape {1})
Var sum_all(const Var& x);
Var mean_all(const Var& x);

// Value-only helpers (no graph)
Tensor softmax_lastdim_value(const Tensor& x);
Tensor bilinear_resize_value(const Tensor& x, int out_h, int out_w);

}  // namespace surgseg::ad
