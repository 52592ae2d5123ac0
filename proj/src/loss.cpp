#include "surgseg/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace surgseg {

namespace {

struct ProbsView {
    int64_t b, k, hw;
};

ProbsView check_probs(const Tensor& probs, const std::vector<uint8_t>& target) {
    if (probs.ndim() != 4) throw std::invalid_argument("loss: probs must be (B,K,H,W)");
    ProbsView v{probs.dim(0), probs.dim(1), probs.dim(2) * probs.dim(3)};
    if (static_cast<int64_t>(target.size()) != v.b * v.hw) {
        throw std::invalid_argument("loss: target size does not match probs");
    }
    return v;
}

inline double prob_at(const Tensor& probs, const ProbsView& v, int64_t bi, int64_t k, int64_t pix) {
    return probs[(bi * v.k + k) * v.hw + pix];
}

// Per-class soft counts over all non-ignored pixels of the batch.
struct Counts {
    std::vector<double> tp, fp, fn;
    std::vector<char> in_target, in_argmax;
    int64_t valid_pixels = 0;
};

Counts soft_counts(const Tensor& probs, const std::vector<uint8_t>& target, const ProbsView& v,
                   int ignore_index) {
    Counts c;
    c.tp.assign(v.k, 0.0);
    c.fp.assign(v.k, 0.0);
    c.fn.assign(v.k, 0.0);
    c.in_target.assign(v.k, 0);
    c.in_argmax.assign(v.k, 0);
    for (int64_t bi = 0; bi < v.b; ++bi) {
        for (int64_t pix = 0; pix < v.hw; ++pix) {
            const uint8_t t = target[bi * v.hw + pix];
            if (t == ignore_index) continue;
            if (t >= v.k) throw std::invalid_argument("loss: target label out of range");
            ++c.valid_pixels;
            c.in_target[t] = 1;
            int64_t best = 0;
            double best_p = prob_at(probs, v, bi, 0, pix);
            for (int64_t k = 0; k < v.k; ++k) {
                const double p = prob_at(probs, v, bi, k, pix);
                if (p > best_p) {
                    best_p = p;
                    best = k;
                }
                if (k == t) {
                    c.tp[k] += p;
                    c.fn[k] += 1.0 - p;
                } else {
                    c.fp[k] += p;
                }
            }
            c.in_argmax[best] = 1;
        }
    }
    return c;
}

struct TverskyEval {
    double loss = 0.0;
    std::vector<double> num, den;  // per participating class; 0 width when absent
    std::vector<char> participates;
    int64_t m = 0;  // participating class count
};

TverskyEval eval_tversky(const Counts& c, int64_t k, const LossConfig& cfg) {
    TverskyEval e;
    e.num.assign(k, 0.0);
    e.den.assign(k, 0.0);
    e.participates.assign(k, 0);
    double acc = 0.0;
    for (int64_t ki = 0; ki < k; ++ki) {
        if (!c.in_target[ki] && !c.in_argmax[ki]) continue;
        e.participates[ki] = 1;
        ++e.m;
        e.num[ki] = c.tp[ki] + cfg.smooth;
        e.den[ki] = c.tp[ki] + cfg.alpha * c.fp[ki] + cfg.beta * c.fn[ki] + cfg.smooth;
        acc += 1.0 - e.num[ki] / e.den[ki];
    }
    e.loss = e.m > 0 ? acc / static_cast<double>(e.m) : 0.0;
    return e;
}

double eval_ce(const Tensor& probs, const std::vector<uint8_t>& target, const ProbsView& v,
               const LossConfig& cfg) {
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t bi = 0; bi < v.b; ++bi) {
        for (int64_t pix = 0; pix < v.hw; ++pix) {
            const uint8_t t = target[bi * v.hw + pix];
            if (t == cfg.ignore_index) continue;
            if (t >= v.k) throw std::invalid_argument("loss: target label out of range");
            acc -= std::log(std::max(prob_at(probs, v, bi, t, pix), kProbClamp));
            ++n;
        }
    }
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace

void LossConfig::validate() const {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(alpha) || !in01(beta) || !in01(lambda_combined)) {
        throw std::invalid_argument("loss config: alpha, beta, lambda must lie in [0,1]");
    }
    if (smooth <= 0.0) throw std::invalid_argument("loss config: smooth must be positive");
    if (ignore_index < 0 || ignore_index > 255) {
        throw std::invalid_argument("loss config: ignore_index must fit a mask byte");
    }
}

double tversky_index(const Tensor& probs, const std::vector<uint8_t>& target, int cls,
                     const LossConfig& cfg) {
    const ProbsView v = check_probs(probs, target);
    if (cls < 0 || cls >= v.k) throw std::invalid_argument("tversky_index: class out of range");
    const Counts c = soft_counts(probs, target, v, cfg.ignore_index);
    const double num = c.tp[cls] + cfg.smooth;
    const double den = c.tp[cls] + cfg.alpha * c.fp[cls] + cfg.beta * c.fn[cls] + cfg.smooth;
    return num / den;
}

double tversky_loss(const Tensor& probs, const std::vector<uint8_t>& target, const LossConfig& cfg) {
    const ProbsView v = check_probs(probs, target);
    const Counts c = soft_counts(probs, target, v, cfg.ignore_index);
    return eval_tversky(c, v.k, cfg).loss;
}

ad::Var tversky_loss(const ad::Var& probs, const std::vector<uint8_t>& target, const LossConfig& cfg) {
    const ProbsView v = check_probs(probs->value, target);
    const Counts c = soft_counts(probs->value, target, v, cfg.ignore_index);
    TverskyEval e = eval_tversky(c, v.k, cfg);
    Tensor out({1});
    out[0] = e.loss;
    return ad::make_op(std::move(out), {probs},
                       [probs, target, v, cfg, e = std::move(e)](ad::Node& self) {
        if (e.m == 0) return;
        const double gscale = self.grad[0] / static_cast<double>(e.m);
        Tensor& gp = probs->g();
        for (int64_t bi = 0; bi < v.b; ++bi) {
            for (int64_t pix = 0; pix < v.hw; ++pix) {
                const uint8_t t = target[bi * v.hw + pix];
                if (t == cfg.ignore_index) continue;
                for (int64_t k = 0; k < v.k; ++k) {
                    if (!e.participates[k]) continue;
                    const double y = (k == t) ? 1.0 : 0.0;
                    const double ddem = y + cfg.alpha * (1.0 - y) - cfg.beta * y;
                    const double d = e.den[k];
                    // d(1 - N/D)/dp = -(y*D - N*dD)/D^2
                    gp[(bi * v.k + k) * v.hw + pix] -=
                        gscale * (y * d - e.num[k] * ddem) / (d * d);
                }
            }
        }
    });
}

double cross_entropy_loss(const Tensor& probs, const std::vector<uint8_t>& target,
                          const LossConfig& cfg) {
    const ProbsView v = check_probs(probs, target);
    return eval_ce(probs, target, v, cfg);
}

ad::Var cross_entropy_loss(const ad::Var& probs, const std::vector<uint8_t>& target,
                           const LossConfig& cfg) {
    const ProbsView v = check_probs(probs->value, target);
    int64_t n_valid = 0;
    for (uint8_t t : target) {
        if (t != cfg.ignore_index) ++n_valid;
    }
    Tensor out({1});
    out[0] = eval_ce(probs->value, target, v, cfg);
    return ad::make_op(std::move(out), {probs}, [probs, target, v, cfg, n_valid](ad::Node& self) {
        if (n_valid == 0) return;
        const double gscale = self.grad[0] / static_cast<double>(n_valid);
        Tensor& gp = probs->g();
        for (int64_t bi = 0; bi < v.b; ++bi) {
            for (int64_t pix = 0; pix < v.hw; ++pix) {
                const uint8_t t = target[bi * v.hw + pix];
                if (t == cfg.ignore_index) continue;
                const double p = prob_at(probs->value, v, bi, t, pix);
                if (p >= kProbClamp) {
                    gp[(bi * v.k + t) * v.hw + pix] -= gscale / p;
                }
            }
        }
    });
}

double combined_loss(const Tensor& probs, const std::vector<uint8_t>& target, const LossConfig& cfg) {
    return combined_from_components(tversky_loss(probs, target, cfg),
                                    cross_entropy_loss(probs, target, cfg), cfg.lambda_combined);
}

ad::Var combined_loss(const ad::Var& probs, const std::vector<uint8_t>& target,
                      const LossConfig& cfg) {
    ad::Var tv = tversky_loss(probs, target, cfg);
    ad::Var ce = cross_entropy_loss(probs, target, cfg);
    return ad::add(ad::scale(tv, cfg.lambda_combined), ad::scale(ce, 1.0 - cfg.lambda_combined));
}

}  // namespace surgseg
