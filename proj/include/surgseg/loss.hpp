#pragma once

#include <cstdint>
#include <vector>

#include "surgseg/autodiff.hpp"
#include "surgseg/tensor.hpp"

namespace surgseg {

// Knobs of the Tversky / cross-entropy training objective.
struct LossConfig {
    double alpha = 0.7;            // Tversky false-positive weight
    double beta = 0.3;             // Tversky false-negative weight
    double lambda_combined = 0.7;  // mix: lambda*tversky + (1-lambda)*ce
    int ignore_index = 255;
    double smooth = 1e-6;

    void validate() const;
};

// probs: (B,K,H,W) softmax scores; target: B*H*W labels in [0,K) or ignore.
// Soft counts are accumulated over all non-ignored pixels of the batch.

// Tversky index for one class: (TP + s) / (TP + a*FP + b*FN + s).
double tversky_index(const Tensor& probs, const std::vector<uint8_t>& target, int cls,
                     const LossConfig& cfg);

// 1 - TI averaged over classes present in the target or in the argmax
// prediction; 0 when no class participates.
ad::Var tversky_loss(const ad::Var& probs, const std::vector<uint8_t>& target,
                     const LossConfig& cfg);
double tversky_loss(const Tensor& probs, const std::vector<uint8_t>& target,
                    const LossConfig& cfg);

// Mean over non-ignored pixels of -log p_target, p clamped at 1e-12.
ad::Var cross_entropy_loss(const ad::Var& probs, const std::vector<uint8_t>& target,
                           const LossConfig& cfg);
double cross_entropy_loss(const Tensor& probs, const std::vector<uint8_t>& target,
                          const LossConfig& cfg);

// lambda * tversky + (1 - lambda) * cross-entropy.
ad::Var combined_loss(const ad::Var& probs, const std::vector<uint8_t>& target,
                      const LossConfig& cfg);
double combined_loss(const Tensor& probs, const std::vector<uint8_t>& target,
                     const LossConfig& cfg);

// The mixing rule itself, exposed so the composition is checkable in isolation.
inline double combined_from_components(double tversky, double ce, double lambda) {
    return lambda * tversky + (1.0 - lambda) * ce;
}

constexpr double kProbClamp = 1e-12;

}  // namespace surgseg
