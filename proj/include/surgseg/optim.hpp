#pragma once

#include <cstdint>
#include <vector>

#include "surgseg/params.hpp"

namespace surgseg {

struct OptimConfig {
    double lr_base = 5e-6;
    double lr_max = 5e-6;
    int64_t cycle_steps = 0;  // 0 disables the cyclic schedule
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    void validate() const;
};

// Triangular cyclic learning rate: starts at lr_base, peaks at lr_max halfway
// through each cycle, returns to lr_base. cycle_steps == 0 means constant.
double lr_at_step(const OptimConfig& cfg, int64_t step);

// Adam with decoupled-from-nothing classic L2: weight_decay * p is added to
// the gradient. Parameter values are re-rounded to float32 after each update
// so checkpoints restore them exactly.
class Adam {
public:
    Adam(ParamStore& params, OptimConfig cfg);

    void zero_grad();
    double step();  // applies one update, returns the learning rate used

    int64_t steps_done() const { return steps_; }
    void set_steps_done(int64_t s) { steps_ = s; }
    const OptimConfig& config() const { return cfg_; }

private:
    ParamStore* params_;
    OptimConfig cfg_;
    int64_t steps_ = 0;
    std::vector<Tensor> m_, v_;  // first/second moments, one per parameter
};

}  // namespace surgseg
