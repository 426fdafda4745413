#pragma once

// Leaky integrate-and-fire cell with hard reset, and the triangular surrogate
// slope used in its backward pass.  One step:
//
//   u_pre  = leak * u_prev + input        (membrane charge)
//   spike  = u_pre >= threshold ? 1 : 0   (inclusive at the threshold)
//   u_post = u_pre * (1 - spike)          (hard reset to 0 on fire)
//
// The spike nonlinearity has measure-zero true gradient; training replaces it
// with a triangular window centered on the threshold (peak 1, support
// [threshold - width, threshold + width]):
//
//   slope(u) = max(width - |u - threshold|, 0) / width

#include "tensor.hpp"

namespace snnzip {

struct LifParams {
    double leak = 0.5;             // membrane decay per step, in [0, 1)
    double threshold = 1.0;        // firing threshold, > 0
    double surrogate_width = 1.0;  // half-width of the backward triangle, > 0
    bool detach_reset = false;     // drop the reset term from the backward pass

    void validate() const;
};

struct LifStepResult {
    Tensor u_pre;   // membrane after charge, before reset
    Tensor spikes;  // binary
    Tensor u_post;  // membrane after reset
};

// Advances every element one step.  u_prev and input must share a shape.
LifStepResult lif_step(const Tensor& u_prev, const Tensor& input, const LifParams& params);

// Triangular surrogate slope at membrane value u.
double surrogate_grad(double u, const LifParams& params);

}  // namespace snnzip
