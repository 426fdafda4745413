#include "neuron.hpp"

#include <cmath>

#include "error.hpp"

namespace snnzip {

void LifParams::validate() const {
    if (!(leak >= 0.0 && leak < 1.0))
        fail(Errc::invalid_argument, "lif: leak must lie in [0, 1), got " + std::to_string(leak));
    if (!(threshold > 0.0))
        fail(Errc::invalid_argument, "lif: threshold must be positive, got " + std::to_string(threshold));
    if (!(surrogate_width > 0.0))
        fail(Errc::invalid_argument,
             "lif: surrogate width must be positive, got " + std::to_string(surrogate_width));
}

LifStepResult lif_step(const Tensor& u_prev, const Tensor& input, const LifParams& params) {
    params.validate();
    if (!u_prev.same_shape(input))
        fail(Errc::invalid_argument,
             "lif_step: state shape " + u_prev.shape_str() + " vs input shape " + input.shape_str());

    LifStepResult r{Tensor(u_prev.shape()), Tensor(u_prev.shape()), Tensor(u_prev.shape())};
    for (std::size_t i = 0; i < u_prev.size(); ++i) {
        const double u = params.leak * u_prev[i] + input[i];
        const double s = u >= params.threshold ? 1.0 : 0.0;
        r.u_pre[i] = u;
        r.spikes[i] = s;
        r.u_post[i] = u * (1.0 - s);
    }
    return r;
}

double surrogate_grad(double u, const LifParams& params) {
    const double a = params.surrogate_width;
    return std::max(a - std::abs(u - params.threshold), 0.0) / a;
}

}  // namespace snnzip
