#include "quantize.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "linalg.hpp"

namespace snnzip {

namespace {

double round_half_away(double x) { return std::round(x); }  // std::round ties away from zero

double clamp1(double x) { return std::clamp(x, -1.0, 1.0); }

QuantizeResult quantize_scaled(const Tensor& w, const QuantizerSpec& spec, double gamma) {
    const double s = static_cast<double>(spec.grid_steps());
    QuantizeResult r{Tensor(w.shape()), Tensor(w.shape()), gamma};
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double code = round_half_away(s / 2.0 * (clamp1(w[i] / gamma) + 1.0));
        r.codes[i] = code;
        r.dequant[i] = gamma * (2.0 * code / s - 1.0);
    }
    return r;
}

}  // namespace

void QuantizerSpec::validate() const {
    if (bits != 2 && bits != 4 && bits != 8)
        fail(Errc::invalid_argument, "quantizer: bits must be 2, 4 or 8, got " + std::to_string(bits));
    if (gamma == GammaOption::percentile_pair && !(percentile_x > 0.0 && percentile_x < 1.0))
        fail(Errc::invalid_argument, "quantizer: percentile x must lie in (0, 1), got " +
                                         std::to_string(percentile_x));
}

QuantizeResult quantize_vanilla(const Tensor& w, const QuantizerSpec& spec) {
    spec.validate();
    if (spec.gamma != GammaOption::none)
        fail(Errc::invalid_argument, "quantize_vanilla: spec selects a rescaled path");
    const double s = static_cast<double>(spec.grid_steps());
    QuantizeResult r{Tensor(w.shape()), Tensor(w.shape()), 1.0};
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double code = round_half_away(s / 2.0 * (clamp1(w[i]) + 1.0));
        r.codes[i] = code;
        r.dequant[i] = 2.0 * code / s - 1.0;
    }
    return r;
}

double gamma_for(const Tensor& w, const QuantizerSpec& spec) {
    if (w.size() == 0) fail(Errc::invalid_argument, "quantize: empty weight tensor");
    double gamma = 0.0;
    switch (spec.gamma) {
        case GammaOption::none:
            return 1.0;
        case GammaOption::max_abs:
            for (std::size_t i = 0; i < w.size(); ++i) gamma = std::max(gamma, std::abs(w[i]));
            break;
        case GammaOption::percentile_pair: {
            const double lo = percentile(w.values(), spec.percentile_x);
            const double hi = percentile(w.values(), 1.0 - spec.percentile_x);
            gamma = std::max(std::abs(lo), std::abs(hi));
            break;
        }
        case GammaOption::l1_mean:
            gamma = l1_mean(w);
            break;
    }
    if (gamma == 0.0)
        fail(Errc::degenerate_input, "quantize: range coefficient is 0 (weights carry no spread)");
    return gamma;
}

QuantizeResult quantize_rescaled(const Tensor& w, const QuantizerSpec& spec) {
    spec.validate();
    if (spec.gamma == GammaOption::none)
        fail(Errc::invalid_argument, "quantize_rescaled: spec selects the vanilla path");
    return quantize_scaled(w, spec, gamma_for(w, spec));
}

QuantizeResult quantize_with_gamma(const Tensor& w, const QuantizerSpec& spec, double gamma) {
    spec.validate();
    if (!(gamma > 0.0))
        fail(Errc::invalid_argument, "quantize: supplied gamma must be positive, got " + std::to_string(gamma));
    return quantize_scaled(w, spec, gamma);
}

QuantizeResult fake_quantize(const Tensor& w, const QuantizerSpec& spec) {
    return spec.gamma == GammaOption::none ? quantize_vanilla(w, spec) : quantize_rescaled(w, spec);
}

Tensor ste_backward(const Tensor& grad_out, const Tensor& w_scaled) {
    if (!grad_out.same_shape(w_scaled))
        fail(Errc::invalid_argument, "ste_backward: gradient shape " + grad_out.shape_str() +
                                         " vs weight shape " + w_scaled.shape_str());
    Tensor out(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        out[i] = std::abs(w_scaled[i]) <= 1.0 ? grad_out[i] : 0.0;
    return out;
}

UtilizationEntry utilization(const Tensor& codes, int bits, const Tensor* pre_quant_weights) {
    QuantizerSpec spec;
    spec.bits = bits;
    spec.validate();
    const std::size_t n_total = std::size_t{1} << bits;
    std::vector<bool> seen(n_total, false);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const double c = codes[i];
        if (c < 0.0 || c >= static_cast<double>(n_total) || c != std::floor(c))
            fail(Errc::invalid_argument,
                 "utilization: code " + std::to_string(c) + " outside [0, " + std::to_string(n_total - 1) + "]");
        seen[static_cast<std::size_t>(c)] = true;
    }
    UtilizationEntry e;
    e.bits = bits;
    e.n_total = n_total;
    for (bool b : seen) e.n_actual += b ? 1 : 0;
    e.ratio = static_cast<double>(e.n_actual) / static_cast<double>(n_total);
    if (pre_quant_weights != nullptr) {
        const double lo = percentile(pre_quant_weights->values(), 0.01);
        const double hi = percentile(pre_quant_weights->values(), 0.99);
        e.analytic = analytic_utilization(std::max(std::abs(lo), std::abs(hi)), bits);
    }
    return e;
}

double analytic_utilization(double a, int bits) {
    const double s = static_cast<double>((1 << bits) - 1);
    return std::min(1.0, (s * a + 1.0) / (s + 1.0));
}

const char* gamma_option_name(GammaOption g) {
    switch (g) {
        case GammaOption::none: return "none";
        case GammaOption::max_abs: return "max_abs";
        case GammaOption::percentile_pair: return "percentile_pair";
        case GammaOption::l1_mean: return "l1_mean";
    }
    return "?";
}

GammaOption gamma_option_from_name(const std::string& name) {
    if (name == "none") return GammaOption::none;
    if (name == "max_abs") return GammaOption::max_abs;
    if (name == "percentile_pair") return GammaOption::percentile_pair;
    if (name == "l1_mean") return GammaOption::l1_mean;
    fail(Errc::parse, "quantizer: unknown gamma option '" + name + "'");
}

}  // namespace snnzip
