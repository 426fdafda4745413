#pragma once

// Uniform weight quantization at 2/4/8 bits: the plain clamp-to-[-1,1] grid,
// and the rescaled variant that first divides weights by a data-derived range
// coefficient gamma so the grid tracks the actual weight spread.  Training is
// fake-quant: full-precision masters in, dequantized w_hat out, gradients back
// through a straight-through gate.
//
// With s = 2^b - 1 grid steps and zero-point fixed at 1:
//
//   codes = round(s/2 * (clamp(w, -1, 1) + 1))        (vanilla)
//   codes = round(s/2 * (clamp(w/gamma, -1, 1) + 1))  (rescaled)
//   w_hat = 2*codes/s - 1, times gamma when rescaled
//
// Ties round half away from zero.  gamma options: largest magnitude, the
// symmetric percentile pair max(|P_x|, |P_1-x|), or the mean absolute value
// (the default — experimentally the sturdiest of the three).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace snnzip {

enum class GammaOption {
    none,             // vanilla: no rescale
    max_abs,
    percentile_pair,  // max(|P_x|, |P_1-x|)
    l1_mean,
};

struct QuantizerSpec {
    int bits = 8;                                    // one of 2, 4, 8
    GammaOption gamma = GammaOption::l1_mean;
    double percentile_x = 0.01;                      // used by percentile_pair

    int grid_steps() const { return (1 << bits) - 1; }  // s = 2^b - 1
    void validate() const;
};

struct QuantizeResult {
    Tensor codes;   // integer codes in [0, 2^b - 1], stored as exact doubles
    Tensor dequant; // w_hat, same shape as the input
    double gamma;   // 1 for the vanilla path
};

// Vanilla path; spec.gamma must be none.
QuantizeResult quantize_vanilla(const Tensor& w, const QuantizerSpec& spec);

// Rescaled path; computes gamma from w per spec.gamma (degenerate-input error
// if that yields 0).  spec.gamma must not be none.
QuantizeResult quantize_rescaled(const Tensor& w, const QuantizerSpec& spec);

// Rescaled path with a caller-supplied gamma (used when a stored model fixes
// its gamma at save time).
QuantizeResult quantize_with_gamma(const Tensor& w, const QuantizerSpec& spec, double gamma);

// Dispatches on spec.gamma.
QuantizeResult fake_quantize(const Tensor& w, const QuantizerSpec& spec);

// The range coefficient alone.
double gamma_for(const Tensor& w, const QuantizerSpec& spec);

// Straight-through gate: grad_out where |w_scaled| <= 1, zero elsewhere.
// w_scaled is the master weight divided by gamma (or the raw master for the
// vanilla path); gamma itself is treated as a constant.
Tensor ste_backward(const Tensor& grad_out, const Tensor& w_scaled);

struct UtilizationEntry {
    std::string layer;
    int bits = 0;
    std::size_t n_actual = 0;     // distinct codes present
    std::size_t n_total = 0;      // 2^b
    double ratio = 0.0;           // n_actual / n_total
    std::optional<double> analytic;  // (s*a + 1)/(s + 1) estimate, when weights were supplied
};

// Counts distinct codes.  When the pre-quantization weights are supplied the
// analytic estimate is filled in from a = max(|P_0.01|, |P_0.99|).
UtilizationEntry utilization(const Tensor& codes, int bits, const Tensor* pre_quant_weights = nullptr);

// The closed-form estimate (s*a + 1)/(s + 1) for weights spread over [-a, a],
// capped at 1.
double analytic_utilization(double a, int bits);

const char* gamma_option_name(GammaOption g);
GammaOption gamma_option_from_name(const std::string& name);

}  // namespace snnzip
