#pragma once

// Storage and operation accounting.
//
// Model size sums exact bit counts: quantized layers store their weight
// tensor at the quantizer's width, everything else (full-precision weights,
// biases, affine scales) at 32 bits.  MB means 2^20 bytes.
//
// Synaptic operations (SOPs) follow this toolkit's convention, stated in
// every report: each spike entering a weighted layer costs one accumulate per
// connection it touches (its fan-out), summed over time steps.  The first
// weighted layer receives the analog image under direct coding — those are
// multiply-accumulates, not spike-driven adds — so it is excluded, as is
// pooling.

#include <cstdint>
#include <string>
#include <vector>

#include "network.hpp"

namespace snnzip {

struct SizeReport {
    struct LayerEntry {
        std::string name;
        std::string kind;
        std::uint64_t quantized_params = 0;  // weight entries stored at `bits`
        int bits = 32;                       // storage width of the weight tensor
        std::uint64_t full_precision_params = 0;  // params stored at 32 bits
        std::uint64_t total_bits = 0;
    };
    std::vector<LayerEntry> layers;
    std::uint64_t quantized_params = 0;
    std::uint64_t full_precision_params = 0;
    std::uint64_t total_bits = 0;
    std::uint64_t total_bytes = 0;  // ceil(bits / 8)
    double megabytes = 0.0;         // bytes / 2^20
};

SizeReport model_size(const Network& net);

struct SopReport {
    struct LayerEntry {
        std::string name;
        std::uint64_t sops = 0;
    };
    std::vector<LayerEntry> layers;
    std::uint64_t total = 0;
    std::size_t time_steps = 0;
    std::size_t batch = 0;
};

// Counts under the convention above for one recorded forward pass.
SopReport count_sops(const ForwardTrace& trace, const Network& net);

}  // namespace snnzip
