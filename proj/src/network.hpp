#pragma once

// Layer graph and the time-unrolled forward pass.  Supported layers: 2-D
// convolution and dense (both optionally carrying a quantizer and, for convs,
// a learnable per-channel affine scale+bias standing in for batch norm), max
// pooling over binary spike maps, and LIF activations.  The network must end
// with a LIF whose feature count equals the class count; the classifier
// readout is the mean over time of that layer's pre-reset membrane potential.
//
// Input coding is direct: the real-valued image is presented as the input
// current at every time step; every later layer consumes binary spikes.
//
// The first and the last weighted layer always run at full precision; hidden
// weighted layers may carry a QuantizerSpec, in which case forward uses the
// fake-quantized weights (full-precision masters stay in place for training).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neuron.hpp"
#include "quantize.hpp"
#include "tensor.hpp"

namespace snnzip {

enum class LayerKind { conv2d, dense, maxpool, lif };

const char* layer_kind_name(LayerKind k);

struct FeatureShape {
    std::size_t channels = 0, height = 0, width = 0;
    bool spatial = false;  // false once flattened into features

    std::size_t volume() const { return spatial ? channels * height * width : channels; }
    std::string str() const;
};

// Architecture-level description of one layer (no parameters yet).  Unused
// fields for a given kind are ignored.
struct LayerDef {
    LayerKind kind = LayerKind::lif;
    std::string name;  // optional; defaulted to kind+index

    // conv2d
    std::size_t out_channels = 0, kernel = 3, stride = 1, padding = 1;
    bool affine = true;
    // dense
    std::size_t out_features = 0;
    // maxpool
    std::size_t window = 2;
    // lif
    LifParams lif;

    std::optional<QuantizerSpec> quantizer;  // weighted layers only
    bool prunable = false;                   // conv2d only
    double prune_ratio = 0.0;
};

struct Architecture {
    FeatureShape input;       // spatial [C, H, W]
    std::size_t n_classes = 0;
    std::vector<LayerDef> layers;
};

// One layer with its learned parameters.  Weighted layers hold weight/bias
// and, when affine, a per-channel scale (fixed at 1 otherwise):
//   output = scale ⊙ linear(weight, input) + bias
struct Layer {
    LayerKind kind = LayerKind::lif;
    std::string name;

    std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, padding = 0;
    bool affine = false;
    std::size_t in_features = 0, out_features = 0;
    std::size_t window = 0;
    LifParams lif;

    Tensor weight;  // conv [oc, ic, k, k]; dense [out, in]
    Tensor bias;    // [oc] / [out]
    Tensor scale;   // [oc], meaningful when affine

    std::optional<QuantizerSpec> quantizer;
    bool quantizer_frozen = false;  // masters already on the storage grid; gamma fixed
    double frozen_gamma = 0.0;
    bool prunable = false;
    double prune_ratio = 0.0;

    bool weighted() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
    std::size_t output_channels() const { return kind == LayerKind::dense ? out_features : out_channels; }
};

struct LayerTrace {
    // Weighted layers: input per step, pre-affine output per step (for the
    // scale gradient), and the weights actually used in the pass.
    std::vector<Tensor> inputs;
    std::vector<Tensor> raw;
    Tensor effective_weight;
    double gamma = 1.0;
    bool rescaled = false;

    // LIF layers.
    std::vector<Tensor> u_pre;
    std::vector<Tensor> spikes;

    // MaxPool: per step, the flat input index each output element drew from
    // (first maximum in row-major window order).
    std::vector<std::vector<std::size_t>> argmax;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Tensor readout;  // [B, n_classes], mean over steps of the final pre-reset potential
    std::size_t time_steps = 0;
    std::size_t batch = 0;
    std::uint64_t network_version = 0;
};

class Network {
public:
    // Validates the architecture, propagates shapes, and initializes weights
    // (Kaiming-style fan-in normal, bias 0, scale 1) from the seed.
    static Network build(const Architecture& arch, std::uint64_t seed);

    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_[i]; }

    // Mutable access bumps the version so stale traces are detectable.
    Layer& layer_mut(std::size_t i) {
        ++version_;
        return layers_[i];
    }
    void touch() { ++version_; }

    const FeatureShape& input_shape() const { return input_shape_; }
    std::size_t n_classes() const { return n_classes_; }
    std::uint64_t version() const { return version_; }

    // Feature shape entering layer i (i == layer_count() gives the output shape).
    FeatureShape shape_before(std::size_t i) const;

    // Weights as used by forward: fake-quantized for live quantized layers,
    // masters for everything else.  gamma_out/rescaled_out may be null.
    Tensor effective_weight(std::size_t i, double* gamma_out = nullptr, bool* rescaled_out = nullptr) const;

    ForwardTrace forward(const Tensor& input, std::size_t time_steps) const;

    // Rounds storage: full-precision tensors pass through fp32; quantized
    // masters are replaced by their dequantized codes with gamma frozen.
    // After this, forward uses quantized masters directly.  Called by save.
    void canonicalize_for_storage();

    // Re-enables live-gamma fake quantization (training on a loaded model).
    void unfreeze_quantizers();

    // Total trainable parameter count (weights + biases + affine scales).
    std::size_t parameter_count() const;

    // Construction from deserialized parts (checkpoint loader).
    static Network assemble(FeatureShape input, std::size_t n_classes, std::vector<Layer> layers);

    // Swaps in a structurally edited layer stack (channel removal), re-runs
    // validation and shape propagation, and invalidates outstanding traces.
    void replace_layers(std::vector<Layer> layers);

private:
    Network() = default;

    std::vector<Layer> layers_;
    std::vector<FeatureShape> shapes_;  // shapes_[i] = shape entering layer i; size layer_count()+1
    FeatureShape input_shape_;
    std::size_t n_classes_ = 0;
    std::uint64_t version_ = 0;
};

// Accuracy of argmax(readout) against labels.
double evaluate_accuracy(const Network& net, const Tensor& inputs, const std::vector<std::size_t>& labels,
                         std::size_t time_steps, std::size_t batch_size);

}  // namespace snnzip
