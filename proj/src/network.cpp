#include "network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace snnzip {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::dense: return "dense";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::lif: return "lif";
    }
    return "?";
}

std::string FeatureShape::str() const {
    std::ostringstream os;
    if (spatial)
        os << "[" << channels << ", " << height << ", " << width << "]";
    else
        os << "[" << channels << "]";
    return os.str();
}

namespace {

[[noreturn]] void layer_fail(std::size_t index, const std::string& what) {
    fail(Errc::invalid_argument, "layer " + std::to_string(index) + ": " + what);
}

// Propagates the feature shape through every layer, filling in the inferred
// input sizes, and enforces the structural rules.
std::vector<FeatureShape> compute_shapes(const FeatureShape& input, std::vector<Layer>& layers,
                                         std::size_t n_classes) {
    if (!input.spatial || input.channels == 0 || input.height == 0 || input.width == 0)
        fail(Errc::invalid_argument, "network: input shape must be spatial with positive dims, got " + input.str());
    if (layers.empty()) fail(Errc::invalid_argument, "network: no layers");

    std::vector<FeatureShape> shapes;
    shapes.push_back(input);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Layer& l = layers[i];
        FeatureShape s = shapes.back();
        switch (l.kind) {
            case LayerKind::conv2d: {
                if (!s.spatial) layer_fail(i, "conv2d after flatten (input " + s.str() + ")");
                if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0)
                    layer_fail(i, "conv2d needs positive out_channels/kernel/stride");
                l.in_channels = s.channels;
                const std::size_t padded_h = s.height + 2 * l.padding;
                const std::size_t padded_w = s.width + 2 * l.padding;
                if (padded_h < l.kernel || padded_w < l.kernel)
                    layer_fail(i, "kernel " + std::to_string(l.kernel) + " exceeds padded input " + s.str());
                s.channels = l.out_channels;
                s.height = (padded_h - l.kernel) / l.stride + 1;
                s.width = (padded_w - l.kernel) / l.stride + 1;
                break;
            }
            case LayerKind::dense: {
                if (l.out_features == 0) layer_fail(i, "dense needs positive out_features");
                l.in_features = s.volume();
                s = FeatureShape{l.out_features, 0, 0, false};
                break;
            }
            case LayerKind::maxpool: {
                if (!s.spatial) layer_fail(i, "maxpool after flatten");
                if (l.window == 0) layer_fail(i, "maxpool needs a positive window");
                if (s.height % l.window != 0 || s.width % l.window != 0)
                    layer_fail(i, "pool window " + std::to_string(l.window) + " must tile input " + s.str() +
                                      " exactly");
                s.height /= l.window;
                s.width /= l.window;
                break;
            }
            case LayerKind::lif:
                l.lif.validate();
                break;
        }
        shapes.push_back(s);
    }

    if (layers.back().kind != LayerKind::lif)
        fail(Errc::invalid_argument, "network: final layer must be a LIF activation (readout)");
    if (shapes.back().volume() != n_classes)
        fail(Errc::invalid_argument, "network: output volume " + std::to_string(shapes.back().volume()) +
                                         " != class count " + std::to_string(n_classes));

    // Precision convention: first and last weighted layer stay full precision.
    std::size_t first_w = layers.size(), last_w = layers.size();
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].weighted()) {
            if (first_w == layers.size()) first_w = i;
            last_w = i;
        }
    if (first_w == layers.size()) fail(Errc::invalid_argument, "network: no weighted layers");
    for (std::size_t i : {first_w, last_w})
        if (layers[i].quantizer.has_value())
            layer_fail(i, "first/last weighted layer is kept full precision; remove its quantizer");

    for (std::size_t i = 0; i < layers.size(); ++i) {
        Layer& l = layers[i];
        if (l.quantizer.has_value()) {
            if (!l.weighted()) layer_fail(i, "quantizer on a non-weighted layer");
            l.quantizer->validate();
        }
        if (l.prunable) {
            if (l.kind != LayerKind::conv2d) layer_fail(i, "only conv2d layers are prunable");
            // Scoring needs the LIF this conv drives; require one downstream
            // before the next weighted layer.
            bool found = false;
            for (std::size_t j = i + 1; j < layers.size() && !layers[j].weighted(); ++j)
                if (layers[j].kind == LayerKind::lif) {
                    found = true;
                    break;
                }
            if (!found) layer_fail(i, "prunable conv2d has no LIF activation before the next weighted layer");
        }
        if (!(l.prune_ratio >= 0.0 && l.prune_ratio < 1.0))
            layer_fail(i, "prune ratio must lie in [0, 1), got " + std::to_string(l.prune_ratio));
    }
    return shapes;
}

void alloc_parameters(Layer& l) {
    if (l.kind == LayerKind::conv2d) {
        l.weight = Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel});
        l.bias = Tensor({l.out_channels});
        l.scale = Tensor({l.out_channels});
        l.scale.fill(1.0);
    } else if (l.kind == LayerKind::dense) {
        l.weight = Tensor({l.out_features, l.in_features});
        l.bias = Tensor({l.out_features});
        l.scale = Tensor({l.out_features});
        l.scale.fill(1.0);
        l.affine = false;  // affine stand-in for batch norm applies to convs
    }
}

}  // namespace

Network Network::build(const Architecture& arch, std::uint64_t seed) {
    Network net;
    net.input_shape_ = arch.input;
    net.input_shape_.spatial = true;
    net.n_classes_ = arch.n_classes;

    std::size_t counters[4] = {0, 0, 0, 0};
    for (const LayerDef& d : arch.layers) {
        Layer l;
        l.kind = d.kind;
        l.out_channels = d.out_channels;
        l.kernel = d.kernel;
        l.stride = d.stride;
        l.padding = d.padding;
        l.affine = d.kind == LayerKind::conv2d && d.affine;
        l.out_features = d.out_features;
        l.window = d.window;
        l.lif = d.lif;
        l.quantizer = d.quantizer;
        l.prunable = d.prunable;
        l.prune_ratio = d.prune_ratio;
        std::size_t& c = counters[static_cast<int>(d.kind)];
        ++c;
        l.name = d.name.empty() ? std::string(layer_kind_name(d.kind)) + std::to_string(c) : d.name;
        net.layers_.push_back(std::move(l));
    }

    net.shapes_ = compute_shapes(net.input_shape_, net.layers_, net.n_classes_);

    Rng rng(seed);
    for (Layer& l : net.layers_) {
        if (!l.weighted()) continue;
        alloc_parameters(l);
        const std::size_t fan_in =
            l.kind == LayerKind::conv2d ? l.in_channels * l.kernel * l.kernel : l.in_features;
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = rng.normal(0.0, stddev);
    }
    net.version_ = 1;
    return net;
}

Network Network::assemble(FeatureShape input, std::size_t n_classes, std::vector<Layer> layers) {
    Network net;
    net.input_shape_ = input;
    net.input_shape_.spatial = true;
    net.n_classes_ = n_classes;
    net.layers_ = std::move(layers);
    net.shapes_ = compute_shapes(net.input_shape_, net.layers_, net.n_classes_);
    for (Layer& l : net.layers_) {
        if (!l.weighted()) continue;
        const Tensor want_w = l.kind == LayerKind::conv2d
                                  ? Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel})
                                  : Tensor({l.out_features, l.in_features});
        if (l.weight.shape() != want_w.shape())
            fail(Errc::invalid_argument, "network: layer '" + l.name + "' weight shape " + l.weight.shape_str() +
                                             " does not match its definition " + want_w.shape_str());
        const std::size_t oc = l.output_channels();
        if (l.bias.size() != oc || l.scale.size() != oc)
            fail(Errc::invalid_argument, "network: layer '" + l.name + "' bias/scale size mismatch");
    }
    net.version_ = 1;
    return net;
}

void Network::replace_layers(std::vector<Layer> layers) {
    Network next = assemble(input_shape_, n_classes_, std::move(layers));
    layers_ = std::move(next.layers_);
    shapes_ = std::move(next.shapes_);
    ++version_;
}

FeatureShape Network::shape_before(std::size_t i) const {
    if (i >= shapes_.size()) fail(Errc::invalid_argument, "network: layer index out of range");
    return shapes_[i];
}

Tensor Network::effective_weight(std::size_t i, double* gamma_out, bool* rescaled_out) const {
    const Layer& l = layers_[i];
    if (!l.weighted()) fail(Errc::invalid_argument, "effective_weight: layer " + std::to_string(i) + " has no weights");
    double gamma = 1.0;
    bool rescaled = false;
    Tensor w;
    if (!l.quantizer.has_value()) {
        w = l.weight;
    } else if (l.quantizer_frozen) {
        // Masters already sit on the storage grid; reuse them as-is.
        w = l.weight;
        gamma = l.frozen_gamma;
        rescaled = l.quantizer->gamma != GammaOption::none;
    } else {
        QuantizeResult r = fake_quantize(l.weight, *l.quantizer);
        w = std::move(r.dequant);
        gamma = r.gamma;
        rescaled = l.quantizer->gamma != GammaOption::none;
    }
    if (gamma_out) *gamma_out = gamma;
    if (rescaled_out) *rescaled_out = rescaled;
    return w;
}

namespace {

// output = scale_c * conv(weight, input) + bias_c, valid-with-zero-padding.
void conv_forward(const Layer& l, const Tensor& weight, const Tensor& input, Tensor& raw, Tensor& out,
                  std::size_t B, const FeatureShape& in_s, const FeatureShape& out_s) {
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
            const double sc = l.scale[oc], bi = l.bias[oc];
            for (std::size_t oy = 0; oy < out_s.height; ++oy)
                for (std::size_t ox = 0; ox < out_s.width; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ic = 0; ic < l.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                                      static_cast<std::ptrdiff_t>(l.padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_s.height)) continue;
                            for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                          static_cast<std::ptrdiff_t>(l.padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_s.width)) continue;
                                acc += weight.at(oc, ic, ky, kx) *
                                       input.at(b, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                        }
                    raw.at(b, oc, oy, ox) = acc;
                    out.at(b, oc, oy, ox) = sc * acc + bi;
                }
        }
}

void dense_forward(const Layer& l, const Tensor& weight, const Tensor& input, Tensor& raw, Tensor& out,
                   std::size_t B) {
    const std::size_t F = l.in_features;
    for (std::size_t b = 0; b < B; ++b) {
        const double* x = input.data() + b * F;
        for (std::size_t o = 0; o < l.out_features; ++o) {
            const double* wr = weight.data() + o * F;
            double acc = 0.0;
            for (std::size_t f = 0; f < F; ++f) acc += wr[f] * x[f];
            raw.at(b, o) = acc;
            out.at(b, o) = l.scale[o] * acc + l.bias[o];
        }
    }
}

void pool_forward(const Layer& l, const Tensor& input, Tensor& out, std::vector<std::size_t>& argmax,
                  std::size_t B, const FeatureShape& in_s, const FeatureShape& out_s) {
    argmax.resize(B * out_s.channels * out_s.height * out_s.width);
    std::size_t o = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < out_s.channels; ++c)
            for (std::size_t oy = 0; oy < out_s.height; ++oy)
                for (std::size_t ox = 0; ox < out_s.width; ++ox, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t wy = 0; wy < l.window; ++wy)
                        for (std::size_t wx = 0; wx < l.window; ++wx) {
                            const std::size_t iy = oy * l.window + wy, ix = ox * l.window + wx;
                            const std::size_t idx = ((b * in_s.channels + c) * in_s.height + iy) * in_s.width + ix;
                            const double v = input[idx];
                            if (v > best) {  // strict: first maximum wins
                                best = v;
                                best_idx = idx;
                            }
                        }
                    out.at(b, c, oy, ox) = best;
                    argmax[o] = best_idx;
                }
}

Tensor shaped_batch(const FeatureShape& s, std::size_t B) {
    if (s.spatial) return Tensor({B, s.channels, s.height, s.width});
    return Tensor({B, s.channels});
}

}  // namespace

ForwardTrace Network::forward(const Tensor& input, std::size_t time_steps) const {
    if (time_steps == 0) fail(Errc::invalid_argument, "forward: time_steps must be >= 1");
    if (input.rank() != 4)
        fail(Errc::invalid_argument, "forward: input must be [batch, channels, height, width], got " + input.shape_str());
    if (!input.all_finite()) fail(Errc::invalid_argument, "forward: non-finite input");
    const std::size_t B = input.dim(0);
    if (input.dim(1) != input_shape_.channels || input.dim(2) != input_shape_.height ||
        input.dim(3) != input_shape_.width)
        fail(Errc::invalid_argument,
             "forward: input shape " + input.shape_str() + " does not match network input " + input_shape_.str());
    if (B == 0) fail(Errc::invalid_argument, "forward: empty batch");

    ForwardTrace trace;
    trace.layers.resize(layers_.size());
    trace.time_steps = time_steps;
    trace.batch = B;
    trace.network_version = version_;

    // Weights are constant across the unrolled steps; fetch each layer's
    // effective (possibly fake-quantized) tensor once.
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].weighted())
            trace.layers[i].effective_weight =
                effective_weight(i, &trace.layers[i].gamma, &trace.layers[i].rescaled);

    std::vector<Tensor> lif_state(layers_.size());  // u_post carried between steps
    trace.readout = Tensor({B, n_classes_});

    for (std::size_t t = 0; t < time_steps; ++t) {
        Tensor cur = input;  // direct coding: the image is the current at every step
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Layer& l = layers_[i];
            LayerTrace& lt = trace.layers[i];
            const FeatureShape in_s = shapes_[i], out_s = shapes_[i + 1];
            switch (l.kind) {
                case LayerKind::conv2d: {
                    Tensor raw = shaped_batch(out_s, B), out = shaped_batch(out_s, B);
                    conv_forward(l, lt.effective_weight, cur, raw, out, B, in_s, out_s);
                    lt.inputs.push_back(std::move(cur));
                    lt.raw.push_back(std::move(raw));
                    cur = std::move(out);
                    break;
                }
                case LayerKind::dense: {
                    Tensor raw = shaped_batch(out_s, B), out = shaped_batch(out_s, B);
                    dense_forward(l, lt.effective_weight, cur, raw, out, B);
                    lt.inputs.push_back(std::move(cur));
                    lt.raw.push_back(std::move(raw));
                    cur = std::move(out);
                    break;
                }
                case LayerKind::maxpool: {
                    Tensor out = shaped_batch(out_s, B);
                    lt.argmax.emplace_back();
                    pool_forward(l, cur, out, lt.argmax.back(), B, in_s, out_s);
                    cur = std::move(out);
                    break;
                }
                case LayerKind::lif: {
                    if (lif_state[i].size() == 0) lif_state[i] = Tensor(cur.shape());
                    LifStepResult r = lif_step(lif_state[i], cur, l.lif);
                    lif_state[i] = std::move(r.u_post);
                    lt.u_pre.push_back(std::move(r.u_pre));
                    cur = r.spikes;  // copy: also kept in the trace
                    lt.spikes.push_back(std::move(r.spikes));
                    break;
                }
            }
        }
        // Accumulate the readout from the final LIF's pre-reset potential.
        const std::vector<Tensor>& u = trace.layers.back().u_pre;
        const Tensor& u_t = u.back();
        for (std::size_t j = 0; j < B * n_classes_; ++j) trace.readout[j] += u_t[j];
    }
    const double inv_t = 1.0 / static_cast<double>(time_steps);
    for (std::size_t j = 0; j < trace.readout.size(); ++j) trace.readout[j] *= inv_t;
    return trace;
}

void Network::canonicalize_for_storage() {
    for (Layer& l : layers_) {
        if (!l.weighted()) continue;
        if (l.quantizer.has_value() && !l.quantizer_frozen) {
            QuantizeResult r = fake_quantize(l.weight, *l.quantizer);
            l.weight = std::move(r.dequant);
            l.frozen_gamma = r.gamma;
            l.quantizer_frozen = true;
        } else if (!l.quantizer.has_value()) {
            for (std::size_t i = 0; i < l.weight.size(); ++i)
                l.weight[i] = static_cast<double>(static_cast<float>(l.weight[i]));
        }
        for (std::size_t i = 0; i < l.bias.size(); ++i)
            l.bias[i] = static_cast<double>(static_cast<float>(l.bias[i]));
        for (std::size_t i = 0; i < l.scale.size(); ++i)
            l.scale[i] = static_cast<double>(static_cast<float>(l.scale[i]));
    }
    ++version_;
}

void Network::unfreeze_quantizers() {
    for (Layer& l : layers_) l.quantizer_frozen = false;
    ++version_;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) {
        if (!l.weighted()) continue;
        n += l.weight.size() + l.bias.size() + (l.affine ? l.scale.size() : 0);
    }
    return n;
}

double evaluate_accuracy(const Network& net, const Tensor& inputs, const std::vector<std::size_t>& labels,
                         std::size_t time_steps, std::size_t batch_size) {
    const std::size_t n = inputs.dim(0);
    if (labels.size() != n)
        fail(Errc::invalid_argument, "evaluate: " + std::to_string(n) + " inputs vs " +
                                         std::to_string(labels.size()) + " labels");
    if (n == 0) fail(Errc::invalid_argument, "evaluate: empty dataset");
    const std::size_t sample_vol = inputs.size() / n;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t B = std::min(batch_size, n - start);
        Tensor batch({B, inputs.dim(1), inputs.dim(2), inputs.dim(3)});
        std::copy(inputs.data() + start * sample_vol, inputs.data() + (start + B) * sample_vol, batch.data());
        ForwardTrace trace = net.forward(batch, time_steps);
        for (std::size_t b = 0; b < B; ++b) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < net.n_classes(); ++k)
                if (trace.readout.at(b, k) > trace.readout.at(b, best)) best = k;
            if (best == labels[start + b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace snnzip
