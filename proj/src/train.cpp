#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace snnzip {

bool GradientSet::all_finite() const {
    for (const LayerGrads& g : layers)
        if (!g.weight.all_finite() || !g.bias.all_finite() || !g.scale.all_finite()) return false;
    return true;
}

LossResult loss(const ForwardTrace& trace, const std::vector<std::size_t>& labels, std::size_t n_classes) {
    const Tensor& r = trace.readout;
    if (r.rank() != 2 || r.dim(1) != n_classes)
        fail(Errc::invalid_argument, "loss: readout shape " + r.shape_str() + " does not match " +
                                         std::to_string(n_classes) + " classes");
    const std::size_t B = r.dim(0);
    if (labels.size() != B)
        fail(Errc::invalid_argument,
             "loss: batch of " + std::to_string(B) + " vs " + std::to_string(labels.size()) + " labels");

    LossResult out;
    out.grad_readout = Tensor({B, n_classes});
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] >= n_classes)
            fail(Errc::invalid_argument, "loss: label " + std::to_string(labels[b]) + " out of range");
        double mx = r.at(b, 0);
        for (std::size_t k = 1; k < n_classes; ++k) mx = std::max(mx, r.at(b, k));
        double sum = 0.0;
        for (std::size_t k = 0; k < n_classes; ++k) sum += std::exp(r.at(b, k) - mx);
        const double lse = mx + std::log(sum);
        out.value += (lse - r.at(b, labels[b])) * inv_b;
        for (std::size_t k = 0; k < n_classes; ++k) {
            const double p = std::exp(r.at(b, k) - mx) / sum;
            out.grad_readout.at(b, k) = (p - (k == labels[b] ? 1.0 : 0.0)) * inv_b;
        }
    }
    return out;
}

namespace {

// Conv backward: bias/scale/weight gradients plus the input adjoint, all in
// the same loop order as the forward pass (deterministic accumulation).
void conv_backward(const Layer& l, const Tensor& weight, const Tensor& input, const Tensor& raw,
                   const Tensor& adj_out, const FeatureShape& in_s, const FeatureShape& out_s,
                   GradientSet::LayerGrads& g, Tensor& adj_in) {
    const std::size_t B = input.dim(0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
            const double sc = l.scale[oc];
            for (std::size_t oy = 0; oy < out_s.height; ++oy)
                for (std::size_t ox = 0; ox < out_s.width; ++ox) {
                    const double a_out = adj_out.at(b, oc, oy, ox);
                    if (a_out == 0.0) continue;
                    g.bias[oc] += a_out;
                    if (l.affine) g.scale[oc] += a_out * raw.at(b, oc, oy, ox);
                    const double a = sc * a_out;
                    for (std::size_t ic = 0; ic < l.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                                      static_cast<std::ptrdiff_t>(l.padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_s.height)) continue;
                            for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                          static_cast<std::ptrdiff_t>(l.padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_s.width)) continue;
                                const std::size_t uy = static_cast<std::size_t>(iy);
                                const std::size_t ux = static_cast<std::size_t>(ix);
                                g.weight.at(oc, ic, ky, kx) += a * input.at(b, ic, uy, ux);
                                adj_in.at(b, ic, uy, ux) += weight.at(oc, ic, ky, kx) * a;
                            }
                        }
                }
        }
}

void dense_backward(const Layer& l, const Tensor& weight, const Tensor& input, const Tensor& adj_out,
                    GradientSet::LayerGrads& g, Tensor& adj_in) {
    const std::size_t B = input.dim(0);
    const std::size_t F = l.in_features;
    for (std::size_t b = 0; b < B; ++b) {
        const double* x = input.data() + b * F;
        double* ai = adj_in.data() + b * F;
        for (std::size_t o = 0; o < l.out_features; ++o) {
            const double a_out = adj_out.at(b, o);
            if (a_out == 0.0) continue;
            g.bias[o] += a_out;
            const double a = l.scale[o] * a_out;  // scale is 1 for dense layers
            const double* wr = weight.data() + o * F;
            double* gw = g.weight.data() + o * F;
            for (std::size_t f = 0; f < F; ++f) {
                gw[f] += a * x[f];
                ai[f] += wr[f] * a;
            }
        }
    }
}

Tensor zeros_like_batchshape(const FeatureShape& s, std::size_t B) {
    if (s.spatial) return Tensor({B, s.channels, s.height, s.width});
    return Tensor({B, s.channels});
}

}  // namespace

GradientSet backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_readout) {
    if (trace.network_version != net.version())
        fail(Errc::invalid_state, "backward: trace is stale (network weights changed since forward)");
    const std::size_t L = net.layer_count();
    const std::size_t T = trace.time_steps;
    const std::size_t B = trace.batch;
    if (grad_readout.rank() != 2 || grad_readout.dim(0) != B || grad_readout.dim(1) != net.n_classes())
        fail(Errc::invalid_argument, "backward: readout gradient shape " + grad_readout.shape_str());

    GradientSet grads;
    grads.layers.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;
        grads.layers[i].weight = Tensor(l.weight.shape());
        grads.layers[i].bias = Tensor(l.bias.shape());
        grads.layers[i].scale = Tensor(l.scale.shape());
    }

    const double inv_t = 1.0 / static_cast<double>(T);
    std::vector<Tensor> carried(L);  // per LIF layer: adjoint of u_pre at step t+1

    for (std::size_t t = T; t-- > 0;) {
        Tensor adj;  // adjoint flowing down through step t; empty above the top layer
        for (std::size_t i = L; i-- > 0;) {
            const Layer& l = net.layer(i);
            const LayerTrace& lt = trace.layers[i];
            switch (l.kind) {
                case LayerKind::lif: {
                    const Tensor& u = lt.u_pre[t];
                    const Tensor& s = lt.spikes[t];
                    Tensor adj_u_pre(u.shape());
                    const bool carry = carried[i].size() != 0;
                    for (std::size_t j = 0; j < u.size(); ++j) {
                        // Temporal path: u_pre[t+1] = leak * u_post[t] + x.
                        const double adj_u_post = carry ? l.lif.leak * carried[i][j] : 0.0;
                        double adj_spike = adj.size() ? adj[j] : 0.0;
                        if (!l.lif.detach_reset) adj_spike -= u[j] * adj_u_post;
                        adj_u_pre[j] = adj_spike * surrogate_grad(u[j], l.lif) + adj_u_post * (1.0 - s[j]);
                    }
                    if (i == L - 1)
                        for (std::size_t j = 0; j < u.size(); ++j) adj_u_pre[j] += grad_readout[j] * inv_t;
                    carried[i] = adj_u_pre;
                    adj = std::move(adj_u_pre);
                    break;
                }
                case LayerKind::maxpool: {
                    // Route each output adjoint to its recorded source element.
                    Tensor adj_in = zeros_like_batchshape(net.shape_before(i), B);
                    const std::vector<std::size_t>& am = lt.argmax[t];
                    for (std::size_t o = 0; o < adj.size(); ++o) adj_in[am[o]] += adj[o];
                    adj = std::move(adj_in);
                    break;
                }
                case LayerKind::conv2d: {
                    Tensor adj_in = zeros_like_batchshape(net.shape_before(i), B);
                    conv_backward(l, lt.effective_weight, lt.inputs[t], lt.raw[t], adj,
                                  net.shape_before(i), net.shape_before(i + 1), grads.layers[i], adj_in);
                    adj = std::move(adj_in);
                    break;
                }
                case LayerKind::dense: {
                    Tensor adj_in = zeros_like_batchshape(net.shape_before(i), B);
                    dense_backward(l, lt.effective_weight, lt.inputs[t], adj, grads.layers[i], adj_in);
                    adj = std::move(adj_in);
                    break;
                }
            }
        }
    }

    // Straight-through gate: quantized layers train their full-precision
    // masters only where the rescaled master sits inside the clamp range.
    for (std::size_t i = 0; i < L; ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted() || !l.quantizer.has_value()) continue;
        const double gamma = trace.layers[i].gamma;
        Tensor& gw = grads.layers[i].weight;
        for (std::size_t j = 0; j < gw.size(); ++j)
            if (std::abs(l.weight[j] / gamma) > 1.0) gw[j] = 0.0;
    }

    if (!grads.all_finite()) fail(Errc::training_failure, "backward: non-finite gradient");
    return grads;
}

void PhaseConfig::validate() const {
    if (!(lr > 0.0)) fail(Errc::invalid_argument, "train: learning rate must be positive");
    if (batch_size == 0) fail(Errc::invalid_argument, "train: batch size must be positive");
}

double cosine_lr(double lr0, std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs == 0) fail(Errc::invalid_argument, "cosine_lr: total epochs must be positive");
    const double x = 3.14159265358979323846 * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr0 * 0.5 * (1.0 + std::cos(x));
}

Optimizer::Optimizer(OptimizerKind kind, const Network& net, const PhaseConfig& cfg)
    : kind_(kind), cfg_(cfg) {
    slots_.resize(net.layer_count());
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;
        Slot& s = slots_[i];
        s.m_w = Tensor(l.weight.shape());
        s.m_b = Tensor(l.bias.shape());
        s.m_s = Tensor(l.scale.shape());
        if (kind_ == OptimizerKind::adam) {
            s.v_w = Tensor(l.weight.shape());
            s.v_b = Tensor(l.bias.shape());
            s.v_s = Tensor(l.scale.shape());
        }
    }
}

void Optimizer::step(Network& net, const GradientSet& grads, double lr) {
    if (grads.layers.size() != net.layer_count())
        fail(Errc::invalid_argument, "optimizer: gradient set does not match the network");
    if (kind_ == OptimizerKind::adam) ++t_;
    const double bc1 = kind_ == OptimizerKind::adam ? 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_)) : 1.0;
    const double bc2 = kind_ == OptimizerKind::adam ? 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_)) : 1.0;

    auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        if (kind_ == OptimizerKind::sgd) {
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = cfg_.momentum * m[j] + g[j];
                p[j] -= lr * m[j];
            }
        } else {
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = cfg_.adam_beta1 * m[j] + (1.0 - cfg_.adam_beta1) * g[j];
                v[j] = cfg_.adam_beta2 * v[j] + (1.0 - cfg_.adam_beta2) * g[j] * g[j];
                const double mh = m[j] / bc1, vh = v[j] / bc2;
                p[j] -= lr * mh / (std::sqrt(vh) + cfg_.adam_eps);
            }
        }
    };

    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!net.layer(i).weighted()) continue;
        Layer& l = net.layer_mut(i);
        Slot& s = slots_[i];
        update(l.weight, grads.layers[i].weight, s.m_w, s.v_w);
        update(l.bias, grads.layers[i].bias, s.m_b, s.v_b);
        if (l.affine) update(l.scale, grads.layers[i].scale, s.m_s, s.v_s);
    }
}

std::string EpochRecord::line() const {
    std::ostringstream os;
    os << "epoch=" << epoch << " loss=" << loss << " acc=" << accuracy << " lr=" << lr;
    return os.str();
}

std::vector<EpochRecord> train_phase(Network& net, const Tensor& inputs,
                                     const std::vector<std::size_t>& labels, const PhaseConfig& cfg,
                                     std::size_t time_steps, std::uint64_t seed, const LogSink& log) {
    if (cfg.epochs == 0) return {};
    cfg.validate();
    const std::size_t n = inputs.dim(0);
    if (n == 0 || labels.size() != n)
        fail(Errc::invalid_argument, "train: dataset of " + std::to_string(n) + " inputs vs " +
                                         std::to_string(labels.size()) + " labels");
    const std::size_t sample_vol = inputs.size() / n;

    Optimizer opt(cfg.optimizer, net, cfg);
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<EpochRecord> records;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, n - start);
            Tensor batch({B, inputs.dim(1), inputs.dim(2), inputs.dim(3)});
            std::vector<std::size_t> batch_labels(B);
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t src = order[start + b];
                std::copy(inputs.data() + src * sample_vol, inputs.data() + (src + 1) * sample_vol,
                          batch.data() + b * sample_vol);
                batch_labels[b] = labels[src];
            }

            ForwardTrace trace = net.forward(batch, time_steps);
            LossResult lr_res = loss(trace, batch_labels, net.n_classes());
            if (!std::isfinite(lr_res.value))
                fail(Errc::training_failure, "epoch " + std::to_string(epoch) + ": loss diverged");
            GradientSet grads;
            try {
                grads = backward(net, trace, lr_res.grad_readout);
            } catch (const Error& e) {
                if (e.code() == Errc::training_failure)
                    fail(Errc::training_failure, "epoch " + std::to_string(epoch) + ": " + e.what());
                throw;
            }
            opt.step(net, grads, lr);

            loss_sum += lr_res.value * static_cast<double>(B);
            for (std::size_t b = 0; b < B; ++b) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < net.n_classes(); ++k)
                    if (trace.readout.at(b, k) > trace.readout.at(b, best)) best = k;
                if (best == batch_labels[b]) ++correct;
            }
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(n),
                        static_cast<double>(correct) / static_cast<double>(n), lr};
        if (log) log(rec);
        records.push_back(rec);
    }
    return records;
}

std::vector<EpochRecord> train_quantized(Network& net, const Tensor& inputs,
                                         const std::vector<std::size_t>& labels, const PhaseConfig& cfg,
                                         std::size_t time_steps, std::uint64_t seed, const LogSink& log) {
    if (cfg.epochs == 0) return {};
    net.unfreeze_quantizers();
    return train_phase(net, inputs, labels, cfg, time_steps, seed, log);
}

std::vector<EpochRecord> finetune(Network& net, const Tensor& inputs, const std::vector<std::size_t>& labels,
                                  const PhaseConfig& cfg, std::size_t time_steps, std::uint64_t seed,
                                  const LogSink& log) {
    if (cfg.epochs == 0) return {};
    net.unfreeze_quantizers();
    return train_phase(net, inputs, labels, cfg, time_steps, seed, log);
}

}  // namespace snnzip
