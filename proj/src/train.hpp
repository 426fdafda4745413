#pragma once

// Training for the unrolled spiking graph: softmax cross-entropy on the mean
// output potential, reverse-mode gradient accumulation through space and time,
// SGD-with-momentum / Adam optimizers under a cosine learning-rate schedule,
// and the quantized-training / fine-tuning phase loops.
//
// The backward pass mirrors the forward recurrence exactly.  Walking steps
// t = T-1 .. 0 and layers top to bottom, each LIF's membrane adjoint collects
//   (a) the spatial path: spike adjoint from the layer above, through the
//       triangular surrogate slope,
//   (b) the temporal path: leak * (1 - S[t]) * adjoint of the next step's
//       membrane (hard reset scales the carried potential), and
//   (c) the reset-gate path: the spike also gates u_post = u_pre * (1 - S),
//       contributing -u_pre * (next-step adjoint) through the surrogate;
//       dropped when the layer's detach_reset is set.
// Weighted-layer gradients accumulate over all steps; quantized layers route
// their weight gradient to the full-precision masters through the
// straight-through gate (zero where |w/gamma| > 1).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "network.hpp"
#include "tensor.hpp"

namespace snnzip {

struct GradientSet {
    struct LayerGrads {
        Tensor weight, bias, scale;  // empty for non-weighted layers
    };
    std::vector<LayerGrads> layers;

    bool all_finite() const;
};

struct LossResult {
    double value = 0.0;
    Tensor grad_readout;  // [B, n_classes], (softmax - one_hot) / B
};

// Mean cross-entropy over the batch on softmax(readout), with its analytic
// gradient.  Labels are class indices.
LossResult loss(const ForwardTrace& trace, const std::vector<std::size_t>& labels, std::size_t n_classes);

// Gradients of the scalar seeded by grad_readout with respect to every
// trainable tensor.  The trace must come from this network at its current
// version (stale traces are an invalid-state error).
GradientSet backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_readout);

enum class OptimizerKind { sgd, adam };

struct PhaseConfig {
    std::size_t epochs = 1;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double lr = 0.1;
    double momentum = 0.9;                                       // sgd
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;  // adam
    std::size_t batch_size = 32;

    void validate() const;
};

// lr0 * 0.5 * (1 + cos(pi * epoch / total)).
double cosine_lr(double lr0, std::size_t epoch, std::size_t total_epochs);

class Optimizer {
public:
    Optimizer(OptimizerKind kind, const Network& net, const PhaseConfig& cfg);
    void step(Network& net, const GradientSet& grads, double lr);

private:
    struct Slot {
        Tensor m_w, m_b, m_s;  // momentum / first moment
        Tensor v_w, v_b, v_s;  // second moment (adam)
    };
    OptimizerKind kind_;
    PhaseConfig cfg_;
    std::vector<Slot> slots_;
    std::uint64_t t_ = 0;  // adam step counter
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double lr = 0.0;

    std::string line() const;  // "epoch=0 loss=1.3863 acc=0.2500 lr=0.1"
};

using LogSink = std::function<void(const EpochRecord&)>;

// One optimization phase over the dataset: shuffled mini-batches, cosine lr,
// forward/loss/backward/step, per-epoch loss and training accuracy.  Raises a
// training-failure error naming the epoch if the loss or a gradient goes
// non-finite.  epochs == 0 is an exact no-op.
std::vector<EpochRecord> train_phase(Network& net, const Tensor& inputs,
                                     const std::vector<std::size_t>& labels, const PhaseConfig& cfg,
                                     std::size_t time_steps, std::uint64_t seed,
                                     const LogSink& log = nullptr);

// Phase-1 training with quantizers live (fake-quant forward, straight-through
// backward).  Unfreezes any stored-grid quantizers first.
std::vector<EpochRecord> train_quantized(Network& net, const Tensor& inputs,
                                         const std::vector<std::size_t>& labels, const PhaseConfig& cfg,
                                         std::size_t time_steps, std::uint64_t seed,
                                         const LogSink& log = nullptr);

// Post-pruning recovery phase; same loop under the fine-tune settings.
std::vector<EpochRecord> finetune(Network& net, const Tensor& inputs,
                                  const std::vector<std::size_t>& labels, const PhaseConfig& cfg,
                                  std::size_t time_steps, std::uint64_t seed,
                                  const LogSink& log = nullptr);

}  // namespace snnzip
