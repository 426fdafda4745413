#pragma once

// Structured channel pruning: two per-kernel importance criteria scored on a
// mini-batch of recorded activity, a robustness statistic over repeated
// scoring batches, and the physical removal of low-scoring channels.
//
//   sca: mean absolute pre-reset membrane potential of the channel the kernel
//        drives, (1/(B*T)) * sum_{b,t} |U~|_1 over the feature map.
//   svs: rank of the time-averaged spike map — per sample, average the binary
//        spike maps over T, count singular values above epsilon, then average
//        the counts over the batch.  Defined only for spatial (conv) layers.
//
// A kernel whose spike map is active but low-rank carries repetitive
// information; svs discounts it where sca cannot.

#include <cstddef>
#include <string>
#include <vector>

#include "network.hpp"
#include "tensor.hpp"

namespace snnzip {

enum class PruneCriterion { sca, svs };

const char* criterion_name(PruneCriterion c);
PruneCriterion criterion_from_name(const std::string& name);

struct ImportanceReport {
    std::size_t layer_index = 0;  // index of the scored conv layer in the network
    std::string layer_name;
    PruneCriterion criterion = PruneCriterion::svs;
    std::size_t batch_size = 0;   // samples per scoring batch
    std::size_t time_steps = 0;
    std::vector<double> scores;                      // per output channel, mean over batches
    std::vector<std::vector<double>> batch_scores;   // raw per-batch vectors (for robustness stats)
};

// Per-channel scores for one scoring batch.  u_pre_history is [B, T, C, h, w]
// (or [B, T, C] for dense layers — sca only).
std::vector<double> score_sca(const Tensor& u_pre_history);

// spike_history is [B, T, C, h, w]; epsilon is the absolute significance
// threshold on singular values.  Non-spatial layers are unsupported.
std::vector<double> score_svs(const Tensor& spike_history, double epsilon);

// Mean pairwise cosine similarity of the report's per-batch score vectors:
// 2/(N(N-1)) * sum_{i<j} cos(v_i, v_j).  Needs >= 2 batches, all nonzero.
double avg_cos_similarity(const ImportanceReport& report);

struct PruneMask {
    struct LayerMask {
        std::size_t layer_index = 0;
        double ratio = 0.0;               // ratio actually applied
        std::vector<std::size_t> keep;    // kept output channels, ascending
        std::size_t total_channels = 0;
    };
    std::vector<LayerMask> layers;
};

// Keeps the top (1-r) fraction of channels by score.  The prune count is
// round-half-away-from-zero(r * n); ties keep the lower channel index; the
// last prunable layer's ratio is forced to 0 (its channels feed the
// classifier head and are never removed).
PruneMask build_mask(const std::vector<ImportanceReport>& reports, const std::vector<double>& ratios);

// Physically removes pruned output channels (kernel, bias, affine scale) and
// the matching input slices of the next weighted layer.  Outputs on any input
// equal the masked-but-unremoved network's.
void apply_mask(Network& net, const PruneMask& mask);

// Scores every prunable conv layer of the network over n_batches mini-batches
// drawn from the inputs with the given seed.  Histories are assembled from
// forward traces; reports retain per-batch vectors.
std::vector<ImportanceReport> score_network(const Network& net, const Tensor& inputs,
                                            std::size_t time_steps, PruneCriterion criterion,
                                            double epsilon, std::size_t batch_size,
                                            std::size_t n_batches, std::uint64_t seed);

}  // namespace snnzip
