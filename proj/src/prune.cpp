#include "prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace snnzip {

const char* criterion_name(PruneCriterion c) { return c == PruneCriterion::sca ? "sca" : "svs"; }

PruneCriterion criterion_from_name(const std::string& name) {
    if (name == "sca") return PruneCriterion::sca;
    if (name == "svs") return PruneCriterion::svs;
    fail(Errc::parse, "prune: unknown criterion '" + name + "' (expected sca or svs)");
}

std::vector<double> score_sca(const Tensor& u_pre_history) {
    const std::size_t rank = u_pre_history.rank();
    if (rank != 5 && rank != 3)
        fail(Errc::invalid_argument,
             "score_sca: history must be [B, T, C, h, w] or [B, T, C], got " + u_pre_history.shape_str());
    const std::size_t B = u_pre_history.dim(0), T = u_pre_history.dim(1), C = u_pre_history.dim(2);
    if (B == 0 || T == 0 || C == 0) fail(Errc::invalid_argument, "score_sca: empty history");
    const std::size_t map = rank == 5 ? u_pre_history.dim(3) * u_pre_history.dim(4) : 1;

    std::vector<double> scores(C, 0.0);
    const double* p = u_pre_history.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < map; ++j) s += std::abs(*p++);
                scores[c] += s;
            }
    const double norm = 1.0 / static_cast<double>(B * T);
    for (double& s : scores) s *= norm;
    return scores;
}

std::vector<double> score_svs(const Tensor& spike_history, double epsilon) {
    if (spike_history.rank() != 5)
        fail(Errc::unsupported_layer,
             "score_svs: rank statistics need a spatial [B, T, C, h, w] history; dense layers are not "
             "prunable (got " +
                 spike_history.shape_str() + ")");
    if (!(epsilon > 0.0))
        fail(Errc::invalid_argument, "score_svs: epsilon must be positive, got " + std::to_string(epsilon));
    const std::size_t B = spike_history.dim(0), T = spike_history.dim(1), C = spike_history.dim(2);
    const std::size_t h = spike_history.dim(3), w = spike_history.dim(4);
    if (B == 0 || T == 0 || C == 0 || h == 0 || w == 0)
        fail(Errc::invalid_argument, "score_svs: empty history");

    std::vector<double> scores(C, 0.0);
    std::vector<double> avg(h * w);
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            std::fill(avg.begin(), avg.end(), 0.0);
            for (std::size_t t = 0; t < T; ++t) {
                const double* p = spike_history.data() + (((b * T + t) * C + c) * h) * w;
                for (std::size_t j = 0; j < h * w; ++j) avg[j] += p[j];
            }
            for (double& v : avg) v *= inv_t;
            const std::vector<double> sigma = svd_values(avg.data(), h, w);
            std::size_t significant = 0;
            for (double s : sigma)
                if (s > epsilon) ++significant;
            scores[c] += static_cast<double>(significant);
        }
    for (double& s : scores) s /= static_cast<double>(B);
    return scores;
}

double avg_cos_similarity(const ImportanceReport& report) {
    const std::vector<std::vector<double>>& v = report.batch_scores;
    if (v.size() < 2)
        fail(Errc::invalid_argument, "avg_cos_similarity: need at least 2 score batches, have " +
                                         std::to_string(v.size()));
    std::vector<double> norms(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double n = 0.0;
        for (double x : v[i]) n += x * x;
        norms[i] = std::sqrt(n);
        if (norms[i] == 0.0)
            fail(Errc::degenerate_input,
                 "avg_cos_similarity: score batch " + std::to_string(i) + " is all zero (cosine undefined)");
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < v[i].size(); ++k) dot += v[i][k] * v[j][k];
            sum += dot / (norms[i] * norms[j]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

PruneMask build_mask(const std::vector<ImportanceReport>& reports, const std::vector<double>& ratios) {
    if (reports.empty()) fail(Errc::invalid_argument, "build_mask: no importance reports");
    if (reports.size() != ratios.size())
        fail(Errc::invalid_argument, "build_mask: " + std::to_string(reports.size()) + " reports vs " +
                                         std::to_string(ratios.size()) + " ratios");
    PruneMask mask;
    for (std::size_t li = 0; li < reports.size(); ++li) {
        const ImportanceReport& rep = reports[li];
        // The deepest prunable layer feeds the classifier head; keep it intact.
        double r = li + 1 == reports.size() ? 0.0 : ratios[li];
        if (!(r >= 0.0 && r < 1.0))
            fail(Errc::invalid_argument, "build_mask: ratio must lie in [0, 1), got " + std::to_string(r));
        const std::size_t n = rep.scores.size();
        if (n == 0) fail(Errc::invalid_argument, "build_mask: empty score vector for layer " + rep.layer_name);
        const std::size_t prune_count =
            static_cast<std::size_t>(std::round(r * static_cast<double>(n)));  // ties away from zero
        if (prune_count >= n)
            fail(Errc::invalid_argument,
                 "build_mask: ratio " + std::to_string(r) + " leaves no channels in layer " + rep.layer_name);

        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return rep.scores[a] > rep.scores[b]; });

        PruneMask::LayerMask lm;
        lm.layer_index = rep.layer_index;
        lm.ratio = r;
        lm.total_channels = n;
        lm.keep.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n - prune_count));
        std::sort(lm.keep.begin(), lm.keep.end());
        mask.layers.push_back(std::move(lm));
    }
    return mask;
}

namespace {

Tensor select_rows(const Tensor& w, const std::vector<std::size_t>& keep) {
    // First-axis selection for any rank.
    const std::size_t row = w.size() / w.dim(0);
    std::vector<std::size_t> shape = w.shape();
    shape[0] = keep.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < keep.size(); ++i)
        std::copy(w.data() + keep[i] * row, w.data() + (keep[i] + 1) * row, out.data() + i * row);
    return out;
}

}  // namespace

void apply_mask(Network& net, const PruneMask& mask) {
    std::vector<Layer> layers = net.layers();

    for (const PruneMask::LayerMask& lm : mask.layers) {
        if (lm.layer_index >= layers.size())
            fail(Errc::invalid_argument, "apply_mask: layer index " + std::to_string(lm.layer_index) + " out of range");
        Layer& l = layers[lm.layer_index];
        if (l.kind != LayerKind::conv2d)
            fail(Errc::invalid_argument, "apply_mask: layer " + l.name + " is not a conv layer");
        if (lm.total_channels != l.out_channels)
            fail(Errc::invalid_argument, "apply_mask: mask built for " + std::to_string(lm.total_channels) +
                                             " channels but layer " + l.name + " has " +
                                             std::to_string(l.out_channels));
        if (lm.keep.empty()) fail(Errc::invalid_argument, "apply_mask: empty keep set for layer " + l.name);
        for (std::size_t i = 0; i < lm.keep.size(); ++i) {
            if (lm.keep[i] >= l.out_channels ||
                (i > 0 && lm.keep[i] <= lm.keep[i - 1]))
                fail(Errc::invalid_argument, "apply_mask: keep set for layer " + l.name +
                                                 " must be ascending unique channel indices");
        }
        if (lm.keep.size() == l.out_channels) continue;  // identity

        // Spatial geometry entering the next weighted layer (needed to map
        // channels to flattened dense inputs); channels change, h/w do not.
        std::size_t next_w = layers.size();
        for (std::size_t j = lm.layer_index + 1; j < layers.size(); ++j)
            if (layers[j].weighted()) {
                next_w = j;
                break;
            }

        l.weight = select_rows(l.weight, lm.keep);
        l.bias = select_rows(l.bias, lm.keep);
        l.scale = select_rows(l.scale, lm.keep);
        l.out_channels = lm.keep.size();

        if (next_w == layers.size()) continue;  // nothing consumes the channels (not reachable in valid nets)
        Layer& nx = layers[next_w];
        if (nx.kind == LayerKind::conv2d) {
            // Drop input-channel slices: weight is [oc, ic, k, k].
            std::vector<std::size_t> shape = nx.weight.shape();
            const std::size_t kk = nx.kernel * nx.kernel;
            Tensor out({shape[0], lm.keep.size(), nx.kernel, nx.kernel});
            for (std::size_t oc = 0; oc < shape[0]; ++oc)
                for (std::size_t i = 0; i < lm.keep.size(); ++i)
                    std::copy(nx.weight.data() + (oc * shape[1] + lm.keep[i]) * kk,
                              nx.weight.data() + (oc * shape[1] + lm.keep[i] + 1) * kk,
                              out.data() + (oc * lm.keep.size() + i) * kk);
            nx.weight = std::move(out);
            nx.in_channels = lm.keep.size();
        } else {
            // Dense after flatten: features are [C, H, W] row-major, so each
            // channel owns a contiguous block of H*W features.
            const FeatureShape before = net.shape_before(next_w);
            const std::size_t hw = before.spatial ? before.height * before.width : 1;
            const std::size_t old_f = nx.in_features;
            const std::size_t new_f = lm.keep.size() * hw;
            Tensor out({nx.out_features, new_f});
            for (std::size_t o = 0; o < nx.out_features; ++o)
                for (std::size_t i = 0; i < lm.keep.size(); ++i)
                    std::copy(nx.weight.data() + o * old_f + lm.keep[i] * hw,
                              nx.weight.data() + o * old_f + (lm.keep[i] + 1) * hw,
                              out.data() + (o * new_f + i * hw));
            nx.weight = std::move(out);
            nx.in_features = new_f;
        }
    }

    net.replace_layers(std::move(layers));
}

std::vector<ImportanceReport> score_network(const Network& net, const Tensor& inputs,
                                            std::size_t time_steps, PruneCriterion criterion,
                                            double epsilon, std::size_t batch_size,
                                            std::size_t n_batches, std::uint64_t seed) {
    if (batch_size == 0 || n_batches == 0)
        fail(Errc::invalid_argument, "score_network: batch size and batch count must be positive");
    const std::size_t n = inputs.dim(0);
    if (n < batch_size * n_batches)
        fail(Errc::invalid_argument, "score_network: need " + std::to_string(batch_size * n_batches) +
                                         " samples for " + std::to_string(n_batches) +
                                         " disjoint batches, have " + std::to_string(n));

    // Prunable convs and the LIF each one drives.
    std::vector<std::pair<std::size_t, std::size_t>> scored;  // (conv index, lif index)
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!(net.layer(i).kind == LayerKind::conv2d && net.layer(i).prunable)) continue;
        for (std::size_t j = i + 1; j < net.layer_count() && !net.layer(j).weighted(); ++j)
            if (net.layer(j).kind == LayerKind::lif) {
                scored.emplace_back(i, j);
                break;
            }
    }
    if (scored.empty()) fail(Errc::invalid_argument, "score_network: no prunable conv layers");

    std::vector<ImportanceReport> reports(scored.size());
    for (std::size_t k = 0; k < scored.size(); ++k) {
        reports[k].layer_index = scored[k].first;
        reports[k].layer_name = net.layer(scored[k].first).name;
        reports[k].criterion = criterion;
        reports[k].batch_size = batch_size;
        reports[k].time_steps = time_steps;
    }

    // Disjoint batches: consecutive chunks of one seeded permutation.
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    const std::size_t sample_vol = inputs.size() / n;
    for (std::size_t batch = 0; batch < n_batches; ++batch) {
        Tensor x({batch_size, inputs.dim(1), inputs.dim(2), inputs.dim(3)});
        for (std::size_t b = 0; b < batch_size; ++b) {
            const std::size_t src = order[batch * batch_size + b];
            std::copy(inputs.data() + src * sample_vol, inputs.data() + (src + 1) * sample_vol,
                      x.data() + b * sample_vol);
        }
        ForwardTrace trace = net.forward(x, time_steps);

        for (std::size_t k = 0; k < scored.size(); ++k) {
            const std::size_t lif = scored[k].second;
            const std::vector<Tensor>& h =
                criterion == PruneCriterion::sca ? trace.layers[lif].u_pre : trace.layers[lif].spikes;
            const Tensor& first = h.front();  // [B, C, h, w]
            Tensor history({batch_size, time_steps, first.dim(1), first.dim(2), first.dim(3)});
            const std::size_t vol = first.size() / batch_size;
            for (std::size_t b = 0; b < batch_size; ++b)
                for (std::size_t t = 0; t < time_steps; ++t)
                    std::copy(h[t].data() + b * vol, h[t].data() + (b + 1) * vol,
                              history.data() + (b * time_steps + t) * vol);
            std::vector<double> s = criterion == PruneCriterion::sca ? score_sca(history)
                                                                     : score_svs(history, epsilon);
            reports[k].batch_scores.push_back(std::move(s));
        }
    }

    for (ImportanceReport& rep : reports) {
        const std::size_t C = rep.batch_scores.front().size();
        rep.scores.assign(C, 0.0);
        for (const std::vector<double>& v : rep.batch_scores)
            for (std::size_t c = 0; c < C; ++c) rep.scores[c] += v[c];
        for (double& s : rep.scores) s /= static_cast<double>(rep.batch_scores.size());
    }
    return reports;
}

}  // namespace snnzip
