#include "metrics.hpp"

#include "error.hpp"

namespace snnzip {

SizeReport model_size(const Network& net) {
    SizeReport report;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;
        SizeReport::LayerEntry e;
        e.name = l.name;
        e.kind = layer_kind_name(l.kind);
        const std::uint64_t side = l.bias.size() + (l.affine ? l.scale.size() : 0);
        if (l.quantizer.has_value()) {
            e.quantized_params = l.weight.size();
            e.bits = l.quantizer->bits;
            e.full_precision_params = side;
        } else {
            e.quantized_params = 0;
            e.bits = 32;
            e.full_precision_params = l.weight.size() + side;
        }
        e.total_bits = e.quantized_params * static_cast<std::uint64_t>(e.bits) + e.full_precision_params * 32u;
        report.quantized_params += e.quantized_params;
        report.full_precision_params += e.full_precision_params;
        report.total_bits += e.total_bits;
        report.layers.push_back(std::move(e));
    }
    report.total_bytes = (report.total_bits + 7) / 8;
    report.megabytes = static_cast<double>(report.total_bytes) / (1024.0 * 1024.0);
    return report;
}

SopReport count_sops(const ForwardTrace& trace, const Network& net) {
    if (trace.layers.size() != net.layer_count())
        fail(Errc::invalid_argument, "count_sops: trace does not match the network");
    SopReport report;
    report.time_steps = trace.time_steps;
    report.batch = trace.batch;

    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& l = net.layer(i);
        if (!l.weighted()) continue;

        // Spike-fed means the producer behind any pooling is a LIF layer; the
        // first weighted layer sees the analog image instead.
        std::size_t src = i;
        while (src > 0 && net.layer(src - 1).kind == LayerKind::maxpool) --src;
        const bool spike_fed = src > 0 && net.layer(src - 1).kind == LayerKind::lif;
        if (!spike_fed) continue;

        std::uint64_t sops = 0;
        if (l.kind == LayerKind::dense) {
            for (const Tensor& x : trace.layers[i].inputs)
                for (std::size_t j = 0; j < x.size(); ++j)
                    if (x[j] != 0.0) sops += l.out_features;
        } else {
            // Placements covering each input position, from the geometry.
            const FeatureShape in_s = net.shape_before(i), out_s = net.shape_before(i + 1);
            std::vector<std::uint64_t> placements(in_s.height * in_s.width, 0);
            for (std::size_t oy = 0; oy < out_s.height; ++oy)
                for (std::size_t ox = 0; ox < out_s.width; ++ox)
                    for (std::size_t ky = 0; ky < l.kernel; ++ky)
                        for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                                      static_cast<std::ptrdiff_t>(l.padding);
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                      static_cast<std::ptrdiff_t>(l.padding);
                            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(in_s.height) ||
                                ix >= static_cast<std::ptrdiff_t>(in_s.width))
                                continue;
                            ++placements[static_cast<std::size_t>(iy) * in_s.width +
                                         static_cast<std::size_t>(ix)];
                        }
            const std::size_t hw = in_s.height * in_s.width;
            for (const Tensor& x : trace.layers[i].inputs)
                for (std::size_t j = 0; j < x.size(); ++j)
                    if (x[j] != 0.0) sops += l.out_channels * placements[j % hw];
        }
        report.layers.push_back({l.name, sops});
        report.total += sops;
    }
    return report;
}

}  // namespace snnzip
