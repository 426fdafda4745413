#include "checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bitpack.hpp"
#include "error.hpp"

namespace snnzip {

namespace {

using nlohmann::json;

void append_f32(std::vector<std::uint8_t>& out, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
        out.push_back(static_cast<std::uint8_t>(u & 0xffu));
        out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xffu));
        out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xffu));
        out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xffu));
    }
}

Tensor read_f32(const std::vector<std::uint8_t>& buf, std::size_t offset, std::vector<std::size_t> shape,
                const std::string& what) {
    Tensor t(std::move(shape));
    if (offset + 4 * t.size() > buf.size()) {
        fail(Errc::parse, "weights.bin: " + what + " payload runs past end of file");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::size_t o = offset + 4 * i;
        const std::uint32_t u = static_cast<std::uint32_t>(buf[o]) | (static_cast<std::uint32_t>(buf[o + 1]) << 8) |
                                (static_cast<std::uint32_t>(buf[o + 2]) << 16) |
                                (static_cast<std::uint32_t>(buf[o + 3]) << 24);
        t[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return t;
}

json payload_entry(std::size_t offset, std::size_t byte_length, std::size_t count, const char* encoding) {
    return json{{"offset", offset}, {"byte_length", byte_length}, {"count", count}, {"encoding", encoding}};
}

// Integer codes recovered from a canonicalized master tensor.  Masters of a
// frozen layer sit exactly on the dequantization grid, so rounding recovers
// the codes and re-dequantizing must reproduce the masters bit for bit.
std::vector<double> codes_from_frozen(const Layer& l) {
    const int s = l.quantizer->grid_steps();
    const double gamma = l.frozen_gamma;
    std::vector<double> codes(l.weight.size());
    for (std::size_t i = 0; i < l.weight.size(); ++i) {
        const double c = std::round(s / 2.0 * (l.weight[i] / gamma + 1.0));
        if (!(c >= 0.0 && c <= static_cast<double>(s)) || gamma * (2.0 * c / s - 1.0) != l.weight[i]) {
            fail(Errc::invalid_state, "layer " + l.name + ": stored weights left the quantization grid");
        }
        codes[i] = c;
    }
    return codes;
}

json quantizer_json(const QuantizerSpec& q) {
    json j{{"bits", q.bits}, {"gamma_option", gamma_option_name(q.gamma)}};
    if (q.gamma == GammaOption::percentile_pair) j["percentile_x"] = q.percentile_x;
    return j;
}

QuantizerSpec quantizer_from_json(const json& j) {
    QuantizerSpec q;
    q.bits = j.at("bits").get<int>();
    q.gamma = gamma_option_from_name(j.at("gamma_option").get<std::string>());
    if (j.contains("percentile_x")) q.percentile_x = j.at("percentile_x").get<double>();
    q.validate();
    return q;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

}  // namespace

void save_checkpoint(Network& net, const std::string& dir, const nlohmann::json& extra) {
    net.canonicalize_for_storage();

    std::vector<std::uint8_t> blob;
    json layers = json::array();
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& l = net.layer(i);
        json entry{{"kind", layer_kind_name(l.kind)}, {"name", l.name}};
        switch (l.kind) {
            case LayerKind::maxpool:
                entry["window"] = l.window;
                break;
            case LayerKind::lif:
                entry["leak"] = l.lif.leak;
                entry["threshold"] = l.lif.threshold;
                entry["surrogate_width"] = l.lif.surrogate_width;
                entry["detach_reset"] = l.lif.detach_reset;
                break;
            case LayerKind::conv2d:
                entry["in_channels"] = l.in_channels;
                entry["out_channels"] = l.out_channels;
                entry["kernel"] = l.kernel;
                entry["stride"] = l.stride;
                entry["padding"] = l.padding;
                entry["affine"] = l.affine;
                entry["prunable"] = l.prunable;
                entry["prune_ratio"] = l.prune_ratio;
                break;
            case LayerKind::dense:
                entry["in_features"] = l.in_features;
                entry["out_features"] = l.out_features;
                break;
        }
        if (l.weighted()) {
            json payload;
            if (l.quantizer) {
                entry["quantizer"] = quantizer_json(*l.quantizer);
                entry["gamma"] = l.frozen_gamma;
                const auto codes = codes_from_frozen(l);
                auto packed = pack_codes(codes, l.quantizer->bits);
                json w = payload_entry(blob.size(), packed.size(), codes.size(), "packed");
                w["bits"] = l.quantizer->bits;
                payload["weight"] = std::move(w);
                blob.insert(blob.end(), packed.begin(), packed.end());
            } else {
                payload["weight"] = payload_entry(blob.size(), 4 * l.weight.size(), l.weight.size(), "f32");
                append_f32(blob, l.weight);
            }
            payload["bias"] = payload_entry(blob.size(), 4 * l.bias.size(), l.bias.size(), "f32");
            append_f32(blob, l.bias);
            if (l.affine) {
                payload["scale"] = payload_entry(blob.size(), 4 * l.scale.size(), l.scale.size(), "f32");
                append_f32(blob, l.scale);
            }
            entry["payload"] = std::move(payload);
        }
        layers.push_back(std::move(entry));
    }

    json manifest{
        {"format", kCheckpointFormat},
        {"format_version", kCheckpointVersion},
        {"input",
         {{"channels", net.input_shape().channels},
          {"height", net.input_shape().height},
          {"width", net.input_shape().width}}},
        {"classes", net.n_classes()},
        {"layers", std::move(layers)},
        {"payload_bytes", blob.size()},
        {"metadata", extra},
    };

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(Errc::io, "cannot create directory " + dir + ": " + ec.message());

    {
        std::ofstream out(dir + "/weights.bin", std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
        if (!out) fail(Errc::io, "cannot write " + dir + "/weights.bin");
    }
    {
        std::ofstream out(dir + "/manifest.json", std::ios::binary | std::ios::trunc);
        out << manifest.dump(2) << '\n';
        if (!out) fail(Errc::io, "cannot write " + dir + "/manifest.json");
    }
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    json manifest;
    try {
        manifest = json::parse(slurp(manifest_path));
    } catch (const json::exception& e) {
        fail(Errc::parse, manifest_path + ": " + e.what());
    }

    try {
        if (manifest.at("format").get<std::string>() != kCheckpointFormat) {
            fail(Errc::parse, manifest_path + ": not a model checkpoint manifest");
        }
        if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
            fail(Errc::parse, manifest_path + ": unsupported format version " +
                                  manifest.at("format_version").dump() + " (this build reads version " +
                                  std::to_string(kCheckpointVersion) + ")");
        }

        const auto blob = slurp(dir + "/weights.bin");
        if (manifest.at("payload_bytes").get<std::size_t>() != blob.size()) {
            fail(Errc::parse, dir + "/weights.bin: holds " + std::to_string(blob.size()) +
                                  " bytes but the manifest records " + manifest.at("payload_bytes").dump());
        }

        FeatureShape input;
        input.channels = manifest.at("input").at("channels").get<std::size_t>();
        input.height = manifest.at("input").at("height").get<std::size_t>();
        input.width = manifest.at("input").at("width").get<std::size_t>();
        input.spatial = true;
        const auto n_classes = manifest.at("classes").get<std::size_t>();

        std::vector<Layer> layers;
        for (const auto& entry : manifest.at("layers")) {
            Layer l;
            const auto kind = entry.at("kind").get<std::string>();
            l.name = entry.at("name").get<std::string>();
            if (kind == "maxpool") {
                l.kind = LayerKind::maxpool;
                l.window = entry.at("window").get<std::size_t>();
            } else if (kind == "lif") {
                l.kind = LayerKind::lif;
                l.lif.leak = entry.at("leak").get<double>();
                l.lif.threshold = entry.at("threshold").get<double>();
                l.lif.surrogate_width = entry.at("surrogate_width").get<double>();
                l.lif.detach_reset = entry.at("detach_reset").get<bool>();
            } else if (kind == "conv2d" || kind == "dense") {
                std::vector<std::size_t> wshape;
                if (kind == "conv2d") {
                    l.kind = LayerKind::conv2d;
                    l.in_channels = entry.at("in_channels").get<std::size_t>();
                    l.out_channels = entry.at("out_channels").get<std::size_t>();
                    l.kernel = entry.at("kernel").get<std::size_t>();
                    l.stride = entry.at("stride").get<std::size_t>();
                    l.padding = entry.at("padding").get<std::size_t>();
                    l.affine = entry.at("affine").get<bool>();
                    l.prunable = entry.at("prunable").get<bool>();
                    l.prune_ratio = entry.at("prune_ratio").get<double>();
                    wshape = {l.out_channels, l.in_channels, l.kernel, l.kernel};
                } else {
                    l.kind = LayerKind::dense;
                    l.in_features = entry.at("in_features").get<std::size_t>();
                    l.out_features = entry.at("out_features").get<std::size_t>();
                    l.affine = false;
                    wshape = {l.out_features, l.in_features};
                }
                const auto& payload = entry.at("payload");
                const auto& w = payload.at("weight");
                const auto count = w.at("count").get<std::size_t>();
                if (count != shape_volume(wshape)) {
                    fail(Errc::parse, manifest_path + ": layer " + l.name + " weight count " + std::to_string(count) +
                                          " does not match its declared shape");
                }
                const auto offset = w.at("offset").get<std::size_t>();
                const auto byte_length = w.at("byte_length").get<std::size_t>();
                if (w.at("encoding").get<std::string>() == "packed") {
                    QuantizerSpec q = quantizer_from_json(entry.at("quantizer"));
                    if (w.at("bits").get<int>() != q.bits) {
                        fail(Errc::parse, manifest_path + ": layer " + l.name +
                                              " packed width disagrees with its quantizer bits");
                    }
                    const double gamma = entry.at("gamma").get<double>();
                    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
                        fail(Errc::parse, manifest_path + ": layer " + l.name + " has non-positive gamma");
                    }
                    if (offset + byte_length > blob.size() || byte_length != packed_size(count, q.bits)) {
                        fail(Errc::parse, dir + "/weights.bin: layer " + l.name + " packed payload has wrong length");
                    }
                    const auto codes = unpack_codes(blob.data() + offset, byte_length, count, q.bits);
                    // Re-expansion check: packing the decoded codes must give
                    // back the stored bytes (catches stray bits in the tail).
                    const auto repacked = pack_codes(codes, q.bits);
                    if (!std::equal(repacked.begin(), repacked.end(), blob.begin() + static_cast<std::ptrdiff_t>(offset))) {
                        fail(Errc::parse, dir + "/weights.bin: layer " + l.name + " packed payload fails re-expansion");
                    }
                    const int s = q.grid_steps();
                    l.weight = Tensor(wshape);
                    for (std::size_t i = 0; i < count; ++i) {
                        l.weight[i] = gamma * (2.0 * codes[i] / s - 1.0);
                    }
                    l.quantizer = q;
                    l.quantizer_frozen = true;
                    l.frozen_gamma = gamma;
                } else {
                    if (entry.contains("quantizer") && !entry.at("quantizer").is_null()) {
                        fail(Errc::parse, manifest_path + ": layer " + l.name +
                                              " declares a quantizer but stores f32 weights");
                    }
                    if (byte_length != 4 * count) {
                        fail(Errc::parse, dir + "/weights.bin: layer " + l.name + " f32 payload has wrong length");
                    }
                    l.weight = read_f32(blob, offset, wshape, "layer " + l.name + " weight");
                }
                const auto& b = payload.at("bias");
                if (b.at("byte_length").get<std::size_t>() != 4 * b.at("count").get<std::size_t>()) {
                    fail(Errc::parse, dir + "/weights.bin: layer " + l.name + " bias payload has wrong length");
                }
                l.bias = read_f32(blob, b.at("offset").get<std::size_t>(), {b.at("count").get<std::size_t>()},
                                  "layer " + l.name + " bias");
                if (l.affine) {
                    const auto& sc = payload.at("scale");
                    l.scale = read_f32(blob, sc.at("offset").get<std::size_t>(), {sc.at("count").get<std::size_t>()},
                                       "layer " + l.name + " scale");
                } else if (l.weighted()) {
                    l.scale = Tensor({l.output_channels()});
                    l.scale.fill(1.0);
                }
            } else {
                fail(Errc::parse, manifest_path + ": unknown layer kind \"" + kind + "\"");
            }
            layers.push_back(std::move(l));
        }

        LoadedCheckpoint out{Network::assemble(input, n_classes, std::move(layers)),
                             manifest.contains("metadata") ? manifest.at("metadata") : json::object()};
        return out;
    } catch (const json::exception& e) {
        fail(Errc::parse, manifest_path + ": " + e.what());
    }
}

std::string read_manifest_text(const std::string& dir) {
    const auto buf = slurp(dir + "/manifest.json");
    return std::string(buf.begin(), buf.end());
}

}  // namespace snnzip
