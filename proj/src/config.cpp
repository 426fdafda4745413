#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace snnzip {

namespace {

using nlohmann::json;

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) fail(Errc::parse, where + ": expected an object");
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) fail(Errc::parse, where + ": unknown key \"" + key + "\"");
    }
}

std::size_t get_size(const json& obj, const char* key, const std::string& where, std::optional<std::size_t> def = {}) {
    const json* v = find(obj, key);
    if (!v) {
        if (def) return *def;
        fail(Errc::parse, where + ": missing required key \"" + std::string(key) + "\"");
    }
    if (!v->is_number_integer() && !v->is_number_unsigned()) {
        fail(Errc::parse, where + "." + key + ": expected a non-negative integer");
    }
    if (v->is_number_integer() && v->get<std::int64_t>() < 0) {
        fail(Errc::parse, where + "." + key + ": expected a non-negative integer");
    }
    return v->get<std::size_t>();
}

std::uint64_t get_u64(const json& obj, const char* key, const std::string& where, std::uint64_t def) {
    return get_size(obj, key, where, static_cast<std::size_t>(def));
}

double get_num(const json& obj, const char* key, const std::string& where, std::optional<double> def = {}) {
    const json* v = find(obj, key);
    if (!v) {
        if (def) return *def;
        fail(Errc::parse, where + ": missing required key \"" + std::string(key) + "\"");
    }
    if (!v->is_number()) fail(Errc::parse, where + "." + key + ": expected a number");
    return v->get<double>();
}

bool get_bool(const json& obj, const char* key, const std::string& where, bool def) {
    const json* v = find(obj, key);
    if (!v) return def;
    if (!v->is_boolean()) fail(Errc::parse, where + "." + key + ": expected a boolean");
    return v->get<bool>();
}

std::string get_str(const json& obj, const char* key, const std::string& where,
                    std::optional<std::string> def = {}) {
    const json* v = find(obj, key);
    if (!v) {
        if (def) return *def;
        fail(Errc::parse, where + ": missing required key \"" + std::string(key) + "\"");
    }
    if (!v->is_string()) fail(Errc::parse, where + "." + key + ": expected a string");
    return v->get<std::string>();
}

QuantizerSpec parse_quantizer(const json& j, const std::string& where) {
    require_object(j, where);
    check_keys(j, where, {"bits", "gamma_option", "percentile_x"});
    QuantizerSpec q;
    q.bits = static_cast<int>(get_size(j, "bits", where, static_cast<std::size_t>(q.bits)));
    q.gamma = gamma_option_from_name(get_str(j, "gamma_option", where, std::string(gamma_option_name(q.gamma))));
    q.percentile_x = get_num(j, "percentile_x", where, q.percentile_x);
    q.validate();
    return q;
}

LifParams parse_lif(const json& j, const std::string& where, const LifParams& defaults) {
    LifParams p = defaults;
    p.leak = get_num(j, "leak", where, p.leak);
    p.threshold = get_num(j, "threshold", where, p.threshold);
    p.surrogate_width = get_num(j, "surrogate_width", where, p.surrogate_width);
    p.detach_reset = get_bool(j, "detach_reset", where, p.detach_reset);
    p.validate();
    return p;
}

LayerDef parse_layer(const json& j, const std::string& where, const LifParams& neuron_defaults) {
    require_object(j, where);
    const std::string kind = get_str(j, "kind", where);
    LayerDef d;
    d.name = get_str(j, "name", where, std::string());
    if (kind == "conv2d") {
        check_keys(j, where,
                   {"kind", "name", "out_channels", "kernel", "stride", "padding", "affine", "prunable",
                    "prune_ratio", "quantizer"});
        d.kind = LayerKind::conv2d;
        d.out_channels = get_size(j, "out_channels", where);
        d.kernel = get_size(j, "kernel", where, d.kernel);
        d.stride = get_size(j, "stride", where, d.stride);
        d.padding = get_size(j, "padding", where, d.padding);
        d.affine = get_bool(j, "affine", where, d.affine);
        d.prunable = get_bool(j, "prunable", where, d.prunable);
        d.prune_ratio = get_num(j, "prune_ratio", where, d.prune_ratio);
    } else if (kind == "dense") {
        check_keys(j, where, {"kind", "name", "out_features", "quantizer"});
        d.kind = LayerKind::dense;
        d.out_features = get_size(j, "out_features", where);
    } else if (kind == "maxpool") {
        check_keys(j, where, {"kind", "name", "window"});
        d.kind = LayerKind::maxpool;
        d.window = get_size(j, "window", where, d.window);
    } else if (kind == "lif") {
        check_keys(j, where, {"kind", "name", "leak", "threshold", "surrogate_width", "detach_reset"});
        d.kind = LayerKind::lif;
        d.lif = parse_lif(j, where, neuron_defaults);
    } else {
        fail(Errc::parse, where + ": unknown layer kind \"" + kind + "\"");
    }
    if (const json* q = find(j, "quantizer")) {
        d.quantizer = parse_quantizer(*q, where + ".quantizer");
    }
    return d;
}

PhaseConfig parse_phase(const json* j, const std::string& where, OptimizerKind default_opt, double default_lr) {
    PhaseConfig p;
    p.optimizer = default_opt;
    p.lr = default_lr;
    if (!j) {
        p.epochs = 0;  // absent section: phase skipped
        return p;
    }
    require_object(*j, where);
    check_keys(*j, where,
               {"epochs", "optimizer", "lr", "momentum", "adam_beta1", "adam_beta2", "adam_eps", "batch_size"});
    p.epochs = get_size(*j, "epochs", where);
    const std::string opt = get_str(*j, "optimizer", where,
                                    std::string(default_opt == OptimizerKind::sgd ? "sgd" : "adam"));
    if (opt == "sgd") {
        p.optimizer = OptimizerKind::sgd;
    } else if (opt == "adam") {
        p.optimizer = OptimizerKind::adam;
    } else {
        fail(Errc::parse, where + ".optimizer: expected \"sgd\" or \"adam\", got \"" + opt + "\"");
    }
    p.lr = get_num(*j, "lr", where, p.lr);
    p.momentum = get_num(*j, "momentum", where, p.momentum);
    p.adam_beta1 = get_num(*j, "adam_beta1", where, p.adam_beta1);
    p.adam_beta2 = get_num(*j, "adam_beta2", where, p.adam_beta2);
    p.adam_eps = get_num(*j, "adam_eps", where, p.adam_eps);
    p.batch_size = get_size(*j, "batch_size", where, p.batch_size);
    p.validate();
    return p;
}

void require_file(const std::string& path, const std::string& where) {
    if (!std::filesystem::exists(path)) {
        fail(Errc::parse, where + ": file not found: " + path);
    }
}

DatasetConfig parse_dataset(const json& j, const std::string& where, std::size_t n_classes) {
    require_object(j, where);
    DatasetConfig d;
    const std::string type = get_str(j, "type", where);
    if (type == "synth_blobs") {
        check_keys(j, where,
                   {"type", "per_class_train", "per_class_test", "image_size", "sigma", "jitter", "noise",
                    "ring_radius", "seed"});
        d.type = DatasetConfig::Type::synth_blobs;
        d.blobs.n_classes = n_classes;
        d.blobs.n_per_class = get_size(j, "per_class_train", where, d.blobs.n_per_class);
        d.per_class_test = get_size(j, "per_class_test", where, d.per_class_test);
        d.blobs.image_size = get_size(j, "image_size", where, d.blobs.image_size);
        d.blobs.sigma = get_num(j, "sigma", where, d.blobs.sigma);
        d.blobs.jitter = get_num(j, "jitter", where, d.blobs.jitter);
        d.blobs.noise = get_num(j, "noise", where, d.blobs.noise);
        d.blobs.ring_radius = get_num(j, "ring_radius", where, d.blobs.ring_radius);
        d.seed = get_u64(j, "seed", where, d.seed);
        if (d.blobs.n_per_class == 0 || d.per_class_test == 0) {
            fail(Errc::parse, where + ": per-class sample counts must be positive");
        }
    } else if (type == "idx") {
        check_keys(j, where, {"type", "train_images", "train_labels", "test_images", "test_labels"});
        d.type = DatasetConfig::Type::idx;
        d.train_images = get_str(j, "train_images", where);
        d.train_labels = get_str(j, "train_labels", where);
        d.test_images = get_str(j, "test_images", where);
        d.test_labels = get_str(j, "test_labels", where);
        require_file(d.train_images, where + ".train_images");
        require_file(d.train_labels, where + ".train_labels");
        require_file(d.test_images, where + ".test_images");
        require_file(d.test_labels, where + ".test_labels");
    } else if (type == "csv") {
        check_keys(j, where, {"type", "train", "test"});
        d.type = DatasetConfig::Type::csv;
        d.train_csv = get_str(j, "train", where);
        d.test_csv = get_str(j, "test", where);
        require_file(d.train_csv, where + ".train");
        require_file(d.test_csv, where + ".test");
    } else {
        fail(Errc::parse, where + ".type: expected \"synth_blobs\", \"idx\" or \"csv\", got \"" + type + "\"");
    }
    return d;
}

}  // namespace

const char* order_name(PipelineOrder o) {
    return o == PipelineOrder::quantize_first ? "quantize_first" : "prune_first";
}

PipelineOrder order_from_name(const std::string& name) {
    if (name == "quantize_first") return PipelineOrder::quantize_first;
    if (name == "prune_first") return PipelineOrder::prune_first;
    fail(Errc::parse, "order: expected \"quantize_first\" or \"prune_first\", got \"" + name + "\"");
}

RunConfig parse_run_config(const nlohmann::json& j, const std::string& source) {
    try {
        require_object(j, source);
        check_keys(j, source,
                   {"seed", "deterministic", "output_dir", "time_steps", "order", "neuron", "quantizer", "input",
                    "classes", "layers", "dataset", "train", "finetune", "prune"});

        RunConfig cfg;
        cfg.seed = get_u64(j, "seed", source, cfg.seed);
        cfg.deterministic = get_bool(j, "deterministic", source, cfg.deterministic);
        cfg.output_dir = get_str(j, "output_dir", source, cfg.output_dir);
        cfg.time_steps = get_size(j, "time_steps", source, cfg.time_steps);
        if (cfg.time_steps == 0) fail(Errc::parse, source + ".time_steps: must be positive");
        cfg.order = order_from_name(get_str(j, "order", source, std::string(order_name(cfg.order))));

        LifParams neuron_defaults;
        if (const json* n = find(j, "neuron")) {
            require_object(*n, source + ".neuron");
            check_keys(*n, source + ".neuron", {"leak", "threshold", "surrogate_width", "detach_reset"});
            neuron_defaults = parse_lif(*n, source + ".neuron", neuron_defaults);
        }

        std::optional<QuantizerSpec> default_quantizer;
        if (const json* q = find(j, "quantizer")) {
            default_quantizer = parse_quantizer(*q, source + ".quantizer");
        }

        const json* input = find(j, "input");
        if (!input) fail(Errc::parse, source + ": missing required key \"input\"");
        require_object(*input, source + ".input");
        check_keys(*input, source + ".input", {"channels", "height", "width"});
        cfg.arch.input.channels = get_size(*input, "channels", source + ".input", std::size_t{1});
        cfg.arch.input.height = get_size(*input, "height", source + ".input");
        cfg.arch.input.width = get_size(*input, "width", source + ".input");
        cfg.arch.input.spatial = true;

        cfg.arch.n_classes = get_size(j, "classes", source);
        if (cfg.arch.n_classes < 2) fail(Errc::parse, source + ".classes: need at least 2 classes");

        const json* layers = find(j, "layers");
        if (!layers || !layers->is_array() || layers->empty()) {
            fail(Errc::parse, source + ".layers: expected a non-empty array");
        }
        for (std::size_t i = 0; i < layers->size(); ++i) {
            cfg.arch.layers.push_back(
                parse_layer((*layers)[i], source + ".layers[" + std::to_string(i) + "]", neuron_defaults));
        }

        // The default quantizer covers hidden weighted layers only; the first
        // and last weighted layer always stay full precision.  An explicit
        // per-layer quantizer on those is passed through so network assembly
        // rejects it with a pointed message.
        if (default_quantizer) {
            std::vector<std::size_t> weighted;
            for (std::size_t i = 0; i < cfg.arch.layers.size(); ++i) {
                const auto k = cfg.arch.layers[i].kind;
                if (k == LayerKind::conv2d || k == LayerKind::dense) weighted.push_back(i);
            }
            for (std::size_t i = 0; i < weighted.size(); ++i) {
                if (i == 0 || i + 1 == weighted.size()) continue;
                LayerDef& d = cfg.arch.layers[weighted[i]];
                const json& lj = (*layers)[weighted[i]];
                if (!lj.contains("quantizer")) d.quantizer = default_quantizer;
            }
        }

        const json* ds = find(j, "dataset");
        if (!ds) fail(Errc::parse, source + ": missing required key \"dataset\"");
        cfg.dataset = parse_dataset(*ds, source + ".dataset", cfg.arch.n_classes);

        cfg.train_phase = parse_phase(find(j, "train"), source + ".train", OptimizerKind::sgd, 0.1);
        cfg.finetune_phase = parse_phase(find(j, "finetune"), source + ".finetune", OptimizerKind::adam, 1e-3);

        if (const json* p = find(j, "prune")) {
            require_object(*p, source + ".prune");
            check_keys(*p, source + ".prune", {"criterion", "epsilon", "score_batch", "score_batches", "score_seed"});
            cfg.prune.criterion = criterion_from_name(get_str(*p, "criterion", source + ".prune",
                                                              std::string(criterion_name(cfg.prune.criterion))));
            cfg.prune.epsilon = get_num(*p, "epsilon", source + ".prune", cfg.prune.epsilon);
            cfg.prune.score_batch = get_size(*p, "score_batch", source + ".prune", cfg.prune.score_batch);
            cfg.prune.score_batches = get_size(*p, "score_batches", source + ".prune", cfg.prune.score_batches);
            cfg.prune.score_seed = get_u64(*p, "score_seed", source + ".prune", cfg.prune.score_seed);
        }
        if (!(cfg.prune.epsilon > 0.0)) fail(Errc::parse, source + ".prune.epsilon: must be positive");
        if (cfg.prune.score_batch == 0 || cfg.prune.score_batches == 0) {
            fail(Errc::parse, source + ".prune: score batch size and count must be positive");
        }

        return cfg;
    } catch (const json::exception& e) {
        fail(Errc::parse, source + ": " + e.what());
    }
}

nlohmann::json parse_config_document(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(Errc::parse, source + ": " + e.what());
    }
}

nlohmann::json load_config_document(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_document(buf.str(), path);
}

RunConfig parse_run_config_text(const std::string& text, const std::string& source) {
    return parse_run_config(parse_config_document(text, source), source);
}

RunConfig load_run_config_file(const std::string& path) {
    return parse_run_config(load_config_document(path), path);
}

nlohmann::json run_config_json(const RunConfig& cfg) {
    json j{
        {"seed", cfg.seed},
        {"deterministic", cfg.deterministic},
        {"output_dir", cfg.output_dir},
        {"time_steps", cfg.time_steps},
        {"order", order_name(cfg.order)},
        {"classes", cfg.arch.n_classes},
        {"input",
         {{"channels", cfg.arch.input.channels},
          {"height", cfg.arch.input.height},
          {"width", cfg.arch.input.width}}},
    };

    json layers = json::array();
    for (const LayerDef& d : cfg.arch.layers) {
        json l{{"kind", layer_kind_name(d.kind)}};
        if (!d.name.empty()) l["name"] = d.name;
        switch (d.kind) {
            case LayerKind::conv2d:
                l["out_channels"] = d.out_channels;
                l["kernel"] = d.kernel;
                l["stride"] = d.stride;
                l["padding"] = d.padding;
                l["affine"] = d.affine;
                l["prunable"] = d.prunable;
                l["prune_ratio"] = d.prune_ratio;
                break;
            case LayerKind::dense:
                l["out_features"] = d.out_features;
                break;
            case LayerKind::maxpool:
                l["window"] = d.window;
                break;
            case LayerKind::lif:
                l["leak"] = d.lif.leak;
                l["threshold"] = d.lif.threshold;
                l["surrogate_width"] = d.lif.surrogate_width;
                l["detach_reset"] = d.lif.detach_reset;
                break;
        }
        if (d.quantizer) {
            json q{{"bits", d.quantizer->bits}, {"gamma_option", gamma_option_name(d.quantizer->gamma)}};
            if (d.quantizer->gamma == GammaOption::percentile_pair) q["percentile_x"] = d.quantizer->percentile_x;
            l["quantizer"] = std::move(q);
        }
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);

    switch (cfg.dataset.type) {
        case DatasetConfig::Type::synth_blobs:
            j["dataset"] = {{"type", "synth_blobs"},
                            {"per_class_train", cfg.dataset.blobs.n_per_class},
                            {"per_class_test", cfg.dataset.per_class_test},
                            {"image_size", cfg.dataset.blobs.image_size},
                            {"sigma", cfg.dataset.blobs.sigma},
                            {"jitter", cfg.dataset.blobs.jitter},
                            {"noise", cfg.dataset.blobs.noise},
                            {"ring_radius", cfg.dataset.blobs.ring_radius},
                            {"seed", cfg.dataset.seed}};
            break;
        case DatasetConfig::Type::idx:
            j["dataset"] = {{"type", "idx"},
                            {"train_images", cfg.dataset.train_images},
                            {"train_labels", cfg.dataset.train_labels},
                            {"test_images", cfg.dataset.test_images},
                            {"test_labels", cfg.dataset.test_labels}};
            break;
        case DatasetConfig::Type::csv:
            j["dataset"] = {{"type", "csv"}, {"train", cfg.dataset.train_csv}, {"test", cfg.dataset.test_csv}};
            break;
    }

    const auto phase_json = [](const PhaseConfig& p) {
        json out{{"epochs", p.epochs},
                 {"optimizer", p.optimizer == OptimizerKind::sgd ? "sgd" : "adam"},
                 {"lr", p.lr},
                 {"batch_size", p.batch_size}};
        if (p.optimizer == OptimizerKind::sgd) {
            out["momentum"] = p.momentum;
        } else {
            out["adam_beta1"] = p.adam_beta1;
            out["adam_beta2"] = p.adam_beta2;
            out["adam_eps"] = p.adam_eps;
        }
        return out;
    };
    j["train"] = phase_json(cfg.train_phase);
    j["finetune"] = phase_json(cfg.finetune_phase);
    j["prune"] = {{"criterion", criterion_name(cfg.prune.criterion)},
                  {"epsilon", cfg.prune.epsilon},
                  {"score_batch", cfg.prune.score_batch},
                  {"score_batches", cfg.prune.score_batches},
                  {"score_seed", cfg.prune.score_seed}};
    return j;
}

DataSplits load_dataset(const RunConfig& cfg) {
    DataSplits out;
    switch (cfg.dataset.type) {
        case DatasetConfig::Type::synth_blobs: {
            BlobParams train_params = cfg.dataset.blobs;
            BlobParams test_params = cfg.dataset.blobs;
            test_params.n_per_class = cfg.dataset.per_class_test;
            out.train = synth_blobs(train_params, cfg.dataset.seed, "train");
            out.test = synth_blobs(test_params, cfg.dataset.seed + 1, "test");
            break;
        }
        case DatasetConfig::Type::idx:
            out.train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
            out.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
            out.train.split = "train";
            out.test.split = "test";
            break;
        case DatasetConfig::Type::csv:
            out.train = load_csv(cfg.dataset.train_csv);
            out.test = load_csv(cfg.dataset.test_csv);
            out.train.split = "train";
            out.test.split = "test";
            break;
    }

    for (const Dataset* d : {&out.train, &out.test}) {
        for (std::size_t label : d->labels) {
            if (label >= cfg.arch.n_classes) {
                fail(Errc::parse, "dataset: " + d->split + " split holds label " + std::to_string(label) +
                                      " but the configuration declares " + std::to_string(cfg.arch.n_classes) +
                                      " classes");
            }
        }
        const FeatureShape& in = cfg.arch.input;
        if (d->samples.dim(1) != in.channels || d->samples.dim(2) != in.height || d->samples.dim(3) != in.width) {
            fail(Errc::parse, "dataset: " + d->split + " split sample shape [" + std::to_string(d->samples.dim(1)) +
                                  ", " + std::to_string(d->samples.dim(2)) + ", " + std::to_string(d->samples.dim(3)) +
                                  "] does not match the configured input " + in.str());
        }
    }
    return out;
}

}  // namespace snnzip
