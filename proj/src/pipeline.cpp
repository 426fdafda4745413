#include "pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "error.hpp"

namespace snnzip {

namespace {

using nlohmann::json;

// Distinct deterministic seed streams for the phases of one run.
constexpr std::uint64_t kTrainSalt = 0x7261696e00000001ull;
constexpr std::uint64_t kFinetuneSalt = 0x66696e6500000002ull;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(Errc::io, "cannot create directory " + dir + ": " + ec.message());
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) fail(Errc::io, "cannot write " + path);
}

void write_json_file(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(prec) << v;
    return o.str();
}

std::string pct(double ratio) { return fmt(100.0 * ratio, 2) + "%"; }

// Parks the error message and, when a network exists, its state under
// <output_dir>/quarantine/ so a failed run leaves inspectable evidence.
void quarantine(const RunConfig& cfg, Network* net, const std::string& stage_name, const std::string& message) {
    try {
        const std::string qdir = cfg.output_dir + "/quarantine";
        ensure_dir(qdir);
        write_file(qdir + "/error.txt", "stage " + stage_name + ": " + message + "\n");
        if (net != nullptr) {
            save_checkpoint(*net, qdir + "/checkpoint", json{{"stage", stage_name}, {"error", message}});
        }
    } catch (...) {
        // Quarantine is best effort; the original error is what matters.
    }
}

template <typename Fn>
decltype(auto) stage(const RunConfig& cfg, Network* net, const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        quarantine(cfg, net, name, e.what());
        throw Error(e.code(), "stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
        quarantine(cfg, net, name, e.what());
        throw Error(Errc::invalid_state, "stage " + name + ": " + std::string(e.what()));
    }
}

// Temporarily strips quantizer specs (the full-precision phases of the
// prune-first order).  Returns what was removed, indexed by layer.
std::vector<std::optional<QuantizerSpec>> detach_quantizers(Network& net) {
    std::vector<std::optional<QuantizerSpec>> saved(net.layer_count());
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!net.layer(i).quantizer) continue;
        saved[i] = net.layer(i).quantizer;
        Layer& l = net.layer_mut(i);
        l.quantizer.reset();
        l.quantizer_frozen = false;
        l.frozen_gamma = 0.0;
    }
    return saved;
}

void attach_quantizers(Network& net, const std::vector<std::optional<QuantizerSpec>>& specs) {
    if (specs.size() != net.layer_count()) {
        fail(Errc::invalid_state, "quantizer list does not match the network's layer count");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (!specs[i] || net.layer(i).quantizer) continue;
        Layer& l = net.layer_mut(i);
        l.quantizer = specs[i];
        l.quantizer_frozen = false;
        l.frozen_gamma = 0.0;
    }
}

// Quantizer specs the configuration assigns, aligned to a (possibly pruned)
// network with the same layer stack.
std::vector<std::optional<QuantizerSpec>> config_quantizers(const RunConfig& cfg, const Network& net) {
    if (cfg.arch.layers.size() != net.layer_count()) {
        fail(Errc::invalid_state, "configuration has " + std::to_string(cfg.arch.layers.size()) +
                                      " layers but the stored model has " + std::to_string(net.layer_count()));
    }
    std::vector<std::optional<QuantizerSpec>> out(net.layer_count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cfg.arch.layers[i].quantizer;
    return out;
}

std::vector<double> prunable_ratios(const Network& net) {
    std::vector<double> ratios;
    for (const Layer& l : net.layers()) {
        if (l.kind == LayerKind::conv2d && l.prunable) ratios.push_back(l.prune_ratio);
    }
    return ratios;
}

// Storage footprint of the same architecture at full precision, unpruned.
SizeReport baseline_size(const RunConfig& cfg) {
    Architecture arch = cfg.arch;
    for (LayerDef& d : arch.layers) d.quantizer.reset();
    Network fp = Network::build(arch, cfg.seed);
    return model_size(fp);
}

std::vector<UtilizationEntry> compute_utilization(const Network& net) {
    std::vector<UtilizationEntry> out;
    for (const Layer& l : net.layers()) {
        if (!l.weighted() || !l.quantizer) continue;
        const QuantizeResult r = l.quantizer_frozen ? quantize_with_gamma(l.weight, *l.quantizer, l.frozen_gamma)
                                                    : fake_quantize(l.weight, *l.quantizer);
        // The grid sees w / gamma, so the analytic estimate is fed the
        // rescaled view of the weights.
        Tensor scaled(l.weight.shape());
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = l.weight[i] / r.gamma;
        UtilizationEntry e = utilization(r.codes, l.quantizer->bits, &scaled);
        e.layer = l.name;
        out.push_back(std::move(e));
    }
    return out;
}

Tensor head_batch(const Tensor& samples, std::size_t count) {
    Tensor out({count, samples.dim(1), samples.dim(2), samples.dim(3)});
    std::copy(samples.data(), samples.data() + out.size(), out.data());
    return out;
}

json mask_json(const PruneMask& mask) {
    json out = json::array();
    for (const auto& lm : mask.layers) {
        out.push_back(json{{"layer_index", lm.layer_index},
                           {"ratio", lm.ratio},
                           {"total_channels", lm.total_channels},
                           {"keep", lm.keep}});
    }
    return out;
}

json size_json(const SizeReport& r, const SizeReport* baseline) { return size_report_json(r, baseline); }

}  // namespace

json size_report_json(const SizeReport& r, const SizeReport* baseline) {
    json layers = json::array();
    for (const auto& e : r.layers) {
        layers.push_back(json{{"name", e.name},
                              {"kind", e.kind},
                              {"weight_bits", e.bits},
                              {"quantized_params", e.quantized_params},
                              {"full_precision_params", e.full_precision_params},
                              {"total_bits", e.total_bits}});
    }
    json out{{"layers", std::move(layers)},
             {"quantized_params", r.quantized_params},
             {"full_precision_params", r.full_precision_params},
             {"total_bits", r.total_bits},
             {"total_bytes", r.total_bytes},
             {"megabytes", r.megabytes}};
    if (baseline != nullptr) {
        out["baseline_total_bits"] = baseline->total_bits;
        out["baseline_total_bytes"] = baseline->total_bytes;
        out["size_ratio"] = static_cast<double>(r.total_bits) / static_cast<double>(baseline->total_bits);
    }
    return out;
}

namespace {

std::string size_text(const SizeReport& r, const SizeReport* baseline) {
    std::ostringstream o;
    o << "storage accounting (MB = 2^20 bytes)\n\n";
    o << std::left << std::setw(14) << "layer" << std::setw(9) << "kind" << std::setw(13) << "weight-bits"
      << std::setw(13) << "quant-params" << std::setw(11) << "fp-params" << "total-bits\n";
    for (const auto& e : r.layers) {
        o << std::left << std::setw(14) << e.name << std::setw(9) << e.kind << std::setw(13) << e.bits
          << std::setw(13) << e.quantized_params << std::setw(11) << e.full_precision_params << e.total_bits << "\n";
    }
    o << "\ntotal: " << r.total_bits << " bits = " << r.total_bytes << " bytes = " << fmt(r.megabytes, 6) << " MB\n";
    if (baseline != nullptr) {
        o << "baseline (full precision, unpruned): " << baseline->total_bits << " bits = " << baseline->total_bytes
          << " bytes\n";
        o << "final/baseline: " << pct(static_cast<double>(r.total_bits) / static_cast<double>(baseline->total_bits))
          << "\n";
    }
    return o.str();
}

json utilization_json(const std::vector<UtilizationEntry>& entries) {
    json out = json::array();
    for (const auto& e : entries) {
        json j{{"layer", e.layer},
               {"bits", e.bits},
               {"codes_used", e.n_actual},
               {"codes_total", e.n_total},
               {"ratio", e.ratio}};
        if (e.analytic) j["analytic_ratio"] = *e.analytic;
        out.push_back(std::move(j));
    }
    return json{{"layers", std::move(out)}};
}

std::string utilization_text(const std::vector<UtilizationEntry>& entries) {
    std::ostringstream o;
    o << "bit-width utilization (distinct codes in use / available codes)\n\n";
    if (entries.empty()) {
        o << "no quantized layers\n";
        return o.str();
    }
    o << std::left << std::setw(14) << "layer" << std::setw(6) << "bits" << std::setw(6) << "used" << std::setw(7)
      << "total" << std::setw(10) << "ratio" << "analytic\n";
    for (const auto& e : entries) {
        o << std::left << std::setw(14) << e.layer << std::setw(6) << e.bits << std::setw(6) << e.n_actual
          << std::setw(7) << e.n_total << std::setw(10) << pct(e.ratio) << (e.analytic ? pct(*e.analytic) : "-")
          << "\n";
    }
    return o.str();
}

json importance_json(const std::vector<ImportanceReport>& reports) {
    json layers = json::array();
    for (const auto& r : reports) {
        json j{{"layer_index", r.layer_index}, {"name", r.layer_name},
               {"criterion", criterion_name(r.criterion)}, {"batch_size", r.batch_size},
               {"time_steps", r.time_steps},   {"scores", r.scores},
               {"batch_scores", r.batch_scores}};
        if (r.batch_scores.size() >= 2) {
            try {
                j["avg_cos_similarity"] = avg_cos_similarity(r);
            } catch (const Error&) {
                j["avg_cos_similarity"] = nullptr;  // a zero-activity batch makes it undefined
            }
        }
        layers.push_back(std::move(j));
    }
    return json{{"layers", std::move(layers)}};
}

std::string importance_text(const std::vector<ImportanceReport>& reports) {
    std::ostringstream o;
    o << "channel importance\n\n";
    if (reports.empty()) {
        o << "no prunable layers\n";
        return o.str();
    }
    for (const auto& r : reports) {
        for (std::size_t c = 0; c < r.scores.size(); ++c) {
            o << "layer=" << r.layer_name << " channel=" << c << " score=" << fmt(r.scores[c]) << " criterion="
              << criterion_name(r.criterion) << "\n";
        }
    }
    bool header = false;
    for (const auto& r : reports) {
        if (r.batch_scores.size() < 2) continue;
        if (!header) {
            o << "\nscore robustness across " << r.batch_scores.size() << " batches (mean pairwise cosine)\n";
            header = true;
        }
        try {
            o << "layer=" << r.layer_name << " avg_cos_similarity=" << fmt(avg_cos_similarity(r)) << "\n";
        } catch (const Error&) {
            o << "layer=" << r.layer_name << " avg_cos_similarity=undefined (zero-activity batch)\n";
        }
    }
    return o.str();
}

json sops_json(const SopReport& r) {
    json layers = json::array();
    for (const auto& e : r.layers) layers.push_back(json{{"layer", e.name}, {"sops", e.sops}});
    return json{{"layers", std::move(layers)},
                {"total", r.total},
                {"per_sample", r.batch == 0 ? 0.0 : static_cast<double>(r.total) / static_cast<double>(r.batch)},
                {"batch", r.batch},
                {"time_steps", r.time_steps}};
}

std::string sops_text(const SopReport& r) {
    std::ostringstream o;
    o << "synaptic operations for one recorded pass (batch=" << r.batch << ", time_steps=" << r.time_steps << ")\n";
    o << "convention: each spike entering a weighted layer costs one accumulate per\n"
         "connection it touches (its fan-out), summed over time steps; the first\n"
         "weighted layer (analog input under direct coding) and pooling are excluded.\n\n";
    for (const auto& e : r.layers) o << "layer=" << e.name << " sops=" << e.sops << "\n";
    o << "total=" << r.total;
    if (r.batch > 0) o << " (" << fmt(static_cast<double>(r.total) / static_cast<double>(r.batch), 1) << " per sample)";
    o << "\n";
    return o.str();
}

json accuracy_json(const PipelineResult& res, const DataSplits& data) {
    return json{{"train_accuracy", res.train_accuracy},
                {"train_samples", data.train.size()},
                {"test_accuracy", res.test_accuracy},
                {"test_samples", data.test.size()}};
}

std::string accuracy_text(const PipelineResult& res, const DataSplits& data) {
    std::ostringstream o;
    o << "train accuracy: " << fmt(res.train_accuracy) << " (" << data.train.size() << " samples)\n";
    o << "test accuracy: " << fmt(res.test_accuracy) << " (" << data.test.size() << " samples)\n";
    return o.str();
}

std::string log_text(const std::vector<EpochRecord>& train_log, const std::vector<EpochRecord>& finetune_log) {
    std::ostringstream o;
    for (const auto& rec : train_log) o << "phase=train " << rec.line() << "\n";
    for (const auto& rec : finetune_log) o << "phase=finetune " << rec.line() << "\n";
    return o.str();
}

// Phase 2 fine-tuning per the configured order.  quantize_first runs the
// whole budget with live quantizers; prune_first spends half the epochs at
// full precision, reattaches the configured quantizers, then spends the rest
// quantized.
std::vector<EpochRecord> run_finetune(Network& net, const DataSplits& data, const RunConfig& cfg,
                                      const std::vector<std::optional<QuantizerSpec>>& saved_specs,
                                      const LogSink& log) {
    const std::uint64_t seed = cfg.seed ^ kFinetuneSalt;
    if (cfg.order == PipelineOrder::quantize_first) {
        return finetune(net, data.train.samples, data.train.labels, cfg.finetune_phase, cfg.time_steps, seed, log);
    }
    PhaseConfig fp_half = cfg.finetune_phase;
    fp_half.epochs = cfg.finetune_phase.epochs / 2;
    PhaseConfig q_half = cfg.finetune_phase;
    q_half.epochs = cfg.finetune_phase.epochs - fp_half.epochs;

    std::vector<EpochRecord> records =
        finetune(net, data.train.samples, data.train.labels, fp_half, cfg.time_steps, seed, log);
    attach_quantizers(net, saved_specs);
    std::vector<EpochRecord> rest = finetune(net, data.train.samples, data.train.labels, q_half, cfg.time_steps,
                                             seed ^ 0x1ull, log);
    for (EpochRecord& r : rest) {
        r.epoch += fp_half.epochs;
        records.push_back(r);
    }
    return records;
}

}  // namespace

std::string default_checkpoint_dir(const RunConfig& cfg) { return cfg.output_dir + "/checkpoint"; }

PipelineResult run_qp_pipeline(const RunConfig& cfg, Network* out_net) {
    PipelineResult res;
    ensure_dir(cfg.output_dir);
    write_json_file(cfg.output_dir + "/config.json", run_config_json(cfg));

    DataSplits data = stage(cfg, nullptr, "dataset", [&] { return load_dataset(cfg); });
    Network net = stage(cfg, nullptr, "init", [&] { return Network::build(cfg.arch, cfg.seed); });

    std::vector<std::optional<QuantizerSpec>> saved_specs;
    if (cfg.order == PipelineOrder::prune_first) saved_specs = detach_quantizers(net);

    stage(cfg, &net, "train", [&] {
        res.train_log = train_quantized(net, data.train.samples, data.train.labels, cfg.train_phase,
                                        cfg.time_steps, cfg.seed ^ kTrainSalt);
    });

    const std::vector<double> ratios = prunable_ratios(net);
    if (!ratios.empty()) {
        stage(cfg, &net, "score", [&] {
            res.reports = score_network(net, data.train.samples, cfg.time_steps, cfg.prune.criterion,
                                        cfg.prune.epsilon, cfg.prune.score_batch, cfg.prune.score_batches,
                                        cfg.prune.score_seed);
        });
        stage(cfg, &net, "prune", [&] {
            res.mask = build_mask(res.reports, ratios);
            apply_mask(net, res.mask);
        });
    }

    stage(cfg, &net, "finetune", [&] { res.finetune_log = run_finetune(net, data, cfg, saved_specs, nullptr); });

    stage(cfg, &net, "evaluate", [&] {
        // Canonicalize first so the reported numbers describe exactly the
        // model the checkpoint will hold.
        net.canonicalize_for_storage();
        res.train_accuracy = evaluate_accuracy(net, data.train.samples, data.train.labels, cfg.time_steps,
                                               cfg.train_phase.batch_size);
        res.test_accuracy = evaluate_accuracy(net, data.test.samples, data.test.labels, cfg.time_steps,
                                              cfg.train_phase.batch_size);
    });

    res.checkpoint_dir = default_checkpoint_dir(cfg);
    stage(cfg, &net, "checkpoint", [&] {
        json meta{{"stage", "final"},
                  {"order", order_name(cfg.order)},
                  {"seed", cfg.seed},
                  {"criterion", criterion_name(cfg.prune.criterion)},
                  {"train_epochs", cfg.train_phase.epochs},
                  {"finetune_epochs", cfg.finetune_phase.epochs},
                  {"train_accuracy", res.train_accuracy},
                  {"test_accuracy", res.test_accuracy},
                  {"mask", mask_json(res.mask)}};
        save_checkpoint(net, res.checkpoint_dir, meta);
    });

    stage(cfg, &net, "report", [&] {
        res.size_final = model_size(net);
        res.size_baseline = baseline_size(cfg);
        res.utilization = compute_utilization(net);
        const std::size_t sop_batch = std::min<std::size_t>(cfg.prune.score_batch, data.test.size());
        const ForwardTrace trace = net.forward(head_batch(data.test.samples, sop_batch), cfg.time_steps);
        res.sops = count_sops(trace, net);

        write_file(cfg.output_dir + "/size_report.txt", size_text(res.size_final, &res.size_baseline));
        write_json_file(cfg.output_dir + "/size_report.json", size_json(res.size_final, &res.size_baseline));
        write_file(cfg.output_dir + "/utilization.txt", utilization_text(res.utilization));
        write_json_file(cfg.output_dir + "/utilization.json", utilization_json(res.utilization));
        write_file(cfg.output_dir + "/importance.txt", importance_text(res.reports));
        write_json_file(cfg.output_dir + "/importance.json", importance_json(res.reports));
        write_file(cfg.output_dir + "/accuracy.txt", accuracy_text(res, data));
        write_json_file(cfg.output_dir + "/accuracy.json", accuracy_json(res, data));
        write_file(cfg.output_dir + "/sops.txt", sops_text(res.sops));
        write_json_file(cfg.output_dir + "/sops.json", sops_json(res.sops));
        write_file(cfg.output_dir + "/train_log.txt", log_text(res.train_log, res.finetune_log));
    });

    if (out_net != nullptr) *out_net = std::move(net);
    return res;
}

void pipeline_train(const RunConfig& cfg) {
    ensure_dir(cfg.output_dir);
    write_json_file(cfg.output_dir + "/config.json", run_config_json(cfg));

    DataSplits data = stage(cfg, nullptr, "dataset", [&] { return load_dataset(cfg); });
    Network net = stage(cfg, nullptr, "init", [&] { return Network::build(cfg.arch, cfg.seed); });
    if (cfg.order == PipelineOrder::prune_first) detach_quantizers(net);

    std::vector<EpochRecord> log;
    stage(cfg, &net, "train", [&] {
        log = train_quantized(net, data.train.samples, data.train.labels, cfg.train_phase, cfg.time_steps,
                              cfg.seed ^ kTrainSalt);
    });

    stage(cfg, &net, "checkpoint", [&] {
        json meta{{"stage", "train"},
                  {"order", order_name(cfg.order)},
                  {"seed", cfg.seed},
                  {"train_epochs", cfg.train_phase.epochs}};
        if (!log.empty()) {
            meta["final_loss"] = log.back().loss;
            meta["final_train_accuracy"] = log.back().accuracy;
        }
        save_checkpoint(net, default_checkpoint_dir(cfg), meta);
        write_file(cfg.output_dir + "/train_log.txt", log_text(log, {}));
    });
}

void pipeline_prune(const RunConfig& cfg, const std::string& checkpoint_dir) {
    ensure_dir(cfg.output_dir);
    Network net = stage(cfg, nullptr, "load", [&] { return load_checkpoint(checkpoint_dir).net; });
    DataSplits data = stage(cfg, nullptr, "dataset", [&] { return load_dataset(cfg); });

    // Ratios come from the configuration (so a ratio edit between train and
    // prune takes effect), which must describe the same prunable stack.
    std::vector<double> ratios;
    for (const LayerDef& d : cfg.arch.layers) {
        if (d.kind == LayerKind::conv2d && d.prunable) ratios.push_back(d.prune_ratio);
    }
    if (ratios.size() != prunable_ratios(net).size()) {
        fail(Errc::invalid_state, "stage prune: configuration lists " + std::to_string(ratios.size()) +
                                      " prunable layers but the stored model has " +
                                      std::to_string(prunable_ratios(net).size()));
    }

    std::vector<ImportanceReport> reports;
    PruneMask mask;
    if (!ratios.empty()) {
        stage(cfg, &net, "score", [&] {
            reports = score_network(net, data.train.samples, cfg.time_steps, cfg.prune.criterion, cfg.prune.epsilon,
                                    cfg.prune.score_batch, cfg.prune.score_batches, cfg.prune.score_seed);
        });
        stage(cfg, &net, "prune", [&] {
            mask = build_mask(reports, ratios);
            apply_mask(net, mask);
        });
    }

    stage(cfg, &net, "checkpoint", [&] {
        json meta{{"stage", "prune"},
                  {"criterion", criterion_name(cfg.prune.criterion)},
                  {"seed", cfg.seed},
                  {"mask", mask_json(mask)}};
        save_checkpoint(net, default_checkpoint_dir(cfg), meta);
        write_file(cfg.output_dir + "/importance.txt", importance_text(reports));
        write_json_file(cfg.output_dir + "/importance.json", importance_json(reports));
    });
}

void pipeline_finetune(const RunConfig& cfg, const std::string& checkpoint_dir) {
    ensure_dir(cfg.output_dir);
    Network net = stage(cfg, nullptr, "load", [&] { return load_checkpoint(checkpoint_dir).net; });
    DataSplits data = stage(cfg, nullptr, "dataset", [&] { return load_dataset(cfg); });

    std::vector<EpochRecord> log;
    stage(cfg, &net, "finetune", [&] {
        const auto saved_specs = cfg.order == PipelineOrder::prune_first
                                     ? config_quantizers(cfg, net)
                                     : std::vector<std::optional<QuantizerSpec>>(net.layer_count());
        log = run_finetune(net, data, cfg, saved_specs, nullptr);
    });

    PipelineResult res;
    stage(cfg, &net, "evaluate", [&] {
        net.canonicalize_for_storage();
        res.train_accuracy = evaluate_accuracy(net, data.train.samples, data.train.labels, cfg.time_steps,
                                               cfg.train_phase.batch_size);
        res.test_accuracy = evaluate_accuracy(net, data.test.samples, data.test.labels, cfg.time_steps,
                                              cfg.train_phase.batch_size);
    });

    stage(cfg, &net, "checkpoint", [&] {
        json meta{{"stage", "finetune"},
                  {"order", order_name(cfg.order)},
                  {"seed", cfg.seed},
                  {"finetune_epochs", cfg.finetune_phase.epochs},
                  {"train_accuracy", res.train_accuracy},
                  {"test_accuracy", res.test_accuracy}};
        save_checkpoint(net, default_checkpoint_dir(cfg), meta);
        write_file(cfg.output_dir + "/finetune_log.txt", log_text({}, log));
        write_file(cfg.output_dir + "/accuracy.txt", accuracy_text(res, data));
        write_json_file(cfg.output_dir + "/accuracy.json", accuracy_json(res, data));
    });
}

nlohmann::json pipeline_analyze(const RunConfig& cfg, const std::string& checkpoint_dir) {
    ensure_dir(cfg.output_dir);
    Network net = stage(cfg, nullptr, "load", [&] { return load_checkpoint(checkpoint_dir).net; });
    DataSplits data = stage(cfg, nullptr, "dataset", [&] { return load_dataset(cfg); });

    std::vector<UtilizationEntry> entries;
    std::vector<ImportanceReport> reports;
    stage(cfg, &net, "analyze", [&] {
        entries = compute_utilization(net);
        if (!prunable_ratios(net).empty()) {
            reports = score_network(net, data.train.samples, cfg.time_steps, cfg.prune.criterion, cfg.prune.epsilon,
                                    cfg.prune.score_batch, cfg.prune.score_batches, cfg.prune.score_seed);
        }
        write_file(cfg.output_dir + "/utilization.txt", utilization_text(entries));
        write_json_file(cfg.output_dir + "/utilization.json", utilization_json(entries));
        write_file(cfg.output_dir + "/importance.txt", importance_text(reports));
        write_json_file(cfg.output_dir + "/importance.json", importance_json(reports));
    });

    return json{{"utilization", utilization_json(entries)}, {"importance", importance_json(reports)}};
}

nlohmann::json pipeline_report(const RunConfig& cfg, const std::string& checkpoint_dir) {
    ensure_dir(cfg.output_dir);
    Network net = stage(cfg, nullptr, "load", [&] { return load_checkpoint(checkpoint_dir).net; });
    DataSplits data = stage(cfg, nullptr, "dataset", [&] { return load_dataset(cfg); });

    json out;
    stage(cfg, &net, "report", [&] {
        const SizeReport size = model_size(net);
        const SizeReport baseline = baseline_size(cfg);
        const std::size_t sop_batch = std::min<std::size_t>(cfg.prune.score_batch, data.test.size());
        const ForwardTrace trace = net.forward(head_batch(data.test.samples, sop_batch), cfg.time_steps);
        const SopReport sops = count_sops(trace, net);

        write_file(cfg.output_dir + "/size_report.txt", size_text(size, &baseline));
        write_json_file(cfg.output_dir + "/size_report.json", size_json(size, &baseline));
        write_file(cfg.output_dir + "/sops.txt", sops_text(sops));
        write_json_file(cfg.output_dir + "/sops.json", sops_json(sops));
        out = json{{"size", size_json(size, &baseline)}, {"sops", sops_json(sops)}};
    });
    return out;
}

}  // namespace snnzip
