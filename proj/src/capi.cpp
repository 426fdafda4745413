// C ABI shim: translates between the C++ core (exceptions, value types) and
// the flat snnzip.h surface (status codes, opaque handles, malloc'd strings).

#include "snnzip.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"

struct snnzip_config {
    nlohmann::json raw;        // the document as given (plus overrides)
    snnzip::RunConfig parsed;  // validated view, kept in sync with raw
    std::string source;
};

struct snnzip_model {
    snnzip::Network net;
    nlohmann::json metadata;
};

namespace {

thread_local std::string g_last_error;

snnzip_status status_from(snnzip::Errc code) {
    using snnzip::Errc;
    switch (code) {
        case Errc::invalid_argument: return SNNZIP_ERR_INVALID_ARGUMENT;
        case Errc::parse: return SNNZIP_ERR_PARSE;
        case Errc::io: return SNNZIP_ERR_IO;
        case Errc::degenerate_input: return SNNZIP_ERR_DEGENERATE_INPUT;
        case Errc::unsupported_layer: return SNNZIP_ERR_UNSUPPORTED_LAYER;
        case Errc::invalid_state: return SNNZIP_ERR_INVALID_STATE;
        case Errc::training_failure: return SNNZIP_ERR_TRAINING_FAILURE;
    }
    return SNNZIP_ERR_UNKNOWN;
}

template <typename Fn>
snnzip_status guarded(Fn&& fn) {
    try {
        fn();
        return SNNZIP_OK;
    } catch (const snnzip::Error& e) {
        g_last_error = e.what();
        return status_from(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SNNZIP_ERR_UNKNOWN;
    } catch (...) {
        g_last_error = "unknown error";
        return SNNZIP_ERR_UNKNOWN;
    }
}

snnzip_status arg_error(const char* message) {
    g_last_error = message;
    return SNNZIP_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (p == nullptr) std::abort();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

nlohmann::json::json_pointer pointer_for(const char* dotted_key) {
    std::string path;
    for (const char* c = dotted_key; *c != '\0'; ++c) {
        if (path.empty() || *c == '.') {
            path += '/';
            if (*c == '.') continue;
        }
        path += *c;
    }
    return nlohmann::json::json_pointer(path);
}

std::string resolve_checkpoint_dir(const snnzip_config* cfg, const char* checkpoint_dir) {
    return checkpoint_dir != nullptr ? std::string(checkpoint_dir) : snnzip::default_checkpoint_dir(cfg->parsed);
}

}  // namespace

extern "C" {

const char* snnzip_version(void) { return "0.1.0"; }

const char* snnzip_last_error(void) { return g_last_error.c_str(); }

void snnzip_string_free(char* s) { std::free(s); }

snnzip_status snnzip_config_load(const char* path, snnzip_config** out) {
    if (path == nullptr || out == nullptr) return arg_error("snnzip_config_load: null argument");
    return guarded([&] {
        auto cfg = std::make_unique<snnzip_config>();
        cfg->raw = snnzip::load_config_document(path);
        cfg->parsed = snnzip::parse_run_config(cfg->raw, path);
        cfg->source = path;
        *out = cfg.release();
    });
}

snnzip_status snnzip_config_parse(const char* json_text, const char* source_name, snnzip_config** out) {
    if (json_text == nullptr || out == nullptr) return arg_error("snnzip_config_parse: null argument");
    return guarded([&] {
        auto cfg = std::make_unique<snnzip_config>();
        const std::string source = source_name != nullptr ? source_name : "<inline>";
        cfg->raw = snnzip::parse_config_document(json_text, source);
        cfg->parsed = snnzip::parse_run_config(cfg->raw, source);
        cfg->source = source;
        *out = cfg.release();
    });
}

snnzip_status snnzip_config_set(snnzip_config* cfg, const char* dotted_key, const char* value_text) {
    if (cfg == nullptr || dotted_key == nullptr || value_text == nullptr || dotted_key[0] == '\0') {
        return arg_error("snnzip_config_set: null argument");
    }
    return guarded([&] {
        nlohmann::json value;
        try {
            value = nlohmann::json::parse(value_text);
        } catch (const nlohmann::json::exception&) {
            value = std::string(value_text);  // bare string ("svs", a path, ...)
        }
        nlohmann::json updated = cfg->raw;
        try {
            updated[pointer_for(dotted_key)] = std::move(value);
        } catch (const nlohmann::json::exception& e) {
            snnzip::fail(snnzip::Errc::parse, "config key \"" + std::string(dotted_key) + "\": " + e.what());
        }
        // Re-validate before committing so a bad override cannot leave the
        // handle broken.
        snnzip::RunConfig parsed = snnzip::parse_run_config(updated, cfg->source);
        cfg->raw = std::move(updated);
        cfg->parsed = std::move(parsed);
    });
}

snnzip_status snnzip_config_get(const snnzip_config* cfg, const char* dotted_key, char** text_out) {
    if (cfg == nullptr || text_out == nullptr) return arg_error("snnzip_config_get: null argument");
    return guarded([&] {
        const nlohmann::json resolved = snnzip::run_config_json(cfg->parsed);
        const nlohmann::json* node = &resolved;
        if (dotted_key != nullptr && dotted_key[0] != '\0') {
            try {
                node = &resolved.at(pointer_for(dotted_key));
            } catch (const nlohmann::json::exception& e) {
                snnzip::fail(snnzip::Errc::parse, "config key \"" + std::string(dotted_key) + "\": " + e.what());
            }
        }
        *text_out = dup_string(node->is_string() ? node->get<std::string>() : node->dump());
    });
}

void snnzip_config_free(snnzip_config* cfg) { delete cfg; }

snnzip_status snnzip_run(const snnzip_config* cfg, char** summary_json_out) {
    if (cfg == nullptr) return arg_error("snnzip_run: null config");
    return guarded([&] {
        const snnzip::PipelineResult res = snnzip::run_qp_pipeline(cfg->parsed);
        if (summary_json_out != nullptr) {
            nlohmann::json summary{
                {"checkpoint_dir", res.checkpoint_dir},
                {"train_accuracy", res.train_accuracy},
                {"test_accuracy", res.test_accuracy},
                {"size", snnzip::size_report_json(res.size_final, &res.size_baseline)},
                {"sops_total", res.sops.total},
            };
            *summary_json_out = dup_string(summary.dump(2));
        }
    });
}

snnzip_status snnzip_train(const snnzip_config* cfg) {
    if (cfg == nullptr) return arg_error("snnzip_train: null config");
    return guarded([&] { snnzip::pipeline_train(cfg->parsed); });
}

snnzip_status snnzip_prune(const snnzip_config* cfg, const char* checkpoint_dir) {
    if (cfg == nullptr) return arg_error("snnzip_prune: null config");
    return guarded([&] { snnzip::pipeline_prune(cfg->parsed, resolve_checkpoint_dir(cfg, checkpoint_dir)); });
}

snnzip_status snnzip_finetune(const snnzip_config* cfg, const char* checkpoint_dir) {
    if (cfg == nullptr) return arg_error("snnzip_finetune: null config");
    return guarded([&] { snnzip::pipeline_finetune(cfg->parsed, resolve_checkpoint_dir(cfg, checkpoint_dir)); });
}

snnzip_status snnzip_analyze(const snnzip_config* cfg, const char* checkpoint_dir, char** json_out) {
    if (cfg == nullptr) return arg_error("snnzip_analyze: null config");
    return guarded([&] {
        const nlohmann::json j = snnzip::pipeline_analyze(cfg->parsed, resolve_checkpoint_dir(cfg, checkpoint_dir));
        if (json_out != nullptr) *json_out = dup_string(j.dump(2));
    });
}

snnzip_status snnzip_report(const snnzip_config* cfg, const char* checkpoint_dir, char** json_out) {
    if (cfg == nullptr) return arg_error("snnzip_report: null config");
    return guarded([&] {
        const nlohmann::json j = snnzip::pipeline_report(cfg->parsed, resolve_checkpoint_dir(cfg, checkpoint_dir));
        if (json_out != nullptr) *json_out = dup_string(j.dump(2));
    });
}

snnzip_status snnzip_model_load(const char* checkpoint_dir, snnzip_model** out) {
    if (checkpoint_dir == nullptr || out == nullptr) return arg_error("snnzip_model_load: null argument");
    return guarded([&] {
        snnzip::LoadedCheckpoint loaded = snnzip::load_checkpoint(checkpoint_dir);
        *out = new snnzip_model{std::move(loaded.net), std::move(loaded.metadata)};
    });
}

void snnzip_model_free(snnzip_model* model) { delete model; }

snnzip_status snnzip_model_layer_count(const snnzip_model* model, size_t* out) {
    if (model == nullptr || out == nullptr) return arg_error("snnzip_model_layer_count: null argument");
    *out = model->net.layer_count();
    return SNNZIP_OK;
}

snnzip_status snnzip_model_parameter_count(const snnzip_model* model, size_t* out) {
    if (model == nullptr || out == nullptr) return arg_error("snnzip_model_parameter_count: null argument");
    *out = model->net.parameter_count();
    return SNNZIP_OK;
}

snnzip_status snnzip_model_size_json(const snnzip_model* model, char** json_out) {
    if (model == nullptr || json_out == nullptr) return arg_error("snnzip_model_size_json: null argument");
    return guarded([&] {
        const snnzip::SizeReport r = snnzip::model_size(model->net);
        *json_out = dup_string(snnzip::size_report_json(r, nullptr).dump(2));
    });
}

snnzip_status snnzip_manifest(const char* checkpoint_dir, char** text_out) {
    if (checkpoint_dir == nullptr || text_out == nullptr) return arg_error("snnzip_manifest: null argument");
    return guarded([&] { *text_out = dup_string(snnzip::read_manifest_text(checkpoint_dir)); });
}

}  // extern "C"
