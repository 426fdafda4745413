// snnzip command line.  A thin consumer of the public C ABI: parse arguments,
// forward to the library, map status codes onto the exit contract
// (0 ok, 1 usage, 2 configuration, 3 runtime).

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "snnzip.h"

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> bits;
    std::string criterion;
    std::string out_dir;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required) {
    auto* cfg = cmd->add_option("--config", o.config_path, "run configuration (JSON)");
    if (config_required) cfg->required();
    cmd->add_option("--seed", o.seed, "override the run seed");
    cmd->add_option("--bits", o.bits, "override the default quantizer bit width (2, 4 or 8)")
        ->check(CLI::IsMember({2, 4, 8}));
    cmd->add_option("--criterion", o.criterion, "channel importance criterion")
        ->check(CLI::IsMember({"sca", "svs"}));
    cmd->add_option("--out", o.out_dir, "override the output directory");
    cmd->add_flag("--deterministic", o.deterministic, "record the determinism pledge in the echoed config");
}

int runtime_exit(snnzip_status st) { return st == SNNZIP_ERR_PARSE ? 2 : 3; }

int print_error(snnzip_status st) {
    std::fprintf(stderr, "error: %s\n", snnzip_last_error());
    return runtime_exit(st);
}

// Loads the config and applies the flag overrides.  Returns 0 and fills *out
// on success; otherwise prints the error and returns the exit code
// (configuration problems are exit 2).
int load_config(const CommonOpts& o, snnzip_config** out) {
    snnzip_status st = snnzip_config_load(o.config_path.c_str(), out);
    if (st != SNNZIP_OK) {
        std::fprintf(stderr, "error: %s\n", snnzip_last_error());
        return 2;
    }
    const auto set = [&](const char* key, const std::string& value) {
        const snnzip_status s = snnzip_config_set(*out, key, value.c_str());
        return s == SNNZIP_OK ? 0 : print_error(s);
    };
    int rc = 0;
    if (o.seed && rc == 0) rc = set("seed", std::to_string(*o.seed));
    if (o.bits && rc == 0) rc = set("quantizer.bits", std::to_string(*o.bits));
    if (!o.criterion.empty() && rc == 0) rc = set("prune.criterion", o.criterion);
    if (!o.out_dir.empty() && rc == 0) rc = set("output_dir", o.out_dir);
    if (o.deterministic && rc == 0) rc = set("deterministic", "true");
    if (rc != 0) {
        snnzip_config_free(*out);
        *out = nullptr;
    }
    return rc;
}

std::string checkpoint_or_default(snnzip_config* cfg, const std::string& positional) {
    if (!positional.empty()) return positional;
    char* out_dir = nullptr;
    if (snnzip_config_get(cfg, "output_dir", &out_dir) != SNNZIP_OK) return "checkpoint";
    std::string dir(out_dir);
    snnzip_string_free(out_dir);
    return dir + "/checkpoint";
}

void print_owned(char* text) {
    if (text == nullptr) return;
    std::printf("%s\n", text);
    snnzip_string_free(text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"snnzip — quantize-and-prune compression for spiking neural networks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", snnzip_version());

    CommonOpts opts;
    std::string checkpoint;

    CLI::App* cmd_run = app.add_subcommand("run", "full pipeline: train, prune, fine-tune, report");
    add_common(cmd_run, opts, true);

    CLI::App* cmd_train = app.add_subcommand("train", "phase-1 training into a fresh checkpoint");
    add_common(cmd_train, opts, true);

    CLI::App* cmd_prune = app.add_subcommand("prune", "score channel importance and remove low scorers");
    add_common(cmd_prune, opts, true);
    cmd_prune->add_option("checkpoint", checkpoint, "model directory (default: <output_dir>/checkpoint)");

    CLI::App* cmd_finetune = app.add_subcommand("finetune", "post-pruning recovery training");
    add_common(cmd_finetune, opts, true);
    cmd_finetune->add_option("checkpoint", checkpoint, "model directory (default: <output_dir>/checkpoint)");

    CLI::App* cmd_analyze = app.add_subcommand("analyze", "bit-width utilization and channel importance reports");
    add_common(cmd_analyze, opts, true);
    cmd_analyze->add_option("checkpoint", checkpoint, "model directory (default: <output_dir>/checkpoint)");

    CLI::App* cmd_report = app.add_subcommand("report", "storage and synaptic-operation accounting");
    add_common(cmd_report, opts, true);
    cmd_report->add_option("checkpoint", checkpoint, "model directory (default: <output_dir>/checkpoint)");

    CLI::App* cmd_inspect = app.add_subcommand("inspect", "print a stored model's manifest");
    add_common(cmd_inspect, opts, false);
    cmd_inspect->add_option("checkpoint", checkpoint, "model directory (default: <output_dir>/checkpoint)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // help/version exit 0; any parse problem is usage
    }

    if (*cmd_inspect && checkpoint.empty() && opts.config_path.empty()) {
        std::fprintf(stderr, "error: inspect needs a checkpoint directory or --config\n");
        return 1;
    }

    // inspect without --config reads the directory directly.
    if (*cmd_inspect && opts.config_path.empty()) {
        char* text = nullptr;
        const snnzip_status st = snnzip_manifest(checkpoint.c_str(), &text);
        if (st != SNNZIP_OK) return print_error(st);
        std::fputs(text, stdout);
        snnzip_string_free(text);
        return 0;
    }

    snnzip_config* cfg = nullptr;
    if (const int rc = load_config(opts, &cfg); rc != 0) return rc;

    int rc = 0;
    snnzip_status st = SNNZIP_OK;
    if (*cmd_run) {
        char* summary = nullptr;
        st = snnzip_run(cfg, &summary);
        if (st == SNNZIP_OK) print_owned(summary);
    } else if (*cmd_train) {
        st = snnzip_train(cfg);
        if (st == SNNZIP_OK) std::printf("checkpoint: %s\n", checkpoint_or_default(cfg, "").c_str());
    } else if (*cmd_prune) {
        st = snnzip_prune(cfg, checkpoint.empty() ? nullptr : checkpoint.c_str());
        if (st == SNNZIP_OK) std::printf("checkpoint: %s\n", checkpoint_or_default(cfg, "").c_str());
    } else if (*cmd_finetune) {
        st = snnzip_finetune(cfg, checkpoint.empty() ? nullptr : checkpoint.c_str());
        if (st == SNNZIP_OK) std::printf("checkpoint: %s\n", checkpoint_or_default(cfg, "").c_str());
    } else if (*cmd_analyze) {
        char* json = nullptr;
        st = snnzip_analyze(cfg, checkpoint.empty() ? nullptr : checkpoint.c_str(), &json);
        if (st == SNNZIP_OK) print_owned(json);
    } else if (*cmd_report) {
        char* json = nullptr;
        st = snnzip_report(cfg, checkpoint.empty() ? nullptr : checkpoint.c_str(), &json);
        if (st == SNNZIP_OK) print_owned(json);
    } else if (*cmd_inspect) {
        char* text = nullptr;
        st = snnzip_manifest(checkpoint_or_default(cfg, checkpoint).c_str(), &text);
        if (st == SNNZIP_OK) {
            std::fputs(text, stdout);
            snnzip_string_free(text);
        }
    }
    if (st != SNNZIP_OK) rc = print_error(st);

    snnzip_config_free(cfg);
    return rc;
}
