#pragma once

// Stage orchestration for the compress flow — train, score, prune, fine-tune,
// evaluate, report — plus the staged entry points behind the CLI.  A failing
// stage rethrows with its name prefixed; whatever artifacts exist are parked
// under <output_dir>/quarantine/ first so a broken run leaves evidence.

#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "prune.hpp"
#include "train.hpp"

namespace snnzip {

struct PipelineResult {
    std::vector<EpochRecord> train_log;
    std::vector<EpochRecord> finetune_log;
    std::vector<ImportanceReport> reports;
    PruneMask mask;
    SizeReport size_baseline;  // same structure at full precision, unpruned
    SizeReport size_final;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<UtilizationEntry> utilization;
    SopReport sops;
    std::string checkpoint_dir;
};

// The full flow in the configured order.  Writes the checkpoint and every
// report under cfg.output_dir and returns the collected numbers.  When
// out_net is non-null the final network is copied there.
PipelineResult run_qp_pipeline(const RunConfig& cfg, Network* out_net = nullptr);

// Staged entry points.  Each reads and/or writes <checkpoint_dir> (defaulting
// to <output_dir>/checkpoint) so the stages chain through the filesystem.
void pipeline_train(const RunConfig& cfg);
void pipeline_prune(const RunConfig& cfg, const std::string& checkpoint_dir);
void pipeline_finetune(const RunConfig& cfg, const std::string& checkpoint_dir);

// Utilization + importance (+ score robustness when the config asks for two
// or more scoring batches) from a stored model and the configured dataset.
nlohmann::json pipeline_analyze(const RunConfig& cfg, const std::string& checkpoint_dir);

// Storage and operation accounting from a stored model.
nlohmann::json pipeline_report(const RunConfig& cfg, const std::string& checkpoint_dir);

std::string default_checkpoint_dir(const RunConfig& cfg);

// Machine-readable twin of the storage table (baseline may be null).
nlohmann::json size_report_json(const SizeReport& r, const SizeReport* baseline);

}  // namespace snnzip
