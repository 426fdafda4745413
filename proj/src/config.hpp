#pragma once

// Run configuration: one JSON document describing the dataset, the layer
// stack, the quantization and pruning settings, and the two training phases.
// Parsing is strict — unknown keys are an error, referenced files must exist —
// so a typo fails at load time, not three stages into a run.

#include <cstdint>
#include <optional>
#include <string>

#include "data.hpp"
#include "json.hpp"
#include "network.hpp"
#include "prune.hpp"
#include "train.hpp"

namespace snnzip {

// quantize_first is the standard flow (quantized training, prune, quantized
// fine-tune).  prune_first trains full precision, prunes, then splits the
// fine-tune budget into a full-precision half and a quantized half.
enum class PipelineOrder { quantize_first, prune_first };

const char* order_name(PipelineOrder o);
PipelineOrder order_from_name(const std::string& name);

struct DatasetConfig {
    enum class Type { synth_blobs, idx, csv };
    Type type = Type::synth_blobs;

    // synth_blobs (class count comes from the top-level "classes")
    BlobParams blobs;
    std::size_t per_class_test = 50;
    std::uint64_t seed = 1;

    // idx
    std::string train_images, train_labels, test_images, test_labels;

    // csv
    std::string train_csv, test_csv;
};

struct PruneConfig {
    PruneCriterion criterion = PruneCriterion::svs;
    double epsilon = 1e-6;        // singular-value significance threshold
    std::size_t score_batch = 64;
    std::size_t score_batches = 1;
    std::uint64_t score_seed = 101;
};

struct RunConfig {
    std::uint64_t seed = 7;
    bool deterministic = false;
    std::string output_dir = "out";
    std::size_t time_steps = 2;
    PipelineOrder order = PipelineOrder::quantize_first;

    Architecture arch;  // with the default quantizer already applied to hidden weighted layers
    DatasetConfig dataset;

    PhaseConfig train_phase;     // epochs == 0 skips the phase
    PhaseConfig finetune_phase;  // ditto; defaults to Adam
    PruneConfig prune;
};

// Parses and validates; source names the document in error messages.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& source);
RunConfig parse_run_config_text(const std::string& text, const std::string& source);
RunConfig load_run_config_file(const std::string& path);

// The document itself, parsed but not validated — for callers that keep the
// text as given and re-validate after edits.
nlohmann::json parse_config_document(const std::string& text, const std::string& source);
nlohmann::json load_config_document(const std::string& path);

// The resolved configuration re-serialized (echoed into the output directory
// so a run can be reproduced from its artifacts alone).
nlohmann::json run_config_json(const RunConfig& cfg);

// Loads the train/test pair the config describes.
struct DataSplits {
    Dataset train, test;
};
DataSplits load_dataset(const RunConfig& cfg);

}  // namespace snnzip
