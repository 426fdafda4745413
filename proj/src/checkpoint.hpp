#pragma once

// On-disk model format: a directory holding manifest.json (structure,
// hyperparameters, and a payload table) plus weights.bin (the raw tensor
// bytes).  Quantized layers store their integer codes bit-packed at the
// layer's width together with the frozen range coefficient; everything else
// is float32, little-endian.  Saving canonicalizes the network first, so
// save -> load -> forward reproduces the saved model bit for bit.

#include <string>

#include "json.hpp"
#include "network.hpp"

namespace snnzip {

inline constexpr const char* kCheckpointFormat = "snnzip-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Writes manifest.json + weights.bin into dir (created if missing).  extra is
// merged into the manifest under "metadata" (pass an empty object for none).
// The network is canonicalized in place as a side effect.
void save_checkpoint(Network& net, const std::string& dir, const nlohmann::json& extra);

struct LoadedCheckpoint {
    Network net;
    nlohmann::json metadata;
};

// Reads a directory written by save_checkpoint.  Rejects unknown format
// versions and any payload whose packed codes fail re-expansion checks.
LoadedCheckpoint load_checkpoint(const std::string& dir);

// The manifest text verbatim (for inspection commands).
std::string read_manifest_text(const std::string& dir);

}  // namespace snnzip
