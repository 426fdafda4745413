#pragma once

// Dataset synthesis and ingestion.  Synthetic sets are class-conditional
// Gaussian bumps (deterministic under seed, linearly separable at the default
// spread).  Real data loads from IDX (the MNIST container: big-endian dims,
// unsigned-byte payload) or from CSV with header "label,p0,p1,...".  Pixels
// are scaled to [0, 1].

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace snnzip {

struct Dataset {
    Tensor samples;  // [N, C, H, W]
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;
    std::string split;  // "train" / "test"

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

struct BlobParams {
    std::size_t n_classes = 4;
    std::size_t n_per_class = 100;
    std::size_t image_size = 16;
    double sigma = 2.0;        // bump radius in pixels
    double jitter = 1.0;       // center jitter stddev in pixels
    double noise = 0.05;       // additive uniform noise amplitude
    double ring_radius = 0.3;  // class-center ring radius as a fraction of image size
};

// Class k's bump sits at angle 2*pi*k/K on a ring around the image center;
// samples jitter the center and amplitude, add noise, and clamp to [0, 1].
Dataset synth_blobs(const BlobParams& params, std::uint64_t seed, const std::string& split);

// IDX image + label file pair.  Errors carry the file and byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Re-encodes a dataset as an IDX pair (bytes = round(pixel * 255)).
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

// CSV with header "label,p0,p1,...": one row per sample, pixels already in
// [0, 1], single-channel square images inferred from the pixel count.
Dataset load_csv(const std::string& path);

}  // namespace snnzip
