#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace snnzip {

void Dataset::validate() const {
    if (labels.empty()) fail(Errc::invalid_argument, "dataset: empty");
    if (samples.rank() != 4 || samples.dim(0) != labels.size())
        fail(Errc::invalid_argument, "dataset: samples " + samples.shape_str() + " vs " +
                                         std::to_string(labels.size()) + " labels");
    if (n_classes == 0) fail(Errc::invalid_argument, "dataset: class count is 0");
    for (std::size_t l : labels)
        if (l >= n_classes)
            fail(Errc::invalid_argument, "dataset: label " + std::to_string(l) + " outside [0, " +
                                             std::to_string(n_classes) + ")");
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i] < 0.0 || samples[i] > 1.0)
            fail(Errc::invalid_argument, "dataset: pixel outside [0, 1]");
}

Dataset synth_blobs(const BlobParams& p, std::uint64_t seed, const std::string& split) {
    if (p.n_classes == 0 || p.n_per_class == 0 || p.image_size == 0)
        fail(Errc::invalid_argument, "synth_blobs: class count, per-class count and image size must be >= 1");
    const std::size_t S = p.image_size;
    const std::size_t n = p.n_classes * p.n_per_class;
    Dataset d;
    d.samples = Tensor({n, 1, S, S});
    d.labels.resize(n);
    d.n_classes = p.n_classes;
    d.split = split;

    Rng rng(seed);
    const double cx0 = (static_cast<double>(S) - 1.0) / 2.0;
    const double two_pi = 2.0 * 3.14159265358979323846;
    std::size_t i = 0;
    for (std::size_t k = 0; k < p.n_classes; ++k) {
        const double angle = two_pi * static_cast<double>(k) / static_cast<double>(p.n_classes);
        const double base_x = cx0 + p.ring_radius * static_cast<double>(S) * std::cos(angle);
        const double base_y = cx0 + p.ring_radius * static_cast<double>(S) * std::sin(angle);
        for (std::size_t s = 0; s < p.n_per_class; ++s, ++i) {
            const double cx = base_x + rng.normal(0.0, p.jitter);
            const double cy = base_y + rng.normal(0.0, p.jitter);
            const double amp = rng.uniform(0.8, 1.0);
            const double inv = 1.0 / (2.0 * p.sigma * p.sigma);
            double* img = d.samples.data() + i * S * S;
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x) {
                    const double dx = static_cast<double>(x) - cx;
                    const double dy = static_cast<double>(y) - cy;
                    double v = amp * std::exp(-(dx * dx + dy * dy) * inv);
                    if (p.noise > 0.0) v += rng.uniform(0.0, p.noise);
                    img[y * S + x] = std::clamp(v, 0.0, 1.0);
                }
            d.labels[i] = k;
        }
    }
    d.validate();
    return d;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

[[noreturn]] void idx_fail(const std::string& path, std::size_t offset, const std::string& what) {
    fail(Errc::parse, path + ": " + what + " (byte " + std::to_string(offset) + ")");
}

std::uint32_t read_u32be(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) idx_fail(path, b.size(), "truncated header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

struct IdxPayload {
    std::vector<std::uint32_t> dims;
    std::size_t data_offset = 0;
    std::vector<unsigned char> bytes;
};

IdxPayload read_idx(const std::string& path, std::uint32_t expected_magic) {
    IdxPayload p;
    p.bytes = read_file(path);
    if (p.bytes.empty()) idx_fail(path, 0, "empty file");
    const std::uint32_t magic = read_u32be(p.bytes, 0, path);
    if (magic != expected_magic) {
        std::ostringstream os;
        os << "bad magic 0x" << std::hex << magic << ", expected 0x" << expected_magic;
        idx_fail(path, 0, os.str());
    }
    const std::size_t ndim = magic & 0xff;
    std::size_t expect = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        p.dims.push_back(read_u32be(p.bytes, 4 + 4 * i, path));
        expect *= p.dims.back();
    }
    p.data_offset = 4 + 4 * ndim;
    if (p.bytes.size() != p.data_offset + expect)
        idx_fail(path, p.bytes.size(),
                 "payload holds " + std::to_string(p.bytes.size() - p.data_offset) + " bytes, dims need " +
                     std::to_string(expect));
    return p;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const IdxPayload images = read_idx(images_path, 0x00000803);  // ubyte, 3 dims
    const IdxPayload labels = read_idx(labels_path, 0x00000801);  // ubyte, 1 dim
    const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
    if (n == 0) idx_fail(images_path, 4, "zero samples");
    if (h == 0 || w == 0) idx_fail(images_path, 8, "zero image dimensions");
    if (labels.dims[0] != n)
        idx_fail(labels_path, 4,
                 std::to_string(labels.dims[0]) + " labels for " + std::to_string(n) + " images");

    Dataset d;
    d.samples = Tensor({n, 1, h, w});
    d.labels.resize(n);
    for (std::size_t i = 0; i < n * h * w; ++i)
        d.samples[i] = static_cast<double>(images.bytes[images.data_offset + i]) / 255.0;
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = labels.bytes[labels.data_offset + i];
        max_label = std::max(max_label, d.labels[i]);
    }
    d.n_classes = max_label + 1;
    return d;
}

void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
    if (data.samples.dim(1) != 1)
        fail(Errc::invalid_argument, "save_idx: IDX images are single-channel, dataset has " +
                                         std::to_string(data.samples.dim(1)));
    for (std::size_t l : data.labels)
        if (l > 255) fail(Errc::invalid_argument, "save_idx: label " + std::to_string(l) + " exceeds one byte");
    const std::size_t n = data.size(), h = data.samples.dim(2), w = data.samples.dim(3);
    auto write_u32be = [](std::ofstream& out, std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    {
        std::ofstream out(images_path, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write '" + images_path + "'");
        write_u32be(out, 0x00000803);
        write_u32be(out, static_cast<std::uint32_t>(n));
        write_u32be(out, static_cast<std::uint32_t>(h));
        write_u32be(out, static_cast<std::uint32_t>(w));
        for (std::size_t i = 0; i < n * h * w; ++i)
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(data.samples[i] * 255.0))));
    }
    {
        std::ofstream out(labels_path, std::ios::binary);
        if (!out) fail(Errc::io, "cannot write '" + labels_path + "'");
        write_u32be(out, 0x00000801);
        write_u32be(out, static_cast<std::uint32_t>(n));
        for (std::size_t i = 0; i < n; ++i) out.put(static_cast<char>(static_cast<unsigned char>(data.labels[i])));
    }
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) fail(Errc::parse, path + ": empty file");
    if (line.rfind("label,", 0) != 0)
        fail(Errc::parse, path + ": header must start with 'label,p0,...', got '" + line.substr(0, 32) + "'");

    std::vector<double> pixels;
    std::vector<std::size_t> labels;
    std::size_t per_sample = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(row, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(Errc::parse, path + ": line " + std::to_string(line_no) + ": bad number '" + cell + "'");
            }
        }
        if (vals.size() < 2) fail(Errc::parse, path + ": line " + std::to_string(line_no) + ": too few columns");
        if (per_sample == 0)
            per_sample = vals.size() - 1;
        else if (vals.size() - 1 != per_sample)
            fail(Errc::parse, path + ": line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(per_sample) + " pixels, got " + std::to_string(vals.size() - 1));
        if (vals[0] < 0.0 || vals[0] != std::floor(vals[0]))
            fail(Errc::parse, path + ": line " + std::to_string(line_no) + ": label must be a nonnegative integer");
        labels.push_back(static_cast<std::size_t>(vals[0]));
        for (std::size_t i = 1; i < vals.size(); ++i) {
            if (vals[i] < 0.0 || vals[i] > 1.0)
                fail(Errc::parse,
                     path + ": line " + std::to_string(line_no) + ": pixel outside [0, 1]");
            pixels.push_back(vals[i]);
        }
    }
    if (labels.empty()) fail(Errc::parse, path + ": no data rows");
    const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(per_sample))));
    if (side * side != per_sample)
        fail(Errc::parse, path + ": " + std::to_string(per_sample) + " pixels per row is not a square image");

    Dataset d;
    d.samples = Tensor::from({labels.size(), 1, side, side}, std::move(pixels));
    d.labels = std::move(labels);
    std::size_t mx = 0;
    for (std::size_t l : d.labels) mx = std::max(mx, l);
    d.n_classes = mx + 1;
    return d;
}

}  // namespace snnzip
