#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "tensor.hpp"

using namespace snnzip;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("snnzip_data_test_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void push_u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

}  // namespace

TEST_CASE("synthetic blobs: deterministic, balanced, in range") {
    BlobParams p;
    p.n_classes = 3;
    p.n_per_class = 20;
    p.image_size = 12;
    Dataset a = synth_blobs(p, 42, "train");
    Dataset b = synth_blobs(p, 42, "train");
    Dataset c = synth_blobs(p, 43, "train");

    CHECK(a.size() == 60);
    CHECK(a.n_classes == 3);
    CHECK(a.split == "train");
    REQUIRE(a.samples.shape() == std::vector<std::size_t>{60, 1, 12, 12});
    CHECK_NOTHROW(a.validate());

    CHECK(a.samples.values() == b.samples.values());
    CHECK(a.labels == b.labels);
    CHECK(a.samples.values() != c.samples.values());

    std::vector<int> counts(3, 0);
    for (std::size_t l : a.labels) {
        REQUIRE(l < 3);
        ++counts[l];
    }
    CHECK(counts == std::vector<int>{20, 20, 20});

    for (double v : a.samples.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("synthetic blobs: classes occupy distinct image regions") {
    BlobParams p;
    p.n_classes = 4;
    p.n_per_class = 30;
    p.image_size = 16;
    Dataset d = synth_blobs(p, 7, "train");

    // Center of mass of each class's mean image; bumps sit on a ring, so the
    // centers must be pairwise well separated.
    const std::size_t S = p.image_size;
    std::vector<std::pair<double, double>> centers;
    for (std::size_t k = 0; k < 4; ++k) {
        double mass = 0.0, my = 0.0, mx = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d.labels[i] != k) continue;
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x) {
                    const double v = d.samples.at(i, 0, y, x);
                    mass += v;
                    my += v * static_cast<double>(y);
                    mx += v * static_cast<double>(x);
                }
        }
        REQUIRE(mass > 0.0);
        centers.emplace_back(my / mass, mx / mass);
    }
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            const double dy = centers[i].first - centers[j].first;
            const double dx = centers[i].second - centers[j].second;
            CHECK(std::sqrt(dy * dy + dx * dx) > 1.5);
        }
}

TEST_CASE("idx round-trip through byte storage") {
    BlobParams p;
    p.n_classes = 2;
    p.n_per_class = 5;
    p.image_size = 6;
    Dataset d = synth_blobs(p, 9, "train");

    TempDir tmp;
    save_idx(d, tmp.file("img.idx"), tmp.file("lab.idx"));
    Dataset back = load_idx(tmp.file("img.idx"), tmp.file("lab.idx"));

    CHECK(back.size() == d.size());
    CHECK(back.labels == d.labels);
    REQUIRE(back.samples.shape() == d.samples.shape());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        const double byte_exact = std::round(d.samples[i] * 255.0) / 255.0;
        CHECK(back.samples[i] == doctest::Approx(byte_exact).epsilon(1e-12));
    }
}

TEST_CASE("idx loader rejects damaged containers") {
    TempDir tmp;

    SUBCASE("missing file") {
        try {
            load_idx(tmp.file("nope.idx"), tmp.file("nope2.idx"));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::io);
        }
    }
    SUBCASE("bad magic") {
        std::vector<std::uint8_t> img;
        push_u32be(img, 0xdeadbeef);
        push_u32be(img, 1);
        push_u32be(img, 2);
        push_u32be(img, 2);
        img.resize(img.size() + 4, 0);
        write_bytes(tmp.file("img.idx"), img);
        std::vector<std::uint8_t> lab;
        push_u32be(lab, 0x00000801);
        push_u32be(lab, 1);
        lab.push_back(0);
        write_bytes(tmp.file("lab.idx"), lab);
        try {
            load_idx(tmp.file("img.idx"), tmp.file("lab.idx"));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::parse);
        }
    }
    SUBCASE("truncated payload") {
        std::vector<std::uint8_t> img;
        push_u32be(img, 0x00000803);
        push_u32be(img, 2);  // claims 2 images
        push_u32be(img, 4);
        push_u32be(img, 4);
        img.resize(img.size() + 10, 0);  // but carries 10 of 32 bytes
        write_bytes(tmp.file("img.idx"), img);
        std::vector<std::uint8_t> lab;
        push_u32be(lab, 0x00000801);
        push_u32be(lab, 2);
        lab.push_back(0);
        lab.push_back(1);
        write_bytes(tmp.file("lab.idx"), lab);
        CHECK_THROWS_AS(load_idx(tmp.file("img.idx"), tmp.file("lab.idx")), Error);
    }
    SUBCASE("image and label counts disagree") {
        std::vector<std::uint8_t> img;
        push_u32be(img, 0x00000803);
        push_u32be(img, 1);
        push_u32be(img, 2);
        push_u32be(img, 2);
        img.resize(img.size() + 4, 128);
        write_bytes(tmp.file("img.idx"), img);
        std::vector<std::uint8_t> lab;
        push_u32be(lab, 0x00000801);
        push_u32be(lab, 3);
        lab.push_back(0);
        lab.push_back(1);
        lab.push_back(0);
        write_bytes(tmp.file("lab.idx"), lab);
        CHECK_THROWS_AS(load_idx(tmp.file("img.idx"), tmp.file("lab.idx")), Error);
    }
}

TEST_CASE("csv ingestion") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("ok.csv"));
        out << "label,p0,p1,p2,p3\n";
        out << "0,0.0,0.25,0.5,1.0\n";
        out << "1,1.0,0.75,0.5,0.0\n";
        out << "2,0.1,0.2,0.3,0.4\n";
    }
    Dataset d = load_csv(tmp.file("ok.csv"));
    CHECK(d.size() == 3);
    CHECK(d.n_classes == 3);
    REQUIRE(d.samples.shape() == std::vector<std::size_t>{3, 1, 2, 2});
    CHECK(d.labels == std::vector<std::size_t>{0, 1, 2});
    CHECK(d.samples.at(0, 0, 0, 1) == doctest::Approx(0.25));
    CHECK(d.samples.at(1, 0, 0, 0) == doctest::Approx(1.0));

    {
        std::ofstream out(tmp.file("badhead.csv"));
        out << "p0,p1\n0,0.5\n";
    }
    CHECK_THROWS_AS(load_csv(tmp.file("badhead.csv")), Error);

    {
        std::ofstream out(tmp.file("notsquare.csv"));
        out << "label,p0,p1,p2\n0,0.1,0.2,0.3\n";
    }
    CHECK_THROWS_AS(load_csv(tmp.file("notsquare.csv")), Error);

    {
        std::ofstream out(tmp.file("badnum.csv"));
        out << "label,p0,p1,p2,p3\n0,0.1,oops,0.3,0.4\n";
    }
    CHECK_THROWS_AS(load_csv(tmp.file("badnum.csv")), Error);

    {
        std::ofstream out(tmp.file("ragged.csv"));
        out << "label,p0,p1,p2,p3\n0,0.1,0.2,0.3,0.4\n1,0.1,0.2\n";
    }
    CHECK_THROWS_AS(load_csv(tmp.file("ragged.csv")), Error);

    CHECK_THROWS_AS(load_csv(tmp.file("missing.csv")), Error);
}

TEST_CASE("dataset validation") {
    Dataset d;
    d.samples = Tensor({2, 1, 2, 2});
    for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i] = 0.5;
    d.labels = {0, 1};
    d.n_classes = 2;
    d.split = "train";
    CHECK_NOTHROW(d.validate());

    Dataset bad = d;
    bad.labels = {0, 2};  // label outside [0, n_classes)
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = d;
    bad.labels = {0};  // count mismatch
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = d;
    bad.samples[0] = 1.5;  // pixel outside [0, 1]
    CHECK_THROWS_AS(bad.validate(), Error);
}
