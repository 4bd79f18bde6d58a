#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"

using namespace advkit;
using namespace testutil;

namespace {

std::string temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "advkit_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void put_be32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

std::vector<unsigned char> idx_images(std::size_t n, std::size_t h, std::size_t w,
                                      unsigned char fill) {
    std::vector<unsigned char> v;
    put_be32(v, 0x00000803);
    put_be32(v, static_cast<std::uint32_t>(n));
    put_be32(v, static_cast<std::uint32_t>(h));
    put_be32(v, static_cast<std::uint32_t>(w));
    v.insert(v.end(), n * h * w, fill);
    return v;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> v;
    put_be32(v, 0x00000801);
    put_be32(v, static_cast<std::uint32_t>(labels.size()));
    v.insert(v.end(), labels.begin(), labels.end());
    return v;
}

} // namespace

TEST_CASE("idx pair parses to NxCxHxW in [0,1]") {
    std::string imgs = temp_file("ok-images");
    std::string labs = temp_file("ok-labels");
    write_bytes(imgs, idx_images(10, 28, 28, 255));
    write_bytes(labs, idx_labels(std::vector<unsigned char>(10, 3)));
    LabeledBatch b = load_idx(imgs, labs);
    REQUIRE(b.images.shape == std::vector<std::size_t>{10, 1, 28, 28});
    REQUIRE(b.labels == std::vector<int>(10, 3));
    for (double v : b.images.data) REQUIRE(v == 1.0);
}

TEST_CASE("idx bad magic and truncation are format errors") {
    std::string imgs = temp_file("bad-images");
    std::string labs = temp_file("bad-labels");

    auto bad_magic = idx_images(2, 4, 4, 0);
    bad_magic[3] = 0x99;
    write_bytes(imgs, bad_magic);
    write_bytes(labs, idx_labels({0, 1}));
    REQUIRE_THROWS_AS(load_idx(imgs, labs), DataFormatError);

    auto truncated = idx_images(2, 4, 4, 0);
    truncated.resize(truncated.size() - 5);
    write_bytes(imgs, truncated);
    try {
        load_idx(imgs, labs);
        FAIL("expected DataFormatError");
    } catch (const DataFormatError& e) {
        REQUIRE(e.byte_offset() >= 0);
    }

    // count mismatch between the pair
    write_bytes(imgs, idx_images(3, 4, 4, 0));
    write_bytes(labs, idx_labels({0, 1}));
    REQUIRE_THROWS_AS(load_idx(imgs, labs), DataFormatError);
}

TEST_CASE("cifar binary record parsing") {
    std::string path = temp_file("cifar.bin");
    std::vector<unsigned char> bytes;
    for (int rec = 0; rec < 2; ++rec) {
        bytes.push_back(static_cast<unsigned char>(rec + 1)); // label
        bytes.insert(bytes.end(), 3072, static_cast<unsigned char>(128));
    }
    write_bytes(path, bytes);
    LabeledBatch b = load_cifar_binary({path});
    REQUIRE(b.images.shape == std::vector<std::size_t>{2, 3, 32, 32});
    REQUIRE(b.labels == std::vector<int>{1, 2});
    REQUIRE(b.images.data[0] == Catch::Approx(128.0 / 255.0));

    bytes.pop_back(); // no longer a multiple of 3073
    write_bytes(path, bytes);
    REQUIRE_THROWS_AS(load_cifar_binary({path}), DataFormatError);
}

TEST_CASE("synthetic dataset is seeded and clipped") {
    LabeledBatch a = make_synthetic(3, 30, 1, 6, 6, 0.2, 77);
    LabeledBatch b = make_synthetic(3, 30, 1, 6, 6, 0.2, 77);
    REQUIRE(a.images.data == b.images.data);
    REQUIRE(a.labels == b.labels);
    LabeledBatch c = make_synthetic(3, 30, 1, 6, 6, 0.2, 78);
    REQUIRE(a.images.data != c.images.data);
    for (double v : a.images.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    for (int y : a.labels) {
        REQUIRE(y >= 0);
        REQUIRE(y < 3);
    }
}

TEST_CASE("dataset limits take a deterministic head") {
    DatasetSpec spec;
    spec.kind = DatasetKind::synthetic;
    spec.classes = 2;
    spec.train_count = 50;
    spec.test_count = 20;
    spec.train_limit = 10;
    spec.seed = 5;
    Dataset d = load_dataset(spec);
    REQUIRE(d.train.size() == 10);
    REQUIRE(d.test.size() == 20);
    DatasetSpec full = spec;
    full.train_limit = 0;
    Dataset e = load_dataset(full);
    for (std::size_t i = 0; i < 10 * d.train.sample_numel(); ++i)
        REQUIRE(d.train.images.data[i] == e.train.images.data[i]);
}

TEST_CASE("digit fixtures load through the idx path") {
    Dataset d = load_digits();
    REQUIRE(d.train.size() == 1297);
    REQUIRE(d.test.size() == 500);
    REQUIRE(d.num_classes == 10);
    REQUIRE(d.train.images.shape == std::vector<std::size_t>{1297, 1, 8, 8});
    for (double v : d.test.images.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}
