#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "advkit/errors.hpp"
#include "advkit/rng.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

enum class DatasetKind { idx, cifar_binary, synthetic };

inline const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::idx: return "idx";
        case DatasetKind::cifar_binary: return "cifar_binary";
        case DatasetKind::synthetic: return "synthetic";
    }
    return "?";
}

inline DatasetKind dataset_kind_from_name(const std::string& name) {
    if (name == "idx") return DatasetKind::idx;
    if (name == "cifar_binary") return DatasetKind::cifar_binary;
    if (name == "synthetic") return DatasetKind::synthetic;
    throw ConfigError("unsupported dataset kind '" + name + "'");
}

struct DatasetSpec {
    DatasetKind kind = DatasetKind::synthetic;

    // idx
    std::string train_images, train_labels, test_images, test_labels;

    // cifar_binary
    std::vector<std::string> train_files;
    std::string test_file;

    // synthetic
    std::size_t classes = 2;
    std::size_t train_count = 200;
    std::size_t test_count = 100;
    std::size_t channels = 1, height = 8, width = 8;
    double noise = 0.1;
    std::uint64_t seed = 0;

    // 0 means "all"
    std::size_t train_limit = 0, test_limit = 0;
};

struct Dataset {
    LabeledBatch train, test;
    std::size_t num_classes = 0;
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    auto len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(len));
    in.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!in) throw DataFormatError("read failure on '" + path + "'");
    return bytes;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                               const std::string& path) {
    if (off + 4 > b.size())
        throw DataFormatError("'" + path + "' truncated", static_cast<long long>(b.size()));
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

} // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// IDX pair (big-endian): image file magic 0x803 with count/rows/cols
/// extents, label file magic 0x801. Intensities are scaled to [0,1].
inline LabeledBatch load_idx(const std::string& images_path, const std::string& labels_path) {
    auto ib = detail::read_file(images_path);
    std::uint32_t magic = detail::read_be32(ib, 0, images_path);
    if (magic != kIdxImageMagic)
        throw DataFormatError("'" + images_path + "' has bad IDX image magic", 0);
    std::size_t n = detail::read_be32(ib, 4, images_path);
    std::size_t rows = detail::read_be32(ib, 8, images_path);
    std::size_t cols = detail::read_be32(ib, 12, images_path);
    std::size_t need = 16 + n * rows * cols;
    if (ib.size() < need)
        throw DataFormatError("'" + images_path + "' truncated: need " + std::to_string(need) +
                                  " bytes, have " + std::to_string(ib.size()),
                              static_cast<long long>(ib.size()));

    auto lb = detail::read_file(labels_path);
    std::uint32_t lmagic = detail::read_be32(lb, 0, labels_path);
    if (lmagic != kIdxLabelMagic)
        throw DataFormatError("'" + labels_path + "' has bad IDX label magic", 0);
    std::size_t ln = detail::read_be32(lb, 4, labels_path);
    if (ln != n)
        throw DataFormatError("IDX pair mismatch: " + std::to_string(n) + " images vs " +
                              std::to_string(ln) + " labels");
    if (lb.size() < 8 + ln)
        throw DataFormatError("'" + labels_path + "' truncated",
                              static_cast<long long>(lb.size()));

    LabeledBatch batch;
    batch.images = Tensor({n, 1, rows, cols});
    for (std::size_t i = 0; i < n * rows * cols; ++i)
        batch.images.data[i] = static_cast<double>(ib[16 + i]) / 255.0;
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) batch.labels[i] = static_cast<int>(lb[8 + i]);
    return batch;
}

inline constexpr std::size_t kCifarRecordBytes = 3073; // 1 label + 3*32*32 pixels

/// CIFAR-10 binary batches: fixed 3073-byte records.
inline LabeledBatch load_cifar_binary(const std::vector<std::string>& files) {
    std::size_t total = 0;
    std::vector<std::vector<unsigned char>> blobs;
    for (const auto& path : files) {
        auto b = detail::read_file(path);
        if (b.size() % kCifarRecordBytes != 0)
            throw DataFormatError("'" + path + "' size " + std::to_string(b.size()) +
                                      " is not a multiple of " + std::to_string(kCifarRecordBytes),
                                  static_cast<long long>(b.size() -
                                                         b.size() % kCifarRecordBytes));
        total += b.size() / kCifarRecordBytes;
        blobs.push_back(std::move(b));
    }
    if (total == 0) throw DataFormatError("no CIFAR records found");
    LabeledBatch batch;
    batch.images = Tensor({total, 3, 32, 32});
    batch.labels.resize(total);
    std::size_t rec = 0;
    for (const auto& b : blobs) {
        for (std::size_t off = 0; off < b.size(); off += kCifarRecordBytes, ++rec) {
            batch.labels[rec] = static_cast<int>(b[off]);
            const unsigned char* px = b.data() + off + 1;
            double* dst = batch.images.data.data() + rec * 3072;
            for (std::size_t i = 0; i < 3072; ++i) dst[i] = static_cast<double>(px[i]) / 255.0;
        }
    }
    return batch;
}

/// Seeded Gaussian-blob classes: each class has a random prototype image;
/// samples are the prototype plus clipped Gaussian pixel noise.
inline LabeledBatch make_synthetic(std::size_t classes, std::size_t count, std::size_t channels,
                                   std::size_t height, std::size_t width, double noise,
                                   std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    if (count == 0) throw ConfigError("synthetic dataset needs at least 1 sample");
    std::size_t per = channels * height * width;
    Prng proto_rng(derive_seed(seed, 17));
    std::vector<std::vector<double>> prototypes(classes, std::vector<double>(per));
    for (auto& p : prototypes)
        for (double& v : p) v = proto_rng.uniform(0.15, 0.85);

    LabeledBatch batch;
    batch.images = Tensor({count, channels, height, width});
    batch.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        int y = static_cast<int>(i % classes);
        batch.labels[i] = y;
        Prng rng = Prng::for_sample(seed, i);
        double* dst = batch.images.data.data() + i * per;
        const auto& p = prototypes[static_cast<std::size_t>(y)];
        for (std::size_t j = 0; j < per; ++j)
            dst[j] = std::clamp(p[j] + noise * rng.normal(), 0.0, 1.0);
    }
    return batch;
}

namespace detail {

inline LabeledBatch head(const LabeledBatch& batch, std::size_t limit) {
    if (limit == 0 || limit >= batch.size()) return batch;
    std::vector<std::size_t> idx(limit);
    for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
    return gather(batch, idx);
}

} // namespace detail

inline Dataset load_dataset(const DatasetSpec& spec) {
    Dataset ds;
    switch (spec.kind) {
        case DatasetKind::idx:
            ds.train = load_idx(spec.train_images, spec.train_labels);
            ds.test = load_idx(spec.test_images, spec.test_labels);
            break;
        case DatasetKind::cifar_binary:
            ds.train = load_cifar_binary(spec.train_files);
            ds.test = load_cifar_binary({spec.test_file});
            break;
        case DatasetKind::synthetic:
            ds.train = make_synthetic(spec.classes, spec.train_count, spec.channels, spec.height,
                                      spec.width, spec.noise, derive_seed(spec.seed, 1));
            ds.test = make_synthetic(spec.classes, spec.test_count, spec.channels, spec.height,
                                     spec.width, spec.noise, derive_seed(spec.seed, 2));
            break;
    }
    ds.train = detail::head(ds.train, spec.train_limit);
    ds.test = detail::head(ds.test, spec.test_limit);
    int max_label = 0;
    for (int y : ds.train.labels) max_label = std::max(max_label, y);
    for (int y : ds.test.labels) max_label = std::max(max_label, y);
    ds.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
    ds.train.validate(static_cast<int>(ds.num_classes));
    ds.test.validate(static_cast<int>(ds.num_classes));
    return ds;
}

} // namespace advkit
