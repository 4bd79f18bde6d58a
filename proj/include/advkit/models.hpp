#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "advkit/net.hpp"
#include "advkit/parallel.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

enum class Architecture { mlp, convnet, resnet_small };

inline const char* architecture_name(Architecture a) {
    switch (a) {
        case Architecture::mlp: return "mlp";
        case Architecture::convnet: return "convnet";
        case Architecture::resnet_small: return "resnet_small";
    }
    return "?";
}

inline Architecture architecture_from_name(const std::string& name) {
    if (name == "mlp") return Architecture::mlp;
    if (name == "convnet") return Architecture::convnet;
    if (name == "resnet_small") return Architecture::resnet_small;
    throw ConfigError("unsupported architecture '" + name + "'");
}

struct ModelConfig {
    Architecture architecture = Architecture::mlp;
    std::size_t in_channels = 1;
    std::size_t in_height = 8;
    std::size_t in_width = 8;
    std::size_t num_classes = 10;
    std::size_t width_factor = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (width_factor < 1) throw ConfigError("width_factor must be >= 1");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (in_channels < 1 || in_height < 1 || in_width < 1)
            throw ConfigError("input shape extents must be positive");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// A classifier: its construction recipe plus the network it produced.
struct Model {
    ModelConfig config;
    Network net;
};

// Base widths. width_factor multiplies every entry.
inline constexpr std::size_t kMlpHidden = 8;
inline constexpr std::size_t kConvWidths[2] = {8, 16};
inline constexpr std::size_t kConvFcWidth = 32;
inline constexpr std::size_t kResnetStem = 16;
inline constexpr std::size_t kResnetStages[3] = {16, 32, 64};

namespace detail {

inline LayerPtr residual_block(ParamAllocator& alloc, std::size_t cin, std::size_t cout,
                               std::size_t stride) {
    auto body = std::make_unique<Sequential>();
    body->add(std::make_unique<Conv2d>(alloc, cin, cout, 3, stride, 1));
    body->add(std::make_unique<Relu>());
    body->add(std::make_unique<Conv2d>(alloc, cout, cout, 3, 1, 1));
    LayerPtr shortcut;
    if (cin == cout && stride == 1)
        shortcut = std::make_unique<Identity>();
    else
        shortcut = std::make_unique<Conv2d>(alloc, cin, cout, 1, stride, 0);
    return std::make_unique<Residual>(std::move(body), std::move(shortcut));
}

} // namespace detail

/// Deterministic model construction: identical (config, seed) gives
/// bit-identical parameters.
inline Model build_model(const ModelConfig& config) {
    config.validate();
    ParamAllocator alloc(config.seed);
    auto seq = std::make_unique<Sequential>();
    std::size_t w = config.width_factor;
    std::size_t flat = config.in_channels * config.in_height * config.in_width;

    switch (config.architecture) {
        case Architecture::mlp: {
            seq->add(std::make_unique<Flatten>());
            seq->add(std::make_unique<Linear>(alloc, flat, kMlpHidden * w));
            seq->add(std::make_unique<Relu>());
            seq->add(std::make_unique<Linear>(alloc, kMlpHidden * w, config.num_classes));
            break;
        }
        case Architecture::convnet: {
            std::size_t c1 = kConvWidths[0] * w, c2 = kConvWidths[1] * w;
            std::size_t ph = config.in_height / 4, pw = config.in_width / 4;
            if (ph == 0 || pw == 0)
                throw ConfigError("convnet needs input of at least 4x4 pixels");
            seq->add(std::make_unique<Conv2d>(alloc, config.in_channels, c1, 3, 1, 1));
            seq->add(std::make_unique<Relu>());
            seq->add(std::make_unique<AvgPool2>());
            seq->add(std::make_unique<Conv2d>(alloc, c1, c2, 3, 1, 1));
            seq->add(std::make_unique<Relu>());
            seq->add(std::make_unique<AvgPool2>());
            seq->add(std::make_unique<Flatten>());
            seq->add(std::make_unique<Linear>(alloc, c2 * ph * pw, kConvFcWidth * w));
            seq->add(std::make_unique<Relu>());
            seq->add(std::make_unique<Linear>(alloc, kConvFcWidth * w, config.num_classes));
            break;
        }
        case Architecture::resnet_small: {
            std::size_t stem = kResnetStem * w;
            std::size_t s1 = kResnetStages[0] * w, s2 = kResnetStages[1] * w,
                        s3 = kResnetStages[2] * w;
            seq->add(std::make_unique<Conv2d>(alloc, config.in_channels, stem, 3, 1, 1));
            seq->add(std::make_unique<Relu>());
            seq->add(detail::residual_block(alloc, stem, s1, 1));
            seq->add(std::make_unique<Relu>());
            seq->add(detail::residual_block(alloc, s1, s2, 2));
            seq->add(std::make_unique<Relu>());
            seq->add(detail::residual_block(alloc, s2, s3, 2));
            seq->add(std::make_unique<Relu>());
            seq->add(std::make_unique<GlobalAvgPool>());
            seq->add(std::make_unique<Linear>(alloc, s3, config.num_classes));
            break;
        }
    }

    Model model;
    model.config = config;
    model.net.root = std::move(seq);
    model.net.params = alloc.take();
    model.net.num_classes = config.num_classes;
    return model;
}

/// Deep copy. Layer trees are rebuilt from the config (construction is a
/// pure function of it), then the parameter values are copied over.
inline Model clone(const Model& model) {
    Model copy = build_model(model.config);
    copy.net.params = model.net.params;
    return copy;
}

inline std::size_t param_count(const Model& model) {
    std::size_t n = 0;
    for (const Tensor& p : model.net.params) n += p.numel();
    return n;
}

inline Tensor forward(const Model& model, const Tensor& images) {
    return forward(model.net, images);
}

/// Predicted class per row; ties go to the lowest class index.
inline int argmax_row(const Tensor& probs, std::size_t row) {
    std::size_t k = probs.shape[1];
    const double* p = probs.data.data() + row * k;
    int best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (p[j] > p[best]) best = static_cast<int>(j);
    return best;
}

/// Predictions for a whole batch. Work is split into contiguous chunks per
/// worker; per-sample results do not depend on the split.
inline std::vector<int> predict(const Model& model, const Tensor& images, int workers = 1) {
    std::size_t n = images.shape[0];
    std::vector<int> out(n);
    std::size_t chunks = workers <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(workers) * 4, n);
    std::size_t chunk = (n + chunks - 1) / chunks;
    parallel_for(chunks, workers, [&](std::size_t ci) {
        std::size_t lo = ci * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) return;
        std::vector<std::size_t> idx(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
        Tensor sub({hi - lo, images.shape[1], images.shape[2], images.shape[3]});
        std::size_t per = images.numel() / n;
        std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(lo * per), (hi - lo) * per,
                    sub.data.begin());
        Tensor probs = forward(model, sub);
        for (std::size_t i = lo; i < hi; ++i) out[i] = argmax_row(probs, i - lo);
    });
    return out;
}

inline double accuracy(const Model& model, const LabeledBatch& data, int workers = 1) {
    data.validate(static_cast<int>(model.config.num_classes));
    std::vector<int> pred = predict(model, data.images, workers);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

/// FNV-1a over a byte view.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

/// Identity of a concrete model: config fields plus exact parameter bytes.
inline std::string model_fingerprint(const Model& model) {
    const ModelConfig& c = model.config;
    std::uint64_t h = fnv1a64(architecture_name(c.architecture),
                              std::string(architecture_name(c.architecture)).size());
    std::uint64_t fields[6] = {c.in_channels, c.in_height, c.in_width,
                               c.num_classes, c.width_factor, c.seed};
    h = fnv1a64(fields, sizeof(fields), h);
    for (const Tensor& p : model.net.params)
        h = fnv1a64(p.data.data(), p.data.size() * sizeof(double), h);
    return hex64(h);
}

} // namespace advkit
