#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "advkit/attacks.hpp"
#include "advkit/models.hpp"
#include "advkit/net.hpp"
#include "advkit/parallel.hpp"
#include "advkit/rng.hpp"

namespace advkit {

enum class TrainMode { standard, nat, pat };

inline const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::standard: return "standard";
        case TrainMode::nat: return "nat";
        case TrainMode::pat: return "pat";
    }
    return "?";
}

inline TrainMode train_mode_from_name(const std::string& name) {
    if (name == "standard") return TrainMode::standard;
    if (name == "nat") return TrainMode::nat;
    if (name == "pat") return TrainMode::pat;
    throw ConfigError("unsupported training mode '" + name + "'");
}

enum class PatStyle { augment_static, per_batch };

inline const char* pat_style_name(PatStyle s) {
    return s == PatStyle::augment_static ? "augment_static" : "per_batch";
}

inline PatStyle pat_style_from_name(const std::string& name) {
    if (name == "augment_static") return PatStyle::augment_static;
    if (name == "per_batch") return PatStyle::per_batch;
    throw ConfigError("unsupported pat_style '" + name + "'");
}

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::standard;
    AttackConfig attack;                        // used by nat / pat
    PatStyle pat_style = PatStyle::augment_static;
    int workers = 1;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (learning_rate < 0.0) throw ConfigError("learning_rate must be nonnegative");
        if (mode != TrainMode::standard) attack.validate();
    }

    bool operator==(const TrainConfig&) const = default;
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean training loss per epoch
};

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Prng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.index(i)]);
}

inline void check_finite_loss(double loss, int epoch) {
    if (!std::isfinite(loss))
        throw TrainingDivergedError("training loss became non-finite at epoch " +
                                    std::to_string(epoch));
}

/// FGSM over a sample set, split into contiguous chunks per worker. The
/// sign of the per-sample gradient does not depend on the chunking, so the
/// output is identical for any worker count.
inline Tensor fgsm_chunked(const Model& model, const Tensor& images,
                           std::span<const int> labels, double epsilon, int workers) {
    std::size_t n = images.shape[0];
    std::size_t per = images.numel() / n;
    Tensor out(images.shape);
    std::size_t chunks = workers <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(workers) * 4, n);
    std::size_t chunk = (n + chunks - 1) / chunks;
    parallel_for(chunks, workers, [&](std::size_t ci) {
        std::size_t lo = ci * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) return;
        Tensor sub({hi - lo, images.shape[1], images.shape[2], images.shape[3]});
        std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(lo * per), (hi - lo) * per,
                    sub.data.begin());
        std::vector<int> sub_labels(labels.begin() + static_cast<std::ptrdiff_t>(lo),
                                    labels.begin() + static_cast<std::ptrdiff_t>(hi));
        Tensor adv = fgsm(model, sub, sub_labels, epsilon);
        std::copy(adv.data.begin(), adv.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(lo * per));
    });
    return out;
}

/// PGD over a sample set, one sample per task. base_index keeps the
/// per-sample random-start streams stable.
inline Tensor pgd_chunked(const Model& model, const Tensor& images, std::span<const int> labels,
                          const AttackConfig& config, std::size_t base_index, int workers) {
    std::size_t n = images.shape[0];
    std::size_t per = images.numel() / n;
    Tensor out(images.shape);
    parallel_for(n, workers, [&](std::size_t i) {
        Tensor xi = sample_image(images, i);
        int yi = labels[i];
        PgdResult r = pgd(model, xi, std::span<const int>(&yi, 1), config, base_index + i);
        std::copy(r.x_star.data.begin(), r.x_star.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    });
    return out;
}

} // namespace detail

/// Plain SGD epoch loop on fixed data: seeded shuffle each epoch,
/// mean-reduced cross-entropy, fixed learning rate.
inline TrainResult train_standard(Model& model, const LabeledBatch& data,
                                  const TrainConfig& config) {
    config.validate();
    data.validate(static_cast<int>(model.config.num_classes));
    std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Prng shuffle_rng(config.seed);

    TrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        detail::shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            LabeledBatch batch = gather(data, std::span(order.data() + start, stop - start));
            double loss = 0.0;
            ParamSet grads = grad_params(model.net, batch, &loss);
            detail::check_finite_loss(loss, epoch);
            sgd_update(model.net.params, grads, config.learning_rate);
            loss_sum += loss * static_cast<double>(stop - start);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }
    return result;
}

/// Naive adversarial training: augment the data with single-step FGSM
/// examples crafted against the incoming model, then train normally on
/// the clean+adversarial set.
inline TrainResult nat_train(Model& model, const LabeledBatch& data, const TrainConfig& config) {
    config.validate();
    data.validate(static_cast<int>(model.config.num_classes));
    LabeledBatch adv;
    adv.images = detail::fgsm_chunked(model, data.images, data.labels, config.attack.epsilon,
                                      config.workers);
    adv.labels = data.labels;
    LabeledBatch augmented = concat(data, adv);
    return train_standard(model, augmented, config);
}

/// PGD adversarial training.
///   augment_static: craft one PGD set against the incoming model, append
///     it, then train normally (the dataset stays fixed).
///   per_batch: re-craft PGD examples against the current parameters for
///     every minibatch and step on their loss (the Eq. 2 inner max is
///     re-solved at each theta).
inline TrainResult pat_train(Model& model, const LabeledBatch& data, const TrainConfig& config) {
    config.validate();
    data.validate(static_cast<int>(model.config.num_classes));

    if (config.pat_style == PatStyle::augment_static) {
        LabeledBatch adv;
        adv.images = detail::pgd_chunked(model, data.images, data.labels, config.attack, 0,
                                         config.workers);
        adv.labels = data.labels;
        LabeledBatch augmented = concat(data, adv);
        return train_standard(model, augmented, config);
    }

    std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Prng shuffle_rng(config.seed);
    std::size_t crafted = 0; // running stream position for random starts

    TrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        detail::shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            LabeledBatch batch = gather(data, std::span(order.data() + start, stop - start));
            batch.images = detail::pgd_chunked(model, batch.images, batch.labels, config.attack,
                                               crafted, config.workers);
            crafted += batch.size();
            double loss = 0.0;
            ParamSet grads = grad_params(model.net, batch, &loss);
            detail::check_finite_loss(loss, epoch);
            sgd_update(model.net.params, grads, config.learning_rate);
            loss_sum += loss * static_cast<double>(stop - start);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }
    return result;
}

/// Dispatch on config.mode. The model is trained in place (single writer);
/// clone() first to keep the original.
inline TrainResult run_training(Model& model, const LabeledBatch& data,
                                const TrainConfig& config) {
    switch (config.mode) {
        case TrainMode::standard: return train_standard(model, data, config);
        case TrainMode::nat: return nat_train(model, data, config);
        case TrainMode::pat: return pat_train(model, data, config);
    }
    throw ConfigError("unknown training mode");
}

} // namespace advkit
