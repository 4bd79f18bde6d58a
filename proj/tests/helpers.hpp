#pragma once

// Shared fixtures and oracles for the test suite. The finite-difference
// gradient oracle here is intentionally independent of the backward pass
// it checks: it only ever calls forward() and cross_entropy().

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "advkit/advkit.hpp"

#ifndef ADVKIT_DATA_DIR
#define ADVKIT_DATA_DIR "data"
#endif

namespace testutil {

using namespace advkit;

inline std::string data_path(const std::string& name) {
    return std::string(ADVKIT_DATA_DIR) + "/" + name;
}

inline Dataset load_digits() {
    DatasetSpec spec;
    spec.kind = DatasetKind::idx;
    spec.train_images = data_path("digits-train-images-idx3-ubyte");
    spec.train_labels = data_path("digits-train-labels-idx1-ubyte");
    spec.test_images = data_path("digits-test-images-idx3-ubyte");
    spec.test_labels = data_path("digits-test-labels-idx1-ubyte");
    return load_dataset(spec);
}

/// Model computing logits = W * flatten(x) + b with hand-set values.
inline Model make_linear_model(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                               const std::vector<std::vector<double>>& weight_rows,
                               const std::vector<double>& bias) {
    std::size_t in = in_c * in_h * in_w;
    std::size_t out = bias.size();
    ParamAllocator alloc(0);
    auto seq = std::make_unique<Sequential>();
    seq->add(std::make_unique<Flatten>());
    seq->add(std::make_unique<Linear>(alloc, in, out));
    Model m;
    m.config.architecture = Architecture::mlp;
    m.config.in_channels = in_c;
    m.config.in_height = in_h;
    m.config.in_width = in_w;
    m.config.num_classes = out;
    m.net.root = std::move(seq);
    m.net.params = alloc.take();
    m.net.num_classes = out;
    for (std::size_t r = 0; r < out; ++r)
        for (std::size_t c = 0; c < in; ++c) m.net.params[0].data[r * in + c] = weight_rows[r][c];
    m.net.params[1].data = bias;
    return m;
}

/// Constant-output model: zero weights, bias = log of the wanted softmax row.
inline Model make_bias_model(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                             const std::vector<double>& probs) {
    std::size_t in = in_c * in_h * in_w;
    std::vector<std::vector<double>> w(probs.size(), std::vector<double>(in, 0.0));
    std::vector<double> b(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) b[i] = std::log(probs[i]);
    return make_linear_model(in_c, in_h, in_w, w, b);
}

/// 1-D logistic classifier as a two-logit net: logits = (0, w*x + b),
/// so P(class 1) = sigmoid(w*x + b).
inline Model make_logistic_model(double w, double b) {
    return make_linear_model(1, 1, 1, {{0.0}, {w}}, {0.0, b});
}

inline Tensor scalar_input(double x) {
    Tensor t({1, 1, 1, 1});
    t.data[0] = x;
    return t;
}

inline double loss_at(const Model& m, const Tensor& x, std::span<const int> y) {
    return cross_entropy(forward(m, x), y);
}

struct GradCheck {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // coordinates where FD itself is invalid (kink crossing)
    bool ok(double tol = 1e-4) const {
        // the smoothness guard may drop isolated rectifier-kink coordinates,
        // never a meaningful fraction
        return checked > 0 && max_rel_err <= tol &&
               skipped * 100 <= checked + 100;
    }
};

inline double rel_err(double analytic, double numeric) {
    double diff = std::abs(analytic - numeric);
    double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (diff <= 1e-6) return 0.0; // absolute floor
    return diff / std::max(scale, 1e-12);
}

/// Central difference at two step sizes. Where the loss is smooth both
/// agree to O(h^2) and the finer one is returned; disagreement means the
/// probe crossed a rectifier kink, where finite differences do not
/// estimate the derivative at all (a wrong analytic gradient cannot hide
/// here: away from kinks the two estimates agree with each other and are
/// still compared against it).
template <typename LossFn>
inline bool fd_two_scale(const LossFn& f, double& slot, double h, double& numeric) {
    double keep = slot;
    slot = keep + h;
    double up = f();
    slot = keep - h;
    double down = f();
    double coarse = (up - down) / (2.0 * h);
    slot = keep + 0.5 * h;
    double up2 = f();
    slot = keep - 0.5 * h;
    double down2 = f();
    slot = keep;
    double fine = (up2 - down2) / h;
    numeric = fine;
    // smooth coordinates agree to O(h^2) (~1e-8 here); a kink crossing
    // admitted by this bound can shift the estimate by at most half of it,
    // well inside the 1e-4 comparison tolerance
    double disagreement = std::abs(coarse - fine);
    return disagreement <= 1e-7 + 2e-5 * std::max(std::abs(coarse), std::abs(fine));
}

/// Finite differences on the input, checked against grad_input.
inline GradCheck check_grad_input(const Model& m, const Tensor& x, std::span<const int> y,
                                  double h = 1e-4) {
    Tensor analytic = grad_input(m.net, x, y);
    GradCheck res;
    Tensor probe = x;
    auto loss = [&] { return loss_at(m, probe, y); };
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double numeric = 0.0;
        if (!fd_two_scale(loss, probe.data[i], h, numeric)) {
            ++res.skipped;
            continue;
        }
        res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic.data[i], numeric));
        ++res.checked;
    }
    return res;
}

/// Finite differences on the parameters, checked against grad_params.
/// stride takes every stride-th coordinate (1 = all).
inline GradCheck check_grad_params(const Model& m, const LabeledBatch& batch, double h = 1e-4,
                                   std::size_t stride = 1) {
    ParamSet analytic = grad_params(m.net, batch);
    GradCheck res;
    Model probe = clone(m);
    auto loss = [&] { return loss_at(probe, batch.images, batch.labels); };
    for (std::size_t p = 0; p < probe.net.params.size(); ++p) {
        for (std::size_t i = 0; i < probe.net.params[p].numel(); i += stride) {
            double numeric = 0.0;
            if (!fd_two_scale(loss, probe.net.params[p].data[i], h, numeric)) {
                ++res.skipped;
                continue;
            }
            res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[p].data[i], numeric));
            ++res.checked;
        }
    }
    return res;
}

/// Seeded model in the <=5k-parameter, <=64-input-dim family used by the
/// gradient-oracle suite.
inline Model make_random_small_model(std::uint64_t seed) {
    ModelConfig mc;
    mc.seed = seed;
    mc.num_classes = 2 + seed % 5;
    switch (seed % 3) {
        case 0:
            mc.architecture = Architecture::mlp;
            mc.in_channels = 1;
            mc.in_height = 8;
            mc.in_width = 8;
            mc.width_factor = 1 + seed % 2;
            break;
        case 1:
            mc.architecture = Architecture::convnet;
            mc.in_channels = 1;
            mc.in_height = 8;
            mc.in_width = 8;
            mc.width_factor = 1;
            break;
        default:
            mc.architecture = Architecture::convnet;
            mc.in_channels = 2;
            mc.in_height = 4;
            mc.in_width = 4;
            mc.width_factor = 1;
            break;
    }
    return build_model(mc);
}

inline LabeledBatch make_random_batch(const ModelConfig& mc, std::size_t n, std::uint64_t seed) {
    LabeledBatch batch;
    batch.images = Tensor({n, mc.in_channels, mc.in_height, mc.in_width});
    Prng rng(seed);
    for (double& v : batch.images.data) v = rng.uniform(0.1, 0.9);
    batch.labels.resize(n);
    for (auto& y : batch.labels) y = static_cast<int>(rng.index(mc.num_classes));
    return batch;
}

/// Hand-assembled adversarial set for metric tests: per record, the true
/// label, an output row, a delta applied to a base image, and a crafting
/// time.
struct FakeRecord {
    int y_true;
    std::vector<double> output;
    std::vector<double> delta; // same length as base image, defaults to 0
    double seconds = 0.01;
};

inline AdversarialSet make_fake_set(const std::vector<FakeRecord>& records, std::size_t c,
                                    std::size_t h, std::size_t w,
                                    const std::vector<double>& base_image,
                                    const AttackConfig& config = {}) {
    std::size_t n = records.size();
    std::size_t per = c * h * w;
    std::size_t k = records.front().output.size();
    AdversarialSet set;
    set.config = config;
    set.model_id = "fake";
    set.x = Tensor({n, c, h, w});
    set.x_star = Tensor({n, c, h, w});
    set.adv_output = Tensor({n, k});
    set.crafting_seconds.resize(n);
    set.trajectories.assign(n, {});
    set.y_true.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = records[i];
        set.y_true[i] = r.y_true;
        set.crafting_seconds[i] = r.seconds;
        for (std::size_t j = 0; j < per; ++j) {
            double d = r.delta.empty() ? 0.0 : r.delta[j];
            set.x.data[i * per + j] = base_image[j];
            set.x_star.data[i * per + j] = base_image[j] + d;
        }
        for (std::size_t j = 0; j < k; ++j) set.adv_output.data[i * k + j] = r.output[j];
    }
    return set;
}

} // namespace testutil
