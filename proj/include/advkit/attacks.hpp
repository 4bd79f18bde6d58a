#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advkit/models.hpp"
#include "advkit/net.hpp"
#include "advkit/parallel.hpp"
#include "advkit/rng.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

inline constexpr double kBallSlack = 1e-9;

struct AttackConfig {
    double epsilon = 0.1;     // L-inf radius, normalized intensity units
    double step_size = 0.01;  // alpha, same units
    int steps = 1;
    bool random_start = false;
    bool targeted = false;
    int target_class = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (epsilon < 0.0 || epsilon > 1.0)
            throw ConfigError("epsilon must lie in [0, 1] (normalized intensities)");
        if (step_size <= 0.0) throw ConfigError("step_size must be positive");
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (targeted && target_class < 0)
            throw ConfigError("targeted attack needs a nonnegative target class");
    }

    bool operator==(const AttackConfig&) const = default;
};

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Elementwise projection of `candidate` onto the intersection of the
/// eps-ball around `anchor` and the [0,1] intensity box.
inline Tensor project(const Tensor& anchor, const Tensor& candidate, double epsilon) {
    if (!anchor.same_shape(candidate))
        throw InputError("project: anchor and candidate shapes differ");
    Tensor out = candidate;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double lo = std::max(anchor.data[i] - epsilon, 0.0);
        double hi = std::min(anchor.data[i] + epsilon, 1.0);
        out.data[i] = std::clamp(out.data[i], lo, hi);
    }
    return out;
}

/// Single-step attack: x + eps * sgn(grad_x L), clipped to the intensity
/// box. sgn(0) is 0, so flat coordinates stay put.
inline Tensor fgsm(const Model& model, const Tensor& images, std::span<const int> labels,
                   double epsilon) {
    Tensor g = grad_input(model.net, images, labels);
    Tensor out = images;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double v = images.data[i] + epsilon * sign(g.data[i]);
        out.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

/// Per-iterate trajectory record: distance from the anchor and the value
/// range, enough to audit the ball and box invariants after the fact.
struct IterateStats {
    double linf; // max_i |x_t - x|
    double lo;   // min_i x_t
    double hi;   // max_i x_t
};

struct PgdResult {
    Tensor x_star;
    // one trajectory per sample; entry 0 is the start iterate, then one
    // entry per projected step
    std::vector<std::vector<IterateStats>> trajectories;
};

namespace detail {

inline IterateStats iterate_stats(const Tensor& anchor, const Tensor& x, std::size_t sample,
                                  std::size_t per) {
    IterateStats st{0.0, 1.0, 0.0};
    const double* a = anchor.data.data() + sample * per;
    const double* v = x.data.data() + sample * per;
    st.lo = v[0];
    st.hi = v[0];
    for (std::size_t i = 0; i < per; ++i) {
        st.linf = std::max(st.linf, std::abs(v[i] - a[i]));
        st.lo = std::min(st.lo, v[i]);
        st.hi = std::max(st.hi, v[i]);
    }
    return st;
}

} // namespace detail

/// Projected gradient descent in the L-inf ball (Madry-style iteration).
/// Untargeted mode ascends the loss of the true label; targeted mode
/// descends the loss toward config.target_class. `base_index` anchors the
/// per-sample random-start streams so a batch split across workers draws
/// the same noise as a single-threaded run.
inline PgdResult pgd(const Model& model, const Tensor& images, std::span<const int> labels,
                     const AttackConfig& config, std::size_t base_index = 0) {
    config.validate();
    std::size_t n = images.shape[0];
    std::size_t per = images.numel() / n;
    if (labels.size() != n) throw InputError("pgd: labels misaligned with images");

    std::vector<int> grad_labels(labels.begin(), labels.end());
    double direction = 1.0;
    if (config.targeted) {
        if (static_cast<std::size_t>(config.target_class) >= model.config.num_classes)
            throw ConfigError("target class outside model range");
        std::fill(grad_labels.begin(), grad_labels.end(), config.target_class);
        direction = -1.0;
    }

    PgdResult res;
    res.trajectories.assign(n, {});
    Tensor x = images;
    if (config.random_start) {
        for (std::size_t s = 0; s < n; ++s) {
            Prng rng = Prng::for_sample(config.seed, base_index + s);
            for (std::size_t i = 0; i < per; ++i) {
                std::size_t idx = s * per + i;
                double cand = images.data[idx] + rng.uniform(-config.epsilon, config.epsilon);
                double lo = std::max(images.data[idx] - config.epsilon, 0.0);
                double hi = std::min(images.data[idx] + config.epsilon, 1.0);
                x.data[idx] = std::clamp(cand, lo, hi);
            }
        }
    }
    for (std::size_t s = 0; s < n; ++s)
        res.trajectories[s].push_back(detail::iterate_stats(images, x, s, per));

    for (int step = 0; step < config.steps; ++step) {
        Tensor g = grad_input(model.net, x, grad_labels);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            double v = x.data[i] + config.step_size * (direction * sign(g.data[i]));
            double lo = std::max(images.data[i] - config.epsilon, 0.0);
            double hi = std::min(images.data[i] + config.epsilon, 1.0);
            x.data[i] = std::clamp(v, lo, hi);
        }
        for (std::size_t s = 0; s < n; ++s)
            res.trajectories[s].push_back(detail::iterate_stats(images, x, s, per));
    }
    res.x_star = std::move(x);
    return res;
}

/// Aligned records of an attack over a candidate set.
struct AdversarialSet {
    Tensor x;                             // N x C x H x W originals
    Tensor x_star;                        // perturbed counterparts
    std::vector<int> y_true;              // N
    Tensor adv_output;                    // N x k softmax rows at x_star
    std::vector<double> crafting_seconds; // N, monotonic-clock wall time
    std::vector<std::vector<IterateStats>> trajectories;
    AttackConfig config;
    std::string model_id;

    std::size_t size() const { return y_true.size(); }
    std::size_t num_classes() const { return adv_output.rank() == 2 ? adv_output.shape[1] : 0; }

    int predicted(std::size_t i) const { return argmax_row(adv_output, i); }

    /// Untargeted: the record fooled the model. Targeted: it reached the
    /// target class.
    bool success(std::size_t i) const {
        int p = predicted(i);
        return config.targeted ? p == config.target_class : p != y_true[i];
    }

    std::vector<std::size_t> successful_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i)
            if (success(i)) out.push_back(i);
        return out;
    }

    Tensor delta(std::size_t i) const {
        std::size_t per = x.numel() / x.shape[0];
        Tensor d({1, x.shape[1], x.shape[2], x.shape[3]});
        for (std::size_t j = 0; j < per; ++j)
            d.data[j] = x_star.data[i * per + j] - x.data[i * per + j];
        return d;
    }

    /// Largest anchor distance over every record and recorded iterate.
    double max_linf() const {
        double m = 0.0;
        for (const auto& traj : trajectories)
            for (const auto& st : traj) m = std::max(m, st.linf);
        return m;
    }
};

/// Candidate pool: test samples the model already classifies correctly,
/// optionally thinned to max_count by seeded selection sampling. Output
/// order follows the original index order.
inline LabeledBatch select_candidates(const Model& model, const LabeledBatch& test_data,
                                      std::size_t max_count, std::uint64_t seed,
                                      int workers = 1) {
    if (test_data.size() == 0) throw InputError("candidate selection on empty test data");
    std::vector<int> pred = predict(model, test_data.images, workers);
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == test_data.labels[i]) correct.push_back(i);
    if (correct.empty())
        throw InputError("no correctly classified samples: empty candidate set");

    if (max_count > 0 && correct.size() > max_count) {
        // Knuth selection sampling keeps ascending order and is exactly
        // reproducible from the seed.
        Prng rng(seed);
        std::vector<std::size_t> chosen;
        chosen.reserve(max_count);
        std::size_t need = max_count, remaining = correct.size();
        for (std::size_t i = 0; i < correct.size() && need > 0; ++i, --remaining) {
            if (rng.uniform() * static_cast<double>(remaining) < static_cast<double>(need)) {
                chosen.push_back(correct[i]);
                --need;
            }
        }
        correct = std::move(chosen);
    }
    return gather(test_data, correct);
}

/// Craft one adversarial record per candidate. Records are independent:
/// sample i uses random stream (seed, i) and its own timing, so results do
/// not depend on the worker count.
inline AdversarialSet craft_adversarial_set(const Model& model, const LabeledBatch& candidates,
                                            const AttackConfig& config, int workers = 1) {
    config.validate();
    candidates.validate(static_cast<int>(model.config.num_classes));
    std::size_t n = candidates.size();
    std::size_t per = candidates.sample_numel();
    std::size_t k = model.config.num_classes;

    AdversarialSet set;
    set.x = candidates.images;
    set.x_star = Tensor(candidates.images.shape);
    set.y_true = candidates.labels;
    set.adv_output = Tensor({n, k});
    set.crafting_seconds.assign(n, 0.0);
    set.trajectories.assign(n, {});
    set.config = config;
    set.model_id = model_fingerprint(model);

    parallel_for(n, workers, [&](std::size_t i) {
        auto t0 = std::chrono::steady_clock::now();
        Tensor xi = sample_image(candidates.images, i);
        int yi = candidates.labels[i];
        PgdResult r = pgd(model, xi, std::span<const int>(&yi, 1), config, i);
        auto t1 = std::chrono::steady_clock::now();
        std::copy(r.x_star.data.begin(), r.x_star.data.end(),
                  set.x_star.data.begin() + static_cast<std::ptrdiff_t>(i * per));
        set.trajectories[i] = std::move(r.trajectories[0]);
        set.crafting_seconds[i] = std::chrono::duration<double>(t1 - t0).count();
        Tensor probs = forward(model, sample_image(set.x_star, i));
        std::copy(probs.data.begin(), probs.data.end(),
                  set.adv_output.data.begin() + static_cast<std::ptrdiff_t>(i * k));
    });
    return set;
}

/// Empirical plug-in of Eq. 2's inner max: mean loss at PGD-perturbed
/// inputs.
inline double estimate_adversarial_risk(const Model& model, const LabeledBatch& data,
                                        const AttackConfig& config, int workers = 1) {
    config.validate();
    data.validate(static_cast<int>(model.config.num_classes));
    std::size_t n = data.size();
    std::vector<double> losses(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Tensor xi = sample_image(data.images, i);
        int yi = data.labels[i];
        PgdResult r = pgd(model, xi, std::span<const int>(&yi, 1), config, i);
        Tensor probs = forward(model, r.x_star);
        losses[i] = cross_entropy(probs, std::span<const int>(&yi, 1));
    });
    return stable_mean(losses);
}

/// Accuracy on per-sample PGD perturbations crafted against this model.
inline double robust_accuracy(const Model& model, const LabeledBatch& data,
                              const AttackConfig& config, int workers = 1) {
    config.validate();
    data.validate(static_cast<int>(model.config.num_classes));
    std::size_t n = data.size();
    std::vector<int> ok(n, 0);
    parallel_for(n, workers, [&](std::size_t i) {
        Tensor xi = sample_image(data.images, i);
        int yi = data.labels[i];
        PgdResult r = pgd(model, xi, std::span<const int>(&yi, 1), config, i);
        Tensor probs = forward(model, r.x_star);
        ok[i] = argmax_row(probs, 0) == yi ? 1 : 0;
    });
    std::size_t correct = 0;
    for (int v : ok) correct += static_cast<std::size_t>(v);
    return static_cast<double>(correct) / static_cast<double>(n);
}

} // namespace advkit
