#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "advkit/attacks.hpp"
#include "advkit/models.hpp"
#include "advkit/parallel.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

// ---------------------------------------------------------------------------
// Attack-utility metrics. Unless noted, a metric averages over successful
// records only and is absent (nullopt) when there are none.
// ---------------------------------------------------------------------------

/// Misclassification ratio over all records.
inline double mr(const AdversarialSet& adv) {
    if (adv.size() == 0) throw InputError("mr on empty adversarial set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < adv.size(); ++i)
        if (adv.success(i)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(adv.size());
}

/// Mean confidence of the (wrong) predicted class over successful records.
inline std::optional<double> acac(const AdversarialSet& adv) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < adv.size(); ++i)
        if (adv.success(i))
            vals.push_back(adv.adv_output.data[adv.adv_output.at2(i, static_cast<std::size_t>(adv.predicted(i)))]);
    if (vals.empty()) return std::nullopt;
    return stable_mean(vals);
}

/// Mean confidence of the true class over successful records.
inline std::optional<double> actc(const AdversarialSet& adv) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < adv.size(); ++i)
        if (adv.success(i))
            vals.push_back(adv.adv_output.data[adv.adv_output.at2(i, static_cast<std::size_t>(adv.y_true[i]))]);
    if (vals.empty()) return std::nullopt;
    return stable_mean(vals);
}

enum class LpNorm { l0, l1, l2, linf };

inline double lp_norm(std::span<const double> v, LpNorm p) {
    switch (p) {
        case LpNorm::l0: {
            std::size_t nz = 0;
            for (double x : v)
                if (std::abs(x) > 1e-12) ++nz;
            return static_cast<double>(nz);
        }
        case LpNorm::l1: {
            double s = 0.0;
            for (double x : v) s += std::abs(x);
            return s;
        }
        case LpNorm::l2: {
            double s = 0.0;
            for (double x : v) s += x * x;
            return std::sqrt(s);
        }
        case LpNorm::linf: {
            double m = 0.0;
            for (double x : v) m = std::max(m, std::abs(x));
            return m;
        }
    }
    return 0.0;
}

/// Average relative Lp distortion ||delta||_p / ||x||_p over successful
/// records. Records with a zero-norm original are skipped and counted in
/// *skipped. The L0 "norm" counts changed coordinates, normalized by the
/// count of nonzero coordinates of x.
inline std::optional<double> aldp(const AdversarialSet& adv, LpNorm p,
                                  std::size_t* skipped = nullptr) {
    std::size_t per = adv.x.numel() / std::max<std::size_t>(adv.x.shape[0], 1);
    std::vector<double> vals;
    std::size_t skip = 0;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        if (!adv.success(i)) continue;
        std::span<const double> xi(adv.x.data.data() + i * per, per);
        Tensor d = adv.delta(i);
        double denom = lp_norm(xi, p);
        if (denom == 0.0) {
            ++skip;
            continue;
        }
        vals.push_back(lp_norm(d.data, p) / denom);
    }
    if (skipped) *skipped = skip;
    if (vals.empty()) return std::nullopt;
    return stable_mean(vals);
}

// SSIM constants for unit dynamic range (L = 1).
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM between two CHW images: 7x7 uniform sliding window over each
/// channel plane (the window shrinks when a dimension is smaller), then
/// the channel average.
inline double ssim(const Tensor& a, const Tensor& b, int window = 7) {
    if (!a.same_shape(b)) throw InputError("ssim: image shapes differ");
    if (a.rank() != 4 && a.rank() != 3) throw InputError("ssim expects CHW or 1xCHW images");
    std::size_t c = a.shape[a.rank() - 3], h = a.shape[a.rank() - 2], w = a.shape[a.rank() - 1];
    std::size_t wh = std::min<std::size_t>(static_cast<std::size_t>(window), h);
    std::size_t ww = std::min<std::size_t>(static_cast<std::size_t>(window), w);
    double inv_n = 1.0 / static_cast<double>(wh * ww);

    std::vector<double> channel_means;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* pa = a.data.data() + ch * h * w;
        const double* pb = b.data.data() + ch * h * w;
        std::vector<double> window_vals;
        for (std::size_t y = 0; y + wh <= h; ++y) {
            for (std::size_t x = 0; x + ww <= w; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t dy = 0; dy < wh; ++dy)
                    for (std::size_t dx = 0; dx < ww; ++dx) {
                        double va = pa[(y + dy) * w + (x + dx)];
                        double vb = pb[(y + dy) * w + (x + dx)];
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                double mu_a = sa * inv_n, mu_b = sb * inv_n;
                double var_a = saa * inv_n - mu_a * mu_a;
                double var_b = sbb * inv_n - mu_b * mu_b;
                double cov = sab * inv_n - mu_a * mu_b;
                window_vals.push_back(((2 * mu_a * mu_b + kSsimC1) * (2 * cov + kSsimC2)) /
                                      ((mu_a * mu_a + mu_b * mu_b + kSsimC1) *
                                       (var_a + var_b + kSsimC2)));
            }
        }
        channel_means.push_back(stable_mean(window_vals));
    }
    return stable_mean(channel_means);
}

/// Average SSIM over successful records, clamped to [0,1]; negative window
/// averages clamp to zero and are counted in *clamped.
inline std::optional<double> ass(const AdversarialSet& adv, int window = 7,
                                 std::size_t* clamped = nullptr, int workers = 1) {
    std::vector<std::size_t> idx = adv.successful_indices();
    if (clamped) *clamped = 0;
    if (idx.empty()) return std::nullopt;
    std::vector<double> vals(idx.size());
    parallel_for(idx.size(), workers, [&](std::size_t j) {
        vals[j] = ssim(sample_image(adv.x, idx[j]), sample_image(adv.x_star, idx[j]), window);
    });
    std::size_t clamp_count = 0;
    for (double& v : vals) {
        if (v < 0.0) {
            v = 0.0;
            ++clamp_count;
        } else if (v > 1.0) {
            v = 1.0;
        }
    }
    if (clamped) *clamped = clamp_count;
    return stable_mean(vals);
}

/// Perturbation sensitivity of one pixel: the reciprocal population std of
/// its 3x3 neighborhood (replicate padding) in the original image.
inline double psd_sensitivity(const Tensor& x, std::size_t c, std::size_t y, std::size_t xcol) {
    std::size_t h = x.shape[x.rank() - 2], w = x.shape[x.rank() - 1];
    const double* plane = x.data.data() + c * h * w;
    double s = 0, ss = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            std::size_t yy = static_cast<std::size_t>(std::clamp<long long>(
                static_cast<long long>(y) + dy, 0, static_cast<long long>(h) - 1));
            std::size_t xx = static_cast<std::size_t>(std::clamp<long long>(
                static_cast<long long>(xcol) + dx, 0, static_cast<long long>(w) - 1));
            double v = plane[yy * w + xx];
            s += v;
            ss += v * v;
        }
    double mean = s / 9.0;
    double var = std::max(ss / 9.0 - mean * mean, 0.0);
    return 1.0 / (std::sqrt(var) + 1e-6);
}

/// Perturbation sensitivity distance: sum_i |delta_i| / (std(3x3(x_i)) + 1e-6),
/// averaged over successful records.
inline std::optional<double> psd(const AdversarialSet& adv, int workers = 1) {
    std::vector<std::size_t> idx = adv.successful_indices();
    if (idx.empty()) return std::nullopt;
    std::size_t c = adv.x.shape[1], h = adv.x.shape[2], w = adv.x.shape[3];
    std::vector<double> vals(idx.size());
    parallel_for(idx.size(), workers, [&](std::size_t j) {
        std::size_t i = idx[j];
        Tensor xi = sample_image(adv.x, i);
        Tensor d = adv.delta(i);
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    double dv = std::abs(d.data[(ch * h + y) * w + xx]);
                    if (dv > 0.0) acc += dv * psd_sensitivity(xi, ch, y, xx);
                }
        vals[j] = acc;
    });
    return stable_mean(vals);
}

/// Noise tolerance: margin of the misclassified class over the runner-up,
/// averaged over successful records.
inline std::optional<double> nte(const AdversarialSet& adv) {
    std::vector<double> vals;
    std::size_t k = adv.num_classes();
    for (std::size_t i = 0; i < adv.size(); ++i) {
        if (!adv.success(i)) continue;
        const double* row = adv.adv_output.data.data() + i * k;
        std::size_t top = static_cast<std::size_t>(adv.predicted(i));
        double runner = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != top) runner = std::max(runner, row[j]);
        vals.push_back(row[top] - runner);
    }
    if (vals.empty()) return std::nullopt;
    return stable_mean(vals);
}

struct BlurSpec {
    int size = 5;       // odd kernel side, 1 = identity
    double sigma = 1.0; // ignored when size == 1

    void validate() const {
        if (size < 1 || size % 2 == 0) throw ConfigError("blur kernel size must be odd and >= 1");
        if (size > 1 && sigma <= 0.0) throw ConfigError("blur sigma must be positive");
    }
};

/// Gaussian blur of a CHW (or 1xCHW) image with replicate padding.
inline Tensor gaussian_blur(const Tensor& image, const BlurSpec& spec) {
    spec.validate();
    if (spec.size == 1) return image;
    std::size_t c = image.shape[image.rank() - 3], h = image.shape[image.rank() - 2],
                w = image.shape[image.rank() - 1];
    int r = spec.size / 2;
    std::vector<double> kernel(static_cast<std::size_t>(spec.size) * spec.size);
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            double v = std::exp(-(dy * dy + dx * dx) / (2.0 * spec.sigma * spec.sigma));
            kernel[static_cast<std::size_t>((dy + r) * spec.size + (dx + r))] = v;
            sum += v;
        }
    for (double& v : kernel) v /= sum;

    Tensor out = image;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = image.data.data() + ch * h * w;
        double* dst = out.data.data() + ch * h * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        std::size_t yy = static_cast<std::size_t>(std::clamp<long long>(
                            static_cast<long long>(y) + dy, 0, static_cast<long long>(h) - 1));
                        std::size_t xx = static_cast<std::size_t>(std::clamp<long long>(
                            static_cast<long long>(x) + dx, 0, static_cast<long long>(w) - 1));
                        acc += src[yy * w + xx] *
                               kernel[static_cast<std::size_t>((dy + r) * spec.size + (dx + r))];
                    }
                dst[y * w + x] = acc;
            }
    }
    return out;
}

/// Fraction of successful records that keep fooling the model after their
/// perturbed image is Gaussian-blurred.
inline std::optional<double> rgb_robustness(const AdversarialSet& adv, const Model& model,
                                            const BlurSpec& blur, int workers = 1) {
    std::vector<std::size_t> idx = adv.successful_indices();
    if (idx.empty()) return std::nullopt;
    std::vector<int> still(idx.size(), 0);
    parallel_for(idx.size(), workers, [&](std::size_t j) {
        std::size_t i = idx[j];
        Tensor blurred = gaussian_blur(sample_image(adv.x_star, i), blur);
        Tensor probs = forward(model, blurred);
        int pred = argmax_row(probs, 0);
        bool fooled = adv.config.targeted ? pred == adv.config.target_class
                                          : pred != adv.y_true[i];
        still[j] = fooled ? 1 : 0;
    });
    std::size_t hits = 0;
    for (int v : still) hits += static_cast<std::size_t>(v);
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

/// Mean crafting wall time per record, successful or not.
inline double cc(const AdversarialSet& adv) {
    if (adv.size() == 0) throw InputError("cc on empty adversarial set");
    return stable_mean(adv.crafting_seconds);
}

// ---------------------------------------------------------------------------
// Defense-utility metrics
// ---------------------------------------------------------------------------

/// CRR: fraction rectified by the defense (wrong before, right after).
/// CSR: fraction sacrificed (right before, wrong after). CAV = CRR - CSR,
/// computed on that exact arithmetic path. Returns (cav, crr, csr).
inline std::tuple<double, double, double> cav_crr_csr_from_flags(
    const std::vector<bool>& raw_ok, const std::vector<bool>& def_ok) {
    if (raw_ok.size() != def_ok.size() || raw_ok.empty())
        throw InputError("correctness masks are empty or misaligned");
    std::size_t fixed = 0, broken = 0;
    for (std::size_t i = 0; i < raw_ok.size(); ++i) {
        if (!raw_ok[i] && def_ok[i]) ++fixed;
        if (raw_ok[i] && !def_ok[i]) ++broken;
    }
    double n = static_cast<double>(raw_ok.size());
    double crr = static_cast<double>(fixed) / n;
    double csr = static_cast<double>(broken) / n;
    return {crr - csr, crr, csr};
}

inline std::tuple<double, double, double> cav_crr_csr(const Model& model_raw,
                                                      const Model& model_def,
                                                      const LabeledBatch& test,
                                                      int workers = 1) {
    test.validate(static_cast<int>(model_raw.config.num_classes));
    std::vector<int> pr = predict(model_raw, test.images, workers);
    std::vector<int> pd = predict(model_def, test.images, workers);
    std::vector<bool> raw_ok(test.size()), def_ok(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        raw_ok[i] = pr[i] == test.labels[i];
        def_ok[i] = pd[i] == test.labels[i];
    }
    return cav_crr_csr_from_flags(raw_ok, def_ok);
}

/// Mean absolute true-class confidence change over samples both models
/// classify correctly; absent when no sample qualifies.
inline std::optional<double> ccv(const Model& model_raw, const Model& model_def,
                                 const LabeledBatch& test, int workers = 1) {
    test.validate(static_cast<int>(model_raw.config.num_classes));
    Tensor probs_raw, probs_def;
    parallel_for(2, std::min(workers, 2), [&](std::size_t which) {
        if (which == 0)
            probs_raw = forward(model_raw, test.images);
        else
            probs_def = forward(model_def, test.images);
    });
    std::vector<double> vals;
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::size_t y = static_cast<std::size_t>(test.labels[i]);
        if (argmax_row(probs_raw, i) != test.labels[i]) continue;
        if (argmax_row(probs_def, i) != test.labels[i]) continue;
        vals.push_back(std::abs(probs_raw.data[probs_raw.at2(i, y)] -
                                probs_def.data[probs_def.at2(i, y)]));
    }
    if (vals.empty()) return std::nullopt;
    return stable_mean(vals);
}

/// Jensen-Shannon divergence in nats; symmetric, bounded by ln 2.
inline double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InputError("js_divergence: length mismatch");
    double kl_p = 0.0, kl_q = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
    }
    return 0.5 * (kl_p + kl_q);
}

/// Output stability: mean JS divergence between the two models' output
/// rows over samples both classify correctly.
inline std::optional<double> cos_stability(const Model& model_raw, const Model& model_def,
                                           const LabeledBatch& test, int workers = 1) {
    test.validate(static_cast<int>(model_raw.config.num_classes));
    Tensor probs_raw, probs_def;
    parallel_for(2, std::min(workers, 2), [&](std::size_t which) {
        if (which == 0)
            probs_raw = forward(model_raw, test.images);
        else
            probs_def = forward(model_def, test.images);
    });
    std::size_t k = probs_raw.shape[1];
    std::vector<double> vals;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (argmax_row(probs_raw, i) != test.labels[i]) continue;
        if (argmax_row(probs_def, i) != test.labels[i]) continue;
        vals.push_back(js_divergence(std::span(probs_raw.data.data() + i * k, k),
                                     std::span(probs_def.data.data() + i * k, k)));
    }
    if (vals.empty()) return std::nullopt;
    return stable_mean(vals);
}

// ---------------------------------------------------------------------------
// Report bundles (one Table 3 / Table 4 column each)
// ---------------------------------------------------------------------------

struct AldpValues {
    std::optional<double> l0, l1, l2, linf;
    std::size_t skipped = 0;
};

struct AttackReport {
    double mr = 0.0;
    std::optional<double> acac, actc;
    AldpValues aldp;
    std::optional<double> ass;
    std::optional<double> psd;
    std::optional<double> nte;
    std::optional<double> rgb;
    double cc = 0.0;
    std::size_t records = 0;
    std::size_t successes = 0;
    std::size_t ass_clamped = 0;
};

struct DefenseReport {
    double acc_raw = 0.0;
    double acc_defended = 0.0;
    double cav = 0.0;
    double crr = 0.0;
    double csr = 0.0;
    std::optional<double> ccv;
    std::optional<double> cos;
};

inline AttackReport attack_report(const AdversarialSet& adv, const Model& model,
                                  const BlurSpec& blur = {}, int workers = 1) {
    AttackReport r;
    r.records = adv.size();
    r.successes = adv.successful_indices().size();
    r.mr = mr(adv);
    r.acac = acac(adv);
    r.actc = actc(adv);
    std::size_t skipped = 0, s = 0;
    r.aldp.l0 = aldp(adv, LpNorm::l0, &s);
    skipped = std::max(skipped, s);
    r.aldp.l1 = aldp(adv, LpNorm::l1, &s);
    skipped = std::max(skipped, s);
    r.aldp.l2 = aldp(adv, LpNorm::l2, &s);
    skipped = std::max(skipped, s);
    r.aldp.linf = aldp(adv, LpNorm::linf, &s);
    skipped = std::max(skipped, s);
    r.aldp.skipped = skipped;
    r.ass = ass(adv, 7, &r.ass_clamped, workers);
    r.psd = psd(adv, workers);
    r.nte = nte(adv);
    r.rgb = rgb_robustness(adv, model, blur, workers);
    r.cc = cc(adv);
    return r;
}

inline DefenseReport defense_report(const Model& model_raw, const Model& model_def,
                                    const LabeledBatch& test, int workers = 1) {
    DefenseReport r;
    r.acc_raw = accuracy(model_raw, test, workers);
    r.acc_defended = accuracy(model_def, test, workers);
    auto [cav, crr, csr] = cav_crr_csr(model_raw, model_def, test, workers);
    r.cav = cav;
    r.crr = crr;
    r.csr = csr;
    r.ccv = ccv(model_raw, model_def, test, workers);
    r.cos = cos_stability(model_raw, model_def, test, workers);
    return r;
}

} // namespace advkit
