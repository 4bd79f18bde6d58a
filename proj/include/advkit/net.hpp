#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "advkit/layers.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

/// Floor applied to probabilities before taking logs. Saturated attacks
/// drive true-class probabilities to zero and the loss must stay finite.
inline constexpr double kLogClamp = 1e-12;

/// A differentiable input -> logits map: a layer tree plus the flat
/// parameter list its slots index into.
struct Network {
    LayerPtr root;
    ParamSet params;
    std::size_t num_classes = 0;

    Tensor logits(const Tensor& images, Tape* tape = nullptr) const {
        return root->forward(params, images, tape);
    }
};

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& logits) {
    Tensor out = logits;
    std::size_t n = logits.shape[0], k = logits.shape[1];
    for (std::size_t r = 0; r < n; ++r) {
        double* row = out.data.data() + r * k;
        double mx = *std::max_element(row, row + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return out;
}

/// Class-probability rows for a batch of images (softmax over logits).
inline Tensor forward(const Network& net, const Tensor& images) {
    return softmax_rows(net.logits(images));
}

/// Mean negative log-likelihood in nats. Probabilities are clamped at
/// kLogClamp before the log.
inline double cross_entropy(const Tensor& probs, std::span<const int> labels) {
    if (probs.rank() != 2 || probs.shape[0] != labels.size())
        throw InputError("probability tensor is not NxK aligned with labels");
    std::size_t n = probs.shape[0], k = probs.shape[1];
    std::vector<double> losses(n);
    for (std::size_t r = 0; r < n; ++r) {
        int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw InputError("label " + std::to_string(y) + " outside [0, " +
                             std::to_string(k) + ")");
        losses[r] = -std::log(std::max(probs.data[r * k + static_cast<std::size_t>(y)], kLogClamp));
    }
    return stable_mean(losses);
}

namespace detail {

/// Gradient of the mean cross-entropy with respect to the logits:
/// (softmax - onehot) / N. Also reports the loss so callers get both from
/// one forward pass.
inline Tensor loss_gradient_at_logits(const Tensor& logits, std::span<const int> labels,
                                      double* loss_out) {
    Tensor probs = softmax_rows(logits);
    if (loss_out) *loss_out = cross_entropy(probs, labels);
    std::size_t n = probs.shape[0], k = probs.shape[1];
    double inv_n = 1.0 / static_cast<double>(n);
    Tensor g = probs;
    for (std::size_t r = 0; r < n; ++r) {
        g.data[r * k + static_cast<std::size_t>(labels[r])] -= 1.0;
        for (std::size_t j = 0; j < k; ++j) g.data[r * k + j] *= inv_n;
    }
    return g;
}

} // namespace detail

/// Gradient of the mean loss with respect to the input images.
inline Tensor grad_input(const Network& net, const Tensor& images, std::span<const int> labels,
                         double* loss_out = nullptr) {
    Tape tape;
    Tensor lg = net.logits(images, &tape);
    Tensor g = detail::loss_gradient_at_logits(lg, labels, loss_out);
    return net.root->backward(net.params, tape, g, nullptr);
}

/// Gradient of the mean loss with respect to every parameter tensor,
/// shaped exactly like net.params.
inline ParamSet grad_params(const Network& net, const LabeledBatch& batch,
                            double* loss_out = nullptr) {
    Tape tape;
    Tensor lg = net.logits(batch.images, &tape);
    Tensor g = detail::loss_gradient_at_logits(lg, batch.labels, loss_out);
    ParamSet grads;
    grads.reserve(net.params.size());
    for (const Tensor& p : net.params) grads.emplace_back(p.shape);
    net.root->backward(net.params, tape, g, &grads);
    return grads;
}

/// In-place SGD step: theta <- theta - lr * grad.
inline void sgd_update(ParamSet& params, const ParamSet& grads, double learning_rate) {
    if (learning_rate < 0.0) throw ConfigError("learning rate must be nonnegative");
    if (params.size() != grads.size())
        throw InternalError("parameter/gradient collection size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i]))
            throw InternalError("parameter/gradient shape mismatch at slot " + std::to_string(i));
        for (std::size_t j = 0; j < params[i].numel(); ++j)
            params[i].data[j] -= learning_rate * grads[i].data[j];
    }
}

} // namespace advkit
