#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "advkit/errors.hpp"

namespace advkit {

inline std::size_t shape_numel(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

/// Dense row-major tensor of doubles. The carrier for images, logits,
/// gradients and parameters.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(shape_numel(shape), fill) {}

    static Tensor from_data(std::vector<std::size_t> s, std::vector<double> d) {
        if (shape_numel(s) != d.size())
            throw InternalError("tensor data length does not match shape");
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t extent(std::size_t dim) const { return shape.at(dim); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    /// Offset of element (n, c, h, w) in an NCHW tensor.
    std::size_t at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    /// Offset of element (n, j) in an NxK tensor.
    std::size_t at2(std::size_t n, std::size_t j) const { return n * shape[1] + j; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

/// Neumaier compensated summation. Keeps every reduction in the library
/// independent of element order to well below 1e-12.
inline double stable_sum(std::span<const double> values) {
    double sum = 0.0, comp = 0.0;
    for (double v : values) {
        double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    return sum + comp;
}

inline double stable_mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    return stable_sum(values) / static_cast<double>(values.size());
}

/// Images with aligned integer labels. Images are NxCxHxW with intensities
/// in [0,1]; labels lie in [0, num_classes).
struct LabeledBatch {
    Tensor images;           // N x C x H x W
    std::vector<int> labels; // N

    std::size_t size() const { return labels.size(); }

    std::size_t sample_numel() const {
        return images.numel() == 0 ? 0 : images.numel() / images.shape[0];
    }

    void validate(int num_classes) const {
        if (labels.empty()) throw InputError("batch is empty");
        if (images.rank() != 4 || images.shape[0] != labels.size())
            throw InputError("image tensor is not NxCxHxW aligned with labels");
        for (int y : labels)
            if (y < 0 || y >= num_classes)
                throw InputError("label " + std::to_string(y) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
    }
};

/// Copy of sample i as a 1xCxHxW tensor.
inline Tensor sample_image(const Tensor& images, std::size_t i) {
    std::size_t per = images.numel() / images.shape[0];
    Tensor out({1, images.shape[1], images.shape[2], images.shape[3]});
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * per), per, out.data.begin());
    return out;
}

/// Gather rows of a batch by index, preserving the given order.
inline LabeledBatch gather(const LabeledBatch& batch, std::span<const std::size_t> indices) {
    std::size_t per = batch.sample_numel();
    LabeledBatch out;
    out.images = Tensor({indices.size(), batch.images.shape[1], batch.images.shape[2],
                         batch.images.shape[3]});
    out.labels.reserve(indices.size());
    for (std::size_t row = 0; row < indices.size(); ++row) {
        std::size_t src = indices[row];
        std::copy_n(batch.images.data.begin() + static_cast<std::ptrdiff_t>(src * per), per,
                    out.images.data.begin() + static_cast<std::ptrdiff_t>(row * per));
        out.labels.push_back(batch.labels[src]);
    }
    return out;
}

/// Concatenate two batches along the sample axis (a first, then b).
inline LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b) {
    if (a.images.shape[1] != b.images.shape[1] || a.images.shape[2] != b.images.shape[2] ||
        a.images.shape[3] != b.images.shape[3])
        throw InputError("cannot concatenate batches with different image shapes");
    LabeledBatch out;
    out.images = Tensor({a.size() + b.size(), a.images.shape[1], a.images.shape[2],
                         a.images.shape[3]});
    std::copy(a.images.data.begin(), a.images.data.end(), out.images.data.begin());
    std::copy(b.images.data.begin(), b.images.data.end(),
              out.images.data.begin() + static_cast<std::ptrdiff_t>(a.images.numel()));
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

} // namespace advkit
