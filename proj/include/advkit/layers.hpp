#pragma once

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "advkit/errors.hpp"
#include "advkit/rng.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

using ParamSet = std::vector<Tensor>;

/// Activations cached by a forward pass and consumed, in reverse order, by
/// the matching backward pass. Keeping the cache outside the layers keeps
/// them immutable and safe to evaluate from many threads.
class Tape {
public:
    void push(Tensor t) { items_.push_back(std::move(t)); }

    Tensor pop() {
        if (items_.empty()) throw InternalError("tape underflow in backward pass");
        Tensor t = std::move(items_.back());
        items_.pop_back();
        return t;
    }

    bool empty() const { return items_.empty(); }

private:
    std::vector<Tensor> items_;
};

/// One differentiable stage of a network. Parameters live in an external
/// ParamSet; layers hold only slot indices, so a model can be snapshotted
/// or checkpointed by copying the flat parameter list.
class Layer {
public:
    virtual ~Layer() = default;

    /// Map the input forward. When `tape` is non-null, push whatever the
    /// backward pass will need (reverse-mode function recording).
    virtual Tensor forward(const ParamSet& params, const Tensor& in, Tape* tape) const = 0;

    /// Pop this layer's tape entries and return the gradient with respect
    /// to its input. When `grads` is non-null, accumulate parameter
    /// gradients into the matching slots.
    virtual Tensor backward(const ParamSet& params, Tape& tape, const Tensor& grad_out,
                            ParamSet* grads) const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

/// Allocates parameter slots at build time. Weights are drawn uniform in
/// +-sqrt(6/(fan_in+fan_out)); biases start at zero.
class ParamAllocator {
public:
    explicit ParamAllocator(std::uint64_t seed) : rng_(seed) {}

    std::size_t alloc_weight(std::vector<std::size_t> shape, std::size_t fan_in,
                             std::size_t fan_out) {
        Tensor t(std::move(shape));
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : t.data) v = rng_.uniform(-bound, bound);
        params_.push_back(std::move(t));
        return params_.size() - 1;
    }

    std::size_t alloc_zero(std::vector<std::size_t> shape) {
        params_.emplace_back(std::move(shape));
        return params_.size() - 1;
    }

    ParamSet take() { return std::move(params_); }

private:
    Prng rng_;
    ParamSet params_;
};

// ---------------------------------------------------------------------------
// Primitive layers
// ---------------------------------------------------------------------------

class Linear final : public Layer {
public:
    Linear(ParamAllocator& alloc, std::size_t in_features, std::size_t out_features)
        : in_(in_features),
          out_(out_features),
          w_(alloc.alloc_weight({out_features, in_features}, in_features, out_features)),
          b_(alloc.alloc_zero({out_features})) {}

    Tensor forward(const ParamSet& params, const Tensor& in, Tape* tape) const override {
        if (in.rank() != 2 || in.shape[1] != in_)
            throw ConfigError("linear layer expects Nx" + std::to_string(in_) + " input, got " +
                              shape_string(in.shape));
        const Tensor& w = params[w_];
        const Tensor& b = params[b_];
        std::size_t n = in.shape[0];
        Tensor out({n, out_});
        for (std::size_t r = 0; r < n; ++r) {
            const double* x = in.data.data() + r * in_;
            double* y = out.data.data() + r * out_;
            for (std::size_t m = 0; m < out_; ++m) {
                const double* wr = w.data.data() + m * in_;
                double acc = b.data[m];
                for (std::size_t d = 0; d < in_; ++d) acc += wr[d] * x[d];
                y[m] = acc;
            }
        }
        if (tape) tape->push(in);
        return out;
    }

    Tensor backward(const ParamSet& params, Tape& tape, const Tensor& grad_out,
                    ParamSet* grads) const override {
        Tensor in = tape.pop();
        const Tensor& w = params[w_];
        std::size_t n = in.shape[0];
        Tensor grad_in(in.shape);
        for (std::size_t r = 0; r < n; ++r) {
            const double* gy = grad_out.data.data() + r * out_;
            double* gx = grad_in.data.data() + r * in_;
            for (std::size_t m = 0; m < out_; ++m) {
                const double* wr = w.data.data() + m * in_;
                double g = gy[m];
                for (std::size_t d = 0; d < in_; ++d) gx[d] += wr[d] * g;
            }
        }
        if (grads) {
            Tensor& gw = (*grads)[w_];
            Tensor& gb = (*grads)[b_];
            for (std::size_t r = 0; r < n; ++r) {
                const double* x = in.data.data() + r * in_;
                const double* gy = grad_out.data.data() + r * out_;
                for (std::size_t m = 0; m < out_; ++m) {
                    double g = gy[m];
                    double* gwr = gw.data.data() + m * in_;
                    for (std::size_t d = 0; d < in_; ++d) gwr[d] += g * x[d];
                    gb.data[m] += g;
                }
            }
        }
        return grad_in;
    }

private:
    std::size_t in_, out_, w_, b_;
};

class Conv2d final : public Layer {
public:
    Conv2d(ParamAllocator& alloc, std::size_t in_channels, std::size_t out_channels,
           std::size_t kernel, std::size_t stride, std::size_t pad)
        : cin_(in_channels),
          cout_(out_channels),
          k_(kernel),
          stride_(stride),
          pad_(pad),
          w_(alloc.alloc_weight({out_channels, in_channels, kernel, kernel},
                                in_channels * kernel * kernel, out_channels * kernel * kernel)),
          b_(alloc.alloc_zero({out_channels})) {}

    Tensor forward(const ParamSet& params, const Tensor& in, Tape* tape) const override {
        check_input(in);
        const Tensor& w = params[w_];
        const Tensor& b = params[b_];
        std::size_t n = in.shape[0], h = in.shape[2], wd = in.shape[3];
        std::size_t oh = out_extent(h), ow = out_extent(wd);
        Tensor out({n, cout_, oh, ow});
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t f = 0; f < cout_; ++f) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double acc = b.data[f];
                        // top-left corner of the receptive field, may be off-image
                        long long iy0 = static_cast<long long>(oy * stride_) - static_cast<long long>(pad_);
                        long long ix0 = static_cast<long long>(ox * stride_) - static_cast<long long>(pad_);
                        for (std::size_t c = 0; c < cin_; ++c) {
                            for (std::size_t ky = 0; ky < k_; ++ky) {
                                long long iy = iy0 + static_cast<long long>(ky);
                                if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                                for (std::size_t kx = 0; kx < k_; ++kx) {
                                    long long ix = ix0 + static_cast<long long>(kx);
                                    if (ix < 0 || ix >= static_cast<long long>(wd)) continue;
                                    acc += in.data[in.at4(s, c, static_cast<std::size_t>(iy),
                                                          static_cast<std::size_t>(ix))] *
                                           w.data[w.at4(f, c, ky, kx)];
                                }
                            }
                        }
                        out.data[out.at4(s, f, oy, ox)] = acc;
                    }
                }
            }
        }
        if (tape) tape->push(in);
        return out;
    }

    Tensor backward(const ParamSet& params, Tape& tape, const Tensor& grad_out,
                    ParamSet* grads) const override {
        Tensor in = tape.pop();
        const Tensor& w = params[w_];
        std::size_t n = in.shape[0], h = in.shape[2], wd = in.shape[3];
        std::size_t oh = grad_out.shape[2], ow = grad_out.shape[3];
        Tensor grad_in(in.shape);
        Tensor* gw = grads ? &(*grads)[w_] : nullptr;
        Tensor* gb = grads ? &(*grads)[b_] : nullptr;
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t f = 0; f < cout_; ++f) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double g = grad_out.data[grad_out.at4(s, f, oy, ox)];
                        if (gb) gb->data[f] += g;
                        long long iy0 = static_cast<long long>(oy * stride_) - static_cast<long long>(pad_);
                        long long ix0 = static_cast<long long>(ox * stride_) - static_cast<long long>(pad_);
                        for (std::size_t c = 0; c < cin_; ++c) {
                            for (std::size_t ky = 0; ky < k_; ++ky) {
                                long long iy = iy0 + static_cast<long long>(ky);
                                if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                                for (std::size_t kx = 0; kx < k_; ++kx) {
                                    long long ix = ix0 + static_cast<long long>(kx);
                                    if (ix < 0 || ix >= static_cast<long long>(wd)) continue;
                                    std::size_t ii = in.at4(s, c, static_cast<std::size_t>(iy),
                                                            static_cast<std::size_t>(ix));
                                    grad_in.data[ii] += w.data[w.at4(f, c, ky, kx)] * g;
                                    if (gw) gw->data[gw->at4(f, c, ky, kx)] += in.data[ii] * g;
                                }
                            }
                        }
                    }
                }
            }
        }
        return grad_in;
    }

private:
    void check_input(const Tensor& in) const {
        if (in.rank() != 4 || in.shape[1] != cin_)
            throw ConfigError("conv layer expects Nx" + std::to_string(cin_) +
                              "xHxW input, got " + shape_string(in.shape));
        if (out_extent(in.shape[2]) == 0 || out_extent(in.shape[3]) == 0)
            throw ConfigError("conv input " + shape_string(in.shape) + " too small for kernel");
    }

    std::size_t out_extent(std::size_t e) const {
        long long v = static_cast<long long>(e) + 2 * static_cast<long long>(pad_) -
                      static_cast<long long>(k_);
        return v < 0 ? 0 : static_cast<std::size_t>(v) / stride_ + 1;
    }

    std::size_t cin_, cout_, k_, stride_, pad_, w_, b_;
};

class Relu final : public Layer {
public:
    Tensor forward(const ParamSet&, const Tensor& in, Tape* tape) const override {
        Tensor out = in;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        if (tape) tape->push(in);
        return out;
    }

    Tensor backward(const ParamSet&, Tape& tape, const Tensor& grad_out,
                    ParamSet*) const override {
        Tensor in = tape.pop();
        Tensor grad_in(in.shape);
        for (std::size_t i = 0; i < in.numel(); ++i)
            grad_in.data[i] = in.data[i] > 0.0 ? grad_out.data[i] : 0.0;
        return grad_in;
    }
};

/// 2x2 average pooling with stride 2. Odd trailing rows/columns are dropped.
class AvgPool2 final : public Layer {
public:
    Tensor forward(const ParamSet&, const Tensor& in, Tape* tape) const override {
        if (in.rank() != 4) throw ConfigError("pool layer expects NxCxHxW input");
        std::size_t n = in.shape[0], c = in.shape[1], oh = in.shape[2] / 2, ow = in.shape[3] / 2;
        if (oh == 0 || ow == 0) throw ConfigError("pool input too small");
        Tensor out({n, c, oh, ow});
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x)
                        out.data[out.at4(s, ch, y, x)] =
                            0.25 * (in.data[in.at4(s, ch, 2 * y, 2 * x)] +
                                    in.data[in.at4(s, ch, 2 * y, 2 * x + 1)] +
                                    in.data[in.at4(s, ch, 2 * y + 1, 2 * x)] +
                                    in.data[in.at4(s, ch, 2 * y + 1, 2 * x + 1)]);
        if (tape) tape->push(in);
        return out;
    }

    Tensor backward(const ParamSet&, Tape& tape, const Tensor& grad_out,
                    ParamSet*) const override {
        Tensor in = tape.pop();
        std::size_t n = in.shape[0], c = in.shape[1];
        std::size_t oh = grad_out.shape[2], ow = grad_out.shape[3];
        Tensor grad_in(in.shape);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x) {
                        double g = 0.25 * grad_out.data[grad_out.at4(s, ch, y, x)];
                        grad_in.data[in.at4(s, ch, 2 * y, 2 * x)] += g;
                        grad_in.data[in.at4(s, ch, 2 * y, 2 * x + 1)] += g;
                        grad_in.data[in.at4(s, ch, 2 * y + 1, 2 * x)] += g;
                        grad_in.data[in.at4(s, ch, 2 * y + 1, 2 * x + 1)] += g;
                    }
        return grad_in;
    }
};

class GlobalAvgPool final : public Layer {
public:
    Tensor forward(const ParamSet&, const Tensor& in, Tape* tape) const override {
        if (in.rank() != 4) throw ConfigError("global pool expects NxCxHxW input");
        std::size_t n = in.shape[0], c = in.shape[1], hw = in.shape[2] * in.shape[3];
        Tensor out({n, c});
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* base = in.data.data() + in.at4(s, ch, 0, 0);
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += base[i];
                out.data[out.at2(s, ch)] = acc / static_cast<double>(hw);
            }
        if (tape) tape->push(in);
        return out;
    }

    Tensor backward(const ParamSet&, Tape& tape, const Tensor& grad_out,
                    ParamSet*) const override {
        Tensor in = tape.pop();
        std::size_t n = in.shape[0], c = in.shape[1], hw = in.shape[2] * in.shape[3];
        Tensor grad_in(in.shape);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double g = grad_out.data[grad_out.at2(s, ch)] / static_cast<double>(hw);
                double* base = grad_in.data.data() + grad_in.at4(s, ch, 0, 0);
                for (std::size_t i = 0; i < hw; ++i) base[i] += g;
            }
        return grad_in;
    }
};

class Flatten final : public Layer {
public:
    Tensor forward(const ParamSet&, const Tensor& in, Tape* tape) const override {
        if (in.rank() < 2) throw ConfigError("flatten expects at least rank-2 input");
        Tensor out = in;
        out.shape = {in.shape[0], in.numel() / in.shape[0]};
        if (tape) tape->push(in);
        return out;
    }

    Tensor backward(const ParamSet&, Tape& tape, const Tensor& grad_out,
                    ParamSet*) const override {
        Tensor in = tape.pop();
        Tensor grad_in = grad_out;
        grad_in.shape = in.shape;
        return grad_in;
    }
};

class Identity final : public Layer {
public:
    Tensor forward(const ParamSet&, const Tensor& in, Tape*) const override { return in; }

    Tensor backward(const ParamSet&, Tape&, const Tensor& grad_out,
                    ParamSet*) const override {
        return grad_out;
    }
};

class Sequential final : public Layer {
public:
    Sequential() = default;
    explicit Sequential(std::vector<LayerPtr> children) : children_(std::move(children)) {}

    void add(LayerPtr layer) { children_.push_back(std::move(layer)); }

    Tensor forward(const ParamSet& params, const Tensor& in, Tape* tape) const override {
        Tensor x = in;
        for (const auto& child : children_) x = child->forward(params, x, tape);
        return x;
    }

    Tensor backward(const ParamSet& params, Tape& tape, const Tensor& grad_out,
                    ParamSet* grads) const override {
        Tensor g = grad_out;
        for (auto it = children_.rbegin(); it != children_.rend(); ++it)
            g = (*it)->backward(params, tape, g, grads);
        return g;
    }

private:
    std::vector<LayerPtr> children_;
};

/// out = body(in) + shortcut(in). The post-addition nonlinearity is a
/// separate Relu in the enclosing Sequential.
class Residual final : public Layer {
public:
    Residual(LayerPtr body, LayerPtr shortcut)
        : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

    Tensor forward(const ParamSet& params, const Tensor& in, Tape* tape) const override {
        Tensor main = body_->forward(params, in, tape);
        Tensor skip = shortcut_->forward(params, in, tape);
        if (!main.same_shape(skip))
            throw ConfigError("residual branches disagree on shape: " +
                              shape_string(main.shape) + " vs " + shape_string(skip.shape));
        for (std::size_t i = 0; i < main.numel(); ++i) main.data[i] += skip.data[i];
        return main;
    }

    Tensor backward(const ParamSet& params, Tape& tape, const Tensor& grad_out,
                    ParamSet* grads) const override {
        // shortcut pushed last, so it pops first
        Tensor g_skip = shortcut_->backward(params, tape, grad_out, grads);
        Tensor g_main = body_->backward(params, tape, grad_out, grads);
        for (std::size_t i = 0; i < g_main.numel(); ++i) g_main.data[i] += g_skip.data[i];
        return g_main;
    }

private:
    LayerPtr body_;
    LayerPtr shortcut_;
};

} // namespace advkit
