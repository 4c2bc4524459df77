#include "densityscan/layers.hpp"

#include <string>

#include "densityscan/errors.hpp"

namespace densityscan::numerics {

namespace {

struct ConvShape {
    std::size_t c, h, w, k, kh, kw, oh, ow;
};

ConvShape check_conv(const Tensor& input, const Tensor& kernels, std::size_t stride) {
    if (input.rank() != 3) throw ShapeError("input.rank", "conv2d input must be [C,H,W], got " + input.shape_string());
    if (kernels.rank() != 4) throw ShapeError("kernels.rank", "conv2d kernels must be [K,C,kh,kw], got " + kernels.shape_string());
    if (stride < 1) throw ShapeError("stride", "conv2d stride must be >= 1");
    ConvShape s{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0),
                kernels.dim(2), kernels.dim(3), 0, 0};
    if (kernels.dim(1) != s.c)
        throw ShapeError("C", "kernel channels " + std::to_string(kernels.dim(1)) +
                                  " != input channels " + std::to_string(s.c));
    if (s.kh > s.h) throw ShapeError("H", "kernel height exceeds input height");
    if (s.kw > s.w) throw ShapeError("W", "kernel width exceeds input width");
    s.oh = (s.h - s.kh) / stride + 1;
    s.ow = (s.w - s.kw) / stride + 1;
    return s;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::span<const double> bias,
              std::size_t stride) {
    const ConvShape s = check_conv(input, kernels, stride);
    if (bias.size() != s.k)
        throw ShapeError("K", "bias length " + std::to_string(bias.size()) + " != kernel count " +
                                  std::to_string(s.k));

    Tensor out({s.k, s.oh, s.ow});
    const double* in = input.data().data();
    double* o = out.data().data();
    for (std::size_t k = 0; k < s.k; ++k) {
        double* ok = o + k * s.oh * s.ow;
        for (std::size_t i = 0; i < s.oh * s.ow; ++i) ok[i] = bias[k];
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* ic = in + c * s.h * s.w;
            for (std::size_t ky = 0; ky < s.kh; ++ky) {
                for (std::size_t kx = 0; kx < s.kw; ++kx) {
                    const double wv = kernels.at(k, c, ky, kx);
                    for (std::size_t oy = 0; oy < s.oh; ++oy) {
                        const double* row = ic + (oy * stride + ky) * s.w + kx;
                        double* orow = ok + oy * s.ow;
                        for (std::size_t ox = 0; ox < s.ow; ++ox) orow[ox] += wv * row[ox * stride];
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& grad_output, std::size_t stride) {
    const ConvShape s = check_conv(input, kernels, stride);
    if (grad_output.rank() != 3 || grad_output.dim(0) != s.k || grad_output.dim(1) != s.oh ||
        grad_output.dim(2) != s.ow)
        throw ShapeError("grad_output", "conv2d gradient shape " + grad_output.shape_string() +
                                            " does not match output");

    Conv2dGrads g{Tensor(input.dims()), Tensor(kernels.dims()), std::vector<double>(s.k, 0.0)};
    const double* in = input.data().data();
    const double* go = grad_output.data().data();
    double* gi = g.input.data().data();
    for (std::size_t k = 0; k < s.k; ++k) {
        const double* gok = go + k * s.oh * s.ow;
        double bsum = 0.0;
        for (std::size_t i = 0; i < s.oh * s.ow; ++i) bsum += gok[i];
        g.bias[k] = bsum;
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* ic = in + c * s.h * s.w;
            double* gic = gi + c * s.h * s.w;
            for (std::size_t ky = 0; ky < s.kh; ++ky) {
                for (std::size_t kx = 0; kx < s.kw; ++kx) {
                    const double wv = kernels.at(k, c, ky, kx);
                    double wsum = 0.0;
                    for (std::size_t oy = 0; oy < s.oh; ++oy) {
                        const std::size_t off = (oy * stride + ky) * s.w + kx;
                        const double* row = ic + off;
                        double* grow = gic + off;
                        const double* gorow = gok + oy * s.ow;
                        for (std::size_t ox = 0; ox < s.ow; ++ox) {
                            wsum += gorow[ox] * row[ox * stride];
                            grow[ox * stride] += gorow[ox] * wv;
                        }
                    }
                    g.kernels.at(k, c, ky, kx) = wsum;
                }
            }
        }
    }
    return g;
}

PoolResult maxpool2(const Tensor& input) {
    if (input.rank() != 3) throw ShapeError("input.rank", "maxpool2 input must be [C,H,W], got " + input.shape_string());
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0) throw ShapeError("H", "maxpool2 needs even height, got " + std::to_string(h));
    if (w % 2 != 0) throw ShapeError("W", "maxpool2 needs even width, got " + std::to_string(w));

    PoolResult r{Tensor({c, h / 2, w / 2}), std::vector<std::size_t>(c * (h / 2) * (w / 2))};
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h / 2; ++y) {
            for (std::size_t x = 0; x < w / 2; ++x, ++o) {
                std::size_t best = (ch * h + 2 * y) * w + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if (input[idx] > input[best]) best = idx;
                    }
                }
                r.output[o] = input[best];
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool2_backward(const std::vector<std::size_t>& input_dims,
                         const std::vector<std::size_t>& argmax, const Tensor& grad_output) {
    if (argmax.size() != grad_output.size())
        throw ShapeError("argmax", "argmax length does not match pooled gradient");
    Tensor g(input_dims);
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_output[i];
    return g;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data())
        if (v < 0.0) v = 0.0;
    return out;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_output) {
    if (pre_activation.dims() != grad_output.dims())
        throw ShapeError("grad_output", "relu gradient shape mismatch");
    Tensor g = grad_output;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(pre_activation[i] > 0.0)) g[i] = 0.0;
    return g;
}

}  // namespace densityscan::numerics
