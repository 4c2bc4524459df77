#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "densityscan/tensor.hpp"

namespace densityscan::numerics {

/// Valid (unpadded) cross-correlation. input [C,H,W], kernels [K,C,kh,kw], bias [K].
/// Output is [K, (H-kh)/stride+1, (W-kw)/stride+1].
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::span<const double> bias,
              std::size_t stride = 1);

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    std::vector<double> bias;
};

/// Gradients of a scalar loss w.r.t. the conv inputs, given dL/d(output).
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& grad_output, std::size_t stride = 1);

struct PoolResult {
    Tensor output;
    std::vector<std::size_t> argmax;  // flat input index of each output's winner
};

/// 2x2, stride 2 max pooling. H and W must be even.
PoolResult maxpool2(const Tensor& input);

/// Routes each output gradient to its argmax input position.
Tensor maxpool2_backward(const std::vector<std::size_t>& input_dims,
                         const std::vector<std::size_t>& argmax, const Tensor& grad_output);

Tensor relu(const Tensor& input);
/// Masks grad_output by (pre_activation > 0).
Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_output);

}  // namespace densityscan::numerics
