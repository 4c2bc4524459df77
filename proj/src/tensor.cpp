#include "densityscan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "densityscan/errors.hpp"

namespace densityscan::numerics {

std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : dims_(std::move(dims)), data_(element_count(dims_), fill) {
    if (std::ranges::find(dims_, std::size_t{0}) != dims_.end())
        throw ShapeError("dims", "tensor dimensions must be positive");
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (std::ranges::find(dims_, std::size_t{0}) != dims_.end())
        throw ShapeError("dims", "tensor dimensions must be positive");
    if (data_.size() != element_count(dims_))
        throw ShapeError("data", "data length " + std::to_string(data_.size()) +
                                     " does not match shape " + shape_string());
}

bool Tensor::all_finite() const noexcept {
    return std::ranges::all_of(data_, [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims_[i]);
    }
    return s + "]";
}

}  // namespace densityscan::numerics
