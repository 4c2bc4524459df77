#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace densityscan::numerics {

/// Dense row-major tensor of doubles. Image-like tensors are channels-first [C, H, W];
/// kernel banks are [K, C, kh, kw].
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
    Tensor(std::vector<std::size_t> dims, std::vector<double> data);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // [C, H, W] access
    double& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }

    // [K, C, H, W] access
    double& at(std::size_t k, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[((k * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    double at(std::size_t k, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[((k * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }

    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

std::size_t element_count(const std::vector<std::size_t>& dims);

}  // namespace densityscan::numerics
