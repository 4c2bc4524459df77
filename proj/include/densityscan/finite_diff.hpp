#pragma once

#include <functional>
#include <span>
#include <vector>

namespace densityscan::numerics {

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
std::vector<double> finite_diff(const ScalarFn& f, std::span<const double> x, double h);

}  // namespace densityscan::numerics
