#include "densityscan/finite_diff.hpp"

#include "densityscan/errors.hpp"

namespace densityscan::numerics {

std::vector<double> finite_diff(const ScalarFn& f, std::span<const double> x, double h) {
    if (!(h > 0.0)) throw InvalidArgument("finite_diff step must be positive");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(probe);
        probe[i] = orig - h;
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace densityscan::numerics
