#include "densityscan/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "densityscan/errors.hpp"

namespace densityscan::search {

std::vector<int> scale_series(int image_size, const ScaleSchedule& schedule) {
    if (schedule.s0 < 8) throw InvalidArgument("s0 must be at least 8 px");
    if (schedule.s0 > image_size)
        throw InvalidArgument("s0 = " + std::to_string(schedule.s0) + " exceeds image size " +
                              std::to_string(image_size));
    if (!(schedule.alpha > 0.0)) throw InvalidArgument("alpha must be positive");

    const int cap = std::min(schedule.s_max, image_size);
    std::vector<int> sizes;
    if (schedule.s0 > cap) return sizes;
    sizes.push_back(schedule.s0);
    for (;;) {
        const int s = sizes.back();
        // The epsilon absorbs representation error such as 10 * 1.1 = 10.999...
        int next = static_cast<int>(std::floor(s * (1.0 + schedule.alpha) + 1e-9));
        if (next <= s) next = s + 1;
        if (next > cap) break;
        sizes.push_back(next);
    }
    return sizes;
}

int stride_for(int size, double stride_fraction) {
    if (!(stride_fraction > 0.0 && stride_fraction <= 1.0))
        throw InvalidArgument("stride_fraction must lie in (0, 1]");
    return std::max(1, static_cast<int>(std::lround(size * stride_fraction)));
}

std::vector<Window> geometric_windows(int width, int height, const ScaleSchedule& schedule,
                                      double stride_fraction) {
    std::vector<Window> out;
    for (int s : scale_series(std::min(width, height), schedule)) {
        const int stride = stride_for(s, stride_fraction);
        for (int y = 0; y + s <= height; y += stride)
            for (int x = 0; x + s <= width; x += stride) out.push_back({x, y, s});
    }
    return out;
}

std::vector<Window> geometric_windows(int image_size, const ScaleSchedule& schedule, double stride_fraction) {
    return geometric_windows(image_size, image_size, schedule, stride_fraction);
}

std::size_t geometric_window_count(int image_size, const ScaleSchedule& schedule, double stride_fraction) {
    std::size_t total = 0;
    for (int s : scale_series(image_size, schedule)) {
        const auto per_axis = static_cast<std::size_t>((image_size - s) / stride_for(s, stride_fraction) + 1);
        total += per_axis * per_axis;
    }
    return total;
}

std::size_t arithmetic_window_count(int image_size, int s0, int size_step, int stride) {
    if (s0 < 1 || size_step < 1 || stride < 1) throw InvalidArgument("arithmetic schedule parameters must be positive");
    std::size_t total = 0;
    for (int s = s0; s <= image_size; s += size_step) {
        const auto per_axis = static_cast<std::size_t>((image_size - s) / stride + 1);
        total += per_axis * per_axis;
    }
    return total;
}

SearchResult heuristic_search(const FieldOracle& field, Vec2 start, const AutomatonParams& params) {
    if (params.probe_count < 2) throw InvalidArgument("probe_count must be >= 2");
    if (!(params.probe_radius > 0.0)) throw InvalidArgument("probe_radius must be positive");
    if (params.max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
    if (!(params.step_gain > 0.0)) throw InvalidArgument("step_gain must be positive");

    std::mt19937_64 rng(params.rng_seed);
    const auto angle = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 * std::numbers::pi; };

    SearchResult res;
    Vec2 pos = start;
    double value = field(pos);
    res.trajectory.push_back(pos);
    res.values.push_back(value);
    double radius = params.probe_radius;

    while (res.steps < params.max_steps) {
        ++res.steps;
        Vec2 best_probe = pos;
        double best_value = -std::numeric_limits<double>::infinity();
        bool any_lower = false;
        for (int k = 0; k < params.probe_count; ++k) {
            const double a = angle();
            const Vec2 q{pos.x + radius * std::cos(a), pos.y + radius * std::sin(a)};
            const double v = field(q);
            if (v < value) any_lower = true;
            if (v > best_value) {
                best_value = v;
                best_probe = q;
            }
        }

        const double threshold = params.tolerance * std::abs(value);
        if (best_value - value > threshold) {
            const Vec2 next = pos + params.step_gain * (best_probe - pos);
            const double next_value = params.step_gain == 1.0 ? best_value : field(next);
            if (next_value - value > threshold) {
                pos = next;
                value = next_value;
                res.trajectory.push_back(pos);
                res.values.push_back(value);
                continue;
            }
        }
        if (radius * 0.5 >= params.min_radius) {
            radius *= 0.5;
            continue;
        }
        res.converged = any_lower;
        res.mode = pos;
        res.value = value;
        return res;
    }
    res.converged = false;
    res.mode = pos;
    res.value = value;
    return res;
}

std::string trajectory_csv(const SearchResult& result) {
    std::string out = "step,x,y,value\n";
    char buf[128];
    for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", i, result.trajectory[i].x, result.trajectory[i].y,
                      result.values[i]);
        out += buf;
    }
    return out;
}

bool evidence_justify(const FieldOracle& field, const detect::Detection& candidate, const JustifyParams& params) {
    if (!(candidate.beta_px > 0.0)) throw InvalidArgument("candidate needs beta_px > 0");
    if (params.ring_radii.empty() || params.ring_samples < 1) throw InvalidArgument("justifier needs rings");
    const double sigma = 1.0 / std::sqrt(candidate.beta_px);
    const double center = field(candidate.center);
    if (!(center > 0.0)) return false;

    double previous = center;
    for (double r : params.ring_radii) {
        double sum = 0.0;
        for (int k = 0; k < params.ring_samples; ++k) {
            const double a = 2.0 * std::numbers::pi * k / params.ring_samples;
            sum += field({candidate.center.x + r * sigma * std::cos(a), candidate.center.y + r * sigma * std::sin(a)});
        }
        const double mean = sum / params.ring_samples;
        if (center < (1.0 + params.min_peak_ratio) * mean) return false;
        if (!(mean < previous)) return false;
        previous = mean;
    }
    return true;
}

}  // namespace densityscan::search
