#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "densityscan/detection.hpp"
#include "densityscan/geometry.hpp"

namespace densityscan::search {

/// Window sizes s0 <= s1 <= ... with s_{n+1} <= s_n (1 + alpha).
struct ScaleSchedule {
    int s0 = 8;
    double alpha = 0.25;
    int s_max = std::numeric_limits<int>::max();
};

/// Iterates s <- floor(s (1 + alpha)), falling back to s + 1 when flooring would not grow,
/// and stops once s exceeds min(s_max, image_size).
std::vector<int> scale_series(int image_size, const ScaleSchedule& schedule);

/// max(1, round(size * stride_fraction)).
int stride_for(int size, double stride_fraction);

/// Every window of every scheduled size on a grid with stride stride_for(size), row-major per
/// scale, scales ascending. Square images use the one-argument form.
std::vector<Window> geometric_windows(int image_size, const ScaleSchedule& schedule, double stride_fraction);
std::vector<Window> geometric_windows(int width, int height, const ScaleSchedule& schedule,
                                      double stride_fraction);
std::size_t geometric_window_count(int image_size, const ScaleSchedule& schedule, double stride_fraction);

/// Counting baseline: sizes s0, s0 + step, ..., image_size, every window at the given stride.
std::size_t arithmetic_window_count(int image_size, int s0, int size_step = 1, int stride = 1);

/// Scalar field over the image plane (analytic ground truth or detector-evaluated).
using FieldOracle = std::function<double(Vec2)>;

struct AutomatonParams {
    int probe_count = 8;
    double probe_radius = 4.0;
    double step_gain = 1.0;
    int max_steps = 100;
    double tolerance = 1e-4;      // minimum relative improvement to accept a move
    std::uint64_t rng_seed = 0;
    double min_radius = 0.25;     // probe radius is halved on stagnation until it drops below this
};

struct SearchResult {
    std::vector<Vec2> trajectory;  // accepted positions, starting with `start`
    std::vector<double> values;    // field value at each accepted position
    Vec2 mode;
    double value = 0.0;
    int steps = 0;                 // probe rounds performed
    bool converged = false;        // stopped on tolerance before max_steps, with the field falling off somewhere
                                   // on the final ring (a flat field has no mode)
};

/// Probes probe_count random points on a circle around the current position and moves toward
/// the best one (scaled by step_gain) while it improves the value by more than tolerance * |value|.
/// On stagnation the radius is halved; below min_radius the search stops.
SearchResult heuristic_search(const FieldOracle& field, Vec2 start, const AutomatonParams& params);

/// "step,x,y,value" rows.
std::string trajectory_csv(const SearchResult& result);

struct JustifyParams {
    std::vector<double> ring_radii{0.5, 1.0, 1.5, 2.0};  // multiples of the candidate's sigma
    double min_peak_ratio = 0.05;
    int ring_samples = 16;
};

/// Accepts a candidate when the centre value exceeds every ring mean by the factor
/// (1 + min_peak_ratio) and ring means strictly decrease with radius.
bool evidence_justify(const FieldOracle& field, const detect::Detection& candidate, const JustifyParams& params);

}  // namespace densityscan::search
