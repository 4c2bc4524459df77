#pragma once

#include "densityscan/geometry.hpp"

namespace densityscan::detect {

/// An extracted object: centre, inverse variance implied by the best-responding window size,
/// and the predicted density there.
struct Detection {
    Vec2 center;
    double beta_px = 0.0;
    double score = 0.0;
    int window_size = 0;  // best-responding scale
    int stride = 0;       // grid stride at that scale

    friend bool operator==(const Detection&, const Detection&) = default;
};

}  // namespace densityscan::detect
