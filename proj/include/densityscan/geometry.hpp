#pragma once

#include <cmath>

namespace densityscan {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline double distance(Vec2 a, Vec2 b) { return std::sqrt(squared_norm(a - b)); }

/// Square segmentation of an image: top-left corner and side length, in pixels.
/// Pixel (i, j) covers [i, i+1) x [j, j+1); a window's centre is therefore x + size/2.
struct Window {
    int x = 0;
    int y = 0;
    int size = 0;

    Vec2 center() const { return {x + 0.5 * size, y + 0.5 * size}; }
    bool inside(int width, int height) const {
        return size > 0 && x >= 0 && y >= 0 && x + size <= width && y + size <= height;
    }
    friend bool operator==(const Window&, const Window&) = default;
    friend auto operator<=>(const Window&, const Window&) = default;
};

}  // namespace densityscan
