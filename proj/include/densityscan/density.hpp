#pragma once

#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include "densityscan/geometry.hpp"

namespace densityscan::density {

/// Side of the detector's receptive field; every regression target is a density in this frame.
inline constexpr double kCanonicalSize = 32.0;

/// Inverse variance of the "appropriately sized" object in canonical pixels: 2*pi / 8^2.
inline constexpr double kCanonicalBeta = 2.0 * std::numbers::pi / (0.25 * kCanonicalSize * 0.25 * kCanonicalSize);

/// Fixed renormalization applied to raw densities so that a centred canonical object scores 1.0.
inline constexpr double kTargetScale = 2.0 * std::numbers::pi / kCanonicalBeta;

/// Isotropic Gaussian with covariance beta^-1 * I, mixture weight fixed to 1.
struct GaussianComponent {
    Vec2 mu;
    double beta = 1.0;  // 1/px^2

    double sigma() const;
    friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct ObjectDistribution {
    std::vector<GaussianComponent> components;

    bool empty() const noexcept { return components.empty(); }
    friend bool operator==(const ObjectDistribution&, const ObjectDistribution&) = default;
};

/// Sum over components of (beta / 2pi) * exp(-beta |x - mu|^2 / 2).
double density_at(const ObjectDistribution& dist, Vec2 x);

/// A component's inverse variance expressed in the canonical frame of a window of `window_size` px.
double canonical_beta(double beta_px, double window_size, double canonical_size = kCanonicalSize);

/// Raw regression target: the mixture density at the window centre, measured in the window's
/// canonical frame (peak height uses canonical_beta, spatial falloff uses the pixel-frame distance).
double target_value(const ObjectDistribution& dist, const Window& window);

/// target_value * kTargetScale.
double normalized_target(const ObjectDistribution& dist, const Window& window);

/// Samples density_at at pixel centres of a width x height grid; each component is cut off
/// beyond 5 sigma.
std::vector<double> rasterize(const ObjectDistribution& dist, int width, int height);

/// "#objdist v1 <count>" header followed by one "mu_x mu_y beta" line per component.
void write_objdist(std::ostream& out, const ObjectDistribution& dist);
std::string to_objdist_text(const ObjectDistribution& dist);
/// Throws ParseError (line-numbered) on malformed text or non-positive beta.
ObjectDistribution parse_objdist(const std::string& text, const std::string& source = "objdist");

ObjectDistribution load_objdist(const std::string& path);
void save_objdist(const std::string& path, const ObjectDistribution& dist);

}  // namespace densityscan::density
