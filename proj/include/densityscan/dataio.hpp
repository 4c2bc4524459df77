#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "densityscan/density.hpp"
#include "densityscan/geometry.hpp"
#include "densityscan/tensor.hpp"

namespace densityscan::dataio {

/// Grayscale image, row-major, values in [0, 1].
struct ImageGray {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    ImageGray() = default;
    ImageGray(int w, int h, double fill = 0.0);

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    friend bool operator==(const ImageGray&, const ImageGray&) = default;
};

/// Decodes P2 (ASCII) or P5 (binary) PGM with maxval <= 255.
/// Throws ParseError carrying the byte offset of the failure.
ImageGray decode_pgm(std::span<const std::uint8_t> bytes, const std::string& source = "pgm");
ImageGray load_image(const std::string& path);

/// Writes binary P5, quantizing round(v * 255) after clamping to [0, 1].
std::vector<std::uint8_t> encode_pgm(const ImageGray& image);
void save_pgm(const std::string& path, const ImageGray& image);

/// Bilinear sample of a row-major grid at continuous coordinates where pixel (i, j) has its
/// centre at (i + 0.5, j + 0.5). Out-of-range coordinates replicate the border.
double sample_bilinear(std::span<const double> grid, int width, int height, double x, double y);

/// Window content resampled to out_size x out_size (bilinear), as a [1, out, out] tensor.
numerics::Tensor crop_resize(const ImageGray& image, const Window& window, int out_size = 32);

numerics::Tensor to_tensor(const ImageGray& image);

struct Ellipse {
    double major_r = 0.0;
    double minor_r = 0.0;
    double angle_rad = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

struct FddbAnnotation {
    std::string image_id;
    std::vector<Ellipse> ellipses;
    friend bool operator==(const FddbAnnotation&, const FddbAnnotation&) = default;
};

/// FDDB fold format: image path line, face-count line, then "major minor angle cx cy score" lines.
std::vector<FddbAnnotation> parse_fddb(const std::string& fold_text, const std::string& source = "fddb");
std::string serialize_fddb(const std::vector<FddbAnnotation>& annotations);

/// mu = centre, beta = 4 / (major_r * minor_r): the 2-sigma disc matches the ellipse's
/// geometric-mean radius.
density::GaussianComponent ellipse_to_gaussian(const Ellipse& e);

struct BlobStyle {
    double disc = 0.9;   // intensity inside radius 2 sigma
    double ring = 0.1;   // intensity between 2 and 3 sigma
};

/// Paints the disc-and-ring pattern of a component, anti-aliased by 4x4 supersampling.
void render_blob(ImageGray& image, const density::GaussianComponent& c, const BlobStyle& style = {});

struct SceneSpec {
    int width = 256;
    int height = 256;
    int min_objects = 0;
    int max_objects = 3;
    double beta_min = 0.005;  // 1/px^2
    double beta_max = 0.02;
    double noise = 0.05;      // std-dev of additive Gaussian pixel noise
    std::uint64_t rng_seed = 0;
};

/// Half the side of the window in which a component of inverse variance beta appears at
/// canonical size; synth_scene keeps objects at least this far from the borders.
double matched_half_window(double beta_px);

/// Renders a noisy background with disc-and-ring objects and returns it with the exact
/// ground truth. Objects are pairwise >= 4 sigma_max apart. Throws Error when placement
/// fails after bounded retries.
std::pair<ImageGray, density::ObjectDistribution> synth_scene(const SceneSpec& spec);

}  // namespace densityscan::dataio
