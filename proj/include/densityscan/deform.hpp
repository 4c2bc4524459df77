#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "densityscan/density.hpp"
#include "densityscan/tensor.hpp"

namespace densityscan::deform {

inline constexpr std::size_t kPatchSize = 32;

/// Relative scale change (beta <- beta * (1 + eps1)) and one-axis shift in canonical pixels.
struct DeformationParams {
    double eps1 = 0.0;
    double eps2 = 0.0;
};

enum class Axis : std::uint8_t { X = 0, Y = 1 };

enum class SampleKind : std::uint8_t { Original = 0, Scale = 1, AxisShift = 2, CornerShift = 3 };

struct TrainingSample {
    numerics::Tensor patch;                // [1, 32, 32], values in [0, 1]
    double target = 0.0;                   // renormalized density at the patch centre
    std::optional<double> tangent_scale;   // df/d eps1 at eps = 0
    std::optional<double> tangent_shift2;  // d2f/d eps2^2 at eps = 0
    double beta = density::kCanonicalBeta; // canonical inverse variance of the depicted object

    // Provenance: enough to recompute `target` from the seed.
    std::uint32_t seed_index = 0;
    SampleKind kind = SampleKind::Original;
    double base_target = 0.0;
    double eps1 = 0.0;
    double shift_x = 0.0;
    double shift_y = 0.0;

    bool has_tangents() const { return tangent_scale.has_value() && tangent_shift2.has_value(); }
};

/// Zooms about the patch centre by sqrt(1 + eps1) so a depicted object's beta becomes
/// beta * (1 + eps1). Bilinear, border replicated.
numerics::Tensor apply_scale(const numerics::Tensor& patch, double eps1);

/// Translates content by eps2 pixels along `axis` (bilinear, border replicated).
numerics::Tensor apply_shift(const numerics::Tensor& patch, double eps2, Axis axis = Axis::X);

/// Translates content by (dx, dy) in one bilinear pass.
numerics::Tensor translate(const numerics::Tensor& patch, double dx, double dy);

/// Centre density after a scale change: f * (1 + eps1).
double scaled_target(double f, double eps1);
/// Centre density after moving the object by `distance` pixels: f * exp(-distance^2 * beta / 2).
double shifted_target(double f, double beta, double distance);

/// (df/d eps1, d2f/d eps2^2) at eps = 0, i.e. (f, -beta * f).
std::pair<double, double> tangent_targets(double f, double beta);

/// Target implied by a sample's recorded provenance.
double recompute_target(const TrainingSample& s);

struct Seed {
    numerics::Tensor patch;                 // [1, 32, 32]
    density::ObjectDistribution objects;    // patch pixel coordinates; empty for negatives
};

struct GenRecipe {
    int scale_variants = 2;                 // per seed, cycling through scale_eps
    int axis_shifts = 0;                    // total, assigned round-robin over seeds
    int corner_shifts = 0;                  // total, assigned round-robin over seeds
    std::vector<double> scale_eps{-0.3, 0.3};
    std::vector<double> axis_magnitudes{2.0, 4.0};
    double corner_offset = 3.0;
    bool tangents = true;

    std::size_t sample_count(std::size_t seeds) const;
};

/// Originals, then scale variants (seed-major), then axis shifts, then corner shifts.
/// Output depends only on (seeds, recipe, rng_seed).
std::vector<TrainingSample> generate_dataset(const std::vector<Seed>& seeds, const GenRecipe& recipe,
                                             std::uint64_t rng_seed);

/// Deterministic shuffled split into (first `train_count` samples, remainder).
std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>>
split_dataset(std::vector<TrainingSample> samples, std::size_t train_count, std::uint64_t rng_seed);

/// Synthetic 32x32 seed: a centred disc-and-ring object of canonical beta (positive) or
/// plain textured background (negative).
Seed synth_seed(bool positive, std::uint64_t rng_seed, double noise = 0.05);

/// `count` synthetic seeds, one negative per `negative_every` seeds (1:3 negative:positive at 4).
std::vector<Seed> synth_seeds(std::size_t count, std::uint64_t rng_seed, std::size_t negative_every = 4,
                              double noise = 0.05);

// ---------------------------------------------------------------------------
// Dataset directory: samples.bin + manifest.txt

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct DatasetManifest {
    std::vector<std::pair<std::string, std::string>> entries;  // ordered key=value lines
    void set(const std::string& key, const std::string& value);
    std::optional<std::string> get(const std::string& key) const;
};

void write_samples(const std::string& path, const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> read_samples(const std::string& path);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

/// Reads `<dir>/samples.bin`.
std::vector<TrainingSample> load_dataset(const std::string& dir);

}  // namespace densityscan::deform
