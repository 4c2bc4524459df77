#include "densityscan/deform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "densityscan/dataio.hpp"
#include "densityscan/errors.hpp"
#include "densityscan/parallel.hpp"

namespace densityscan::deform {

using numerics::Tensor;

namespace {

void check_patch(const Tensor& patch) {
    if (patch.rank() != 3) throw ShapeError("patch.rank", "patch must be [C,H,W], got " + patch.shape_string());
}

// Resamples every channel: out(p) = in(source(p)), coordinates in pixel-centre convention.
template <class SourceFn>
Tensor resample(const Tensor& patch, SourceFn&& source) {
    check_patch(patch);
    const int h = static_cast<int>(patch.dim(1));
    const int w = static_cast<int>(patch.dim(2));
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out(patch.dims());
    for (std::size_t c = 0; c < patch.dim(0); ++c) {
        const auto in = patch.data().subspan(c * plane, plane);
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const Vec2 src = source(Vec2{u + 0.5, v + 0.5}, Vec2{0.5 * w, 0.5 * h});
                out.at(c, v, u) = dataio::sample_bilinear(in, w, h, src.x, src.y);
            }
        }
    }
    return out;
}

}  // namespace

Tensor apply_scale(const Tensor& patch, double eps1) {
    if (!(eps1 > -1.0)) throw InvalidArgument("apply_scale requires eps1 > -1");
    if (eps1 == 0.0) return patch;
    const double zoom = std::sqrt(1.0 + eps1);
    return resample(patch, [zoom](Vec2 p, Vec2 c) { return c + zoom * (p - c); });
}

Tensor translate(const Tensor& patch, double dx, double dy) {
    if (dx == 0.0 && dy == 0.0) return patch;
    return resample(patch, [dx, dy](Vec2 p, Vec2) { return Vec2{p.x - dx, p.y - dy}; });
}

Tensor apply_shift(const Tensor& patch, double eps2, Axis axis) {
    return axis == Axis::X ? translate(patch, eps2, 0.0) : translate(patch, 0.0, eps2);
}

double scaled_target(double f, double eps1) { return f * (1.0 + eps1); }

double shifted_target(double f, double beta, double distance) {
    return f * std::exp(-0.5 * distance * distance * beta);
}

std::pair<double, double> tangent_targets(double f, double beta) {
    if (f < 0.0) throw InvalidArgument("tangent_targets requires f >= 0");
    if (!(beta > 0.0)) throw InvalidArgument("tangent_targets requires beta > 0");
    return {f, -beta * f};
}

double recompute_target(const TrainingSample& s) {
    switch (s.kind) {
        case SampleKind::Original: return s.base_target;
        case SampleKind::Scale: return scaled_target(s.base_target, s.eps1);
        case SampleKind::AxisShift:
        case SampleKind::CornerShift:
            return shifted_target(s.base_target, s.beta, std::hypot(s.shift_x, s.shift_y));
    }
    return s.base_target;
}

std::size_t GenRecipe::sample_count(std::size_t seeds) const {
    if (seeds == 0) return 0;
    return seeds * (1 + static_cast<std::size_t>(scale_variants)) + static_cast<std::size_t>(axis_shifts) +
           static_cast<std::size_t>(corner_shifts);
}

namespace {

struct Plan {
    std::uint32_t seed = 0;
    SampleKind kind = SampleKind::Original;
    double eps1 = 0.0;
    double dx = 0.0;
    double dy = 0.0;
};

}  // namespace

std::vector<TrainingSample> generate_dataset(const std::vector<Seed>& seeds, const GenRecipe& recipe,
                                             std::uint64_t rng_seed) {
    if (recipe.scale_variants < 0 || recipe.axis_shifts < 0 || recipe.corner_shifts < 0)
        throw InvalidArgument("recipe counts must be non-negative");
    if (recipe.scale_variants > 0 && recipe.scale_eps.empty())
        throw InvalidArgument("recipe requests scale variants but lists no eps1 values");
    if (recipe.axis_shifts > 0 && recipe.axis_magnitudes.empty())
        throw InvalidArgument("recipe requests axis shifts but lists no magnitudes");
    for (double e : recipe.scale_eps)
        if (!(e > -1.0)) throw InvalidArgument("scale eps1 must be > -1");

    struct SeedInfo {
        double base_target;
        double beta;
    };
    std::vector<SeedInfo> info;
    info.reserve(seeds.size());
    const Window frame{0, 0, static_cast<int>(kPatchSize)};
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& s = seeds[i];
        if (s.patch.dims() != std::vector<std::size_t>{1, kPatchSize, kPatchSize})
            throw ShapeError("patch", "seed " + std::to_string(i) + " must be [1,32,32], got " +
                                          s.patch.shape_string());
        if (s.objects.components.size() > 1)
            throw InvalidArgument("seed " + std::to_string(i) + " must hold at most one object");
        const double beta = s.objects.empty()
                                ? density::kCanonicalBeta
                                : density::canonical_beta(s.objects.components[0].beta, frame.size);
        info.push_back({density::normalized_target(s.objects, frame), beta});
    }
    if (seeds.empty()) return {};

    const auto n = static_cast<std::uint32_t>(seeds.size());
    std::vector<Plan> plan;
    plan.reserve(recipe.sample_count(n));
    for (std::uint32_t i = 0; i < n; ++i) plan.push_back({i, SampleKind::Original});
    for (std::uint32_t i = 0; i < n; ++i)
        for (int k = 0; k < recipe.scale_variants; ++k)
            plan.push_back({i, SampleKind::Scale, recipe.scale_eps[k % recipe.scale_eps.size()]});

    std::mt19937_64 rng(rng_seed);
    for (int j = 0; j < recipe.axis_shifts; ++j) {
        const std::uint64_t r = rng();
        const double mag = recipe.axis_magnitudes[(r >> 2) % recipe.axis_magnitudes.size()];
        const double signed_mag = (r & 1) ? -mag : mag;
        const bool along_y = (r >> 1) & 1;
        plan.push_back({static_cast<std::uint32_t>(j % n), SampleKind::AxisShift, 0.0,
                        along_y ? 0.0 : signed_mag, along_y ? signed_mag : 0.0});
    }
    for (int j = 0; j < recipe.corner_shifts; ++j) {
        const std::uint64_t r = rng();
        const double sx = (r & 1) ? -recipe.corner_offset : recipe.corner_offset;
        const double sy = (r & 2) ? -recipe.corner_offset : recipe.corner_offset;
        plan.push_back({static_cast<std::uint32_t>(j % n), SampleKind::CornerShift, 0.0, sx, sy});
    }

    std::vector<TrainingSample> out(plan.size());
    parallel_for(plan.size(), [&](std::size_t idx) {
        const Plan& p = plan[idx];
        const Seed& seed = seeds[p.seed];
        TrainingSample s;
        s.seed_index = p.seed;
        s.kind = p.kind;
        s.base_target = info[p.seed].base_target;
        s.eps1 = p.eps1;
        s.shift_x = p.dx;
        s.shift_y = p.dy;
        s.beta = info[p.seed].beta;
        switch (p.kind) {
            case SampleKind::Original: s.patch = seed.patch; break;
            case SampleKind::Scale:
                s.patch = apply_scale(seed.patch, p.eps1);
                s.beta = info[p.seed].beta * (1.0 + p.eps1);
                break;
            case SampleKind::AxisShift:
            case SampleKind::CornerShift: s.patch = translate(seed.patch, p.dx, p.dy); break;
        }
        s.target = recompute_target(s);
        if (recipe.tangents) {
            const auto [ts, tq] = tangent_targets(s.target, s.beta);
            s.tangent_scale = ts;
            s.tangent_shift2 = tq;
        }
        out[idx] = std::move(s);
    });
    return out;
}

std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>>
split_dataset(std::vector<TrainingSample> samples, std::size_t train_count, std::uint64_t rng_seed) {
    if (train_count > samples.size())
        throw InvalidArgument("split requests " + std::to_string(train_count) + " training samples from " +
                              std::to_string(samples.size()));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(rng_seed);
    // Fisher-Yates with explicit draws so the permutation does not depend on the library's shuffle.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    std::vector<TrainingSample> train, test;
    train.reserve(train_count);
    test.reserve(samples.size() - train_count);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < train_count ? train : test).push_back(std::move(samples[order[i]]));
    return {std::move(train), std::move(test)};
}

Seed synth_seed(bool positive, std::uint64_t rng_seed, double noise) {
    std::mt19937_64 rng(rng_seed);
    const auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    const int side = static_cast<int>(kPatchSize);
    dataio::ImageGray img(side, side);
    const double base = 0.25 + 0.25 * unit();
    const double gx = 0.2 * (unit() - 0.5) / side;
    const double gy = 0.2 * (unit() - 0.5) / side;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) img.at(x, y) = base + gx * (x - side / 2) + gy * (y - side / 2);

    Seed seed;
    if (positive) {
        const density::GaussianComponent c{{0.5 * side, 0.5 * side}, density::kCanonicalBeta};
        dataio::render_blob(img, c, {0.75 + 0.2 * unit(), 0.05 + 0.1 * unit()});
        seed.objects.components.push_back(c);
    }
    if (noise > 0.0) {
        std::normal_distribution<double> nd(0.0, noise);
        for (double& v : img.pixels) v += nd(rng);
    }
    for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
    seed.patch = dataio::to_tensor(img);
    return seed;
}

std::vector<Seed> synth_seeds(std::size_t count, std::uint64_t rng_seed, std::size_t negative_every, double noise) {
    std::vector<Seed> seeds(count);
    parallel_for(count, [&](std::size_t i) {
        const bool negative = negative_every > 0 && i % negative_every == negative_every - 1;
        seeds[i] = synth_seed(!negative, rng_seed * 1000003ULL + i, noise);
    });
    return seeds;
}

}  // namespace densityscan::deform
