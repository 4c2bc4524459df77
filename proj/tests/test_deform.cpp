#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "densityscan/dataio.hpp"
#include "densityscan/deform.hpp"
#include "densityscan/errors.hpp"

using namespace densityscan;
using namespace densityscan::deform;
using numerics::Tensor;

namespace {

// Smooth Gaussian blob of inverse variance beta in a 32x32 patch.
Tensor gaussian_patch(double beta, double cx = 16.0, double cy = 16.0, double amplitude = 1.0, double background = 0.0) {
    Tensor t({1, kPatchSize, kPatchSize});
    for (std::size_t y = 0; y < kPatchSize; ++y)
        for (std::size_t x = 0; x < kPatchSize; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            t.at(0, y, x) = background + amplitude * std::exp(-0.5 * beta * (dx * dx + dy * dy));
        }
    return t;
}

double second_moment(const Tensor& t) {
    double w = 0.0, m = 0.0;
    for (std::size_t y = 0; y < kPatchSize; ++y)
        for (std::size_t x = 0; x < kPatchSize; ++x) {
            const double dx = x + 0.5 - 16.0, dy = y + 0.5 - 16.0;
            w += t.at(0, y, x);
            m += t.at(0, y, x) * (dx * dx + dy * dy);
        }
    return m / w;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("densityscan_deform_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("identity deformations") {
    const auto seed = synth_seed(true, 3);
    CHECK(apply_scale(seed.patch, 0.0) == seed.patch);
    CHECK(apply_shift(seed.patch, 0.0) == seed.patch);
    CHECK(apply_shift(seed.patch, 0.0, Axis::Y) == seed.patch);
    CHECK_THROWS_AS(apply_scale(seed.patch, -1.0), InvalidArgument);
}

TEST_CASE("target bookkeeping") {
    CHECK(scaled_target(0.5, 0.1) == doctest::Approx(0.55));
    const double peak = 4.0 / (2.0 * std::numbers::pi);
    CHECK(peak == doctest::Approx(0.63662).epsilon(1e-5));
    CHECK(shifted_target(peak, 4.0, 0.5) == doctest::Approx(0.38615).epsilon(1e-4));
}

TEST_CASE("scale deformation changes the blob second moment by 1 + eps1") {
    const Tensor blob = gaussian_patch(0.08);
    const Tensor scaled = apply_scale(blob, 0.21);
    const double ratio = second_moment(blob) / second_moment(scaled);
    CHECK(ratio == doctest::Approx(1.21).epsilon(0.05));
}

TEST_CASE("shift then unshift recovers the patch") {
    // Smooth content at seed contrast (background 0.35, peak 0.85).
    const Tensor blob = gaussian_patch(density::kCanonicalBeta, 16.0, 16.0, 0.5, 0.35);
    for (double e : {0.5, 1.0, 2.0, 3.7}) {
        for (Axis axis : {Axis::X, Axis::Y}) {
            CAPTURE(e);
            const Tensor back = apply_shift(apply_shift(blob, e, axis), -e, axis);
            CHECK(max_abs_diff(back, blob) < 0.02);
        }
    }
    // Hard-edged seed blobs survive whole-pixel round trips away from the border.
    const Tensor seed = synth_seed(true, 17, 0.0).patch;
    for (double e : {1.0, 2.0, 4.0}) {
        const Tensor back = apply_shift(apply_shift(seed, e), -e);
        double worst = 0.0;
        for (std::size_t y = 0; y < kPatchSize; ++y)
            for (std::size_t x = 4; x + 4 < kPatchSize; ++x) worst = std::max(worst, std::abs(back.at(0, y, x) - seed.at(0, y, x)));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("shift moves content in the positive direction") {
    const Tensor blob = gaussian_patch(0.2, 12.0, 16.0);
    const Tensor moved = apply_shift(blob, 4.0, Axis::X);
    CHECK(max_abs_diff(moved, gaussian_patch(0.2, 16.0, 16.0)) < 1e-5);
}

TEST_CASE("tangent_targets examples") {
    CHECK(tangent_targets(0.5, 4.0) == std::pair{0.5, -2.0});
    CHECK(tangent_targets(0.0, 3.0) == std::pair{0.0, -0.0});
    const auto [a, b] = tangent_targets(1.0, 2.0 * std::numbers::pi);
    CHECK(a == 1.0);
    CHECK(b == doctest::Approx(-2.0 * std::numbers::pi));
}

TEST_CASE("tangent targets match finite differences of the bookkeeping") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double h = 1e-4;
    for (int i = 0; i < 1000; ++i) {
        const double f = 0.01 + 2.0 * u(rng), beta = 0.01 + 2.0 * u(rng);
        const auto [ts, tq] = tangent_targets(f, beta);
        const double d1 = (scaled_target(f, h) - f) / h;
        const double d2 = (shifted_target(f, beta, h) - 2.0 * f + shifted_target(f, beta, -h)) / (h * h);
        CHECK(std::abs(d1 - ts) / std::abs(ts) < 1e-3);
        CHECK(std::abs(d2 - tq) / std::abs(tq) < 1e-3);
    }
}

TEST_CASE("generate_dataset counts") {
    GenRecipe r;
    r.axis_shifts = 2;
    r.corner_shifts = 2;
    CHECK(generate_dataset({synth_seed(true, 1)}, r, 0).size() == 7);
    CHECK(generate_dataset({}, r, 0).empty());

    GenRecipe paper;
    paper.axis_shifts = 4000;
    paper.corner_shifts = 4000;
    CHECK(paper.sample_count(2041) == 14123);
}

TEST_CASE("generate_dataset rejects malformed seeds") {
    Seed bad{Tensor({1, 16, 16}), {}};
    CHECK_THROWS_AS(generate_dataset({bad}, GenRecipe{}, 0), ShapeError);
}

TEST_CASE("generated samples satisfy their invariants") {
    GenRecipe r;
    r.axis_shifts = 37;
    r.corner_shifts = 23;
    const auto seeds = synth_seeds(12, 5);
    const auto samples = generate_dataset(seeds, r, 9);
    REQUIRE(samples.size() == r.sample_count(12));

    std::size_t index = 0;
    for (const auto& s : samples) {
        CHECK(s.target >= 0.0);
        CHECK(recompute_target(s) == s.target);
        REQUIRE(s.has_tangents());
        CHECK(std::abs(*s.tangent_scale - s.target) <= 1e-12);
        CHECK(std::abs(*s.tangent_shift2 + s.beta * s.target) <= 1e-12);
        CHECK(s.patch.dims() == std::vector<std::size_t>{1, kPatchSize, kPatchSize});

        // Layout: originals, scale variants seed-major, then round-robin shifts.
        if (index < 12) {
            CHECK(s.kind == SampleKind::Original);
            CHECK(s.seed_index == index);
        } else if (index < 36) {
            CHECK(s.kind == SampleKind::Scale);
            CHECK(s.seed_index == (index - 12) / 2);
        } else if (index < 73) {
            CHECK(s.kind == SampleKind::AxisShift);
            CHECK(s.seed_index == (index - 36) % 12);
            CHECK(((s.shift_x == 0.0) != (s.shift_y == 0.0)));
            CHECK((std::abs(s.shift_x + s.shift_y) == 2.0 || std::abs(s.shift_x + s.shift_y) == 4.0));
        } else {
            CHECK(s.kind == SampleKind::CornerShift);
            CHECK(std::abs(s.shift_x) == 3.0);
            CHECK(std::abs(s.shift_y) == 3.0);
        }
        ++index;
    }
    // Positive originals are centred canonical objects, target 1; negatives 0.
    for (std::size_t i = 0; i < 12; ++i)
        CHECK(samples[i].target == doctest::Approx(seeds[i].objects.empty() ? 0.0 : 1.0));
}

TEST_CASE("generate_dataset is a pure function of its inputs") {
    GenRecipe r;
    r.axis_shifts = 10;
    r.corner_shifts = 10;
    const auto seeds = synth_seeds(8, 2);
    const auto a = generate_dataset(seeds, r, 4);
    const auto b = generate_dataset(seeds, r, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].patch == b[i].patch);
        CHECK(a[i].target == b[i].target);
    }
}

TEST_CASE("synth_seeds keep one negative in four") {
    const auto seeds = synth_seeds(40, 1);
    std::size_t negatives = 0;
    for (const auto& s : seeds) negatives += s.objects.empty();
    CHECK(negatives == 10);
    CHECK(seeds[3].objects.empty());
    CHECK_FALSE(seeds[0].objects.empty());
}

TEST_CASE("split_dataset") {
    GenRecipe r;
    r.axis_shifts = 5;
    r.corner_shifts = 5;
    const auto samples = generate_dataset(synth_seeds(10, 1), r, 0);
    const auto [train, test] = split_dataset(samples, 33, 7);
    CHECK(train.size() == 33);
    CHECK(test.size() == samples.size() - 33);
    CHECK_THROWS_AS(split_dataset(samples, samples.size() + 1, 7), InvalidArgument);
    const auto [train2, test2] = split_dataset(samples, 33, 7);
    for (std::size_t i = 0; i < train.size(); ++i) CHECK(train[i].target == train2[i].target);
}

TEST_CASE("samples.bin round trips") {
    const auto dir = scratch("roundtrip");
    GenRecipe r;
    r.axis_shifts = 4;
    r.corner_shifts = 4;
    auto samples = generate_dataset(synth_seeds(4, 3), r, 1);
    samples[2].tangent_shift2.reset();
    const auto path = (dir / "samples.bin").string();
    write_samples(path, samples);
    const auto back = read_samples(path);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].target == samples[i].target);
        CHECK(back[i].tangent_scale == samples[i].tangent_scale);
        CHECK(back[i].tangent_shift2 == samples[i].tangent_shift2);
        CHECK(back[i].kind == samples[i].kind);
        CHECK(back[i].seed_index == samples[i].seed_index);
        CHECK(back[i].beta == samples[i].beta);
        // Patches are stored as 32-bit floats.
        for (std::size_t k = 0; k < back[i].patch.size(); ++k)
            CHECK(back[i].patch[k] == static_cast<double>(static_cast<float>(samples[i].patch[k])));
    }

    DatasetManifest m;
    m.set("samples", "36");
    m.set("rng_seed", "1");
    write_manifest((dir / "manifest.txt").string(), m);
    const auto mb = read_manifest((dir / "manifest.txt").string());
    CHECK(mb.get("samples") == std::optional<std::string>("36"));
    CHECK_FALSE(mb.get("missing").has_value());
}

TEST_CASE("corrupt samples.bin is a parse error") {
    const auto dir = scratch("corrupt");
    const auto path = (dir / "samples.bin").string();
    write_samples(path, generate_dataset(synth_seeds(2, 3), GenRecipe{}, 1));
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 7);
    CHECK_THROWS_AS(read_samples(path), ParseError);
}
