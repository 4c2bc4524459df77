#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "densityscan/dataio.hpp"
#include "densityscan/detect.hpp"
#include "densityscan/errors.hpp"

using namespace densityscan;
using namespace densityscan::detect;

namespace {

// Deterministic pseudo-random score per window.
class HashScorer final : public WindowScorer {
public:
    explicit HashScorer(std::uint64_t salt) : salt_(salt) {}
    double score(const dataio::ImageGray&, const Window& w) const override {
        std::mt19937_64 rng(salt_ ^ (static_cast<std::uint64_t>(w.x) << 40) ^ (static_cast<std::uint64_t>(w.y) << 20) ^
                            static_cast<std::uint64_t>(w.size));
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t salt_;
};

std::vector<Window> default_windows(int w, int h) { return search::geometric_windows(w, h, {8, 0.25}, 0.25); }

bool on_grid(const DensityField& f, const Detection& d) {
    for (const auto& g : f.scales) {
        if (g.size != d.window_size) continue;
        const double c = (d.center.x - g.origin.x) / g.stride, r = (d.center.y - g.origin.y) / g.stride;
        return c == std::floor(c) && r == std::floor(r) && c >= 0 && r >= 0 && c < g.cols && r < g.rows;
    }
    return false;
}

}  // namespace

TEST_CASE("beta_for_window") {
    CHECK(beta_for_window(32) == density::kCanonicalBeta);
    CHECK(beta_for_window(64) == doctest::Approx(density::kCanonicalBeta / 4.0));
    CHECK_THROWS_AS(beta_for_window(0), InvalidArgument);
}

TEST_CASE("analytic scorer peaks at 1 for a matched centred object") {
    const density::GaussianComponent c{{50.0, 50.0}, density::kCanonicalBeta / 4.0};
    const AnalyticScorer s({{c}});
    CHECK(s.response({50.0, 50.0}, 64.0) == doctest::Approx(1.0));
    CHECK(s.response({50.0, 50.0}, 80.0) < 1.0);
    CHECK(s.response({50.0, 50.0}, 51.2) < 1.0);
    CHECK(s.response({55.0, 50.0}, 64.0) < 1.0);
    CHECK_THROWS_AS(AnalyticScorer({}, 0.0), InvalidArgument);
}

TEST_CASE("per-scale maxima sit at the grid cell nearest mu") {
    const density::GaussianComponent c{{71.3, 58.6}, 0.03};
    const AnalyticScorer s({{c}});
    const dataio::ImageGray img(160, 128);
    const auto field = assemble_field(s, img, default_windows(img.width, img.height));
    for (const auto& g : field.scales) {
        CAPTURE(g.size);
        int best_r = 0, best_c = 0;
        for (int r = 0; r < g.rows; ++r)
            for (int col = 0; col < g.cols; ++col)
                if (g.at(r, col) > g.at(best_r, best_c)) best_r = r, best_c = col;
        double nearest = 1e300;
        for (int r = 0; r < g.rows; ++r)
            for (int col = 0; col < g.cols; ++col) nearest = std::min(nearest, distance(g.center(r, col), c.mu));
        CHECK(distance(g.center(best_r, best_c), c.mu) == doctest::Approx(nearest));
    }
}

TEST_CASE("assemble_field basics") {
    const dataio::ImageGray img(64, 48, 0.3);
    const auto windows = default_windows(64, 48);
    const auto zero = assemble_field(model::zero_model(model::Architecture::make(model::Variant::C1)), img, windows);
    for (const auto& g : zero.scales)
        for (double v : g.values) CHECK(v == 0.0);

    const HashScorer hs(3);
    auto doubled = windows;
    doubled.insert(doubled.end(), windows.begin(), windows.end());
    const auto a = assemble_field(hs, img, windows);
    const auto b = assemble_field(hs, img, doubled);
    REQUIRE(a.scales.size() == b.scales.size());
    for (std::size_t k = 0; k < a.scales.size(); ++k) CHECK(a.scales[k].values == b.scales[k].values);

    for (const auto& g : a.scales) {
        CHECK(g.stride == search::stride_for(g.size, 0.25));
        CHECK(g.origin == Vec2{0.5 * g.size, 0.5 * g.size});
    }
    CHECK_THROWS_AS(assemble_field(hs, img, {Window{40, 0, 32}}), InvalidArgument);
}

TEST_CASE("one planted Gaussian gives one mode") {
    const dataio::ImageGray img(200, 160);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(70.0, 90.0);
    for (int trial = 0; trial < 10; ++trial) {
        const density::GaussianComponent c{{u(rng) + 20.0, u(rng)}, 0.02 + 0.002 * trial};
        const AnalyticScorer s({{c}});
        const auto field = assemble_field(s, img, default_windows(img.width, img.height));
        const auto modes = extract_modes(field, 0.3, 8.0);
        REQUIRE(modes.size() == 1);
        CHECK(on_grid(field, modes[0]));
        CHECK(distance(modes[0].center, c.mu) <= modes[0].stride * std::sqrt(0.5) + 1e-9);
        CHECK(modes[0].beta_px == beta_for_window(modes[0].window_size));
    }
}

TEST_CASE("two Gaussians three separations apart give two modes") {
    const double min_sep = 16.0;
    const dataio::ImageGray img(180, 110);
    const density::ObjectDistribution d{{{{60.0, 55.0}, 0.05}, {{60.0 + 3 * min_sep, 55.0}, 0.05}}};
    const auto field = assemble_field(AnalyticScorer(d), img, default_windows(img.width, img.height));
    CHECK(extract_modes(field, 0.3, min_sep).size() == 2);
}

TEST_CASE("zero field has no modes") {
    const dataio::ImageGray img(64, 64);
    const auto field = assemble_field(AnalyticScorer({}), img, default_windows(64, 64));
    CHECK(extract_modes(field, 0.1, 8.0).empty());
}

TEST_CASE("mode extraction invariants on random fields") {
    const dataio::ImageGray img(96, 80);
    for (std::uint64_t salt = 0; salt < 20; ++salt) {
        const auto field = assemble_field(HashScorer(salt), img, default_windows(img.width, img.height));
        const double threshold = 0.5, sep = 10.0;
        const auto modes = extract_modes(field, threshold, sep);

        std::size_t strict_spatial = 0;
        for (const auto& g : field.scales)
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) {
                    if (g.at(r, c) < threshold) continue;
                    bool strict = true;
                    for (int dr = -1; dr <= 1; ++dr)
                        for (int dc = -1; dc <= 1; ++dc) {
                            const int rr = r + dr, cc = c + dc;
                            if ((dr || dc) && rr >= 0 && cc >= 0 && rr < g.rows && cc < g.cols && g.at(rr, cc) >= g.at(r, c))
                                strict = false;
                        }
                    strict_spatial += strict;
                }
        CHECK(modes.size() <= strict_spatial);
        for (std::size_t i = 0; i < modes.size(); ++i) {
            CHECK(on_grid(field, modes[i]));
            CHECK(modes[i].score >= threshold);
            CHECK(modes[i].beta_px > 0.0);
            for (std::size_t j = 0; j < i; ++j) CHECK(distance(modes[i].center, modes[j].center) >= sep);
        }
    }
}

TEST_CASE("box conversions") {
    const Detection d{{10.0, 20.0}, 0.25, 1.0, 0, 0};
    const Box b = detection_box(d);
    CHECK(b.x0 == 6.0);
    CHECK(b.x1 == 14.0);
    CHECK(b.y0 == 16.0);
    CHECK(b.area() == 64.0);
    const Box e = ellipse_box({4.0, 2.0, 0.0, 10.0, 10.0});
    CHECK(e.x1 - e.x0 == doctest::Approx(8.0));
    CHECK(e.y1 - e.y0 == doctest::Approx(4.0));
    const Box r = ellipse_box({4.0, 2.0, std::acos(0.0), 10.0, 10.0});
    CHECK(r.x1 - r.x0 == doctest::Approx(4.0));
    CHECK(iou(b, b) == 1.0);
    CHECK(iou(b, Box{100, 100, 101, 101}) == 0.0);
    CHECK(iou(Box{0, 0, 2, 1}, Box{1, 0, 3, 1}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("score_detections examples") {
    std::vector<Detection> dets{{{10, 10}, 0.04, 0.9, 0, 0}, {{60, 10}, 0.04, 0.8, 0, 0}, {{10, 70}, 0.01, 0.7, 0, 0}};
    std::vector<Box> gt;
    for (const auto& d : dets) gt.push_back(detection_box(d));
    const Score exact = score_detections(dets, gt);
    CHECK(exact.tp == 3);
    CHECK(exact.fp == 0);
    CHECK(exact.fn == 0);
    CHECK(exact.discrete_score == 3);

    const Score none = score_detections({}, gt);
    CHECK(none.tp == 0);
    CHECK(none.fn == 3);

    // One large detection covering two overlapping ground-truth boxes.
    const std::vector<Box> pair{{0, 0, 10, 10}, {1, 0, 11, 10}};
    const std::vector<Detection> one{{{5.5, 5.0}, 4.0 / 121.0, 1.0, 0, 0}};
    const Score s = score_detections(one, pair, 0.3);
    CHECK(s.tp <= 1);
    CHECK(s.tp + s.fn == 2);

    const std::vector<dataio::Ellipse> ell{{5.0, 5.0, 0.0, 10.0, 10.0}};
    CHECK(score_detections({{{10, 10}, 4.0 / 25.0, 1.0, 0, 0}}, ell).tp == 1);
}

TEST_CASE("detections jsonl round trip and errors") {
    const std::vector<Detection> dets{{{10.25, 3.0 / 7.0}, 0.0123456789, 0.875, 40, 10}, {{0.1, 1e-9}, 2.0, 1.5, 8, 2}};
    std::vector<std::string> ids;
    const auto back = parse_detections_jsonl(detections_jsonl("img/1", dets), "d", &ids);
    REQUIRE(back.size() == 2);
    CHECK(ids == std::vector<std::string>{"img/1", "img/1"});
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].center == dets[i].center);
        CHECK(back[i].beta_px == dets[i].beta_px);
        CHECK(back[i].score == dets[i].score);
    }
    CHECK(parse_detections_jsonl("").empty());

    const auto line_of = [](const std::string& text) {
        try {
            parse_detections_jsonl(text);
        } catch (const ParseError& e) {
            return e.offset();
        }
        FAIL("expected ParseError");
        return std::size_t{0};
    };
    CHECK(line_of("{\"cx\":1,\"cy\":2,\"beta_px\":0.1,\"score\":1}\n{oops\n") == 2);
    CHECK(line_of("{\"cx\":1,\"cy\":2,\"score\":1}\n") == 1);
    CHECK(line_of("\n\n{\"cx\":1,\"cy\":2,\"beta_px\":0,\"score\":1}\n") == 3);
}

TEST_CASE("heatmaps") {
    ScaleGrid g;
    g.size = 16;
    g.rows = 2;
    g.cols = 2;
    g.values = {1.0, 3.0, 2.0, 5.0};
    const auto img = heatmap_image(g);
    CHECK(img.pixels == std::vector<double>{0.0, 0.5, 0.25, 1.0});
    g.values = {2.0, 2.0, 2.0, 2.0};
    CHECK(heatmap_image(g).pixels == std::vector<double>(4, 0.0));

    const auto dir = std::filesystem::temp_directory_path() / "densityscan_heatmaps";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const dataio::ImageGray scene(64, 64);
    const auto field = assemble_field(HashScorer(1), scene, default_windows(64, 64));
    write_heatmaps(dir.string(), field);
    CHECK(std::filesystem::exists(dir / "heatmaps.txt"));
    for (const auto& s : field.scales) {
        char name[32];
        std::snprintf(name, sizeof name, "heatmap_s%04d.pgm", s.size);
        const auto loaded = dataio::load_image((dir / name).string());
        CHECK(loaded.width == s.cols);
        CHECK(loaded.height == s.rows);
    }
}

TEST_CASE("justification only removes candidates") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        dataio::SceneSpec spec;
        spec.rng_seed = seed;
        spec.min_objects = 1;
        spec.max_objects = 3;
        const auto [img, truth] = dataio::synth_scene(spec);
        DetectOptions opt;
        opt.schedule.s0 = 16;
        const HashScorer noisy(seed);
        const AnalyticScorer clean(truth);
        for (const WindowScorer* s : {static_cast<const WindowScorer*>(&noisy), static_cast<const WindowScorer*>(&clean)}) {
            const auto off = detect_objects(*s, img, opt);
            opt.justify = true;
            const auto on = detect_objects(*s, img, opt);
            opt.justify = false;
            CHECK(on.detections.size() <= off.detections.size());
            CHECK(on.candidates == off.detections);
            for (const auto& d : on.detections)
                CHECK(std::find(off.detections.begin(), off.detections.end(), d) != off.detections.end());
        }
        const auto clean_run = detect_objects(clean, img, opt);
        CHECK(clean_run.detections.size() == truth.components.size());
    }
}
