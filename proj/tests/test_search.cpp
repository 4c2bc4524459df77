#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "densityscan/density.hpp"
#include "densityscan/errors.hpp"
#include "densityscan/search.hpp"

using namespace densityscan;
using namespace densityscan::search;

TEST_CASE("scale_series examples") {
    CHECK(scale_series(256, {32, 0.25}) == std::vector<int>{32, 40, 50, 62, 77, 96, 120, 150, 187, 233});
    CHECK(scale_series(64, {64, 0.25}) == std::vector<int>{64});
    CHECK(scale_series(100, {10, 0.1})[1] == 11);
    CHECK(scale_series(100, {20, 1.0 / 20.0})[1] == 21);
    CHECK(scale_series(256, {32, 0.25, 100}).back() == 96);
    CHECK_THROWS_AS(scale_series(32, {40, 0.25}), InvalidArgument);
    CHECK_THROWS_AS(scale_series(32, {4, 0.25}), InvalidArgument);
    CHECK_THROWS_AS(scale_series(32, {8, 0.0}), InvalidArgument);
}

TEST_CASE("scale_series obeys the growth bound") {
    for (int s0 : {8, 16, 32})
        for (double alpha : {0.1, 0.25, 0.5})
            for (int n : {64, 256, 1024}) {
                CAPTURE(s0);
                CAPTURE(alpha);
                CAPTURE(n);
                const auto sizes = scale_series(n, {s0, alpha});
                REQUIRE_FALSE(sizes.empty());
                CHECK(sizes.front() == s0);
                CHECK(sizes.back() <= n);
                for (std::size_t i = 1; i < sizes.size(); ++i) {
                    CHECK(sizes[i] > sizes[i - 1]);
                    // floor(8 * 1.1) = 8 forces the +1 fallback, which exceeds the bound.
                    if (!(s0 == 8 && alpha == 0.1) || sizes[i - 1] >= 10)
                        CHECK(sizes[i] <= sizes[i - 1] * (1.0 + alpha) + 1e-9);
                }
            }
}

TEST_CASE("window grid examples") {
    CHECK(geometric_windows(64, {64, 0.25}, 0.25).size() == 1);
    const auto w = geometric_windows(64, {32, 0.25, 32}, 0.5);
    CHECK(w.size() == 9);
    CHECK(stride_for(32, 0.5) == 16);
    CHECK(stride_for(8, 0.01) == 1);
    CHECK_THROWS_AS(stride_for(8, 0.0), InvalidArgument);
    CHECK_THROWS_AS(stride_for(8, 1.5), InvalidArgument);
}

TEST_CASE("windows are unique and inside the image") {
    for (int n : {64, 100, 256}) {
        const auto w = geometric_windows(n, {8, 0.25}, 0.25);
        CHECK(w.size() == geometric_window_count(n, {8, 0.25}, 0.25));
        CHECK(std::set<Window>(w.begin(), w.end()).size() == w.size());
        for (const auto& x : w) CHECK(x.inside(n, n));
    }
    const auto rect = geometric_windows(120, 80, {16, 0.25}, 0.25);
    for (const auto& x : rect) CHECK(x.inside(120, 80));
}

TEST_CASE("window count grows as N^2 log N") {
    const ScaleSchedule sched{8, 0.25};
    const double r = static_cast<double>(geometric_window_count(256, sched, 0.25)) /
                     static_cast<double>(geometric_window_count(128, sched, 0.25));
    CHECK(r <= 4.6);
    const double arith = static_cast<double>(arithmetic_window_count(256, 8)) /
                         static_cast<double>(arithmetic_window_count(128, 8));
    CHECK(arith >= 8.0);

    std::vector<double> normalized;
    for (int n : {64, 128, 256, 512}) {
        const double c = static_cast<double>(geometric_window_count(n, sched, 0.25));
        normalized.push_back(c / (n * n * std::log(static_cast<double>(n))));
    }
    const auto [lo, hi] = std::minmax_element(normalized.begin(), normalized.end());
    CHECK(*lo > 0.0);
    CHECK(*hi / *lo < 3.0);
}

namespace {

FieldOracle gaussian_field(Vec2 mu, double beta) {
    const density::ObjectDistribution d{{{mu, beta}}};
    return [d](Vec2 p) { return density::density_at(d, p); };
}

}  // namespace

TEST_CASE("automaton finds the mode of an analytic Gaussian") {
    const Vec2 mu{100.0, 80.0};
    const auto field = gaussian_field(mu, 0.01);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(seed) / 100.0;
        AutomatonParams p;
        p.rng_seed = seed;
        const auto r = heuristic_search(field, mu + Vec2{20.0 * std::cos(a), 20.0 * std::sin(a)}, p);
        if (distance(r.mode, mu) <= 1.0 && r.steps <= 50) ++hits;
        for (std::size_t i = 1; i < r.values.size(); ++i) CHECK(r.values[i] >= r.values[i - 1]);
        CHECK(r.trajectory.size() == r.values.size());
    }
    CHECK(hits >= 95);
}

TEST_CASE("automaton started at the mode stays put") {
    const Vec2 mu{50.0, 50.0};
    const auto r = heuristic_search(gaussian_field(mu, 0.05), mu, AutomatonParams{});
    CHECK(r.trajectory.size() == 1);
    CHECK(r.mode == mu);
    CHECK(r.converged);
}

TEST_CASE("automaton on a constant field") {
    const auto r = heuristic_search([](Vec2) { return 0.0; }, {3.0, 4.0}, AutomatonParams{});
    CHECK(r.trajectory.size() == 1);
    CHECK(r.mode == Vec2{3.0, 4.0});
    CHECK(r.value == 0.0);
    CHECK_FALSE(r.converged);
}

TEST_CASE("automaton parameter checks and csv") {
    AutomatonParams p;
    p.probe_count = 1;
    CHECK_THROWS_AS(heuristic_search([](Vec2) { return 0.0; }, {}, p), InvalidArgument);
    p = {};
    p.max_steps = 0;
    CHECK_THROWS_AS(heuristic_search([](Vec2) { return 0.0; }, {}, p), InvalidArgument);
    const auto r = heuristic_search(gaussian_field({10, 10}, 0.1), {12, 10}, AutomatonParams{});
    const auto csv = trajectory_csv(r);
    CHECK(csv.rfind("step,x,y,value\n0,12,10,", 0) == 0);
}

TEST_CASE("justifier accepts clean peaks") {
    const Vec2 mu{40.0, 40.0};
    const double beta = 0.02;
    const detect::Detection cand{mu, beta, 1.0, 0, 0};
    CHECK(evidence_justify(gaussian_field(mu, beta), cand, JustifyParams{}));
}

TEST_CASE("justifier rejects flat fields") {
    const detect::Detection cand{{40.0, 40.0}, 0.02, 1.0, 0, 0};
    CHECK_FALSE(evidence_justify([](Vec2) { return 0.7; }, cand, JustifyParams{}));
    CHECK_FALSE(evidence_justify([](Vec2) { return 0.0; }, cand, JustifyParams{}));
}

TEST_CASE("justifier rejects noise") {
    int rejected = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        // Zero-mean i.i.d. noise on an integer lattice, nearest-cell lookup.
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<double> lattice(81 * 81);
        for (double& v : lattice) v = nd(rng);
        const FieldOracle field = [&](Vec2 p) {
            const int x = std::clamp(static_cast<int>(std::floor(p.x)), 0, 80);
            const int y = std::clamp(static_cast<int>(std::floor(p.y)), 0, 80);
            return lattice[static_cast<std::size_t>(y) * 81 + x];
        };
        const detect::Detection cand{{40.5, 40.5}, density::kCanonicalBeta, 1.0, 0, 0};
        rejected += !evidence_justify(field, cand, JustifyParams{});
    }
    CHECK(rejected >= 95);
}
