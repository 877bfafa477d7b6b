#include "cdt/aci.hpp"
#include "cdt/nav.hpp"
#include "cdt/rng.hpp"
#include "nav_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace cdt::nav;
using cdt::CounterRng;
using cdt::stream_id;

namespace {

PedestrianSet history_of(const std::vector<Vec2>& pts, int id = 1, std::size_t window = 20) {
    PedestrianSet s(window);
    for (const auto& p : pts) {
        const PedestrianObs o{id, p};
        s.observe(std::span<const PedestrianObs>(&o, 1));
    }
    return s;
}

PredictionBundle walker(Vec2 start, Vec2 velocity, std::size_t horizon, int id = 1) {
    PredictedTrack t;
    t.id = id;
    for (std::size_t k = 0; k <= horizon; ++k) t.positions.push_back(start + static_cast<double>(k) * velocity);
    PredictionBundle b;
    b.horizon = horizon;
    b.tracks.push_back(t);
    return b;
}

// Least squares by normal equations and Gaussian elimination.
std::vector<double> ls_oracle(const std::vector<double>& series, std::size_t p) {
    std::vector<double> inc;
    for (std::size_t i = 1; i < series.size(); ++i) inc.push_back(series[i] - series[i - 1]);
    std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t k = p; k < inc.size(); ++k)
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) a[i][j] += inc[k - 1 - i] * inc[k - 1 - j];
            a[i][p] += inc[k - 1 - i] * inc[k];
        }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t j = c; j <= p; ++j) a[r][j] -= f * a[c][j];
        }
    }
    std::vector<double> out(p);
    for (std::size_t i = 0; i < p; ++i) out[i] = a[i][p] / a[i][i];
    return out;
}

}  // namespace

TEST_CASE("wrap_angle range") {
    CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
    CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
}

TEST_CASE("nav_loss examples") {
    const std::vector<PedestrianObs> one = {{1, Vec2(3, 4)}};
    CHECK(nav_loss(Vec2(0, 0), one, 100) == doctest::Approx(-5));
    const std::vector<PedestrianObs> two = {{1, Vec2(1, 0)}, {2, Vec2(0, 2)}};
    CHECK(nav_loss(Vec2(0, 0), two, 100) == doctest::Approx(-1));
    const std::vector<PedestrianObs> far = {{1, Vec2(500, 0)}};
    CHECK(nav_loss(Vec2(0, 0), far, 100) == -100);
    CHECK(nav_loss(Vec2(0, 0), std::vector<PedestrianObs>{}, 100) == -100);
    CHECK_THROWS(nav_loss(Vec2(0, 0), one, 0));
}

TEST_CASE("pedestrian set rejects duplicate ids and drops vanished tracks") {
    PedestrianSet s(3);
    const std::vector<PedestrianObs> dup = {{1, Vec2(0, 0)}, {1, Vec2(1, 1)}};
    CHECK_THROWS_AS(s.observe(dup), std::invalid_argument);
    const std::vector<PedestrianObs> a = {{1, Vec2(0, 0)}, {2, Vec2(1, 1)}};
    const std::vector<PedestrianObs> b = {{2, Vec2(1, 2)}};
    s.observe(a);
    s.observe(b);
    CHECK(s.history(2).size() == 2);
    CHECK_THROWS_AS(s.history(1), std::out_of_range);
    for (int i = 0; i < 5; ++i) s.observe(b);
    CHECK(s.history(2).size() == 3);
}

TEST_CASE("predict: linear history continues the line") {
    const auto s = history_of({Vec2(1, 0), Vec2(2, 0), Vec2(3, 0)});
    PredictorConfig fast;
    fast.max_speed = 10.0;
    const auto b = predict(s, 3, fast);
    REQUIRE(b.tracks.size() == 1);
    CHECK(b.tracks[0].fallback);
    CHECK(b.tracks[0].positions[1].isApprox(Vec2(4, 0)));
    CHECK(b.tracks[0].positions[2].isApprox(Vec2(5, 0)));
    CHECK(b.tracks[0].positions[3].isApprox(Vec2(6, 0)));

    std::vector<Vec2> long_line;
    for (int i = 0; i < 15; ++i) long_line.push_back(Vec2(0.2 * i, -0.1 * i));
    const auto fit = predict(history_of(long_line), 5, fast);
    CHECK_FALSE(fit.tracks[0].fallback);
    CHECK((fit.tracks[0].positions[5] - Vec2(0.2 * 19, -0.1 * 19)).norm() < 1e-9);
}

TEST_CASE("predict: stationary history stays put") {
    const auto b = predict(history_of(std::vector<Vec2>(12, Vec2(2, -1))), 6);
    for (const auto& p : b.tracks[0].positions) CHECK(p.isApprox(Vec2(2, -1)));
    const auto single = predict(history_of({Vec2(1, 1)}), 4);
    CHECK(single.tracks[0].fallback);
    CHECK(single.tracks[0].positions.back().isApprox(Vec2(1, 1)));
}

TEST_CASE("predict: sinusoidal walker matches a least-squares oracle") {
    std::vector<Vec2> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(Vec2(0.3 * i, std::sin(0.4 * i) + 0.5 * std::sin(1.1 * i) + 0.3 * std::cos(2.3 * i)));
    PredictorConfig cfg;
    cfg.order = 5;
    cfg.max_speed = 1e9;
    const auto b = predict(history_of(pts, 1, 20), 10, cfg);
    REQUIRE_FALSE(b.tracks[0].fallback);

    std::vector<double> xs, ys;
    for (const auto& p : pts) {
        xs.push_back(p.x());
        ys.push_back(p.y());
    }
    // x increments are constant, so the x system is rank deficient; only
    // the y axis is compared coefficient by coefficient.
    const auto ay = ls_oracle(ys, 5);
    const auto fy = fit_increment_ar(ys, 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(fy(static_cast<Eigen::Index>(i)) == doctest::Approx(ay[i]).epsilon(1e-6));

    std::vector<double> recent;
    for (std::size_t i = 0; i < 5; ++i) recent.push_back(ys[ys.size() - 1 - i] - ys[ys.size() - 2 - i]);
    double y = ys.back();
    for (std::size_t k = 1; k <= 10; ++k) {
        double step = 0.0;
        for (std::size_t i = 0; i < 5; ++i) step += ay[i] * recent[i];
        y += step;
        recent.insert(recent.begin(), step);
        recent.pop_back();
        CHECK(b.tracks[0].positions[k].y() == doctest::Approx(y).epsilon(1e-6));
        CHECK(b.tracks[0].positions[k].x() == doctest::Approx(0.3 * (19 + static_cast<double>(k))).epsilon(1e-9));
    }
}

TEST_CASE("candidate rollouts obey Dubins kinematics") {
    RobotState r;
    r.position = Vec2(1, 2);
    r.heading = 0.3;
    DubinsLimits lim;
    const auto cands = candidate_rollouts(r, lim, 10, 33);
    REQUIRE(cands.size() == 33);
    CHECK(cands.back().brake);
    for (const auto& c : cands) {
        REQUIRE(c.states.size() == 11);
        CHECK(c.speed <= lim.v_max);
        CHECK(c.speed >= 0.0);
        CHECK(std::abs(c.turn_rate) <= lim.omega_max + 1e-12);
        // Integrate the unicycle with fine Euler substeps and compare.
        Vec2 pos = r.position;
        double th = r.heading;
        const int sub = 2000;
        for (std::size_t k = 1; k < c.states.size(); ++k) {
            for (int i = 0; i < sub; ++i) {
                pos += c.speed * (lim.dt / sub) * Vec2(std::cos(th), std::sin(th));
                th += c.turn_rate * (lim.dt / sub);
            }
            CHECK((c.states[k].position - pos).norm() < 1e-3);
            CHECK(oracle::angle_diff(c.states[k].heading, th) < 1e-9);
            const double step = (c.states[k].position - c.states[k - 1].position).norm();
            CHECK(step <= lim.v_max * lim.dt + 1e-12);
            CHECK(oracle::angle_diff(c.states[k].heading, c.states[k - 1].heading) <= lim.omega_max * lim.dt + 1e-12);
        }
    }
}

TEST_CASE("plan with lambda 0 minimizes the goal term alone") {
    PlanRequest req;
    req.robot.heading = std::numbers::pi / 2;
    req.goal = Vec2(0, 10);
    req.candidates = 37;
    const auto p = plan(req, {});
    CHECK(p.candidate == oracle::argmin(req, {}));
    CHECK(p.turn_rate == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.speed == doctest::Approx(req.limits.v_max));
}

TEST_CASE("plan with a huge lambda maximizes minimum clearance") {
    PlanRequest req;
    req.robot.heading = std::numbers::pi / 2;
    req.goal = Vec2(0, 10);
    req.candidates = 65;
    req.lambda = 1e6;
    const auto preds = walker(Vec2(0, 3), Vec2(0, -0.1), 10);
    const auto p = plan(req, preds);
    double best = 0.0;
    for (auto c : candidate_rollouts(req.robot, req.limits, req.horizon, req.candidates)) {
        score(c, req.goal, preds, 0.0);
        best = std::max(best, c.clearance);
    }
    // Goal-cost differences are O(10), so they shift clearance by at most ~1e-5.
    CHECK(p.clearance >= best - 1e-4);
}

TEST_CASE("plan matches the brute-force oracle") {
    PlanRequest req;
    req.robot.position = Vec2(0, 0);
    req.robot.heading = 1.0;
    req.goal = Vec2(2, 8);
    req.candidates = 8;
    req.lambda = 3.0;
    PredictionBundle preds = walker(Vec2(1, 2), Vec2(-0.1, 0), 10, 1);
    preds.tracks.push_back(walker(Vec2(-1, 3), Vec2(0.15, -0.05), 10, 2).tracks[0]);
    const auto p = plan(req, preds);
    CHECK(p.candidate == oracle::argmin(req, preds));

    for (std::uint64_t i = 0; i < 300; ++i) {
        CounterRng rng(12, stream_id("test/plan-oracle"), i);
        PlanRequest r;
        r.robot.position = Vec2(-3 + 6 * rng.uniform(), -3 + 6 * rng.uniform());
        r.robot.heading = -3.1 + 6.2 * rng.uniform();
        r.goal = Vec2(-8 + 16 * rng.uniform(), -8 + 16 * rng.uniform());
        r.candidates = 1 + static_cast<std::size_t>(60 * rng.uniform());
        r.lambda = 20 * rng.uniform();
        if (i % 3 == 0) r.obstacles.push_back({Vec2(-2 + 4 * rng.uniform(), -2 + 4 * rng.uniform()), 0.7});
        PredictionBundle b;
        const int n = static_cast<int>(4 * rng.uniform());
        for (int k = 0; k < n; ++k)
            b.tracks.push_back(walker(Vec2(-4 + 8 * rng.uniform(), -4 + 8 * rng.uniform()),
                                      Vec2(-0.2 + 0.4 * rng.uniform(), -0.2 + 0.4 * rng.uniform()), 10, k)
                                   .tracks[0]);
        const auto got = plan(r, b);
        const auto want = oracle::argmin(r, b);
        if (got.candidate != want)
            CHECK(oracle::cost_of(r, b, got.candidate) == doctest::Approx(oracle::cost_of(r, b, want)).epsilon(1e-9));
    }
}

TEST_CASE("property: chosen clearance is nondecreasing in lambda") {
    for (std::uint64_t i = 0; i < 100; ++i) {
        CounterRng rng(13, stream_id("test/monotone"), i);
        PlanRequest r;
        r.robot.heading = -3.1 + 6.2 * rng.uniform();
        r.goal = Vec2(-8 + 16 * rng.uniform(), -8 + 16 * rng.uniform());
        r.candidates = 64;
        PredictionBundle b;
        for (int k = 0; k < 3; ++k)
            b.tracks.push_back(walker(Vec2(-3 + 6 * rng.uniform(), -3 + 6 * rng.uniform()),
                                      Vec2(-0.2 + 0.4 * rng.uniform(), -0.2 + 0.4 * rng.uniform()), 10, k)
                                   .tracks[0]);
        double prev = -1.0;
        for (double lambda : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 1000.0}) {
            r.lambda = lambda;
            const double c = plan(r, b).clearance;
            REQUIRE(c >= prev - 1e-12);
            prev = c;
        }
    }
}

TEST_CASE("plan flags ignored avoidance and rejects bad requests") {
    PlanRequest req;
    req.goal = Vec2(5, 0);
    req.lambda = 4.0;
    CHECK(plan(req, {}).avoidance_ignored);
    req.goal = Vec2(NAN, 0);
    CHECK_THROWS_AS(plan(req, {}), std::invalid_argument);
    req.goal = Vec2(1, 0);
    req.lambda = INFINITY;
    CHECK_THROWS_AS(plan(req, {}), std::invalid_argument);
    req.lambda = 0;
    req.candidates = 0;
    CHECK_THROWS_AS(plan(req, {}), std::invalid_argument);
}

TEST_CASE("obstacles are avoided and a boxed-in robot brakes") {
    PlanRequest req;
    req.goal = Vec2(10, 0);
    req.candidates = 33;
    req.obstacles.push_back({Vec2(1.0, 0.0), 0.5});
    const auto p = plan(req, {});
    CHECK_FALSE(hits_obstacle(p, req.obstacles));
    req.obstacles = {{Vec2(0, 0), 100.0}};
    CHECK(plan(req, {}).brake);
}

TEST_CASE("ACI planner stalls when the set is infinite") {
    PlanRequest req;
    req.robot.heading = std::numbers::pi / 2;
    req.goal = Vec2(0, 10);
    req.candidates = 37;
    const auto preds = walker(Vec2(8, 8), Vec2(0, 0), 10);
    const std::vector<double> scores = {0.1, 0.2, 0.3};
    const double r = cdt::conformal_radius(scores, -0.01);
    CHECK(std::isinf(r));
    CHECK(plan_avoiding_sets(req, preds, r).brake);
    // A finite set far away leaves the straight path open.
    const auto open = plan_avoiding_sets(req, preds, 0.1);
    CHECK_FALSE(open.brake);
    CHECK(open.turn_rate == doctest::Approx(0.0).epsilon(1e-12));
    // Growing discs: a pedestrian 2 m ahead blocks short radii late in the horizon.
    const auto near = walker(Vec2(0, 2.5), Vec2(0, 0), 10);
    const auto chosen = plan_avoiding_sets(req, near, 0.3);
    for (std::size_t tau = 1; tau < chosen.states.size() && !chosen.brake; ++tau)
        CHECK((chosen.states[tau].position - Vec2(0, 2.5)).norm() >= 0.3 * static_cast<double>(tau));
}
