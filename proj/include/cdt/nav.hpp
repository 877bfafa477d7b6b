#pragma once

// Planar navigation among pedestrians: autoregressive pedestrian
// forecasting, a sampling-based Dubins planner scored by
//   J = sum_tau ( |u_tau - g| + min(w, |u_tau - g|) * |heading error to g| )
//       - lambda * min_{tau >= 1, i} |u_tau - x^i_tau|,
// and the nearest-pedestrian loss.

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <map>
#include <span>
#include <vector>

namespace cdt::nav {

using Vec2 = Eigen::Vector2d;

// Heading wrapped to (-pi, pi].
double wrap_angle(double a);

struct Pose {
    Vec2 position = Vec2::Zero();
    double heading = 0.0;
};

struct RobotState {
    Vec2 position = Vec2::Zero();
    double heading = 0.0;  // (-pi, pi]
    double speed = 0.0;    // [0, v_max]
};

struct DubinsLimits {
    double v_max = 1.5;      // m/s
    double omega_max = 1.5;  // rad/s
    double dt = 0.2;         // s
};

struct PedestrianObs {
    int id = 0;
    Vec2 position = Vec2::Zero();
};

// Current pedestrian tracks plus a bounded per-id position history.
class PedestrianSet {
public:
    explicit PedestrianSet(std::size_t history_window = 12) : window_(history_window) {}

    // Replaces the current tracks. Ids that disappear lose their history.
    // Throws std::invalid_argument on duplicate ids.
    void observe(std::span<const PedestrianObs> tracks);

    const std::vector<PedestrianObs>& tracks() const noexcept { return tracks_; }
    const std::deque<Vec2>& history(int id) const;
    std::size_t window() const noexcept { return window_; }

private:
    std::size_t window_;
    std::vector<PedestrianObs> tracks_;
    std::map<int, std::deque<Vec2>> history_;
};

struct PredictorConfig {
    std::size_t order = 3;
    double max_speed = 3.0;  // cap on predicted per-step displacement / dt
    double dt = 0.2;
};

struct PredictedTrack {
    int id = 0;
    std::vector<Vec2> positions;  // tau = t .. t+H, positions[0] is the current observation
    bool fallback = false;        // constant-velocity (or stationary) extrapolation
};

struct PredictionBundle {
    std::size_t horizon = 0;
    std::vector<PredictedTrack> tracks;

    bool empty() const noexcept { return tracks.empty(); }
};

// Per pedestrian and per axis, fits an order-p autoregression (no intercept)
// on position increments over the history window by minimum-norm least
// squares and rolls it forward. Tracks with fewer than p equations fall back
// to constant velocity from the last two points.
PredictionBundle predict(const PedestrianSet& pedestrians, std::size_t horizon,
                         const PredictorConfig& config = {});

// Coefficients of the increment autoregression for one axis, most recent lag
// first. Exposed for testing.
Eigen::VectorXd fit_increment_ar(std::span<const double> series, std::size_t order);

struct Obstacle {
    Vec2 center = Vec2::Zero();
    double radius = 0.0;
};

struct SplinePlan {
    std::vector<Pose> states;  // H + 1 poses, states[0] is the current pose
    double speed = 0.0;
    double turn_rate = 0.0;
    bool brake = false;
    std::size_t candidate = 0;  // index in the candidate set

    double cost = 0.0;       // J at the lambda used
    double goal_cost = 0.0;  // sum_tau |u_tau - g| + min(w, |u_tau - g|) * |heading error|
    double clearance = 0.0;  // min_{tau >= 1, i} |u_tau - x^i_tau|; 0 without predictions
    bool avoidance_ignored = false;  // lambda != 0 but nothing to avoid
};

// Constant speed and turn rate arcs over a lattice of speeds in (0, v_max]
// and turn rates in [-omega_max, omega_max], then one brake-to-stop plan.
// Exactly `count` plans, the last being the brake plan.
std::vector<SplinePlan> candidate_rollouts(const RobotState& robot, const DubinsLimits& limits,
                                           std::size_t horizon, std::size_t count);

bool hits_obstacle(const SplinePlan& plan, std::span<const Obstacle> obstacles);

// Fills goal_cost, clearance and cost. `heading_weight` (m)
// charges each state for facing away from the goal, fading out inside that
// distance so the goal can be approached from any side. Without it a robot
// pointing away from the goal finds braking cheaper than turning around
// within the horizon.
void score(SplinePlan& plan, const Vec2& goal, const PredictionBundle& predictions, double lambda,
           double heading_weight = 0.0);

struct PlanRequest {
    RobotState robot;
    Vec2 goal = Vec2::Zero();
    double lambda = 0.0;
    double heading_weight = 1.0;
    std::size_t candidates = 128;
    std::size_t horizon = 10;
    DubinsLimits limits;
    std::vector<Obstacle> obstacles;
};

// argmin of J over the obstacle-free candidates, ties toward larger
// clearance, then lower index. Brake-to-stop when nothing survives.
// Throws std::invalid_argument for a non-finite goal or lambda, or
// candidates == 0.
SplinePlan plan(const PlanRequest& request, const PredictionBundle& predictions);

// Set-avoiding variant: the set around the tau-step prediction is a disc of
// radius `radius * tau` (radius is a per-step error rate). Candidates must
// stay outside every set for tau >= 1; among those, the least goal cost
// wins. radius = +inf leaves only the brake plan (when anyone is predicted).
SplinePlan plan_avoiding_sets(const PlanRequest& request, const PredictionBundle& predictions,
                              double radius);

// max(-clip, -min_i |y_i - robot|); -clip with no pedestrians.
double nav_loss(const Vec2& robot, std::span<const PedestrianObs> pedestrians, double clip);
double nearest_distance(const Vec2& robot, std::span<const PedestrianObs> pedestrians);

}  // namespace cdt::nav
