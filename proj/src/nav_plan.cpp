#include "cdt/nav.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cdt::nav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SplinePlan rollout(const RobotState& robot, double speed, double turn_rate, double dt,
                   std::size_t horizon) {
    SplinePlan plan;
    plan.speed = speed;
    plan.turn_rate = turn_rate;
    plan.states.reserve(horizon + 1);
    Pose pose{robot.position, robot.heading};
    plan.states.push_back(pose);
    for (std::size_t k = 0; k < horizon; ++k) {
        const double th = pose.heading;
        const double th_next = th + turn_rate * dt;
        if (std::abs(turn_rate) > 1e-12) {
            const double r = speed / turn_rate;
            pose.position.x() += r * (std::sin(th_next) - std::sin(th));
            pose.position.y() += -r * (std::cos(th_next) - std::cos(th));
        } else {
            pose.position.x() += speed * dt * std::cos(th);
            pose.position.y() += speed * dt * std::sin(th);
        }
        pose.heading = wrap_angle(th_next);
        plan.states.push_back(pose);
    }
    return plan;
}

void validate(const PlanRequest& request) {
    if (!request.goal.allFinite()) throw std::invalid_argument("plan: goal must be finite");
    if (!std::isfinite(request.lambda)) throw std::invalid_argument("plan: lambda must be finite");
    if (request.candidates == 0) throw std::invalid_argument("plan: need at least one candidate");
    if (!(request.heading_weight >= 0.0)) throw std::invalid_argument("plan: heading_weight must be >= 0");
}

}  // namespace

std::vector<SplinePlan> candidate_rollouts(const RobotState& robot, const DubinsLimits& limits,
                                           std::size_t horizon, std::size_t count) {
    std::vector<SplinePlan> out;
    if (count == 0) return out;
    out.reserve(count);
    const std::size_t moving = count - 1;
    if (moving > 0) {
        const std::size_t n_speed = moving >= 8 ? 4 : 1;
        const std::size_t n_turn = (moving + n_speed - 1) / n_speed;
        for (std::size_t i = 0; i < moving; ++i) {
            const std::size_t si = i % n_speed;
            const std::size_t ti = i / n_speed;
            const double speed = limits.v_max * static_cast<double>(n_speed - si) / static_cast<double>(n_speed);
            const double turn = n_turn == 1 ? 0.0
                                            : -limits.omega_max + 2.0 * limits.omega_max * static_cast<double>(ti) /
                                                                      static_cast<double>(n_turn - 1);
            out.push_back(rollout(robot, speed, turn, limits.dt, horizon));
        }
    }
    SplinePlan stop = rollout(robot, 0.0, 0.0, limits.dt, horizon);
    stop.brake = true;
    out.push_back(std::move(stop));
    for (std::size_t i = 0; i < out.size(); ++i) out[i].candidate = i;
    return out;
}

void score(SplinePlan& plan, const Vec2& goal, const PredictionBundle& predictions, double lambda,
           double heading_weight) {
    plan.goal_cost = 0.0;
    plan.clearance = predictions.empty() ? 0.0 : kInf;
    for (std::size_t tau = 0; tau < plan.states.size(); ++tau) {
        const Vec2& u = plan.states[tau].position;
        const Vec2 to_goal = goal - u;
        plan.goal_cost += to_goal.norm();
        if (heading_weight != 0.0 && to_goal.squaredNorm() > 0.0)
            plan.goal_cost += std::min(heading_weight, to_goal.norm()) *
                              std::abs(wrap_angle(std::atan2(to_goal.y(), to_goal.x()) - plan.states[tau].heading));
        // The current position is shared by every candidate.
        if (tau == 0) continue;
        for (const auto& track : predictions.tracks) {
            const auto k = std::min(tau, track.positions.size() - 1);
            plan.clearance = std::min(plan.clearance, (u - track.positions[k]).norm());
        }
    }
    if (plan.states.size() < 2 && !predictions.empty()) plan.clearance = 0.0;
    plan.avoidance_ignored = predictions.empty() && lambda != 0.0;
    plan.cost = plan.goal_cost - lambda * plan.clearance;
}

SplinePlan plan(const PlanRequest& request, const PredictionBundle& predictions) {
    validate(request);
    auto candidates = candidate_rollouts(request.robot, request.limits, request.horizon, request.candidates);
    const SplinePlan* best = nullptr;
    for (auto& c : candidates) {
        score(c, request.goal, predictions, request.lambda, request.heading_weight);
        if (!c.brake && hits_obstacle(c, request.obstacles)) continue;
        if (!best || c.cost < best->cost || (c.cost == best->cost && c.clearance > best->clearance)) best = &c;
    }
    // The brake plan is always last and never filtered, so best is set.
    return *best;
}

SplinePlan plan_avoiding_sets(const PlanRequest& request, const PredictionBundle& predictions,
                              double radius) {
    validate(request);
    auto candidates = candidate_rollouts(request.robot, request.limits, request.horizon, request.candidates);
    const SplinePlan* best = nullptr;
    SplinePlan* stop = &candidates.back();
    for (auto& c : candidates) {
        score(c, request.goal, predictions, 0.0, request.heading_weight);
        if (!c.brake && hits_obstacle(c, request.obstacles)) continue;
        bool clear = true;
        for (std::size_t tau = 1; tau < c.states.size() && clear; ++tau)
            for (const auto& track : predictions.tracks) {
                const auto k = std::min(tau, track.positions.size() - 1);
                if (!((c.states[tau].position - track.positions[k]).norm() >= radius * static_cast<double>(tau))) {
                    clear = false;
                    break;
                }
            }
        if (!clear) continue;
        if (!best || c.goal_cost < best->goal_cost) best = &c;
    }
    return best ? *best : *stop;
}

}  // namespace cdt::nav
