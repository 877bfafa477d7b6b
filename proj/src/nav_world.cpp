#include "cdt/nav.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace cdt::nav {

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

void PedestrianSet::observe(std::span<const PedestrianObs> tracks) {
    std::set<int> seen;
    for (const auto& p : tracks)
        if (!seen.insert(p.id).second)
            throw std::invalid_argument("duplicate pedestrian id " + std::to_string(p.id));

    for (auto it = history_.begin(); it != history_.end();)
        it = seen.count(it->first) ? std::next(it) : history_.erase(it);
    for (const auto& p : tracks) {
        auto& h = history_[p.id];
        h.push_back(p.position);
        while (h.size() > window_) h.pop_front();
    }
    tracks_.assign(tracks.begin(), tracks.end());
}

const std::deque<Vec2>& PedestrianSet::history(int id) const {
    const auto it = history_.find(id);
    if (it == history_.end()) throw std::out_of_range("no history for pedestrian " + std::to_string(id));
    return it->second;
}

double nearest_distance(const Vec2& robot, std::span<const PedestrianObs> pedestrians) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pedestrians) best = std::min(best, (p.position - robot).norm());
    return best;
}

double nav_loss(const Vec2& robot, std::span<const PedestrianObs> pedestrians, double clip) {
    if (!(clip > 0.0)) throw std::invalid_argument("nav_loss: clip must be > 0");
    return std::max(-clip, -nearest_distance(robot, pedestrians));
}

bool hits_obstacle(const SplinePlan& plan, std::span<const Obstacle> obstacles) {
    for (const auto& s : plan.states)
        for (const auto& o : obstacles)
            if ((s.position - o.center).norm() <= o.radius) return true;
    return false;
}

}  // namespace cdt::nav
