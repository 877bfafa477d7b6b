#include "cdt/nav.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace cdt::nav {

Eigen::VectorXd fit_increment_ar(std::span<const double> series, std::size_t order) {
    if (series.size() < 2) throw std::invalid_argument("AR fit needs at least two points");
    const auto n_inc = series.size() - 1;
    if (n_inc <= order) throw std::invalid_argument("AR fit needs more increments than the order");

    std::vector<double> inc(n_inc);
    for (std::size_t i = 0; i < n_inc; ++i) inc[i] = series[i + 1] - series[i];

    // Row k predicts inc[order + k] from inc[order + k - 1], ..., inc[k].
    const auto rows = static_cast<Eigen::Index>(n_inc - order);
    const auto cols = static_cast<Eigen::Index>(order);
    Eigen::MatrixXd design(rows, cols);
    Eigen::VectorXd target(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto k = static_cast<std::size_t>(r) + order;
        target(r) = inc[k];
        for (Eigen::Index c = 0; c < cols; ++c) design(r, c) = inc[k - 1 - static_cast<std::size_t>(c)];
    }
    return design.completeOrthogonalDecomposition().solve(target);
}

namespace {

PredictedTrack extrapolate(int id, const std::deque<Vec2>& hist, std::size_t horizon,
                           const PredictorConfig& config) {
    PredictedTrack track;
    track.id = id;
    track.positions.reserve(horizon + 1);
    track.positions.push_back(hist.back());

    const double max_step = config.max_speed * config.dt;
    const auto capped = [&](Vec2 step) {
        const double n = step.norm();
        if (n > max_step && n > 0.0) step *= max_step / n;
        return step;
    };

    const std::size_t p = config.order;
    // At least p equations for the AR fit.
    if (p == 0 || hist.size() < 2 * p + 1) {
        track.fallback = true;
        const Vec2 v = hist.size() >= 2 ? capped(hist.back() - hist[hist.size() - 2]) : Vec2::Zero();
        for (std::size_t k = 1; k <= horizon; ++k) track.positions.push_back(track.positions.back() + v);
        return track;
    }

    std::vector<double> xs, ys;
    for (const auto& q : hist) {
        xs.push_back(q.x());
        ys.push_back(q.y());
    }
    const Eigen::VectorXd ax = fit_increment_ar(xs, p);
    const Eigen::VectorXd ay = fit_increment_ar(ys, p);

    // Most recent increment first.
    std::deque<Vec2> recent;
    for (std::size_t i = 0; i < p; ++i) recent.push_back(hist[hist.size() - 1 - i] - hist[hist.size() - 2 - i]);
    for (std::size_t k = 1; k <= horizon; ++k) {
        Vec2 step = Vec2::Zero();
        for (std::size_t i = 0; i < p; ++i) {
            step.x() += ax(static_cast<Eigen::Index>(i)) * recent[i].x();
            step.y() += ay(static_cast<Eigen::Index>(i)) * recent[i].y();
        }
        step = capped(step);
        track.positions.push_back(track.positions.back() + step);
        recent.push_front(step);
        recent.pop_back();
    }
    return track;
}

}  // namespace

PredictionBundle predict(const PedestrianSet& pedestrians, std::size_t horizon,
                         const PredictorConfig& config) {
    PredictionBundle bundle;
    bundle.horizon = horizon;
    bundle.tracks.reserve(pedestrians.tracks().size());
    for (const auto& obs : pedestrians.tracks())
        bundle.tracks.push_back(extrapolate(obs.id, pedestrians.history(obs.id), horizon, config));
    return bundle;
}

}  // namespace cdt::nav
