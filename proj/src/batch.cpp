#include "cdt/batch.hpp"

#include "cdt/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <stdexcept>

namespace cdt {

StepCurve::StepCurve(std::vector<double> knots, std::vector<double> losses)
    : knots_(std::move(knots)), losses_(std::move(losses)) {
    if (knots_.empty() || knots_.size() != losses_.size())
        throw std::invalid_argument("step curve needs matching, nonempty knots and losses");
    if (!std::is_sorted(knots_.begin(), knots_.end()))
        throw std::invalid_argument("step curve knots must be sorted by lambda");
}

double StepCurve::operator()(double lambda) const {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), lambda);
    if (it == knots_.begin()) return losses_.front();
    return losses_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

bool StepCurve::monotone() const { return std::is_sorted(losses_.begin(), losses_.end()); }

StepCurve read_step_curve(std::istream& in) {
    std::vector<double> knots, losses;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("lambda", 0) == 0) continue;
        const auto cells = csv::split(line);
        if (cells.size() != 2) throw std::runtime_error("line " + std::to_string(lineno) + ": expected lambda,loss");
        try {
            knots.push_back(csv::parse_double(cells[0]));
            losses.push_back(csv::parse_double(cells[1]));
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(lineno) + ": unparseable number");
        }
        if (losses.back() < 0.0 || losses.back() > 1.0)
            throw std::runtime_error("line " + std::to_string(lineno) + ": loss outside [0, 1]");
    }
    return StepCurve(std::move(knots), std::move(losses));
}

StepCurve read_step_curve_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_step_curve(in);
}

double batch_threshold(double epsilon, std::size_t n) {
    return epsilon - (1.0 - epsilon) / static_cast<double>(n);
}

double mean_loss(const std::vector<LossCurve>& curves, double lambda) {
    double s = 0.0;
    for (const auto& c : curves) s += c.evaluate(lambda);
    return s / static_cast<double>(curves.size());
}

BatchCalibration calibrate(const std::vector<LossCurve>& curves, double epsilon,
                           LambdaDomain domain, double grid_tol) {
    if (curves.empty()) throw std::invalid_argument("calibrate: empty curve set");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("calibrate: epsilon must lie in (0, 1)");
    if (!(domain.max > domain.min)) throw std::invalid_argument("calibrate: empty lambda domain");

    BatchCalibration out;
    out.n = curves.size();
    out.epsilon = epsilon;
    out.threshold = batch_threshold(epsilon, out.n);
    if (!(out.threshold > 0.0))
        throw std::invalid_argument("calibrate: epsilon - (1 - epsilon)/n must be > 0; need more curves");
    if (grid_tol <= 0.0) grid_tol = 1e-6 * domain.width();

    const auto feasible = [&](double lambda) { return mean_loss(curves, lambda) <= out.threshold; };

    if (feasible(domain.max)) {
        out.lambda_hat = domain.max;
        return out;
    }
    if (!feasible(domain.min)) {
        out.lambda_hat = domain.min;
        out.infeasible_at_floor = true;
        return out;
    }
    double lo = domain.min, hi = domain.max;  // lo feasible, hi not
    while (hi - lo > grid_tol) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        (feasible(mid) ? lo : hi) = mid;
    }
    out.lambda_hat = lo;
    return out;
}

bool verify_monotone(const LossCurve& curve, std::size_t probes) {
    if (probes < 2) throw std::invalid_argument("verify_monotone needs at least 2 probes");
    const auto& d = curve.domain();
    double prev = curve.evaluate(d.min);
    for (std::size_t i = 1; i < probes; ++i) {
        const double lambda =
            i + 1 == probes ? d.max : d.min + d.width() * static_cast<double>(i) / static_cast<double>(probes - 1);
        const double v = curve.evaluate(lambda);
        if (v < prev) return false;
        prev = v;
    }
    return true;
}

}  // namespace cdt
