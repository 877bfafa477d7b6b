#pragma once

// Offline calibration of lambda from n exchangeable loss curves. Picks the
// largest lambda whose mean calibration loss stays below
// epsilon - (1 - epsilon) / n, which keeps the expected loss of a fresh
// exchangeable curve at or below epsilon.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace cdt {

struct LambdaDomain {
    double min = 0.0;
    double max = 1.0;
    double width() const noexcept { return max - min; }
};

// Loss as a function of lambda: nondecreasing, values in [0, 1].
class LossCurve {
public:
    using Fn = std::function<double(double)>;

    LossCurve(Fn fn, LambdaDomain domain) : fn_(std::move(fn)), domain_(domain) {}

    double evaluate(double lambda) const { return fn_(lambda); }
    const LambdaDomain& domain() const noexcept { return domain_; }

private:
    Fn fn_;
    LambdaDomain domain_;
};

// Right-continuous step interpolation of a tabulated curve: the loss at
// lambda is the tabulated loss at the largest knot <= lambda (the first
// knot's loss below the table).
class StepCurve {
public:
    StepCurve(std::vector<double> knots, std::vector<double> losses);

    double operator()(double lambda) const;
    const std::vector<double>& knots() const noexcept { return knots_; }
    const std::vector<double>& losses() const noexcept { return losses_; }
    bool monotone() const;

private:
    std::vector<double> knots_;
    std::vector<double> losses_;
};

// Reads `lambda,loss` rows (header optional). Throws std::runtime_error
// naming the offending line.
StepCurve read_step_curve(std::istream& in);
StepCurve read_step_curve_file(const std::string& path);

struct BatchCalibration {
    double lambda_hat = 0.0;
    std::size_t n = 0;
    double epsilon = 0.0;
    double threshold = 0.0;         // epsilon - (1 - epsilon) / n
    bool infeasible_at_floor = false;  // even lambda_min breaks the threshold
};

// Bisection for sup{lambda : mean_i L_i(lambda) <= threshold} on `domain`.
// grid_tol <= 0 selects 1e-6 of the domain width. Throws
// std::invalid_argument on an empty curve set, epsilon outside (0, 1) or a
// non-positive threshold.
BatchCalibration calibrate(const std::vector<LossCurve>& curves, double epsilon,
                           LambdaDomain domain, double grid_tol = 0.0);

double batch_threshold(double epsilon, std::size_t n);
double mean_loss(const std::vector<LossCurve>& curves, double lambda);

// Nondecreasing across `probes` equally spaced points of the curve's domain.
bool verify_monotone(const LossCurve& curve, std::size_t probes);

}  // namespace cdt
