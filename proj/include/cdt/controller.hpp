#pragma once

// Conformal controller: online tuning of a scalar conservatism parameter so
// that the running mean of decision losses tracks a target risk level.
//
//   lambda_{t+1} = lambda_t + eta * (epsilon - loss_t)     (aggressive-up)
//   lambda_{t+1} = lambda_t + eta * (loss_t - epsilon)     (conservative-up)
//
// The update telescopes, so the empirical risk after t steps is
//   R_t = epsilon + (lambda_1 - lambda_{t+1}) / (eta * t)
// which is the identity every bound check in this header leans on.

#include <cstddef>
#include <stdexcept>

namespace cdt {

// Which way lambda points. The update always moves lambda toward the
// conservative end when the loss exceeds the target.
enum class LossDirection {
    higher_lambda_more_aggressive,
    higher_lambda_more_conservative,
};

// Declared closed range every loss must lie in.
struct LossRange {
    double lo = 0.0;
    double hi = 1.0;

    double width() const noexcept { return hi - lo; }
    bool contains(double loss) const noexcept { return loss >= lo && loss <= hi; }
    double normalize(double loss) const noexcept { return (loss - lo) / (hi - lo); }
};

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if ((sum_ >= 0 ? sum_ : -sum_) >= (x >= 0 ? x : -x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct ControllerState {
    double lambda = 0.0;
    double eta = 1.0;
    double epsilon = 0.0;
    std::size_t t = 0;
    CompensatedSum cum_loss;

    double empirical_risk() const noexcept {
        return t == 0 ? 0.0 : cum_loss.value() / static_cast<double>(t);
    }
};

// (lambda_safe, epsilon_safe, K): holding lambda at or below lambda_safe for K
// consecutive steps keeps the mean loss of those steps at or below
// epsilon_safe. Expressed in the aggressive-up frame.
struct SafetyEnvelope {
    double lambda_safe = 0.0;
    double epsilon_safe = 0.0;
    std::size_t k_horizon = 1;
};

// One update; throws std::invalid_argument for non-finite or out-of-range
// losses and for a non-positive step size.
ControllerState update(const ControllerState& state, double loss, const LossRange& range,
                       LossDirection direction);

// Stateful wrapper that remembers lambda_1 and the declared range.
class ConformalController {
public:
    ConformalController(double lambda_init, double eta, double epsilon, LossRange range = {},
                        LossDirection direction = LossDirection::higher_lambda_more_aggressive);

    double update(double loss);

    const ControllerState& state() const noexcept { return state_; }
    double lambda() const noexcept { return state_.lambda; }
    double initial_lambda() const noexcept { return lambda_init_; }
    double eta() const noexcept { return state_.eta; }
    double epsilon() const noexcept { return state_.epsilon; }
    std::size_t steps() const noexcept { return state_.t; }
    const LossRange& range() const noexcept { return range_; }
    LossDirection direction() const noexcept { return direction_; }
    double empirical_risk() const noexcept { return state_.empirical_risk(); }

private:
    ControllerState state_;
    double lambda_init_;
    LossRange range_;
    LossDirection direction_;
};

// Right-hand side of the finite-time risk bound for losses in [0, 1]:
//   epsilon + ((lambda_1 - lambda_safe) / eta + K) / t,   valid for t >= K.
// Throws std::domain_error when t < K, lambda_1 < lambda_safe - eta,
// epsilon_safe > epsilon or eta <= 0.
double theorem_bound(const SafetyEnvelope& envelope, double lambda_1, double eta, double epsilon,
                     std::size_t t);

// Same bound for losses declared in [lo, hi]. The losses are normalized to
// [0, 1], which rescales eta by (hi - lo); the bound is mapped back to the
// original units. Equivalent to
//   epsilon + ((lambda_1 - lambda_safe) / eta + K * (hi - lo)) / t.
double theorem_bound(const SafetyEnvelope& envelope, double lambda_1, double eta, double epsilon,
                     const LossRange& range, std::size_t t);

// lambda_safe - K * eta. Throws std::domain_error when eta <= 0.
double lemma_floor(const SafetyEnvelope& envelope, double eta);
// lambda_safe - K * eta * (hi - lo).
double lemma_floor(const SafetyEnvelope& envelope, double eta, const LossRange& range);

// Relaxed bound when lambda_1 starts below lambda_safe - eta. `crossing` is
// the first 1-based index k with lambda_k >= lambda_safe - eta and
// `lambda_at_crossing` is lambda_k; the k - 1 burn-in steps are charged at
// the maximal loss 1. Valid for t >= k + K - 1. Losses in [0, 1], epsilon >= 0.
double remark_bound(const SafetyEnvelope& envelope, double lambda_at_crossing, std::size_t crossing,
                    double eta, double epsilon, std::size_t t);

// epsilon + (lambda_1 - lambda_{t+1}) / (eta * t), with the sign of the
// lambda term flipped for the conservative-up direction.
double telescoping_risk(double lambda_1, double lambda_next, double eta, double epsilon,
                        std::size_t t,
                        LossDirection direction = LossDirection::higher_lambda_more_aggressive);

// Maps lambda into the aggressive-up frame used by SafetyEnvelope.
inline double to_aggressive_frame(double lambda, LossDirection direction) noexcept {
    return direction == LossDirection::higher_lambda_more_aggressive ? lambda : -lambda;
}

// Largest possible |lambda_{t+1} - lambda_t| for any admissible loss.
double max_step(double eta, double epsilon, const LossRange& range) noexcept;

}  // namespace cdt
