#include "cdt/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cdt {

namespace {

void require_positive_eta(double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta))
        throw std::domain_error("step size eta must be finite and > 0, got " + std::to_string(eta));
}

}  // namespace

ControllerState update(const ControllerState& state, double loss, const LossRange& range,
                       LossDirection direction) {
    require_positive_eta(state.eta);
    if (!std::isfinite(loss)) throw std::invalid_argument("loss must be finite");
    if (!range.contains(loss))
        throw std::invalid_argument("loss " + std::to_string(loss) + " outside declared range [" +
                                    std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");

    ControllerState next = state;
    if (direction == LossDirection::higher_lambda_more_aggressive)
        next.lambda = state.lambda + state.eta * (state.epsilon - loss);
    else
        next.lambda = state.lambda + state.eta * (loss - state.epsilon);
    next.t = state.t + 1;
    next.cum_loss.add(loss);
    return next;
}

ConformalController::ConformalController(double lambda_init, double eta, double epsilon,
                                         LossRange range, LossDirection direction)
    : lambda_init_(lambda_init), range_(range), direction_(direction) {
    require_positive_eta(eta);
    if (!std::isfinite(lambda_init) || !std::isfinite(epsilon))
        throw std::invalid_argument("lambda_init and epsilon must be finite");
    if (!(range.hi > range.lo)) throw std::invalid_argument("loss range must satisfy lo < hi");
    state_.lambda = lambda_init;
    state_.eta = eta;
    state_.epsilon = epsilon;
}

double ConformalController::update(double loss) {
    state_ = cdt::update(state_, loss, range_, direction_);
    return state_.lambda;
}

double theorem_bound(const SafetyEnvelope& envelope, double lambda_1, double eta, double epsilon,
                     std::size_t t) {
    require_positive_eta(eta);
    if (envelope.k_horizon < 1) throw std::domain_error("safety horizon K must be >= 1");
    if (t < envelope.k_horizon)
        throw std::domain_error("bound holds only for t >= K (t=" + std::to_string(t) +
                                ", K=" + std::to_string(envelope.k_horizon) + ")");
    if (lambda_1 < envelope.lambda_safe - eta)
        throw std::domain_error("initialization requires lambda_1 >= lambda_safe - eta");
    if (envelope.epsilon_safe > epsilon)
        throw std::domain_error("requires epsilon_safe <= epsilon");
    const double k = static_cast<double>(envelope.k_horizon);
    return epsilon + ((lambda_1 - envelope.lambda_safe) / eta + k) / static_cast<double>(t);
}

double theorem_bound(const SafetyEnvelope& envelope, double lambda_1, double eta, double epsilon,
                     const LossRange& range, std::size_t t) {
    const double w = range.width();
    if (!(w > 0.0)) throw std::domain_error("loss range must satisfy lo < hi");
    SafetyEnvelope unit = envelope;
    unit.epsilon_safe = range.normalize(envelope.epsilon_safe);
    const double unit_bound = theorem_bound(unit, lambda_1, eta * w, range.normalize(epsilon), t);
    return range.lo + w * unit_bound;
}

double lemma_floor(const SafetyEnvelope& envelope, double eta) {
    require_positive_eta(eta);
    return envelope.lambda_safe - static_cast<double>(envelope.k_horizon) * eta;
}

double lemma_floor(const SafetyEnvelope& envelope, double eta, const LossRange& range) {
    return lemma_floor(envelope, eta * range.width());
}

double remark_bound(const SafetyEnvelope& envelope, double lambda_at_crossing, std::size_t crossing,
                    double eta, double epsilon, std::size_t t) {
    require_positive_eta(eta);
    if (crossing < 1) throw std::domain_error("crossing index is 1-based");
    if (t + 1 < crossing + envelope.k_horizon)
        throw std::domain_error("remark bound holds only for t >= k + K - 1");
    if (lambda_at_crossing < envelope.lambda_safe - eta)
        throw std::domain_error("lambda at the crossing index must be >= lambda_safe - eta");
    if (epsilon < 0.0) throw std::domain_error("remark bound assumes epsilon >= 0");
    const double burn_in = static_cast<double>(crossing - 1);
    const double k = static_cast<double>(envelope.k_horizon);
    return epsilon + ((lambda_at_crossing - envelope.lambda_safe) / eta + k + burn_in) /
                         static_cast<double>(t);
}

double telescoping_risk(double lambda_1, double lambda_next, double eta, double epsilon,
                        std::size_t t, LossDirection direction) {
    require_positive_eta(eta);
    if (t == 0) throw std::out_of_range("telescoping identity needs t >= 1");
    const double drift = direction == LossDirection::higher_lambda_more_aggressive
                             ? lambda_1 - lambda_next
                             : lambda_next - lambda_1;
    return epsilon + drift / (eta * static_cast<double>(t));
}

double max_step(double eta, double epsilon, const LossRange& range) noexcept {
    return eta * std::max(std::abs(epsilon - range.lo), std::abs(epsilon - range.hi));
}

}  // namespace cdt
