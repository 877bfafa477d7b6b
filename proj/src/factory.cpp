#include "cdt/factory.hpp"

#include "cdt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace cdt::factory {

namespace {

constexpr std::uint64_t kStepStream = stream_id("factory/step");

}  // namespace

StepOutcome step(const FactoryModel& model, double lambda, std::uint64_t step_index) {
    StepOutcome out;
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        out.clamped = true;
        lambda = std::isnan(lambda) ? 0.0 : std::clamp(lambda, 0.0, 1.0);
    }
    const double rate = model.c_rate * std::sqrt(lambda);
    if (rate <= 0.0) return out;

    CounterRng rng(model.seed, kStepStream, step_index);
    std::poisson_distribution<unsigned> attempts(rate);
    out.n_items = attempts(rng);
    if (out.n_items > 0) {
        std::binomial_distribution<unsigned> failures(out.n_items, model.c_fail * lambda);
        out.n_failed = failures(rng);
        out.loss = static_cast<double>(out.n_failed) / static_cast<double>(out.n_items);
    }
    out.utility = out.n_items - out.n_failed;
    return out;
}

OracleSpeed oracle_loss_speed(const FactoryModel& model, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("oracle_loss_speed: epsilon must be > 0");
    const double lambda = epsilon / model.c_fail;
    if (lambda >= 1.0) return {1.0, epsilon > model.c_fail};
    return {lambda, false};
}

double expected_utility(const FactoryModel& model, double lambda) {
    return model.c_rate * std::sqrt(lambda) * (1.0 - model.c_fail * lambda);
}

double oracle_value_speed(const FactoryModel& model) {
    constexpr int kGrid = 10000;
    double best = 0.0, best_value = -1.0;
    for (int i = 0; i <= kGrid; ++i) {
        const double lambda = static_cast<double>(i) / kGrid;
        const double v = expected_utility(model, lambda);
        if (v > best_value) {
            best_value = v;
            best = lambda;
        }
    }
    return best;
}

std::string_view to_string(Policy p) {
    switch (p) {
        case Policy::cc: return "cc";
        case Policy::ucb: return "ucb";
        case Policy::lcb: return "lcb";
        case Policy::oracle_loss: return "oracle_loss";
        case Policy::oracle_value: return "oracle_value";
    }
    return "?";
}

Policy parse_policy(std::string_view name) {
    for (auto p : {Policy::cc, Policy::ucb, Policy::lcb, Policy::oracle_loss, Policy::oracle_value})
        if (to_string(p) == name) return p;
    throw std::invalid_argument("unknown factory policy '" + std::string(name) + "'");
}

double PolicyRun::mean_utility() const {
    if (utility.empty()) return 0.0;
    double s = 0.0;
    for (double u : utility) s += u;
    return s / static_cast<double>(utility.size());
}

namespace {

// Confidence-bound bandit over a uniform speed grid. Every arm is pulled
// once, in order, before the bonus rule kicks in.
class GridBandit {
public:
    GridBandit(std::size_t arms, bool maximize_utility)
        : pulls_(arms, 0), total_(arms, 0.0), maximize_utility_(maximize_utility) {
        if (arms < 2) throw std::invalid_argument("bandit needs at least 2 arms");
    }

    std::size_t choose(std::size_t t) const {
        for (std::size_t a = 0; a < pulls_.size(); ++a)
            if (pulls_[a] == 0) return a;
        const double log_t = std::log(static_cast<double>(t));
        std::size_t best = 0;
        double best_score = 0.0;
        for (std::size_t a = 0; a < pulls_.size(); ++a) {
            const double n = static_cast<double>(pulls_[a]);
            const double bonus = std::sqrt(2.0 * log_t / n);
            const double m = total_[a] / n;
            // UCB maximizes mean + bonus; LCB minimizes mean - bonus.
            const double score = maximize_utility_ ? m + bonus : -(m - bonus);
            if (a == 0 || score > best_score) {
                best_score = score;
                best = a;
            }
        }
        return best;
    }

    double speed(std::size_t arm) const {
        return static_cast<double>(arm) / static_cast<double>(pulls_.size() - 1);
    }

    void record(std::size_t arm, double reward) {
        ++pulls_[arm];
        total_[arm] += reward;
    }

private:
    std::vector<std::size_t> pulls_;
    std::vector<double> total_;
    bool maximize_utility_;
};

}  // namespace

PolicyRun run_policy(const FactoryModel& model, Policy policy, const PolicyConfig& config) {
    if (config.horizon < 1) throw std::invalid_argument("factory horizon must be >= 1");
    PolicyRun run;
    run.trace = RiskTrace(LossRange{0.0, 1.0});
    run.utility.reserve(config.horizon);

    const auto record = [&](double lambda_logged, const StepOutcome& o) {
        run.trace.push(lambda_logged, o.loss);
        run.utility.push_back(static_cast<double>(o.utility));
        run.clamp_count += o.clamped ? 1 : 0;
    };

    switch (policy) {
        case Policy::cc: {
            ConformalController controller(config.lambda_init, config.eta, config.epsilon, {0.0, 1.0},
                                           LossDirection::higher_lambda_more_aggressive);
            for (std::size_t t = 0; t < config.horizon; ++t) {
                const double lambda = controller.lambda();
                const auto o = step(model, lambda, t);
                controller.update(o.loss);
                record(lambda, o);
            }
            run.trace.set_final_lambda(controller.lambda());
            break;
        }
        case Policy::ucb:
        case Policy::lcb: {
            GridBandit bandit(config.arms, policy == Policy::ucb);
            for (std::size_t t = 0; t < config.horizon; ++t) {
                const auto arm = bandit.choose(t + 1);
                const double lambda = bandit.speed(arm);
                const auto o = step(model, lambda, t);
                bandit.record(arm, policy == Policy::ucb ? static_cast<double>(o.utility) : o.loss);
                record(lambda, o);
            }
            break;
        }
        case Policy::oracle_loss:
        case Policy::oracle_value: {
            const double lambda = policy == Policy::oracle_loss
                                      ? oracle_loss_speed(model, config.epsilon).lambda
                                      : oracle_value_speed(model);
            for (std::size_t t = 0; t < config.horizon; ++t) record(lambda, step(model, lambda, t));
            run.trace.set_final_lambda(lambda);
            break;
        }
    }
    return run;
}

}  // namespace cdt::factory
