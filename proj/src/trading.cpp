#include "cdt/trading.hpp"

#include "cdt/aci.hpp"
#include "cdt/csv.hpp"
#include "cdt/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

namespace cdt::trading {

namespace {

constexpr std::uint64_t kPathStream = stream_id("trading/path");
constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    constexpr double kTiny = 1e-300;
    if (p < kTiny) return -kInf;
    if (1.0 - p < kTiny) return kInf;
    return boost::math::quantile(standard, p);
}

}  // namespace

double MarketModel::step_scale() const noexcept { return sigma * std::sqrt(delta()); }

std::vector<ReturnPair> simulate_paths(const MarketModel& model) {
    if (model.years < 1) throw std::invalid_argument("market model needs years >= 1");
    if (!(std::abs(model.rho) <= 1.0)) throw std::invalid_argument("rho must lie in [-1, 1]");
    const double drift = model.mu * model.delta();
    const double scale = model.step_scale();
    const double rest = std::sqrt(1.0 - model.rho * model.rho);

    CounterRng rng(model.seed, kPathStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<ReturnPair> out(model.steps());
    for (auto& p : out) {
        const double z = normal(rng);
        const double xi = normal(rng);
        const double w = model.rho * z + rest * xi;
        p.r = drift + scale * z;
        p.r_hat = drift + scale * w;
    }
    return out;
}

Interval interval(double r_hat, double lambda, double sigma, double delta) {
    Interval set;
    set.center = r_hat;
    if (lambda <= 0.0) {
        set.lo = -kInf;
        set.hi = kInf;
        return set;
    }
    if (lambda > 1.0) {
        set.lo = set.hi = r_hat;
        set.empty = true;
        return set;
    }
    if (lambda == 1.0) {
        set.lo = set.hi = r_hat;
        return set;
    }
    const double s = sigma * std::sqrt(delta);
    set.lo = r_hat + s * normal_quantile(lambda / 2.0);
    set.hi = r_hat + s * normal_quantile(1.0 - lambda / 2.0);
    return set;
}

int decide(const Interval& set) {
    if (set.empty) return (set.center > 0.0) - (set.center < 0.0);
    if (set.lo > 0.0) return 1;
    if (set.hi < 0.0) return -1;
    return 0;
}

double trade_loss(int u, double r, double clip) {
    return std::min(clip, std::max(0.0, -static_cast<double>(u) * r));
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::cc: return "cc";
        case Strategy::aci: return "aci";
        case Strategy::buy_hold: return "buy_hold";
        case Strategy::greedy: return "greedy";
    }
    return "?";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : {Strategy::cc, Strategy::aci, Strategy::buy_hold, Strategy::greedy})
        if (to_string(s) == name) return s;
    throw std::invalid_argument("unknown trading strategy '" + std::string(name) + "'");
}

double default_clip(const MarketModel& model) { return 5.0 * model.step_scale(); }

double StrategyRun::mean_yearly_loss() const {
    double s = 0.0;
    for (double v : yearly_loss) s += v;
    return yearly_loss.empty() ? 0.0 : s / static_cast<double>(yearly_loss.size());
}

double StrategyRun::mean_yearly_return() const {
    double s = 0.0;
    for (double v : yearly_return) s += v;
    return yearly_return.empty() ? 0.0 : s / static_cast<double>(yearly_return.size());
}

StrategyRun run_strategy(const MarketModel& model, const std::vector<ReturnPair>& paths,
                         Strategy strategy, const StrategyConfig& config) {
    StrategyRun run;
    run.clip = config.clip > 0.0 ? config.clip : default_clip(model);
    run.trace = RiskTrace(LossRange{0.0, run.clip});
    run.steps.reserve(paths.size());

    const double step_epsilon = config.epsilon_yearly / static_cast<double>(model.steps_per_year);
    ConformalController controller(config.lambda_init, config.eta, step_epsilon, {0.0, run.clip},
                                   LossDirection::higher_lambda_more_aggressive);
    AciState aci{config.aci_alpha_target, config.aci_alpha_target, config.aci_eta};

    double cum_loss = 0.0, cum_return = 0.0, year_loss = 0.0, year_return = 0.0;
    for (std::size_t t = 0; t < paths.size(); ++t) {
        const auto& p = paths[t];
        TradeStep s;
        s.r = p.r;
        s.r_hat = p.r_hat;
        switch (strategy) {
            case Strategy::cc:
                s.lambda = controller.lambda();
                s.action = decide(interval(p.r_hat, s.lambda, model.sigma, model.delta()));
                break;
            case Strategy::aci: {
                s.lambda = aci.alpha_t;
                const auto set = interval(p.r_hat, aci.alpha_t, model.sigma, model.delta());
                s.action = decide(set);
                aci = aci_update(aci, set.contains(p.r));
                break;
            }
            case Strategy::buy_hold:
                s.lambda = 1.0;
                s.action = 1;
                break;
            case Strategy::greedy:
                s.lambda = 1.0;
                s.action = (p.r_hat > 0.0) - (p.r_hat < 0.0);
                break;
        }
        s.loss = trade_loss(s.action, p.r, run.clip);
        if (strategy == Strategy::cc) controller.update(s.loss);
        run.trace.push(s.lambda, s.loss);

        const double ret = static_cast<double>(s.action) * p.r;
        cum_loss += s.loss;
        cum_return += ret;
        year_loss += s.loss;
        year_return += ret;
        s.cum_loss = cum_loss;
        s.cum_return = cum_return;
        run.steps.push_back(s);
        if ((t + 1) % model.steps_per_year == 0) {
            run.yearly_loss.push_back(year_loss);
            run.yearly_return.push_back(year_return);
            year_loss = year_return = 0.0;
        }
    }
    run.trace.set_final_lambda(strategy == Strategy::cc    ? controller.lambda()
                               : strategy == Strategy::aci ? aci.alpha_t
                                                           : 1.0);
    return run;
}

void write_csv(std::ostream& out, const StrategyRun& run, const std::vector<std::string>& comment) {
    for (const auto& c : comment) out << "# " << c << '\n';
    out << "t,r,r_hat,lambda,action,loss,cum_loss,cum_return\n";
    std::size_t t = 1;
    for (const auto& s : run.steps) {
        out << t++ << ',' << csv::fmt(s.r) << ',' << csv::fmt(s.r_hat) << ',' << csv::fmt(s.lambda) << ','
            << s.action << ',' << csv::fmt(s.loss) << ',' << csv::fmt(s.cum_loss) << ','
            << csv::fmt(s.cum_return) << '\n';
    }
}

}  // namespace cdt::trading
