#pragma once

// Hourly trading bench. Returns and their predictions are correlated
// Gaussian increments of two geometric Brownian motions; a trade is placed
// only when the whole prediction interval sits on one side of zero.

#include "cdt/risk_trace.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdt::trading {

struct MarketModel {
    double mu = 0.08;     // per year
    double sigma = 0.2;   // per sqrt(year)
    double rho = 0.0;     // corr(r_t, r_hat_t)
    std::size_t steps_per_year = 252 * 7;
    std::size_t years = 5;
    std::uint64_t seed = 0;

    double delta() const noexcept { return 1.0 / static_cast<double>(steps_per_year); }
    double step_scale() const noexcept;  // sigma * sqrt(delta)
    std::size_t steps() const noexcept { return steps_per_year * years; }
};

struct ReturnPair {
    double r = 0.0;
    double r_hat = 0.0;
};

std::vector<ReturnPair> simulate_paths(const MarketModel& model);

// [lo, hi]; `empty` marks the inverted set produced for lambda > 1, which
// decide() resolves by the sign of the point prediction.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double center = 0.0;
    bool empty = false;

    bool contains(double x) const noexcept { return !empty && x >= lo && x <= hi; }
};

// [r_hat + s z(lambda/2), r_hat + s z(1 - lambda/2)] with s = sigma sqrt(delta)
// and z the standard normal quantile. lambda <= 0 gives (-inf, inf),
// lambda = 1 the point r_hat, lambda > 1 the empty sentinel.
Interval interval(double r_hat, double lambda, double sigma, double delta);

// +1 buy, -1 short-sell, 0 hold.
int decide(const Interval& set);

// min(clip, max(0, -u r)).
double trade_loss(int u, double r, double clip);

enum class Strategy { cc, aci, buy_hold, greedy };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct StrategyConfig {
    double epsilon_yearly = 0.25;
    double eta = 1.0;
    double lambda_init = 0.0;
    double clip = 0.0;  // <= 0 selects 5 * sigma * sqrt(delta)
    double aci_alpha_target = 0.10;
    double aci_eta = 0.005;
};

struct TradeStep {
    double r = 0.0;
    double r_hat = 0.0;
    double lambda = 0.0;  // lambda (cc) or alpha (aci) in force; 1 for greedy, NaN-free
    int action = 0;
    double loss = 0.0;
    double cum_loss = 0.0;
    double cum_return = 0.0;
};

struct StrategyRun {
    std::vector<TradeStep> steps;
    RiskTrace trace;
    std::vector<double> yearly_loss;    // sum of losses per calendar-year window
    std::vector<double> yearly_return;  // sum of u * r per window
    double clip = 0.0;

    double mean_yearly_loss() const;
    double mean_yearly_return() const;
};

double default_clip(const MarketModel& model);

StrategyRun run_strategy(const MarketModel& model, const std::vector<ReturnPair>& paths,
                         Strategy strategy, const StrategyConfig& config);

// CSV with header `t,r,r_hat,lambda,action,loss,cum_loss,cum_return`.
void write_csv(std::ostream& out, const StrategyRun& run,
               const std::vector<std::string>& comment = {});

}  // namespace cdt::trading
