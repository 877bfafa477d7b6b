#pragma once

// Conveyor-belt grasping bench. Belt speed lambda in [0, 1]:
//   attempts  n ~ Poisson(C * sqrt(lambda))
//   failures  d | n ~ Binomial(n, C' * lambda)
//   loss = d / n (0 when n = 0),  utility = n - d.

#include "cdt/risk_trace.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdt::factory {

struct FactoryModel {
    double c_rate = 10.0;  // C
    double c_fail = 0.2;   // C'
    std::uint64_t seed = 0;
};

struct StepOutcome {
    unsigned n_items = 0;
    unsigned n_failed = 0;
    double loss = 0.0;
    unsigned utility = 0;
    bool clamped = false;  // lambda was outside [0, 1]
};

// Draws the outcome of step `step_index` at speed lambda. The draw depends
// only on (seed, step_index, lambda). Lambda is clamped into [0, 1].
StepOutcome step(const FactoryModel& model, double lambda, std::uint64_t step_index);

struct OracleSpeed {
    double lambda = 0.0;
    bool saturated = false;
};

// epsilon / C', clamped to [0, 1]; saturated when epsilon > C'.
OracleSpeed oracle_loss_speed(const FactoryModel& model, double epsilon);

// argmax over [0, 1] of C sqrt(lambda) (1 - C' lambda), by a 10^4-point grid.
double oracle_value_speed(const FactoryModel& model);

// E[V(lambda)].
double expected_utility(const FactoryModel& model, double lambda);

enum class Policy { cc, ucb, lcb, oracle_loss, oracle_value };

std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);

struct PolicyConfig {
    std::size_t horizon = 2000;
    double epsilon = 0.05;
    double eta = 0.05;
    double lambda_init = 0.0;
    std::size_t arms = 21;
};

struct PolicyRun {
    RiskTrace trace;               // lambda column holds the speed actually played
    std::vector<double> utility;   // per-step utility
    std::size_t clamp_count = 0;

    double final_risk() const { return trace.empty() ? 0.0 : trace.steps().back().risk; }
    double mean_utility() const;
};

PolicyRun run_policy(const FactoryModel& model, Policy policy, const PolicyConfig& config);

}  // namespace cdt::factory
