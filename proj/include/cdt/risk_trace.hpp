#pragma once

#include "cdt/controller.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cdt {

struct RiskStep {
    double lambda = 0.0;  // value in force when the loss was incurred
    double loss = 0.0;
    double risk = 0.0;    // running mean of losses through this step
};

// Time-indexed (lambda_t, loss_t, R_t) record. Index 0 in `steps()` is t = 1.
class RiskTrace {
public:
    RiskTrace() = default;
    explicit RiskTrace(LossRange range) : range_(range) {}

    // Appends one step. Throws std::invalid_argument if the loss leaves the
    // declared range.
    void push(double lambda, double loss);

    const std::vector<RiskStep>& steps() const noexcept { return steps_; }
    std::size_t size() const noexcept { return steps_.size(); }
    bool empty() const noexcept { return steps_.empty(); }
    const LossRange& range() const noexcept { return range_; }

    // Lambda after the last update, when the producer recorded it.
    double final_lambda() const noexcept { return final_lambda_; }
    void set_final_lambda(double lambda) noexcept { final_lambda_ = lambda; }

    // Lambda_{t+1}: the value at step t+1, or final_lambda() past the end.
    double lambda_after(std::size_t t) const;

private:
    LossRange range_{};
    std::vector<RiskStep> steps_;
    CompensatedSum sum_;
    double final_lambda_ = 0.0;
};

// (1/t) * sum of the first t losses; 0 when t == 0. Throws std::out_of_range
// when t exceeds the trace length. Summed afresh with compensation, so it is
// independent of the running value cached in each step.
double empirical_risk(const RiskTrace& trace, std::size_t t);

// Drives a controller over a loss sequence and records the trace.
RiskTrace run_controller(ConformalController& controller, const std::vector<double>& losses);

// CSV with header `t,lambda,loss,risk`, 1-based t, 17 significant digits.
// Optional `comment` lines are written first, each prefixed by "# ".
void write_csv(std::ostream& out, const RiskTrace& trace,
               const std::vector<std::string>& comment = {});
RiskTrace read_risk_csv(std::istream& in, LossRange range = {-1e300, 1e300});

}  // namespace cdt
