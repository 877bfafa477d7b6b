#pragma once

// Adaptive conformal inference baseline: online miscoverage-level tracking
// plus the split-conformal quantile used to size prediction sets.

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace cdt {

struct AciState {
    double alpha_t = 0.1;
    double alpha_target = 0.1;
    double eta = 0.01;
};

// alpha_{t+1} = alpha_t + eta * (alpha_target - 1{not covered}). The
// expression order matches cdt::update so the two agree bit for bit.
AciState aci_update(const AciState& state, bool covered);

// Radius returned when alpha >= 1: the empty prediction set.
inline constexpr double kEmptySetRadius = -std::numeric_limits<double>::infinity();

// ceil((1 - alpha)(n + 1))-th smallest score; +inf when alpha <= 0 or the
// rank exceeds n; kEmptySetRadius when alpha >= 1. Throws
// std::invalid_argument for an empty score list.
double conformal_radius(std::span<const double> scores, double alpha);

// Scores from the most recent `window_steps` steps; each step may
// contribute several scores.
class ScoreWindow {
public:
    explicit ScoreWindow(std::size_t window_steps = 30) : window_(window_steps) {}

    void push_step(std::vector<double> scores);
    std::vector<double> scores() const;
    bool empty() const noexcept;

private:
    std::size_t window_;
    std::deque<std::vector<double>> steps_;
};

struct AciRecord {
    double alpha = 0.0;  // level in force for this step
    bool err = false;
};

// CSV with header `t,alpha,err,miscoverage`.
void write_aci_csv(std::ostream& out, const std::vector<AciRecord>& records);

}  // namespace cdt
