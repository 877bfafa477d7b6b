#include "cdt/aci.hpp"

#include "cdt/csv.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace cdt {

AciState aci_update(const AciState& state, bool covered) {
    const double err = covered ? 0.0 : 1.0;
    AciState next = state;
    next.alpha_t = state.alpha_t + state.eta * (state.alpha_target - err);
    return next;
}

double conformal_radius(std::span<const double> scores, double alpha) {
    if (scores.empty()) throw std::invalid_argument("conformal_radius: empty score list");
    if (alpha <= 0.0) return std::numeric_limits<double>::infinity();
    if (alpha >= 1.0) return kEmptySetRadius;
    const auto n = scores.size();
    const double r = std::ceil((1.0 - alpha) * static_cast<double>(n + 1));
    if (r > static_cast<double>(n)) return std::numeric_limits<double>::infinity();
    const auto rank = static_cast<std::size_t>(std::max(r, 1.0));
    std::vector<double> sorted(scores.begin(), scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
    return sorted[rank - 1];
}

void ScoreWindow::push_step(std::vector<double> scores) {
    steps_.push_back(std::move(scores));
    while (steps_.size() > window_) steps_.pop_front();
}

std::vector<double> ScoreWindow::scores() const {
    std::vector<double> out;
    for (const auto& s : steps_) out.insert(out.end(), s.begin(), s.end());
    return out;
}

bool ScoreWindow::empty() const noexcept {
    return std::all_of(steps_.begin(), steps_.end(), [](const auto& s) { return s.empty(); });
}

void write_aci_csv(std::ostream& out, const std::vector<AciRecord>& records) {
    out << "t,alpha,err,miscoverage\n";
    std::size_t misses = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        misses += records[i].err ? 1 : 0;
        out << i + 1 << ',' << csv::fmt(records[i].alpha) << ',' << (records[i].err ? 1 : 0) << ','
            << csv::fmt(static_cast<double>(misses) / static_cast<double>(i + 1)) << '\n';
    }
}

}  // namespace cdt
