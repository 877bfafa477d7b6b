#include "cdt/risk_trace.hpp"

#include "cdt/csv.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace cdt {

void RiskTrace::push(double lambda, double loss) {
    if (!std::isfinite(loss) || !range_.contains(loss))
        throw std::invalid_argument("trace loss outside declared range");
    sum_.add(loss);
    const double t = static_cast<double>(steps_.size() + 1);
    steps_.push_back({lambda, loss, sum_.value() / t});
}

double RiskTrace::lambda_after(std::size_t t) const {
    if (t == 0 || t > steps_.size()) throw std::out_of_range("lambda_after: t out of range");
    return t < steps_.size() ? steps_[t].lambda : final_lambda_;
}

double empirical_risk(const RiskTrace& trace, std::size_t t) {
    if (t > trace.size())
        throw std::out_of_range("empirical_risk: t=" + std::to_string(t) + " beyond trace length " +
                                std::to_string(trace.size()));
    if (t == 0) return 0.0;
    CompensatedSum s;
    for (std::size_t i = 0; i < t; ++i) s.add(trace.steps()[i].loss);
    return s.value() / static_cast<double>(t);
}

RiskTrace run_controller(ConformalController& controller, const std::vector<double>& losses) {
    RiskTrace trace(controller.range());
    for (double loss : losses) {
        const double lambda = controller.lambda();
        controller.update(loss);
        trace.push(lambda, loss);
    }
    trace.set_final_lambda(controller.lambda());
    return trace;
}

void write_csv(std::ostream& out, const RiskTrace& trace, const std::vector<std::string>& comment) {
    for (const auto& c : comment) out << "# " << c << '\n';
    out << "t,lambda,loss,risk\n";
    std::size_t t = 1;
    for (const auto& s : trace.steps()) {
        out << t++ << ',' << csv::fmt(s.lambda) << ',' << csv::fmt(s.loss) << ',' << csv::fmt(s.risk)
            << '\n';
    }
}

RiskTrace read_risk_csv(std::istream& in, LossRange range) {
    const auto table = csv::read(in);
    const auto lambda = table.numeric_column("lambda");
    const auto loss = table.numeric_column("loss");
    RiskTrace trace(range);
    for (std::size_t i = 0; i < lambda.size(); ++i) trace.push(lambda[i], loss[i]);
    return trace;
}

}  // namespace cdt
