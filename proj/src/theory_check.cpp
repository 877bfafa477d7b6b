#include "cdt/theory_check.hpp"

#include "cdt/csv.hpp"
#include "cdt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace cdt {

namespace {

constexpr std::uint64_t kSequenceStream = stream_id("theory/sequence");

// Roundoff allowance when comparing a realized risk against its bound.
constexpr double kSlackTolerance = 1e-12;

}  // namespace

AdversarialLosses::AdversarialLosses(const SafetyEnvelope& envelope, LossRange range, double p_max)
    : envelope_(envelope), range_(range), p_max_(p_max) {
    if (envelope.k_horizon < 1) throw std::domain_error("safety horizon K must be >= 1");
    if (!range.contains(envelope.epsilon_safe))
        throw std::domain_error("epsilon_safe must lie inside the loss range");
    if (!(p_max >= 0.0 && p_max <= 1.0)) throw std::invalid_argument("p_max must lie in [0, 1]");
}

double AdversarialLosses::cap(double lambda) const {
    if (lambda > envelope_.lambda_safe) return range_.hi;
    const std::size_t k = envelope_.k_horizon;
    const std::size_t m = std::min(run_.size() + 1, k);
    // The m - 1 most recent run losses plus this one, padded to K with the
    // range minimum, must not exceed K * epsilon_safe.
    const double recent = std::accumulate(run_.end() - static_cast<std::ptrdiff_t>(m - 1), run_.end(), 0.0);
    const double allowed = static_cast<double>(k) * envelope_.epsilon_safe -
                           static_cast<double>(k - m) * range_.lo - recent;
    return std::clamp(allowed, range_.lo, range_.hi);
}

double AdversarialLosses::next(double lambda, CounterRng& rng) {
    const double c = cap(lambda);
    const double u = rng.uniform();
    const double loss = u < p_max_ ? c : range_.lo + (c - range_.lo) * rng.uniform();
    if (lambda > envelope_.lambda_safe) {
        run_.clear();
    } else {
        run_.push_back(loss);
        if (run_.size() + 1 > envelope_.k_horizon) run_.erase(run_.begin());
    }
    return loss;
}

SequenceParams draw_params(CounterRng& rng, std::size_t k_max, const LossRange& range) {
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    SequenceParams p;
    p.range = range;
    p.eta = std::exp(std::log(0.01) + (std::log(10.0) - std::log(0.01)) * rng.uniform());
    p.epsilon = range.lo + range.width() * rng.uniform();
    p.envelope.epsilon_safe = range.lo + (p.epsilon - range.lo) * rng.uniform();
    p.envelope.k_horizon = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(k_max));
    p.envelope.lambda_safe = -5.0 + 10.0 * rng.uniform();
    const double reach = p.eta * range.width();
    p.lambda_1 = p.envelope.lambda_safe - reach + (reach + 10.0) * rng.uniform();
    return p;
}

SequenceCheck check_adversarial(const SequenceParams& params, std::size_t length, CounterRng& rng,
                                double p_max, RiskTrace* trace) {
    ConformalController controller(params.lambda_1, params.eta, params.epsilon, params.range);
    AdversarialLosses adversary(params.envelope, params.range, p_max);
    const double floor = lemma_floor(params.envelope, params.eta, params.range);

    SequenceCheck check;
    check.params = params;
    check.length = length;
    check.min_bound_slack = std::numeric_limits<double>::infinity();
    check.min_floor_slack = controller.lambda() - floor;
    CompensatedSum sum;
    for (std::size_t t = 1; t <= length; ++t) {
        const double lambda = controller.lambda();
        const double loss = adversary.next(lambda, rng);
        controller.update(loss);
        sum.add(loss);
        if (trace) trace->push(lambda, loss);

        const double risk = sum.value() / static_cast<double>(t);
        const double identity = telescoping_risk(params.lambda_1, controller.lambda(), params.eta, params.epsilon, t,
                                                 LossDirection::higher_lambda_more_aggressive);
        check.max_identity_error = std::max(check.max_identity_error, std::abs(identity - risk));

        const double floor_slack = controller.lambda() - floor;
        check.min_floor_slack = std::min(check.min_floor_slack, floor_slack);
        if (floor_slack < -kSlackTolerance) ++check.floor_violations;

        if (t >= params.envelope.k_horizon) {
            const double bound =
                theorem_bound(params.envelope, params.lambda_1, params.eta, params.epsilon, params.range, t);
            const double slack = bound - risk;
            check.min_bound_slack = std::min(check.min_bound_slack, slack);
            if (slack < -kSlackTolerance) ++check.bound_violations;
        }
    }
    if (trace) trace->set_final_lambda(controller.lambda());
    return check;
}

double telescoping_error(const SequenceParams& params, std::size_t length, LossDirection direction,
                         CounterRng& rng) {
    ConformalController controller(params.lambda_1, params.eta, params.epsilon, params.range, direction);
    CompensatedSum sum;
    double worst = 0.0;
    for (std::size_t t = 1; t <= length; ++t) {
        const double loss = params.range.lo + params.range.width() * rng.uniform();
        controller.update(loss);
        sum.add(loss);
        const double risk = sum.value() / static_cast<double>(t);
        const double identity =
            telescoping_risk(params.lambda_1, controller.lambda(), params.eta, params.epsilon, t, direction);
        worst = std::max(worst, std::abs(identity - risk));
    }
    return worst;
}

TheoryCheckRun run_theory_check(const TheoryCheckConfig& config, std::uint64_t seed) {
    if (config.sequences == 0 || config.length == 0)
        throw std::invalid_argument("theory check needs sequences >= 1 and length >= 1");
    TheoryCheckRun run;
    auto& s = run.summary;
    s.min_bound_slack = s.min_floor_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < config.sequences; ++i) {
        CounterRng rng(seed, kSequenceStream, i);
        const auto params = draw_params(rng, config.k_max);
        auto check = check_adversarial(params, config.length, rng, config.p_max);
        ++s.sequences;
        s.bound_violations += check.bound_violations;
        s.floor_violations += check.floor_violations;
        if (check.max_identity_error >= config.identity_tolerance) ++s.identity_violations;
        s.max_identity_error = std::max(s.max_identity_error, check.max_identity_error);
        s.min_bound_slack = std::min(s.min_bound_slack, check.min_bound_slack);
        s.min_floor_slack = std::min(s.min_floor_slack, check.min_floor_slack);
        run.sequences.push_back(std::move(check));
    }
    return run;
}

void write_csv(std::ostream& out, const TheoryCheckRun& run, const std::vector<std::string>& comments) {
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "sequence,eta,epsilon,lambda_1,lambda_safe,epsilon_safe,k,bound_violations,floor_violations,"
           "min_bound_slack,min_floor_slack,max_identity_error\n";
    std::size_t i = 0;
    for (const auto& c : run.sequences) {
        const auto& p = c.params;
        out << i++ << ',' << csv::fmt(p.eta) << ',' << csv::fmt(p.epsilon) << ',' << csv::fmt(p.lambda_1) << ','
            << csv::fmt(p.envelope.lambda_safe) << ',' << csv::fmt(p.envelope.epsilon_safe) << ','
            << p.envelope.k_horizon << ',' << c.bound_violations << ',' << c.floor_violations << ','
            << csv::fmt(c.min_bound_slack) << ',' << csv::fmt(c.min_floor_slack) << ','
            << csv::fmt(c.max_identity_error) << '\n';
    }
}

TheoryCheckSummary summarize_theory_csv(std::istream& in, double identity_tolerance) {
    const auto table = csv::read(in);
    const auto bound = table.numeric_column("bound_violations");
    const auto floor = table.numeric_column("floor_violations");
    const auto bslack = table.numeric_column("min_bound_slack");
    const auto fslack = table.numeric_column("min_floor_slack");
    const auto ident = table.numeric_column("max_identity_error");
    TheoryCheckSummary s;
    s.min_bound_slack = s.min_floor_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bound.size(); ++i) {
        ++s.sequences;
        s.bound_violations += static_cast<std::size_t>(bound[i]);
        s.floor_violations += static_cast<std::size_t>(floor[i]);
        if (ident[i] >= identity_tolerance) ++s.identity_violations;
        s.max_identity_error = std::max(s.max_identity_error, ident[i]);
        s.min_bound_slack = std::min(s.min_bound_slack, bslack[i]);
        s.min_floor_slack = std::min(s.min_floor_slack, fslack[i]);
    }
    return s;
}

}  // namespace cdt
