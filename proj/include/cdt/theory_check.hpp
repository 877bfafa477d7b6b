#pragma once

// Executable checks of the controller's guarantees: the telescoping
// identity on random bounded losses, and the risk bound plus lambda floor
// on adversarial losses that honor a safety envelope.

#include "cdt/controller.hpp"
#include "cdt/risk_trace.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace cdt {

class CounterRng;

// Draws losses in the aggressive frame, pushing toward the range maximum
// except where the envelope contract forbids it: every window of K
// consecutive steps with lambda <= lambda_safe must have mean loss
// <= epsilon_safe. Stateful; call next() once per step with the lambda in
// force for that step.
class AdversarialLosses {
public:
    AdversarialLosses(const SafetyEnvelope& envelope, LossRange range, double p_max);

    double next(double lambda, CounterRng& rng);

    // Largest loss the contract allows at the next step, given lambda.
    double cap(double lambda) const;

private:
    SafetyEnvelope envelope_;
    LossRange range_;
    double p_max_;
    std::vector<double> run_;  // losses of the current all-safe run, newest last, at most K - 1 kept
};

struct SequenceParams {
    double eta = 1.0;
    double epsilon = 0.1;
    double lambda_1 = 0.0;
    SafetyEnvelope envelope;
    LossRange range;
};

// Random parameters satisfying the theorem's preconditions.
SequenceParams draw_params(CounterRng& rng, std::size_t k_max, const LossRange& range = {});

struct SequenceCheck {
    SequenceParams params;
    std::size_t length = 0;
    std::size_t bound_violations = 0;
    std::size_t floor_violations = 0;
    double min_bound_slack = 0.0;  // min over t >= K of bound(t) - risk(t)
    double min_floor_slack = 0.0;  // min over t of lambda_t - floor
    double max_identity_error = 0.0;
};

// Runs the aggressive controller against AdversarialLosses and checks
// every step.
SequenceCheck check_adversarial(const SequenceParams& params, std::size_t length, CounterRng& rng,
                                double p_max = 0.9, RiskTrace* trace = nullptr);

// Runs either orientation on uniform random losses and records the largest
// |R_t - (eps +/- (lambda_1 - lambda_{t+1}) / (eta t))| over the sequence.
double telescoping_error(const SequenceParams& params, std::size_t length, LossDirection direction,
                         CounterRng& rng);

struct TheoryCheckConfig {
    std::size_t sequences = 1000;
    std::size_t length = 1000;
    std::size_t k_max = 5;
    double p_max = 0.9;
    double identity_tolerance = 1e-9;
};

struct TheoryCheckSummary {
    std::size_t sequences = 0;
    std::size_t bound_violations = 0;
    std::size_t floor_violations = 0;
    std::size_t identity_violations = 0;
    double max_identity_error = 0.0;
    double min_bound_slack = 0.0;
    double min_floor_slack = 0.0;
    std::size_t violations() const { return bound_violations + floor_violations + identity_violations; }
};

struct TheoryCheckRun {
    TheoryCheckSummary summary;
    std::vector<SequenceCheck> sequences;
};

// One seed's worth of adversarial sequences; sequence i draws from stream
// "theory/sequence" at counter i.
TheoryCheckRun run_theory_check(const TheoryCheckConfig& config, std::uint64_t seed);

// Per-sequence rows: `sequence,eta,epsilon,lambda_1,lambda_safe,epsilon_safe,k,
// bound_violations,floor_violations,min_bound_slack,min_floor_slack,max_identity_error`.
void write_csv(std::ostream& out, const TheoryCheckRun& run, const std::vector<std::string>& comments = {});
TheoryCheckSummary summarize_theory_csv(std::istream& in, double identity_tolerance = 1e-9);

}  // namespace cdt
