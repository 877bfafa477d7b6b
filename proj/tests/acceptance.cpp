// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every check recomputes its quantity from first principles or
// from the trace files the runner wrote.

#include "cdt/aci.hpp"
#include "cdt/batch.hpp"
#include "cdt/controller.hpp"
#include "cdt/csv.hpp"
#include "cdt/experiment.hpp"
#include "cdt/factory.hpp"
#include "cdt/nav_episode.hpp"
#include "cdt/rng.hpp"
#include "cdt/theory_check.hpp"

#include "nav_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace cdt;
namespace ex = cdt::experiment;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Report {
    int failures = 0;
    void line(const std::string& id, bool pass, const std::string& what) {
        std::cout << (pass ? "PASS " : "FAIL ") << id << ": " << what << std::endl;
        failures += pass ? 0 : 1;
    }
    static void info(const std::string& what) { std::cout << "INFO " << what << std::endl; }
};

std::string num(double v, int prec = 6) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

struct Digest {
    std::uint64_t h = 1469598103934665603ULL;
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) h = (h ^ c[i]) * 1099511628211ULL;
    }
    void add(double v) { bytes(&v, sizeof v); }
    void add(const std::string& s) { bytes(s.data(), s.size()); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const ex::SummaryRow* row(const ex::SummaryTable& t, const std::string& method, double setting) {
    for (const auto& r : t.rows)
        if (r.method == method && std::abs(r.setting - setting) < 1e-12) return &r;
    return nullptr;
}

double get(const ex::Metrics& m, const std::string& name) {
    for (const auto& [k, v] : m)
        if (k == name) return v;
    throw std::runtime_error("missing metric " + name);
}

// Criterion 1 with a digest of every lambda bit pattern and CSV
// text for the first sequences.
struct IdentityResult {
    double max_error = 0.0;
    std::uint64_t digest = 0;
    std::string csv_sample;
};

IdentityResult identity_run() {
    IdentityResult r;
    Digest d;
    std::ostringstream sample;
    for (std::uint64_t seq = 0; seq < 10000; ++seq) {
        CounterRng rng(2024, stream_id("acceptance/identity"), seq);
        const double eta = std::exp(std::log(0.01) + std::log(1000.0) * rng.uniform());
        const double eps = rng.uniform();
        const double l1 = -10.0 + 20.0 * rng.uniform();
        ConformalController c(l1, eta, eps);
        RiskTrace trace;
        long double sum = 0.0L;
        for (std::size_t t = 1; t <= 1000; ++t) {
            const double loss = rng.uniform();
            const double lambda = c.lambda();
            c.update(loss);
            sum += loss;
            const double risk = static_cast<double>(sum / static_cast<long double>(t));
            const double identity = eps + (l1 - c.lambda()) / (eta * static_cast<double>(t));
            r.max_error = std::max(r.max_error, std::abs(risk - identity));
            d.add(lambda);
            d.add(c.lambda());
            if (seq < 20) trace.push(lambda, loss);
        }
        if (seq < 20) write_csv(sample, trace, {"sequence=" + std::to_string(seq)});
    }
    r.digest = d.h;
    r.csv_sample = sample.str();
    return r;
}

struct BoundResult {
    std::size_t bound_violations = 0;
    std::size_t floor_violations = 0;
    double min_bound_slack = INFINITY;
    double min_floor_slack = INFINITY;
    std::uint64_t digest = 0;
};

BoundResult bound_run() {
    BoundResult r;
    Digest d;
    for (std::uint64_t seq = 0; seq < 1000; ++seq) {
        CounterRng rng(2024, stream_id("acceptance/bound"), seq);
        const auto p = draw_params(rng, 5, {0.0, 1.0});
        AdversarialLosses adv(p.envelope, {0.0, 1.0}, 0.9);
        ConformalController c(p.lambda_1, p.eta, p.epsilon);
        const double k = static_cast<double>(p.envelope.k_horizon);
        const double floor = p.envelope.lambda_safe - k * p.eta;
        long double sum = 0.0L;
        for (std::size_t t = 1; t <= 1000; ++t) {
            const double lambda = c.lambda();
            r.min_floor_slack = std::min(r.min_floor_slack, lambda - floor);
            if (lambda < floor) ++r.floor_violations;
            const double loss = adv.next(lambda, rng);
            c.update(loss);
            sum += loss;
            d.add(lambda);
            d.add(loss);
            if (t < p.envelope.k_horizon) continue;
            const double risk = static_cast<double>(sum / static_cast<long double>(t));
            const double bound =
                p.epsilon + ((p.lambda_1 - p.envelope.lambda_safe) / p.eta + k) / static_cast<double>(t);
            r.min_bound_slack = std::min(r.min_bound_slack, bound - risk);
            if (risk > bound + 1e-12) ++r.bound_violations;
        }
        if (c.lambda() < floor) ++r.floor_violations;
    }
    r.digest = d.h;
    return r;
}

struct AciResult {
    std::size_t mismatches = 0;
    std::string csv;
};

AciResult aci_run() {
    AciResult r;
    std::ostringstream csv;
    for (std::uint64_t seq = 0; seq < 100; ++seq) {
        CounterRng rng(2024, stream_id("acceptance/aci"), seq);
        const double target = 0.02 + 0.3 * rng.uniform();
        const double eta = 0.001 + 0.1 * rng.uniform();
        AciState aci{target, target, eta};
        ConformalController cc(target, eta, target);
        std::vector<AciRecord> records;
        for (int t = 0; t < 1000; ++t) {
            // A uniform score is covered by the level-alpha set iff u <= 1 - alpha;
            // each side uses its own level.
            const double u = rng.uniform();
            const bool covered_aci = u <= 1.0 - aci.alpha_t;
            const bool covered_cc = u <= 1.0 - cc.lambda();
            records.push_back({aci.alpha_t, !covered_aci});
            aci = aci_update(aci, covered_aci);
            cc.update(covered_cc ? 0.0 : 1.0);
            const double a = aci.alpha_t, b = cc.lambda();
            if (std::memcmp(&a, &b, sizeof a) != 0) ++r.mismatches;
        }
        write_aci_csv(csv, records);
    }
    r.csv = csv.str();
    return r;
}

struct BatchOracle {
    std::size_t trials = 0;
    std::size_t grid_mismatches = 0;
    double mean_loss = 0.0;
    double se = 0.0;
    std::uint64_t digest = 0;
};

BatchOracle batch_oracle(double eps) {
    const std::size_t n = 100, grid = 10000;
    BatchOracle out;
    Digest d;
    std::vector<double> losses;
    for (std::size_t trial = 0; trial < 500; ++trial) {
        CounterRng rng(2024, stream_id("acceptance/batch"), trial);
        std::vector<std::pair<double, double>> ramps(n + 1);
        for (auto& [u, s] : ramps) {
            u = rng.uniform();
            s = 0.05 + 0.45 * rng.uniform();
        }
        const auto ramp = [](const std::pair<double, double>& r, double lambda) {
            return std::min(1.0, std::max(0.0, (lambda - r.first) / r.second));
        };
        std::vector<LossCurve> curves;
        for (std::size_t i = 0; i < n; ++i)
            curves.emplace_back([r = ramps[i], &ramp](double l) { return ramp(r, l); }, LambdaDomain{0.0, 1.0});
        const auto cal = calibrate(curves, eps, {0.0, 1.0});
        const double threshold = eps - (1.0 - eps) / static_cast<double>(n);
        double grid_best = -1.0;
        for (std::size_t j = 0; j <= grid; ++j) {
            const double lambda = static_cast<double>(j) / static_cast<double>(grid);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += ramp(ramps[i], lambda);
            if (s / static_cast<double>(n) <= threshold) grid_best = lambda;
        }
        if (grid_best < 0.0 || std::abs(cal.lambda_hat - grid_best) > 1.0 / static_cast<double>(grid))
            ++out.grid_mismatches;
        losses.push_back(ramp(ramps[n], cal.lambda_hat));
        d.add(cal.lambda_hat);
        ++out.trials;
    }
    double s = 0, s2 = 0;
    for (double l : losses) {
        s += l;
        s2 += l * l;
    }
    const double m = s / losses.size();
    out.mean_loss = m;
    out.se = std::sqrt((s2 / losses.size() - m * m) / (losses.size() - 1.0));
    out.digest = d.h;
    return out;
}

struct Run {
    ex::SummaryTable table;
    double seconds = 0.0;
};

Run run_spec(const ex::ExperimentSpec& spec, const fs::path& dir) {
    ex::RunOptions o;
    o.output_dir = dir.string();
    const auto t0 = Clock::now();
    Run r{ex::run(spec, o), 0.0};
    r.seconds = seconds_since(t0);
    return r;
}

// Byte comparison of every trace file in two output directories.
std::pair<std::size_t, std::size_t> compare_traces(const fs::path& a, const fs::path& b) {
    std::size_t same = 0, differ = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const auto name = e.path().filename().string();
        if (name.find("_seed") == std::string::npos) continue;
        const auto other = b / name;
        if (fs::exists(other) && slurp(e.path()) == slurp(other)) ++same;
        else ++differ;
    }
    for (const auto& e : fs::directory_iterator(b))
        if (e.path().filename().string().find("_seed") != std::string::npos && !fs::exists(a / e.path().filename()))
            ++differ;
    return {same, differ};
}

}  // namespace

int main() {
    Report report;
    const fs::path root = fs::temp_directory_path() / ("cdt_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string scenarios = std::string(CDT_SOURCE_DIR) + "/scenarios/";

    try {
        // 1
        auto t0 = Clock::now();
        const auto ident = identity_run();
        const double t_ident = seconds_since(t0);
        report.line("1 telescoping identity", ident.max_error < 1e-9 && t_ident < 10.0,
                    "max |R_t - identity| = " + num(ident.max_error) + " over 10000 x 1000, " + num(t_ident, 3) +
                        " s");

        // 2
        t0 = Clock::now();
        const auto bound = bound_run();
        const double t_bound = seconds_since(t0);
        report.line("2 risk bound and lambda floor",
                    bound.bound_violations == 0 && bound.floor_violations == 0 && t_bound < 30.0,
                    std::to_string(bound.bound_violations) + " bound and " + std::to_string(bound.floor_violations) +
                        " floor violations over 1000 x 1000; min slacks " + num(bound.min_bound_slack) + ", " +
                        num(bound.min_floor_slack) + "; " + num(t_bound, 3) + " s");

        // 3
        const auto aci = aci_run();
        report.line("3 ACI equivalence", aci.mismatches == 0,
                    std::to_string(aci.mismatches) + " bitwise mismatches over 100 x 1000 steps");

        // 4
        auto factory_spec = ex::load_spec(scenarios + "factory.yaml");
        const auto factory = run_spec(factory_spec, root / "factory_a");
        {
            const double eps = factory_spec.settings.front();
            const auto* cc = row(factory.table, "cc", eps);
            const auto* ol = row(factory.table, "oracle_loss", eps);
            const auto* ucb = row(factory.table, "ucb", eps);
            const bool have = cc && ol && ucb && factory.table.failures() == 0;
            const double cc_r = have ? get(cc->means, "final_risk") : NAN;
            const double ol_r = have ? get(ol->means, "final_risk") : NAN;
            const double ucb_r = have ? get(ucb->means, "final_risk") : NAN;
            const double cc_u = have ? get(cc->means, "mean_utility") : NAN;
            const double ol_u = have ? get(ol->means, "mean_utility") : NAN;
            const bool pass = have && cc_r >= 0.040 && cc_r <= 0.055 && ol_r >= 0.040 && ol_r <= 0.055 &&
                              ucb_r > 0.05 && cc_u >= 0.95 * ol_u && factory.seconds < 120.0 &&
                              cc->runs == 1000;
            report.line("4 factory", pass,
                        "risk cc " + num(cc_r) + ", oracle_loss " + num(ol_r) + ", ucb " + num(ucb_r) +
                            "; utility cc " + num(cc_u) + " vs 0.95 x " + num(ol_u) + "; " +
                            num(factory.seconds, 3) + " s");
        }
        // Controller step size sweep (reported, not gated).
        for (double eta : {0.01, 0.05, 0.2, 1.0}) {
            factory::PolicyConfig cfg;
            cfg.eta = eta;
            double risk = 0.0, util = 0.0;
            const int seeds = 200;
            for (int s = 0; s < seeds; ++s) {
                factory::FactoryModel m;
                m.seed = static_cast<std::uint64_t>(s);
                const auto run = factory::run_policy(m, factory::Policy::cc, cfg);
                risk += run.final_risk();
                util += run.mean_utility();
            }
            Report::info("factory cc eta=" + num(eta) + ": mean final risk " + num(risk / seeds) +
                         ", mean utility " + num(util / seeds) + " (200 seeds)");
        }

        // 5
        {
            factory::FactoryModel m;
            m.seed = 99;
            bool ok = true;
            std::string detail;
            for (double lambda : {0.1, 0.5, 1.0}) {
                double s = 0, s2 = 0;
                std::size_t n = 0;
                for (std::uint64_t i = 0; i < 100000; ++i) {
                    const auto o = factory::step(m, lambda, i);
                    if (o.n_items == 0) continue;
                    s += o.loss;
                    s2 += o.loss * o.loss;
                    ++n;
                }
                const double mean = s / n;
                const double se = std::sqrt((s2 / n - mean * mean) / n);
                const double z = (mean - m.c_fail * lambda) / se;
                ok = ok && std::abs(z) <= 3.0;
                detail += "lambda " + num(lambda) + ": z=" + num(z, 3) + "; ";
            }
            double worst = 0.0;
            for (double cf : {0.2, 0.5, 0.8, 1.0, 2.0}) {
                factory::FactoryModel mm;
                mm.c_fail = cf;
                double best_l = 0.0, best_v = -INFINITY;
                for (int j = 0; j <= 100000; ++j) {
                    const double l = j / 100000.0;
                    const double v = mm.c_rate * std::sqrt(l) * (1.0 - cf * l);
                    if (v > best_v) {
                        best_v = v;
                        best_l = l;
                    }
                }
                worst = std::max(worst, std::abs(factory::oracle_value_speed(mm) - best_l));
            }
            ok = ok && worst <= 1e-3;
            report.line("5 factory analytics", ok,
                        detail + "conditional on n > 0; oracle_value_speed max grid gap " + num(worst));
        }

        // 6
        auto trading_spec = ex::load_spec(scenarios + "trading.yaml");
        const auto trading = run_spec(trading_spec, root / "trading_a");
        {
            const auto m = [&](const std::string& method, double rho, const std::string& metric, bool se = false) {
                const auto* r = row(trading.table, method, rho);
                if (!r) throw std::runtime_error("missing trading row " + method);
                return get(se ? r->standard_errors : r->means, metric);
            };
            const double cc_neg = m("cc", -0.05, "mean_yearly_loss");
            const double cc_neg_se = m("cc", -0.05, "mean_yearly_loss", true);
            const double aci = m("aci", 0.1, "mean_yearly_loss");
            const double cc = m("cc", 0.1, "mean_yearly_loss");
            const double cc_se = m("cc", 0.1, "mean_yearly_loss", true);
            const double greedy = m("greedy", 0.1, "mean_yearly_loss");
            const double g_ret = m("greedy", 0.1, "mean_yearly_return");
            const double cc_ret = m("cc", 0.1, "mean_yearly_return");
            const double eps = trading_spec.trading_strategy.epsilon_yearly;
            const bool pass = trading.table.failures() == 0 && cc_neg <= eps + 2 * cc_neg_se && aci < cc &&
                              cc <= eps + 2 * cc_se && eps + 2 * cc_se < greedy && g_ret >= cc_ret &&
                              trading.seconds < 120.0;
            report.line("6 trading", pass,
                        "rho -0.05: cc loss " + num(cc_neg) + " (se " + num(cc_neg_se) + "); rho 0.1: aci " + num(aci) +
                            " < cc " + num(cc) + " <= " + num(eps + 2 * cc_se) + " < greedy " + num(greedy) +
                            "; return greedy " + num(g_ret) + " >= cc " + num(cc_ret) + "; " +
                            num(trading.seconds, 3) + " s");
        }

        // 7
        auto nav_spec = ex::load_spec(scenarios + "crossing_crowd.yaml");
        t0 = Clock::now();
        const auto nav = run_spec(nav_spec, root / "nav_a");
        std::size_t argmin_steps = 0, argmin_mismatch = 0;
        {
            auto s = nav_spec.nav;
            s.variant = nav::PlannerVariant::conformal;
            s.eta = nav_spec.settings.front();
            s.seed = 0;
            s.goal = nav::Vec2(0.0, 30.0);  // far enough that all 50 steps are played
            s.time_budget = 50 * s.limits.dt;
            nav::run_episode(s, [&](const nav::PlanContext& c) {
                ++argmin_steps;
                const auto want = oracle::argmin(c.request, c.predictions);
                if (want != c.chosen.candidate &&
                    std::abs(oracle::cost_of(c.request, c.predictions, want) -
                             oracle::cost_of(c.request, c.predictions, c.chosen.candidate)) >
                        1e-9 * std::max(1.0, std::abs(oracle::cost_of(c.request, c.predictions, want))))
                    ++argmin_mismatch;
            });
        }
        const double t_nav = seconds_since(t0);
        {
            std::map<std::uint64_t, std::map<std::string, ex::Metrics>> by_seed;
            for (const auto& c : nav.table.cells) by_seed[c.cell.seed][c.cell.method] = c.metrics;
            std::size_t aggressive_hits = 0, cc_hits = 0, cons_success = 0, cc_success = 0, faster = 0;
            for (auto& [seed, m] : by_seed) {
                aggressive_hits += get(m["aggressive"], "collision_steps");
                cc_hits += get(m["conformal"], "collision_steps");
                cons_success += get(m["conservative"], "success") > 0.5;
                cc_success += get(m["conformal"], "success") > 0.5;
                faster += get(m["conformal"], "time_s") < get(m["aci"], "time_s");
            }
            const std::size_t n = by_seed.size();
            report.line("7a nav collisions", nav.table.failures() == 0 && aggressive_hits >= 1 && cc_hits == 0,
                        "aggressive " + std::to_string(aggressive_hits) + " steps below the collision radius, cc " +
                            std::to_string(cc_hits) + " over " + std::to_string(n) + " seeds");
            report.line("7b nav conservative stalls", cons_success == 0 && cc_success == n,
                        "conservative reached the goal on " + std::to_string(cons_success) + "/" + std::to_string(n) +
                            " seeds, cc on " + std::to_string(cc_success) + "/" + std::to_string(n));
            report.line("7c nav cc faster than aci", faster == n,
                        "cc strictly faster on " + std::to_string(faster) + "/" + std::to_string(n) +
                            " paired seeds (aci failure counts as infinite time)");
            report.line("7d nav planner argmin", argmin_steps == 50 && argmin_mismatch == 0 && t_nav < 60.0,
                        std::to_string(argmin_mismatch) + " mismatches over " + std::to_string(argmin_steps) +
                            " steps; nav total " + num(t_nav, 3) + " s");
        }

        // 8
        auto batch_spec = ex::load_spec(scenarios + "batch.yaml");
        const auto batch = run_spec(batch_spec, root / "batch_a");
        std::map<double, BatchOracle> oracles;
        {
            bool ok = batch.table.failures() == 0;
            std::string detail;
            for (double eps : {0.1, 0.3}) {
                const auto* r = row(batch.table, "batch", eps);
                if (!r) throw std::runtime_error("missing batch row");
                // Runner trials, recomputed from its trace file.
                const auto trace =
                    csv::read_file((root / "batch_a" / ex::Cell{"batch", eps, 0}.trace_name()).string());
                const auto held = trace.numeric_column("held_out_loss");
                const auto lam = trace.numeric_column("lambda_hat");
                const auto grid = trace.numeric_column("grid_lambda");
                double s = 0, s2 = 0;
                std::size_t off = 0;
                for (std::size_t i = 0; i < held.size(); ++i) {
                    s += held[i];
                    s2 += held[i] * held[i];
                    off += std::abs(lam[i] - grid[i]) > 1e-4;
                }
                const double mean = s / held.size();
                const double se = std::sqrt((s2 / held.size() - mean * mean) / (held.size() - 1.0));
                const auto o = batch_oracle(eps);
                oracles[eps] = o;
                ok = ok && held.size() == 500 && mean <= eps + 2 * se && off == 0 && o.trials == 500 &&
                     o.mean_loss <= eps + 2 * o.se && o.grid_mismatches == 0;
                detail += "eps " + num(eps) + ": runner held-out " + num(mean) + " (se " + num(se) + ", " +
                          std::to_string(off) + " grid misses), independent " + num(o.mean_loss) + " (se " +
                          num(o.se) + ", " + std::to_string(o.grid_mismatches) + " grid misses); ";
            }
            report.line("8 batch calibration", ok, detail);
        }

        // Theory traces from the runner, for the determinism rerun.
        auto theory_spec = ex::load_spec(scenarios + "theory_check.yaml");
        run_spec(theory_spec, root / "theory_a");

        // 9
        {
            std::size_t same = 0, differ = 0;
            const auto tally = [&](std::pair<std::size_t, std::size_t> r) {
                same += r.first;
                differ += r.second;
            };
            const auto again = identity_run();
            differ += again.digest != ident.digest || again.csv_sample != ident.csv_sample;
            same += again.digest == ident.digest && again.csv_sample == ident.csv_sample;
            const auto b2 = bound_run();
            differ += b2.digest != bound.digest;
            same += b2.digest == bound.digest;
            const auto a2 = aci_run();
            differ += a2.csv != aci.csv;
            same += a2.csv == aci.csv;
            for (double eps : {0.1, 0.3}) {
                const bool eq = batch_oracle(eps).digest == oracles[eps].digest;
                same += eq;
                differ += !eq;
            }
            run_spec(factory_spec, root / "factory_b");
            tally(compare_traces(root / "factory_a", root / "factory_b"));
            fs::remove_all(root / "factory_b");
            run_spec(trading_spec, root / "trading_b");
            tally(compare_traces(root / "trading_a", root / "trading_b"));
            run_spec(nav_spec, root / "nav_b");
            tally(compare_traces(root / "nav_a", root / "nav_b"));
            run_spec(batch_spec, root / "batch_b");
            tally(compare_traces(root / "batch_a", root / "batch_b"));
            run_spec(theory_spec, root / "theory_b");
            tally(compare_traces(root / "theory_a", root / "theory_b"));
            report.line("9 determinism", differ == 0 && same > 0,
                        std::to_string(same) + " identical, " + std::to_string(differ) + " differing trace files");
        }
    } catch (const std::exception& e) {
        report.line("suite", false, std::string("aborted: ") + e.what());
    }
    fs::remove_all(root);
    std::cout << (report.failures ? "acceptance: FAILED (" + std::to_string(report.failures) + ")"
                                  : std::string("acceptance: all criteria passed"))
              << std::endl;
    return report.failures ? 1 : 0;
}
