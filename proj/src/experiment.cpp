#include "cdt/experiment.hpp"

#include "cdt/batch.hpp"
#include "cdt/csv.hpp"
#include "cdt/rng.hpp"
#include "cdt/stats.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace cdt::experiment {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBatchStream = stream_id("batch/curves");

// ---- YAML helpers ---------------------------------------------------------

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) throw ValidationError(path, "expected a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ValidationError(path.empty() ? key : path + "." + key, "unknown key");
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, const std::string& path, T& out) {
    const auto child = node[key];
    if (!child) return;
    try {
        out = child.as<T>();
    } catch (const YAML::Exception&) {
        throw ValidationError(path.empty() ? std::string(key) : path + "." + key, "wrong type");
    }
}

nav::Vec2 read_vec2(const YAML::Node& node, const std::string& field) {
    if (!node.IsSequence() || node.size() != 2) throw ValidationError(field, "expected [x, y]");
    try {
        return {node[0].as<double>(), node[1].as<double>()};
    } catch (const YAML::Exception&) {
        throw ValidationError(field, "expected numbers");
    }
}

// A scalar or a list of numbers.
std::vector<double> read_sweep(const YAML::Node& node, const std::string& field) {
    try {
        if (node.IsScalar()) return {node.as<double>()};
        if (node.IsSequence() && node.size() > 0) return node.as<std::vector<double>>();
    } catch (const YAML::Exception&) {
    }
    throw ValidationError(field, "expected a number or a non-empty list of numbers");
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    const fs::path p(path);
    return p.is_absolute() ? path : (fs::path(base_dir) / p).string();
}

void parse_nav(const YAML::Node& p, const std::string& base_dir, ExperimentSpec& spec) {
    check_keys(p, "params",
               {"start", "start_heading", "goal", "goal_tolerance", "v_max", "omega_max", "dt", "horizon",
                "candidates", "heading_weight", "eta", "epsilon", "lambda_init", "lambda_max", "aci_alpha",
                "aci_eta", "aci_window", "clip", "collision_radius", "time_budget", "predictor_order",
                "predictor_max_speed", "history_window", "sensing_radius", "warmup_steps", "bounds", "obstacles",
                "crowd", "script", "sdd"});
    auto& s = spec.nav;
    const std::string P = "params";
    if (p["start"]) s.start = read_vec2(p["start"], P + ".start");
    if (p["goal"]) s.goal = read_vec2(p["goal"], P + ".goal");
    read(p, "start_heading", P, s.start_heading);
    read(p, "goal_tolerance", P, s.goal_tolerance);
    read(p, "v_max", P, s.limits.v_max);
    read(p, "omega_max", P, s.limits.omega_max);
    read(p, "dt", P, s.limits.dt);
    read(p, "horizon", P, s.horizon);
    read(p, "candidates", P, s.candidates);
    read(p, "heading_weight", P, s.heading_weight);
    read(p, "epsilon", P, s.epsilon);
    read(p, "lambda_init", P, s.lambda_init);
    read(p, "lambda_max", P, s.lambda_max);
    read(p, "aci_alpha", P, s.aci_alpha);
    read(p, "aci_eta", P, s.aci_eta);
    read(p, "aci_window", P, s.aci_window);
    read(p, "clip", P, s.clip);
    read(p, "collision_radius", P, s.collision_radius);
    read(p, "time_budget", P, s.time_budget);
    read(p, "predictor_order", P, s.predictor.order);
    read(p, "predictor_max_speed", P, s.predictor.max_speed);
    read(p, "history_window", P, s.history_window);
    read(p, "sensing_radius", P, s.sensing_radius);
    read(p, "warmup_steps", P, s.warmup_steps);
    if (p["eta"]) spec.settings = read_sweep(p["eta"], P + ".eta");
    else spec.settings = {s.eta};

    if (const auto b = p["bounds"]) {
        std::vector<double> v;
        read(p, "bounds", P, v);
        if (v.size() != 4) throw ValidationError(P + ".bounds", "expected [x_min, x_max, y_min, y_max]");
        s.bounds = {v[0], v[1], v[2], v[3]};
    }
    if (const auto obs = p["obstacles"]) {
        std::vector<std::vector<double>> v;
        read(p, "obstacles", P, v);
        for (const auto& o : v) {
            if (o.size() != 3) throw ValidationError(P + ".obstacles", "each obstacle is [x, y, radius]");
            s.obstacles.push_back({nav::Vec2(o[0], o[1]), o[2]});
        }
    }

    const int sources = (p["crowd"] ? 1 : 0) + (p["script"] ? 1 : 0) + (p["sdd"] ? 1 : 0);
    if (sources > 1) throw ValidationError(P + ".crowd", "crowd, script and sdd are mutually exclusive");
    if (sources == 0 || p["crowd"]) {
        nav::CrowdConfig c;
        if (const auto n = p["crowd"]) {
            const std::string C = P + ".crowd";
            check_keys(n, C,
                       {"count", "x_extent", "y_min", "y_max", "speed_min", "speed_max", "heading_noise",
                        "heading_reversion"});
            read(n, "count", C, c.count);
            read(n, "x_extent", C, c.x_extent);
            read(n, "y_min", C, c.y_min);
            read(n, "y_max", C, c.y_max);
            read(n, "speed_min", C, c.speed_min);
            read(n, "speed_max", C, c.speed_max);
            read(n, "heading_noise", C, c.heading_noise);
            read(n, "heading_reversion", C, c.heading_reversion);
        }
        s.crowd = c;
    } else if (p["script"]) {
        std::string path;
        read(p, "script", P, path);
        std::ifstream in(resolve(base_dir, path));
        if (!in) throw ValidationError(P + ".script", "cannot open '" + path + "'");
        s.script = nav::read_script_csv(in);
    } else {
        const auto n = p["sdd"];
        const std::string C = P + ".sdd";
        check_keys(n, C, {"path", "scale", "stride"});
        std::string path;
        double scale = 1.0;
        std::size_t stride = 1;
        read(n, "path", C, path);
        read(n, "scale", C, scale);
        read(n, "stride", C, stride);
        if (path.empty()) throw ValidationError(C + ".path", "required");
        if (!(scale > 0.0)) throw ValidationError(C + ".scale", "must be > 0");
        if (stride == 0) throw ValidationError(C + ".stride", "must be >= 1");
        s.script = nav::ingest_sdd_file(resolve(base_dir, path), scale, stride).frames;
    }
}

void parse_factory(const YAML::Node& p, ExperimentSpec& spec) {
    check_keys(p, "params", {"horizon", "c_rate", "c_fail", "epsilon", "eta", "lambda_init", "arms"});
    const std::string P = "params";
    read(p, "horizon", P, spec.factory_policy.horizon);
    read(p, "c_rate", P, spec.factory_model.c_rate);
    read(p, "c_fail", P, spec.factory_model.c_fail);
    read(p, "eta", P, spec.factory_policy.eta);
    read(p, "lambda_init", P, spec.factory_policy.lambda_init);
    read(p, "arms", P, spec.factory_policy.arms);
    spec.settings = p["epsilon"] ? read_sweep(p["epsilon"], P + ".epsilon")
                                 : std::vector<double>{spec.factory_policy.epsilon};
}

void parse_trading(const YAML::Node& p, ExperimentSpec& spec) {
    check_keys(p, "params",
               {"mu", "sigma", "rho", "steps_per_year", "years", "epsilon_yearly", "eta", "lambda_init", "clip",
                "aci_alpha", "aci_eta"});
    const std::string P = "params";
    read(p, "mu", P, spec.market.mu);
    read(p, "sigma", P, spec.market.sigma);
    read(p, "steps_per_year", P, spec.market.steps_per_year);
    read(p, "years", P, spec.market.years);
    read(p, "epsilon_yearly", P, spec.trading_strategy.epsilon_yearly);
    read(p, "eta", P, spec.trading_strategy.eta);
    read(p, "lambda_init", P, spec.trading_strategy.lambda_init);
    read(p, "clip", P, spec.trading_strategy.clip);
    read(p, "aci_alpha", P, spec.trading_strategy.aci_alpha_target);
    read(p, "aci_eta", P, spec.trading_strategy.aci_eta);
    spec.settings = p["rho"] ? read_sweep(p["rho"], P + ".rho") : std::vector<double>{spec.market.rho};
}

void parse_batch(const YAML::Node& p, ExperimentSpec& spec) {
    check_keys(p, "params", {"n", "trials", "s_min", "s_max", "grid_points", "epsilon"});
    const std::string P = "params";
    read(p, "n", P, spec.batch.n);
    read(p, "trials", P, spec.batch.trials);
    read(p, "s_min", P, spec.batch.s_min);
    read(p, "s_max", P, spec.batch.s_max);
    read(p, "grid_points", P, spec.batch.grid_points);
    spec.settings = p["epsilon"] ? read_sweep(p["epsilon"], P + ".epsilon") : std::vector<double>{0.1};
}

void parse_theory(const YAML::Node& p, ExperimentSpec& spec) {
    check_keys(p, "params", {"sequences", "length", "k_max", "p_max", "identity_tolerance"});
    const std::string P = "params";
    read(p, "sequences", P, spec.theory.sequences);
    read(p, "length", P, spec.theory.length);
    read(p, "k_max", P, spec.theory.k_max);
    read(p, "p_max", P, spec.theory.p_max);
    read(p, "identity_tolerance", P, spec.theory.identity_tolerance);
    spec.settings = {0.0};
}

std::vector<std::string> default_methods(Environment e) {
    switch (e) {
        case Environment::nav: return {"conformal", "aci", "aggressive", "conservative"};
        case Environment::factory: return {"cc", "ucb", "lcb", "oracle_loss", "oracle_value"};
        case Environment::trading: return {"cc", "aci", "buy_hold", "greedy"};
        case Environment::batch: return {"batch"};
        case Environment::theory_check: return {"cc"};
    }
    return {};
}

const std::vector<std::string>& metric_names(Environment e) {
    static const std::vector<std::string> nav = {"success",  "time_s", "safe", "min_dist",        "avg_dist",
                                                 "q05",      "q10",    "q25",  "q50",             "collision_steps",
                                                 "close_steps", "steps"};
    static const std::vector<std::string> factory = {"final_risk", "mean_utility"};
    static const std::vector<std::string> trading = {"mean_yearly_loss", "mean_yearly_return", "final_cum_loss",
                                                     "final_cum_return"};
    static const std::vector<std::string> batch = {"mean_held_out_loss", "se_held_out_loss", "mean_lambda_hat",
                                                   "max_grid_gap",       "grid_mismatches",  "infeasible_trials"};
    static const std::vector<std::string> theory = {"violations",          "bound_violations", "floor_violations",
                                                    "identity_violations", "max_identity_error",
                                                    "min_bound_slack",     "min_floor_slack"};
    switch (e) {
        case Environment::nav: return nav;
        case Environment::factory: return factory;
        case Environment::trading: return trading;
        case Environment::batch: return batch;
        case Environment::theory_check: return theory;
    }
    return theory;
}

std::string fmt_setting(double v) {
    std::ostringstream o;
    o << v;
    return o.str();
}

std::string sanitize(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

nav::NavScenario nav_cell(const ExperimentSpec& spec, const Cell& cell) {
    auto s = spec.nav;
    s.variant = nav::parse_variant(cell.method);
    s.eta = cell.setting;
    s.seed = cell.seed;
    return s;
}

factory::PolicyConfig factory_cell(const ExperimentSpec& spec, const Cell& cell) {
    auto c = spec.factory_policy;
    c.epsilon = cell.setting;
    return c;
}

trading::MarketModel market_cell(const ExperimentSpec& spec, const Cell& cell) {
    auto m = spec.market;
    m.rho = cell.setting;
    m.seed = cell.seed;
    return m;
}

// ---- trace writers --------------------------------------------------------

void write_factory_trace(std::ostream& out, const factory::PolicyRun& run, const std::vector<std::string>& comment) {
    for (const auto& c : comment) out << "# " << c << '\n';
    out << "t,lambda,loss,risk,utility\n";
    const auto& steps = run.trace.steps();
    for (std::size_t i = 0; i < steps.size(); ++i)
        out << i + 1 << ',' << csv::fmt(steps[i].lambda) << ',' << csv::fmt(steps[i].loss) << ','
            << csv::fmt(steps[i].risk) << ',' << csv::fmt(run.utility[i]) << '\n';
}

void write_batch_trace(std::ostream& out, const std::vector<BatchTrial>& trials,
                       const std::vector<std::string>& comment) {
    for (const auto& c : comment) out << "# " << c << '\n';
    out << "trial,lambda_hat,grid_lambda,held_out_loss,infeasible\n";
    for (std::size_t i = 0; i < trials.size(); ++i)
        out << i << ',' << csv::fmt(trials[i].lambda_hat) << ',' << csv::fmt(trials[i].grid_lambda) << ','
            << csv::fmt(trials[i].held_out_loss) << ',' << (trials[i].infeasible ? 1 : 0) << '\n';
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

std::string_view to_string(Environment e) {
    switch (e) {
        case Environment::nav: return "nav";
        case Environment::factory: return "factory";
        case Environment::trading: return "trading";
        case Environment::batch: return "batch";
        case Environment::theory_check: return "theory_check";
    }
    return "?";
}

Environment parse_environment(std::string_view name) {
    for (auto e : {Environment::nav, Environment::factory, Environment::trading, Environment::batch,
                   Environment::theory_check})
        if (to_string(e) == name) return e;
    throw ValidationError("environment",
                          "unknown value '" + std::string(name) + "'; expected nav, factory, trading, batch or theory_check");
}

std::string_view setting_key(Environment e) {
    switch (e) {
        case Environment::nav: return "eta";
        case Environment::factory: return "epsilon";
        case Environment::trading: return "rho";
        case Environment::batch: return "epsilon";
        case Environment::theory_check: return "setting";
    }
    return "setting";
}

ExperimentSpec parse_spec(std::istream& in, const std::string& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(in);
    } catch (const YAML::ParserException& e) {
        throw ValidationError("yaml", "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root || !root.IsMap()) throw ValidationError("spec", "expected a mapping at top level");
    check_keys(root, "", {"environment", "seeds", "seed_base", "seed_count", "output_dir", "methods", "params"});

    ExperimentSpec spec;
    if (!root["environment"]) throw ValidationError("environment", "required");
    spec.environment = parse_environment(root["environment"].as<std::string>());

    if (root["seeds"]) {
        if (root["seed_base"] || root["seed_count"])
            throw ValidationError("seeds", "give either seeds or seed_base/seed_count, not both");
        read(root, "seeds", "", spec.seeds);
    } else {
        std::uint64_t base = 0, count = 1;
        read(root, "seed_base", "", base);
        read(root, "seed_count", "", count);
        for (std::uint64_t i = 0; i < count; ++i) spec.seeds.push_back(base + i);
    }
    read(root, "output_dir", "", spec.output_dir);
    if (root["output_dir"]) spec.output_dir = resolve(base_dir, spec.output_dir);
    read(root, "methods", "", spec.methods);
    if (spec.methods.empty()) spec.methods = default_methods(spec.environment);

    const auto p = root["params"] ? root["params"] : YAML::Node(YAML::NodeType::Map);
    switch (spec.environment) {
        case Environment::nav: parse_nav(p, base_dir, spec); break;
        case Environment::factory: parse_factory(p, spec); break;
        case Environment::trading: parse_trading(p, spec); break;
        case Environment::batch: parse_batch(p, spec); break;
        case Environment::theory_check: parse_theory(p, spec); break;
    }
    return spec;
}

ExperimentSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spec '" + path + "'");
    return parse_spec(in, fs::path(path).parent_path().string());
}

void validate(const ExperimentSpec& spec) {
    if (spec.seeds.empty()) throw ValidationError("seeds", "at least one seed is required");
    if (std::set<std::uint64_t>(spec.seeds.begin(), spec.seeds.end()).size() != spec.seeds.size())
        throw ValidationError("seeds", "duplicate seed");
    if (spec.output_dir.empty()) throw ValidationError("output_dir", "required");
    if (spec.settings.empty()) throw ValidationError("params", "no parameter setting");
    if (std::set<std::string>(spec.methods.begin(), spec.methods.end()).size() != spec.methods.size())
        throw ValidationError("methods", "duplicate method");
    const std::string key(setting_key(spec.environment));
    for (double v : spec.settings)
        if (!std::isfinite(v)) throw ValidationError("params." + key, "must be finite");

    const auto check = [](bool ok, const std::string& field, const std::string& msg) {
        if (!ok) throw ValidationError(field, msg);
    };
    switch (spec.environment) {
        case Environment::nav:
            for (const auto& m : spec.methods) {
                try {
                    nav::parse_variant(m);
                } catch (const std::invalid_argument& e) {
                    throw ValidationError("methods", e.what());
                }
                for (double eta : spec.settings) {
                    try {
                        nav::validate(nav_cell(spec, {m, eta, spec.seeds.front()}));
                    } catch (const std::invalid_argument& e) {
                        throw ValidationError("params", e.what());
                    }
                }
            }
            break;
        case Environment::factory: {
            const auto& m = spec.factory_model;
            const auto& c = spec.factory_policy;
            for (const auto& name : spec.methods) {
                try {
                    factory::parse_policy(name);
                } catch (const std::invalid_argument& e) {
                    throw ValidationError("methods", e.what());
                }
            }
            check(m.c_rate > 0.0 && std::isfinite(m.c_rate), "params.c_rate", "must be > 0");
            check(m.c_fail >= 0.0 && m.c_fail <= 1.0, "params.c_fail", "must lie in [0, 1]");
            check(c.horizon >= 1, "params.horizon", "must be >= 1");
            check(c.eta > 0.0 && std::isfinite(c.eta), "params.eta", "must be > 0");
            check(std::isfinite(c.lambda_init), "params.lambda_init", "must be finite");
            check(c.arms >= 2, "params.arms", "must be >= 2");
            for (double eps : spec.settings) check(eps > 0.0 && eps < 1.0, "params.epsilon", "must lie in (0, 1)");
            break;
        }
        case Environment::trading: {
            const auto& m = spec.market;
            const auto& c = spec.trading_strategy;
            for (const auto& name : spec.methods) {
                try {
                    trading::parse_strategy(name);
                } catch (const std::invalid_argument& e) {
                    throw ValidationError("methods", e.what());
                }
            }
            check(std::isfinite(m.mu), "params.mu", "must be finite");
            check(m.sigma > 0.0 && std::isfinite(m.sigma), "params.sigma", "must be > 0");
            check(m.steps_per_year >= 1, "params.steps_per_year", "must be >= 1");
            check(m.years >= 1, "params.years", "must be >= 1");
            check(c.epsilon_yearly > 0.0 && std::isfinite(c.epsilon_yearly), "params.epsilon_yearly", "must be > 0");
            check(c.eta > 0.0 && std::isfinite(c.eta), "params.eta", "must be > 0");
            check(std::isfinite(c.lambda_init), "params.lambda_init", "must be finite");
            check(std::isfinite(c.clip), "params.clip", "must be finite");
            check(c.aci_alpha_target > 0.0 && c.aci_alpha_target < 1.0, "params.aci_alpha", "must lie in (0, 1)");
            check(c.aci_eta > 0.0 && std::isfinite(c.aci_eta), "params.aci_eta", "must be > 0");
            for (double rho : spec.settings) check(rho >= -1.0 && rho <= 1.0, "params.rho", "must lie in [-1, 1]");
            if (c.clip > 0.0) {
                const double eps_step = c.epsilon_yearly / static_cast<double>(m.steps_per_year);
                check(eps_step <= c.clip, "params.epsilon_yearly", "per-step target exceeds the loss clip");
            }
            break;
        }
        case Environment::batch: {
            const auto& b = spec.batch;
            for (const auto& name : spec.methods)
                check(name == "batch", "methods", "batch supports only the 'batch' method");
            check(b.n >= 1, "params.n", "must be >= 1");
            check(b.trials >= 1, "params.trials", "must be >= 1");
            check(b.s_min > 0.0 && b.s_min <= b.s_max && std::isfinite(b.s_max), "params.s_min",
                  "need 0 < s_min <= s_max");
            check(b.grid_points >= 1, "params.grid_points", "must be >= 1");
            for (double eps : spec.settings) {
                check(eps > 0.0 && eps < 1.0, "params.epsilon", "must lie in (0, 1)");
                check(batch_threshold(eps, b.n) > 0.0, "params.epsilon",
                      "epsilon - (1 - epsilon) / n must be positive");
            }
            break;
        }
        case Environment::theory_check: {
            const auto& t = spec.theory;
            for (const auto& name : spec.methods)
                check(name == "cc", "methods", "theory_check supports only the 'cc' method");
            check(t.sequences >= 1, "params.sequences", "must be >= 1");
            check(t.length >= 1, "params.length", "must be >= 1");
            check(t.k_max >= 1, "params.k_max", "must be >= 1");
            check(t.p_max >= 0.0 && t.p_max <= 1.0, "params.p_max", "must lie in [0, 1]");
            check(t.identity_tolerance > 0.0, "params.identity_tolerance", "must be > 0");
            break;
        }
    }
}

std::string Cell::trace_name() const {
    return method + "_" + fmt_setting(setting) + "_seed" + std::to_string(seed) + ".csv";
}

std::vector<Cell> cells(const ExperimentSpec& spec) {
    std::vector<Cell> out;
    for (double setting : spec.settings)
        for (const auto& m : spec.methods)
            for (auto seed : spec.seeds) out.push_back({m, setting, seed});
    return out;
}

std::size_t SummaryTable::failures() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok; }));
}

std::size_t effective_workers(std::size_t requested) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("CDT_MAX_WORKERS"); cap && *cap) {
        char* end = nullptr;
        const long v = std::strtol(cap, &end, 10);
        if (*end != '\0' || v < 1) throw ValidationError("CDT_MAX_WORKERS", "must be a positive integer");
        n = std::min(n, static_cast<std::size_t>(v));
    }
    return n;
}

BatchTrial run_batch_trial(const BatchParams& params, double epsilon, std::uint64_t seed, std::size_t trial) {
    CounterRng rng(seed, kBatchStream, trial);
    struct Ramp {
        double u, s;
        double operator()(double lambda) const { return std::clamp((lambda - u) / s, 0.0, 1.0); }
    };
    const auto draw = [&] { return Ramp{rng.uniform(), params.s_min + (params.s_max - params.s_min) * rng.uniform()}; };
    std::vector<LossCurve> curves;
    curves.reserve(params.n);
    for (std::size_t i = 0; i < params.n; ++i) curves.emplace_back(draw(), LambdaDomain{0.0, 1.0});
    const Ramp fresh = draw();

    const auto cal = calibrate(curves, epsilon, {0.0, 1.0});
    BatchTrial out;
    out.lambda_hat = cal.lambda_hat;
    out.infeasible = cal.infeasible_at_floor;
    out.held_out_loss = fresh(cal.lambda_hat);
    out.grid_lambda = 0.0;
    for (std::size_t j = 0; j <= params.grid_points; ++j) {
        const double lambda = static_cast<double>(j) / static_cast<double>(params.grid_points);
        if (mean_loss(curves, lambda) <= cal.threshold) out.grid_lambda = lambda;
    }
    return out;
}

Metrics run_cell(const ExperimentSpec& spec, const Cell& cell, const std::string& dir) {
    std::ostringstream out;
    const std::string key(setting_key(spec.environment));
    std::vector<std::string> comment = {"env=" + std::string(to_string(spec.environment)) + " method=" + cell.method +
                                        " " + key + "=" + fmt_setting(cell.setting) +
                                        " seed=" + std::to_string(cell.seed) + " rng=splitmix64"};
    switch (spec.environment) {
        case Environment::nav: {
            const auto scenario = nav_cell(spec, cell);
            comment.push_back("streams=nav/crowd");
            nav::write_csv(out, nav::run_episode(scenario), comment);
            break;
        }
        case Environment::factory: {
            auto model = spec.factory_model;
            model.seed = cell.seed;
            comment.push_back("streams=factory/step");
            write_factory_trace(out, factory::run_policy(model, factory::parse_policy(cell.method), factory_cell(spec, cell)),
                                comment);
            break;
        }
        case Environment::trading: {
            const auto market = market_cell(spec, cell);
            comment.push_back("streams=trading/path");
            const auto paths = trading::simulate_paths(market);
            trading::write_csv(
                out, trading::run_strategy(market, paths, trading::parse_strategy(cell.method), spec.trading_strategy),
                comment);
            break;
        }
        case Environment::batch: {
            comment.push_back("streams=batch/curves");
            std::vector<BatchTrial> trials;
            trials.reserve(spec.batch.trials);
            for (std::size_t i = 0; i < spec.batch.trials; ++i)
                trials.push_back(run_batch_trial(spec.batch, cell.setting, cell.seed, i));
            write_batch_trace(out, trials, comment);
            break;
        }
        case Environment::theory_check: {
            comment.push_back("streams=theory/sequence");
            write_csv(out, run_theory_check(spec.theory, cell.seed), comment);
            break;
        }
    }
    const std::string text = out.str();
    const auto path = fs::path(dir) / cell.trace_name();
    {
        std::ofstream file(path, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + path.string());
        file << text;
        if (!file) throw std::runtime_error("write failed for " + path.string());
    }
    std::istringstream in(text);
    return metrics_from_trace(spec, cell, in);
}

Metrics metrics_from_trace(const ExperimentSpec& spec, const Cell& cell, std::istream& trace) {
    const auto& names = metric_names(spec.environment);
    std::vector<double> v;
    switch (spec.environment) {
        case Environment::nav: {
            const auto scenario = nav_cell(spec, cell);
            const auto steps = nav::read_nav_csv(trace);
            const nav::Vec2 last = steps.empty() ? scenario.start : nav::Vec2(steps.back().x, steps.back().y);
            const bool success = (last - scenario.goal).norm() <= scenario.goal_tolerance;
            const double time_s = success ? static_cast<double>(steps.size()) * scenario.limits.dt
                                          : std::numeric_limits<double>::infinity();
            const auto m = nav::summarize(steps, success, time_s, scenario.collision_radius, scenario.epsilon, 0);
            v = {m.success ? 1.0 : 0.0,
                 m.time_s,
                 m.safe ? 1.0 : 0.0,
                 m.min_dist,
                 m.avg_dist,
                 m.q05,
                 m.q10,
                 m.q25,
                 m.q50,
                 static_cast<double>(m.collision_steps),
                 static_cast<double>(m.close_steps),
                 static_cast<double>(m.steps)};
            break;
        }
        case Environment::factory: {
            const auto table = csv::read(trace);
            const auto risk = table.numeric_column("risk");
            const auto utility = table.numeric_column("utility");
            v = {risk.empty() ? 0.0 : risk.back(),
                 utility.empty() ? 0.0 : sum(utility) / static_cast<double>(utility.size())};
            break;
        }
        case Environment::trading: {
            const auto table = csv::read(trace);
            const auto loss = table.numeric_column("loss");
            const auto r = table.numeric_column("r");
            const auto action = table.numeric_column("action");
            const std::size_t per_year = spec.market.steps_per_year;
            std::vector<double> yl, yr;
            double l = 0.0, ret = 0.0, cl = 0.0, cr = 0.0;
            for (std::size_t t = 0; t < loss.size(); ++t) {
                const double rt = action[t] * r[t];
                l += loss[t];
                ret += rt;
                cl += loss[t];
                cr += rt;
                if ((t + 1) % per_year == 0) {
                    yl.push_back(l);
                    yr.push_back(ret);
                    l = ret = 0.0;
                }
            }
            v = {stats::mean(yl), stats::mean(yr), cl, cr};
            break;
        }
        case Environment::batch: {
            const auto table = csv::read(trace);
            const auto held = table.numeric_column("held_out_loss");
            const auto lam = table.numeric_column("lambda_hat");
            const auto grid = table.numeric_column("grid_lambda");
            const auto infeasible = table.numeric_column("infeasible");
            const double cell_width = 1.0 / static_cast<double>(spec.batch.grid_points);
            double gap = 0.0, mismatches = 0.0;
            for (std::size_t i = 0; i < lam.size(); ++i) {
                const double g = std::abs(lam[i] - grid[i]);
                gap = std::max(gap, g);
                mismatches += g > cell_width ? 1.0 : 0.0;
            }
            v = {stats::mean(held), stats::standard_error(held), stats::mean(lam), gap, mismatches, sum(infeasible)};
            break;
        }
        case Environment::theory_check: {
            const auto s = summarize_theory_csv(trace, spec.theory.identity_tolerance);
            v = {static_cast<double>(s.violations()),
                 static_cast<double>(s.bound_violations),
                 static_cast<double>(s.floor_violations),
                 static_cast<double>(s.identity_violations),
                 s.max_identity_error,
                 s.min_bound_slack,
                 s.min_floor_slack};
            break;
        }
    }
    Metrics out;
    for (std::size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i], v[i]);
    return out;
}

SummaryTable aggregate(Environment environment, std::vector<CellResult> results) {
    SummaryTable table;
    table.environment = environment;
    table.cells = std::move(results);
    const auto& names = metric_names(environment);
    for (const auto& c : table.cells) {
        auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const SummaryRow& r) {
            return r.method == c.cell.method && r.setting == c.cell.setting;
        });
        if (it == table.rows.end()) {
            table.rows.push_back({c.cell.method, c.cell.setting, 0, 0, {}, {}});
            it = std::prev(table.rows.end());
        }
        ++it->runs;
        it->failed += c.ok ? 0 : 1;
    }
    for (auto& row : table.rows) {
        for (std::size_t m = 0; m < names.size(); ++m) {
            std::vector<double> xs;
            for (const auto& c : table.cells)
                if (c.ok && c.cell.method == row.method && c.cell.setting == row.setting)
                    xs.push_back(c.metrics[m].second);
            const double nan = std::numeric_limits<double>::quiet_NaN();
            row.means.emplace_back(names[m], xs.empty() ? nan : stats::mean(xs));
            row.standard_errors.emplace_back(names[m], xs.empty() ? nan : stats::standard_error(xs));
        }
    }
    return table;
}

void write_cells_csv(std::ostream& out, const SummaryTable& table, std::string_view key) {
    const auto& names = metric_names(table.environment);
    out << "method," << key << ",seed,status";
    for (const auto& n : names) out << ',' << n;
    out << ",error\n";
    for (const auto& c : table.cells) {
        out << c.cell.method << ',' << fmt_setting(c.cell.setting) << ',' << c.cell.seed << ','
            << (c.ok ? "ok" : "failed");
        for (std::size_t m = 0; m < names.size(); ++m) out << ',' << (c.ok ? csv::fmt(c.metrics[m].second) : "");
        out << ',' << sanitize(c.error) << '\n';
    }
}

void write_summary_csv(std::ostream& out, const SummaryTable& table, std::string_view key) {
    const auto& names = metric_names(table.environment);
    out << "method," << key << ",runs,failed";
    for (const auto& n : names) out << ',' << n << ',' << n << "_se";
    out << '\n';
    for (const auto& r : table.rows) {
        out << r.method << ',' << fmt_setting(r.setting) << ',' << r.runs << ',' << r.failed;
        for (std::size_t m = 0; m < names.size(); ++m)
            out << ',' << csv::fmt(r.means[m].second) << ',' << csv::fmt(r.standard_errors[m].second);
        out << '\n';
    }
}

std::string summary_json(const SummaryTable& table, std::string_view key) {
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::ordered_json j;
    j["environment"] = std::string(to_string(table.environment));
    j["setting_key"] = std::string(key);
    j["failures"] = table.failures();
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : table.rows) {
        nlohmann::ordered_json row;
        row["method"] = r.method;
        row[std::string(key)] = r.setting;
        row["runs"] = r.runs;
        row["failed"] = r.failed;
        for (std::size_t m = 0; m < r.means.size(); ++m) {
            row[r.means[m].first] = num(r.means[m].second);
            row[r.means[m].first + "_se"] = num(r.standard_errors[m].second);
        }
        rows.push_back(row);
    }
    j["rows"] = rows;
    auto failed = nlohmann::ordered_json::array();
    for (const auto& c : table.cells)
        if (!c.ok)
            failed.push_back({{"method", c.cell.method}, {"seed", c.cell.seed}, {std::string(key), c.cell.setting},
                              {"error", c.error}});
    j["failed_cells"] = failed;
    return j.dump(2) + "\n";
}

SummaryTable run(const ExperimentSpec& spec, const RunOptions& options) {
    validate(spec);
    const std::string dir = options.output_dir.value_or(spec.output_dir);
    const std::size_t workers = effective_workers(options.workers);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());

    const auto all = cells(spec);
    std::vector<CellResult> results(all.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < all.size(); i = next++) {
            results[i].cell = all[i];
            try {
                results[i].metrics = run_cell(spec, all[i], dir);
                results[i].ok = true;
            } catch (const std::exception& e) {
                results[i].error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(workers, all.size()); ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    auto table = aggregate(spec.environment, std::move(results));
    const std::string key(setting_key(spec.environment));
    const auto emit = [&](const std::string& name, const auto& writer) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
        writer(out);
    };
    emit("cells.csv", [&](std::ostream& o) { write_cells_csv(o, table, key); });
    emit("summary.csv", [&](std::ostream& o) { write_summary_csv(o, table, key); });
    emit("summary.json", [&](std::ostream& o) { o << summary_json(table, key); });
    if (spec.environment == Environment::factory) {
        emit("policies.csv", [&](std::ostream& o) {
            o << "policy,seed,final_risk,mean_utility\n";
            for (const auto& c : table.cells)
                if (c.ok)
                    o << c.cell.method << ',' << c.cell.seed << ',' << csv::fmt(c.metrics[0].second) << ','
                      << csv::fmt(c.metrics[1].second) << '\n';
        });
    }
    return table;
}

SummaryTable reaggregate(const ExperimentSpec& spec, const std::string& dir) {
    std::vector<CellResult> results;
    for (const auto& cell : cells(spec)) {
        CellResult r;
        r.cell = cell;
        const auto path = fs::path(dir) / cell.trace_name();
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            r.error = "missing trace " + path.string();
        } else {
            try {
                r.metrics = metrics_from_trace(spec, cell, in);
                r.ok = true;
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        }
        results.push_back(std::move(r));
    }
    return aggregate(spec.environment, std::move(results));
}

}  // namespace cdt::experiment
