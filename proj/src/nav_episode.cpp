#include "cdt/nav_episode.hpp"

#include "cdt/csv.hpp"
#include "cdt/rng.hpp"
#include "cdt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cdt::nav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kCrowdStream = stream_id("nav/crowd");

}  // namespace

std::string_view to_string(PlannerVariant v) {
    switch (v) {
        case PlannerVariant::conformal: return "conformal";
        case PlannerVariant::aci: return "aci";
        case PlannerVariant::aggressive: return "aggressive";
        case PlannerVariant::conservative: return "conservative";
    }
    return "?";
}

PlannerVariant parse_variant(std::string_view name) {
    for (auto v : {PlannerVariant::conformal, PlannerVariant::aci, PlannerVariant::aggressive,
                   PlannerVariant::conservative})
        if (to_string(v) == name) return v;
    throw std::invalid_argument("unknown planner variant '" + std::string(name) + "'");
}

double SceneBounds::diagonal() const { return std::hypot(x_max - x_min, y_max - y_min); }

std::size_t NavScenario::max_steps() const {
    return static_cast<std::size_t>(std::floor(time_budget / limits.dt + 1e-9));
}

Frames generate_crowd(const CrowdConfig& crowd, std::uint64_t seed, std::size_t steps, double dt) {
    struct Walker {
        int id;
        Vec2 pos;
        Vec2 target;
        double speed;
        double noise;
    };
    CounterRng rng(seed, kCrowdStream);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    int next_id = 0;

    const auto lane_y = [&] { return crowd.y_min + (crowd.y_max - crowd.y_min) * unit(rng); };
    const auto spawn = [&](bool anywhere) {
        Walker w;
        w.id = next_id++;
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        const double x0 = anywhere ? crowd.x_extent * (2.0 * unit(rng) - 1.0) : side * crowd.x_extent;
        w.pos = Vec2(x0, lane_y());
        w.target = Vec2(anywhere ? (unit(rng) < 0.5 ? -crowd.x_extent : crowd.x_extent) : -side * crowd.x_extent,
                        lane_y());
        w.speed = crowd.speed_min + (crowd.speed_max - crowd.speed_min) * unit(rng);
        w.noise = 0.0;
        return w;
    };

    std::vector<Walker> walkers;
    for (std::size_t i = 0; i < crowd.count; ++i) walkers.push_back(spawn(true));

    Frames frames;
    frames.reserve(steps + 1);
    const auto snapshot = [&] {
        std::vector<PedestrianObs> f;
        f.reserve(walkers.size());
        for (const auto& w : walkers) f.push_back({w.id, w.pos});
        frames.push_back(std::move(f));
    };
    snapshot();
    const double decay = std::exp(-crowd.heading_reversion * dt);
    const double kick = crowd.heading_noise * std::sqrt(dt);
    for (std::size_t k = 0; k < steps; ++k) {
        for (auto& w : walkers) {
            w.noise = decay * w.noise + kick * normal(rng);
            const Vec2 to_target = w.target - w.pos;
            const double heading = std::atan2(to_target.y(), to_target.x()) + w.noise;
            w.pos += w.speed * dt * Vec2(std::cos(heading), std::sin(heading));
            if (to_target.norm() < w.speed * dt || std::abs(w.pos.x()) > crowd.x_extent + 1.0) w = spawn(false);
        }
        snapshot();
    }
    return frames;
}

void validate(const NavScenario& s) {
    const auto fail = [](const std::string& m) { throw std::invalid_argument("nav scenario: " + m); };
    if (!s.start.allFinite() || !s.goal.allFinite()) fail("start and goal must be finite");
    if (!(s.limits.v_max > 0.0) || !(s.limits.omega_max >= 0.0) || !(s.limits.dt > 0.0))
        fail("v_max and dt must be > 0, omega_max >= 0");
    if (s.horizon < 1) fail("horizon must be >= 1");
    if (s.candidates < 1) fail("candidates must be >= 1");
    if (!(s.heading_weight >= 0.0)) fail("heading_weight must be >= 0");
    if (!(s.eta >= 0.0) || !std::isfinite(s.eta)) fail("eta must be finite and >= 0");
    if (!(s.collision_radius > 0.0)) fail("collision_radius must be > 0");
    if (!(s.time_budget > 0.0)) fail("time_budget must be > 0");
    if (!(s.lambda_max >= 0.0)) fail("lambda_max must be >= 0");
    if (s.epsilon > 0.0 || s.epsilon < -s.effective_clip()) fail("epsilon must lie in [-clip, 0]");
    if (s.variant == PlannerVariant::aci && !(s.aci_alpha > 0.0 && s.aci_alpha < 1.0))
        fail("aci_alpha must lie in (0, 1)");
    if (s.aci_eta < 0.0) fail("aci_eta must be >= 0");
    if (s.predictor.order < 1) fail("ar_order must be >= 1");
}

EpisodeMetrics summarize(const std::vector<NavStep>& steps, bool success, double time_s,
                         double collision_radius, double epsilon, std::size_t brake_steps) {
    EpisodeMetrics m;
    m.success = success;
    m.time_s = success ? time_s : kInf;
    m.steps = steps.size();
    m.brake_steps = brake_steps;
    std::vector<double> d;
    for (const auto& s : steps) {
        if (std::isfinite(s.min_dist)) d.push_back(s.min_dist);
        if (s.min_dist < collision_radius) ++m.collision_steps;
        if (s.min_dist < -epsilon) ++m.close_steps;
    }
    m.safe = m.collision_steps == 0;
    if (d.empty()) {
        m.min_dist = m.avg_dist = m.q05 = m.q10 = m.q25 = m.q50 = kInf;
        return m;
    }
    m.min_dist = *std::min_element(d.begin(), d.end());
    m.avg_dist = stats::mean(d);
    m.q05 = stats::quantile(d, 0.05);
    m.q10 = stats::quantile(d, 0.10);
    m.q25 = stats::quantile(d, 0.25);
    m.q50 = stats::quantile(d, 0.50);
    return m;
}

namespace {

const std::vector<PedestrianObs>& frame_at(const Frames& frames, std::size_t k) {
    static const std::vector<PedestrianObs> none;
    return k < frames.size() ? frames[k] : none;
}

PredictionBundle sensed(PredictionBundle bundle, const Vec2& robot, double radius) {
    std::erase_if(bundle.tracks,
                  [&](const PredictedTrack& t) { return (t.positions.front() - robot).norm() > radius; });
    return bundle;
}

// Rolling record of the last H predictions per pedestrian, for scoring
// how far the realized positions fell from what was forecast.
class ForecastMemory {
public:
    explicit ForecastMemory(std::size_t horizon) : horizon_(horizon) {}

    void remember(const PredictionBundle& bundle) {
        for (auto& [id, past] : memory_) past.push_front({});
        for (const auto& t : bundle.tracks) {
            auto& past = memory_[t.id];
            if (past.empty() || !past.front().empty()) past.push_front({});
            past.front() = t.positions;
        }
        for (auto it = memory_.begin(); it != memory_.end();) {
            while (it->second.size() > horizon_) it->second.pop_back();
            const bool stale = std::all_of(it->second.begin(), it->second.end(),
                                           [](const auto& p) { return p.empty(); });
            it = stale ? memory_.erase(it) : std::next(it);
        }
    }

    // Worst per-step displacement rate between `actual` and every stored
    // forecast of it.
    // NaN when nothing forecast this pedestrian.
    double score(int id, const Vec2& actual) const {
        const auto it = memory_.find(id);
        if (it == memory_.end()) return std::numeric_limits<double>::quiet_NaN();
        double worst = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t age = 0; age < it->second.size(); ++age) {
            const auto& positions = it->second[age];
            const std::size_t tau = age + 1;
            if (positions.size() <= tau) continue;
            const double e = (positions[tau] - actual).norm() / static_cast<double>(tau);
            worst = std::isnan(worst) ? e : std::max(worst, e);
        }
        return worst;
    }

private:
    std::size_t horizon_;
    std::map<int, std::deque<std::vector<Vec2>>> memory_;
};

}  // namespace

EpisodeResult run_episode(const NavScenario& scenario, const PlanObserver& observer) {
    validate(scenario);
    const std::size_t max_steps = scenario.max_steps();
    const std::size_t w = scenario.warmup_steps;
    const Frames all = scenario.crowd
                           ? generate_crowd(*scenario.crowd, scenario.seed, w + max_steps, scenario.limits.dt)
                           : scenario.script;
    const Frames frames(all.begin() + static_cast<std::ptrdiff_t>(std::min(w, all.size())), all.end());
    const double clip = scenario.effective_clip();

    EpisodeResult result;
    result.trace = RiskTrace(LossRange{-clip, 0.0});

    // eta = 0 freezes lambda at its initial value.
    const bool adapt = scenario.variant == PlannerVariant::conformal && scenario.eta > 0.0;
    ConformalController controller(scenario.lambda_init, adapt ? scenario.eta : 1.0,
                                   scenario.epsilon, {-clip, 0.0}, LossDirection::higher_lambda_more_conservative);
    AciState aci{scenario.aci_alpha, scenario.aci_alpha, scenario.aci_eta};
    ScoreWindow window(scenario.aci_window);
    ForecastMemory memory(scenario.horizon);

    PedestrianSet peds(scenario.history_window);
    for (std::size_t k = 0; k < std::min(w, all.size()); ++k) peds.observe(all[k]);
    peds.observe(frame_at(frames, 0));

    PlanRequest request;
    request.robot.position = scenario.start;
    request.robot.heading = wrap_angle(scenario.start_heading);
    request.goal = scenario.goal;
    request.candidates = scenario.candidates;
    request.heading_weight = scenario.heading_weight;
    request.horizon = scenario.horizon;
    request.limits = scenario.limits;
    request.obstacles = scenario.obstacles;

    PredictorConfig predictor = scenario.predictor;
    predictor.dt = scenario.limits.dt;

    bool success = (scenario.start - scenario.goal).norm() <= scenario.goal_tolerance;
    double time_s = 0.0;
    std::size_t brake_steps = 0;

    for (std::size_t k = 0; k < max_steps && !success; ++k) {
        const auto predictions =
            sensed(predict(peds, scenario.horizon, predictor), request.robot.position, scenario.sensing_radius);

        double logged = 0.0;
        double radius = 0.0;
        SplinePlan chosen;
        switch (scenario.variant) {
            case PlannerVariant::conformal:
                logged = controller.lambda();
                request.lambda = std::clamp(logged, 0.0, scenario.lambda_max);
                chosen = plan(request, predictions);
                break;
            case PlannerVariant::aggressive:
                request.lambda = logged = 0.0;
                chosen = plan(request, predictions);
                break;
            case PlannerVariant::conservative:
                request.lambda = logged = scenario.lambda_max;
                chosen = plan(request, predictions);
                break;
            case PlannerVariant::aci: {
                logged = aci.alpha_t;
                request.lambda = 0.0;
                const auto scores = window.scores();
                radius = scores.empty() ? 0.0 : conformal_radius(scores, aci.alpha_t);
                chosen = plan_avoiding_sets(request, predictions, radius);
                break;
            }
        }
        if (observer) observer(PlanContext{k, request, predictions, chosen, radius});
        brake_steps += chosen.brake ? 1 : 0;

        const Pose& next = chosen.states.at(1);
        request.robot.position = next.position;
        request.robot.heading = next.heading;
        request.robot.speed = chosen.speed;

        const auto& observed = frame_at(frames, k + 1);
        peds.observe(observed);

        if (scenario.variant == PlannerVariant::aci) {
            std::vector<double> step_scores;
            bool any_miss = false;
            for (const auto& p : observed) {
                const double s = memory.score(p.id, p.position);
                if (std::isnan(s)) continue;
                step_scores.push_back(s);
                const bool covered = s <= radius;
                any_miss = any_miss || !covered;
                aci = aci_update(aci, covered);
            }
            result.aci.push_back({logged, any_miss});
            window.push_step(std::move(step_scores));
            memory.remember(predictions);
        }

        const double dist = nearest_distance(request.robot.position, observed);
        const double loss = nav_loss(request.robot.position, observed, clip);
        if (adapt) controller.update(loss);
        result.trace.push(logged, loss);

        NavStep step;
        step.x = request.robot.position.x();
        step.y = request.robot.position.y();
        step.theta = request.robot.heading;
        step.lambda = logged;
        step.loss = loss;
        step.min_dist = dist;
        step.risk = result.trace.steps().back().risk;
        result.steps.push_back(step);

        if ((request.robot.position - scenario.goal).norm() <= scenario.goal_tolerance) {
            success = true;
            time_s = static_cast<double>(k + 1) * scenario.limits.dt;
        }
    }
    result.trace.set_final_lambda(scenario.variant == PlannerVariant::conformal ? controller.lambda()
                                  : scenario.variant == PlannerVariant::aci     ? aci.alpha_t
                                  : result.steps.empty()                        ? 0.0
                                                                                : result.steps.back().lambda);
    result.metrics = summarize(result.steps, success, time_s, scenario.collision_radius, scenario.epsilon,
                               brake_steps);
    return result;
}

void write_csv(std::ostream& out, const EpisodeResult& result, const std::vector<std::string>& comment) {
    for (const auto& c : comment) out << "# " << c << '\n';
    out << "t,x,y,theta,lambda,loss,min_dist,risk\n";
    std::size_t t = 1;
    for (const auto& s : result.steps) {
        out << t++ << ',' << csv::fmt(s.x) << ',' << csv::fmt(s.y) << ',' << csv::fmt(s.theta) << ','
            << csv::fmt(s.lambda) << ',' << csv::fmt(s.loss) << ',' << csv::fmt(s.min_dist) << ','
            << csv::fmt(s.risk) << '\n';
    }
}

std::vector<NavStep> read_nav_csv(std::istream& in) {
    const auto table = csv::read(in);
    const auto x = table.numeric_column("x"), y = table.numeric_column("y"), th = table.numeric_column("theta"),
               lam = table.numeric_column("lambda"), loss = table.numeric_column("loss"),
               d = table.numeric_column("min_dist"), risk = table.numeric_column("risk");
    std::vector<NavStep> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i], y[i], th[i], lam[i], loss[i], d[i], risk[i]};
    return out;
}

std::string metrics_json(const EpisodeMetrics& m) {
    const auto num = [](double v) { return std::isfinite(v) ? csv::fmt(v) : std::string("null"); };
    std::ostringstream o;
    o << "{\"success\":" << (m.success ? "true" : "false") << ",\"time_s\":" << num(m.time_s)
      << ",\"safe\":" << (m.safe ? "true" : "false") << ",\"min_dist\":" << num(m.min_dist)
      << ",\"avg_dist\":" << num(m.avg_dist) << ",\"q05\":" << num(m.q05) << ",\"q10\":" << num(m.q10)
      << ",\"q25\":" << num(m.q25) << ",\"q50\":" << num(m.q50) << '}';
    return o.str();
}

Frames read_script_csv(std::istream& in) {
    const auto table = csv::read(in);
    const auto step = table.numeric_column("step"), id = table.numeric_column("id"),
               x = table.numeric_column("x"), y = table.numeric_column("y");
    Frames frames;
    for (std::size_t i = 0; i < step.size(); ++i) {
        if (step[i] < 0) throw std::runtime_error("script row " + std::to_string(i + 1) + ": negative step");
        const auto k = static_cast<std::size_t>(step[i]);
        if (frames.size() <= k) frames.resize(k + 1);
        frames[k].push_back({static_cast<int>(id[i]), Vec2(x[i], y[i])});
    }
    return frames;
}

}  // namespace cdt::nav
