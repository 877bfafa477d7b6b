#pragma once

// Closed-loop navigation episodes: predict, plan, move one step, observe the
// pedestrians, score the loss, adapt lambda.

#include "cdt/aci.hpp"
#include "cdt/nav.hpp"
#include "cdt/risk_trace.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdt::nav {

enum class PlannerVariant { conformal, aci, aggressive, conservative };

std::string_view to_string(PlannerVariant v);
PlannerVariant parse_variant(std::string_view name);

// Pedestrians crossing the robot's path along x inside a y band. Headings
// follow an Ornstein-Uhlenbeck perturbation around the waypoint direction;
// a pedestrian leaving the band's x extent respawns with a fresh id.
struct CrowdConfig {
    std::size_t count = 8;
    double x_extent = 10.0;
    double y_min = -3.0;
    double y_max = 3.0;
    double speed_min = 0.4;
    double speed_max = 1.0;
    double heading_noise = 0.2;      // rad / sqrt(s)
    double heading_reversion = 1.0;  // 1 / s
};

using Frames = std::vector<std::vector<PedestrianObs>>;

Frames generate_crowd(const CrowdConfig& crowd, std::uint64_t seed, std::size_t steps, double dt);

struct SceneBounds {
    double x_min = -15.0, x_max = 15.0, y_min = -15.0, y_max = 15.0;
    double diagonal() const;
};

struct NavScenario {
    Vec2 start{0.0, -5.0};
    double start_heading = 1.5707963267948966;
    Vec2 goal{0.0, 5.0};
    double goal_tolerance = 0.5;

    DubinsLimits limits;
    std::size_t horizon = 10;
    std::size_t candidates = 128;
    double heading_weight = 1.0;  // m

    PlannerVariant variant = PlannerVariant::conformal;
    double eta = 100.0;
    double epsilon = -2.0;  // loss units: minus the target mean distance
    double lambda_init = 0.0;
    double lambda_max = 1000.0;  // decisions use clamp(lambda, 0, lambda_max)

    double aci_alpha = 0.01;
    double aci_eta = 0.01;
    std::size_t aci_window = 30;

    double clip = 0.0;  // <= 0 selects the scene diagonal
    double collision_radius = 0.3;
    double time_budget = 60.0;

    PredictorConfig predictor;
    std::size_t history_window = 12;
    double sensing_radius = 1e9;  // pedestrians beyond this are not fed to the planner

    SceneBounds bounds;
    std::vector<Obstacle> obstacles;
    std::optional<CrowdConfig> crowd;
    Frames script;  // used when `crowd` is empty; frame k is time k * dt
    std::size_t warmup_steps = 0;  // frames observed before the robot starts moving
    std::uint64_t seed = 0;

    double effective_clip() const { return clip > 0.0 ? clip : bounds.diagonal(); }
    std::size_t max_steps() const;
};

struct EpisodeMetrics {
    bool success = false;
    double time_s = 0.0;  // +inf when the goal was not reached
    bool safe = true;
    double min_dist = 0.0;
    double avg_dist = 0.0;
    double q05 = 0.0, q10 = 0.0, q25 = 0.0, q50 = 0.0;
    std::size_t steps = 0;
    std::size_t collision_steps = 0;  // steps closer than the collision radius
    std::size_t close_steps = 0;      // steps closer than |epsilon|
    std::size_t brake_steps = 0;
};

struct NavStep {
    double x = 0.0, y = 0.0, theta = 0.0;
    double lambda = 0.0;  // controller lambda (cc), alpha (aci) or the fixed value
    double loss = 0.0;
    double min_dist = 0.0;
    double risk = 0.0;
};

struct EpisodeResult {
    EpisodeMetrics metrics;
    RiskTrace trace;
    std::vector<NavStep> steps;
    std::vector<AciRecord> aci;
};

// What the planner saw and chose on one step.
struct PlanContext {
    std::size_t step = 0;
    const PlanRequest& request;
    const PredictionBundle& predictions;
    const SplinePlan& chosen;
    double radius = 0.0;  // aci only
};

using PlanObserver = std::function<void(const PlanContext&)>;

// Throws std::invalid_argument when the scenario is inconsistent.
void validate(const NavScenario& scenario);

EpisodeResult run_episode(const NavScenario& scenario, const PlanObserver& observer = {});

EpisodeMetrics summarize(const std::vector<NavStep>& steps, bool success, double time_s,
                         double collision_radius, double epsilon, std::size_t brake_steps);

// CSV with header `t,x,y,theta,lambda,loss,min_dist,risk`.
void write_csv(std::ostream& out, const EpisodeResult& result,
               const std::vector<std::string>& comment = {});
std::vector<NavStep> read_nav_csv(std::istream& in);

// Metrics as a flat JSON object.
std::string metrics_json(const EpisodeMetrics& metrics);

// Stanford Drone Dataset annotation ingestion.
struct SddScript {
    Frames frames;
    std::size_t first_frame = 0;
    std::size_t skipped_labels = 0;  // rows with a label other than Pedestrian
    std::size_t lost_rows = 0;
};

// Rows: `track_id xmin ymin xmax ymax frame lost occluded generated "label"`.
// Box centers are scaled by `scale` (m/pixel). `frame_stride` keeps every
// n-th frame. Throws std::runtime_error naming the row on parse failures.
SddScript ingest_sdd(std::istream& in, double scale, std::size_t frame_stride = 1);
SddScript ingest_sdd_file(const std::string& path, double scale, std::size_t frame_stride = 1);

// `step,id,x,y` CSV.
Frames read_script_csv(std::istream& in);

}  // namespace cdt::nav
