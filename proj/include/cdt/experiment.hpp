#pragma once

// Config-driven Monte Carlo runs: one YAML file names an environment, its
// parameters, the methods to compare and the seeds. Every (setting, method,
// seed) cell writes its own trace CSV; the summary is recomputed from those
// files so it can always be rebuilt from disk.

#include "cdt/factory.hpp"
#include "cdt/nav_episode.hpp"
#include "cdt/theory_check.hpp"
#include "cdt/trading.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdt::experiment {

enum class Environment { nav, factory, trading, batch, theory_check };

std::string_view to_string(Environment e);
Environment parse_environment(std::string_view name);

// Thrown for anything wrong with the spec itself. what() starts with the
// offending field path, e.g. "params.epsilon: must lie in (0, 1)".
class ValidationError : public std::invalid_argument {
public:
    ValidationError(const std::string& field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Synthetic exchangeable calibration problem: curve i is
// clamp((lambda - u_i) / s_i, 0, 1) with u_i ~ U(0, 1), s_i ~ U(s_min, s_max).
struct BatchParams {
    std::size_t n = 100;
    std::size_t trials = 500;  // per seed
    double s_min = 0.05;
    double s_max = 0.5;
    std::size_t grid_points = 10000;
};

struct ExperimentSpec {
    Environment environment = Environment::factory;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";
    std::vector<std::string> methods;

    // The swept parameter: nav eta, factory epsilon, trading rho, batch
    // epsilon. theory_check has no sweep and uses a single 0 entry.
    std::vector<double> settings;

    nav::NavScenario nav;
    factory::FactoryModel factory_model;
    factory::PolicyConfig factory_policy;
    trading::MarketModel market;
    trading::StrategyConfig trading_strategy;
    BatchParams batch;
    TheoryCheckConfig theory;
};

// Name of the swept parameter for an environment ("eta", "epsilon", ...).
std::string_view setting_key(Environment e);

ExperimentSpec parse_spec(std::istream& in, const std::string& base_dir = ".");
ExperimentSpec load_spec(const std::string& path);

// Throws ValidationError. Builds every cell's parameters without running.
void validate(const ExperimentSpec& spec);

struct Cell {
    std::string method;
    double setting = 0.0;
    std::uint64_t seed = 0;

    std::string trace_name() const;
};

std::vector<Cell> cells(const ExperimentSpec& spec);

using Metrics = std::vector<std::pair<std::string, double>>;

struct CellResult {
    Cell cell;
    bool ok = false;
    std::string error;
    Metrics metrics;
};

struct SummaryRow {
    std::string method;
    double setting = 0.0;
    std::size_t runs = 0;
    std::size_t failed = 0;
    Metrics means;
    Metrics standard_errors;
};

struct SummaryTable {
    Environment environment = Environment::factory;
    std::vector<CellResult> cells;
    std::vector<SummaryRow> rows;
    std::size_t failures() const;
};

struct RunOptions {
    std::size_t workers = 0;  // 0: hardware concurrency
    std::optional<std::string> output_dir;
};

// Worker count after applying the CDT_MAX_WORKERS cap.
std::size_t effective_workers(std::size_t requested);

// Runs one cell and writes its trace into `dir`. Throws on failure.
Metrics run_cell(const ExperimentSpec& spec, const Cell& cell, const std::string& dir);

// Validates, runs every cell on a worker pool and writes cells.csv,
// summary.csv and summary.json into the output directory (factory runs also
// get policies.csv: `policy,seed,final_risk,mean_utility`). Cell failures
// are recorded, not thrown.
SummaryTable run(const ExperimentSpec& spec, const RunOptions& options = {});

// Rebuilds the table from the trace CSVs in `dir`.
SummaryTable reaggregate(const ExperimentSpec& spec, const std::string& dir);

// Metrics recomputed from one trace file.
Metrics metrics_from_trace(const ExperimentSpec& spec, const Cell& cell, std::istream& trace);

SummaryTable aggregate(Environment environment, std::vector<CellResult> results);

void write_cells_csv(std::ostream& out, const SummaryTable& table, std::string_view key);
void write_summary_csv(std::ostream& out, const SummaryTable& table, std::string_view key);
std::string summary_json(const SummaryTable& table, std::string_view key);

// Batch helpers shared with the tests.
struct BatchTrial {
    double lambda_hat = 0.0;
    double grid_lambda = 0.0;  // largest grid point meeting the threshold
    double held_out_loss = 0.0;
    bool infeasible = false;
};

BatchTrial run_batch_trial(const BatchParams& params, double epsilon, std::uint64_t seed, std::size_t trial);

}  // namespace cdt::experiment
