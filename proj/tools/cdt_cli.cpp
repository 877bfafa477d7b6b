#include "cdt/chart.hpp"
#include "cdt/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

void print_table(const cdt::experiment::SummaryTable& table) {
    const std::string key(cdt::experiment::setting_key(table.environment));
    cdt::experiment::write_summary_csv(std::cout, table, key);
    for (const auto& c : table.cells)
        if (!c.ok)
            std::cerr << "failed: method=" << c.cell.method << ' ' << key << '=' << c.cell.setting
                      << " seed=" << c.cell.seed << ": " << c.error << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conformal decision experiments"};
    app.require_subcommand(1);

    std::string spec_path;
    std::size_t workers = 0;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run every (setting, method, seed) cell of a spec");
    run->add_option("spec", spec_path, "YAML experiment spec")->required();
    run->add_option("--workers", workers, "Worker threads (default: hardware concurrency, capped by CDT_MAX_WORKERS)");
    run->add_option("--out", out_dir, "Output directory (overrides output_dir)");

    auto* check = app.add_subcommand("validate", "Parse and validate a spec without running it");
    check->add_option("spec", spec_path, "YAML experiment spec")->required();

    auto* again = app.add_subcommand("reaggregate", "Rebuild the summary from the trace CSVs of a finished run");
    again->add_option("spec", spec_path, "YAML experiment spec")->required();
    again->add_option("--out", out_dir, "Directory holding the traces (default: output_dir)");

    std::vector<std::string> traces;
    std::vector<std::string> channels;
    double ref_line = 0.0;
    std::string svg_path = "chart.svg";
    std::string title;
    auto* chart = app.add_subcommand("chart", "Render trace channels to an SVG line chart");
    chart->add_option("traces", traces, "Trace CSV files")->required()->check(CLI::ExistingFile);
    chart->add_option("--channel,-c", channels, "Column to plot; repeat for stacked panels")->required();
    auto* ref = chart->add_option("--ref-line", ref_line, "Horizontal reference line");
    chart->add_option("--output,-o", svg_path, "SVG file to write");
    chart->add_option("--title", title, "Chart title");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*chart) {
            cdt::chart::ChartOptions options;
            options.channels = channels;
            options.title = title;
            if (*ref) options.ref_line = ref_line;
            const auto svg = cdt::chart::render_files(traces, options);
            std::ofstream out(svg_path, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + svg_path);
            out << svg;
            std::cout << svg_path << '\n';
            return kOk;
        }

        const auto spec = cdt::experiment::load_spec(spec_path);
        cdt::experiment::validate(spec);
        if (*check) {
            const auto n = cdt::experiment::cells(spec).size();
            std::cout << "ok: " << cdt::experiment::to_string(spec.environment) << ", " << n << " cells\n";
            return kOk;
        }
        if (*again) {
            const auto table = cdt::experiment::reaggregate(spec, out_dir.empty() ? spec.output_dir : out_dir);
            print_table(table);
            return table.failures() ? kRuntime : kOk;
        }

        cdt::experiment::RunOptions options;
        options.workers = workers;
        if (!out_dir.empty()) options.output_dir = out_dir;
        const auto table = cdt::experiment::run(spec, options);
        print_table(table);
        return table.failures() ? kRuntime : kOk;
    } catch (const cdt::experiment::ValidationError& e) {
        std::cerr << "invalid spec: " << e.what() << '\n';
        return kValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
