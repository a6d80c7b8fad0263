// vqcgenlab: config-driven drivers for the unitary-compiling and phase
// classification experiments, the bound calculators, and the validation
// suite. See README.md for config schemas.

#include <iostream>

#include <CLI11.hpp>

#include "vqcgenlab/expcli.hpp"
#include "vqcgenlab/validate.hpp"

namespace {

using namespace vqcgenlab;
namespace fs = std::filesystem;

int run_validate_command(const std::string& out_dir) {
    validate::SuiteContext ctx;
    const auto report = validate::run_validate(ctx);
    expcli::CsvTable csv;
    csv.header = {"suite", "status", "cases", "counterexample"};
    nlohmann::ordered_json timings = nlohmann::ordered_json::object();
    for (const auto& r : report.results) {
        csv.rows.push_back(
            {r.name, r.pass ? "pass" : "fail", std::to_string(r.cases), r.counterexample});
        timings[r.name] = r.wall_ms;
        std::cout << (r.pass ? "[pass] " : "[FAIL] ") << r.name << " (" << r.cases << " cases, "
                  << r.wall_ms << " ms)";
        if (!r.pass) std::cout << "  counterexample: " << r.counterexample;
        std::cout << "\n";
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        csv.write(fs::path(out_dir) / "runs.csv");
        nlohmann::ordered_json summary;
        summary["command"] = "validate";
        summary["suites"] = report.results.size();
        summary["all_pass"] = report.all_pass;
        summary["wall_ms"] = timings;
        std::ofstream js(fs::path(out_dir) / "summary.json", std::ios::binary);
        js << summary.dump(2) << "\n";
    }
    std::cout << (report.all_pass ? "validate: all suites passed\n"
                                  : "validate: FAILURES detected\n");
    return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"variational quantum circuit generalization laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds_csv;
    int threads = 0;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        cmd->add_option("--config", config_path, "JSON config file")->required(config_required);
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seeds", seeds_csv, "comma-separated seed override");
        cmd->add_option("--threads", threads, "worker threads (env VQCGENLAB_THREADS overrides)");
    };

    auto* compile_scan = app.add_subcommand("compile-scan", "VAns unitary-compiling N_min scan");
    add_common(compile_scan, true);
    auto* near_solution = app.add_subcommand("near-solution", "perturbed-QFT retraining runs");
    add_common(near_solution, true);
    auto* phase = app.add_subcommand("phase", "QCNN phase classification runs");
    add_common(phase, true);
    auto* bounds_cmd = app.add_subcommand("bounds", "generalization bound report");
    add_common(bounds_cmd, true);
    auto* validate_cmd = app.add_subcommand("validate", "run the validation suites");
    add_common(validate_cmd, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (compile_scan->parsed()) {
            auto cfg = expcli::cfgjson::parse_compile_scan(expcli::cfgjson::load(config_path));
            expcli::cfgjson::apply_seed_override(cfg.seeds, seeds_csv);
            if (threads > 0) cfg.threads = threads;
            const auto out = expcli::cmd_compile_scan(cfg);
            if (!out_dir.empty()) expcli::write_outputs(out_dir, out);
            std::cout << out.summary.dump(2) << "\n";
        } else if (near_solution->parsed()) {
            auto cfg = expcli::cfgjson::parse_near_solution(expcli::cfgjson::load(config_path));
            expcli::cfgjson::apply_seed_override(cfg.seeds, seeds_csv);
            if (threads > 0) cfg.threads = threads;
            const auto out = expcli::cmd_near_solution(cfg);
            if (!out_dir.empty()) expcli::write_outputs(out_dir, out);
            std::cout << out.summary.dump(2) << "\n";
        } else if (phase->parsed()) {
            auto cfg = expcli::cfgjson::parse_phase(expcli::cfgjson::load(config_path));
            expcli::cfgjson::apply_seed_override(cfg.seeds, seeds_csv);
            if (threads > 0) cfg.threads = threads;
            const auto out = expcli::cmd_phase(cfg);
            if (!out_dir.empty()) {
                expcli::write_outputs(out_dir, out.base);
                out.snapshots.write(fs::path(out_dir) / "phase_snapshots.csv");
            }
            std::cout << out.base.summary.dump(2) << "\n";
        } else if (bounds_cmd->parsed()) {
            const auto cfg = expcli::cfgjson::parse_bounds_query(expcli::cfgjson::load(config_path));
            const auto out = expcli::cmd_bounds_report(cfg);
            std::cout << out.table;
            if (!out_dir.empty()) {
                fs::create_directories(out_dir);
                std::ofstream js(fs::path(out_dir) / "summary.json", std::ios::binary);
                js << out.summary.dump(2) << "\n";
            }
        } else if (validate_cmd->parsed()) {
            return run_validate_command(out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
