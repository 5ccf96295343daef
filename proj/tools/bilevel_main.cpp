#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/harness/config.hpp"
#include "bilevel/harness/run.hpp"

namespace fs = std::filesystem;
using namespace bilevel;
using namespace bilevel::harness;

namespace {

constexpr int kFailure = 1;
constexpr int kSchema = 2;
constexpr int kNonFinite = 3;

fs::path default_out(const ExperimentConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    const char* root = std::getenv("BILEVEL_OUTPUT_ROOT");
    return fs::path(root && *root ? root : "runs") / cfg.name;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bi-level leader/follower agent-based simulation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string out_dir;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Train and evaluate one experiment");
    run->add_option("config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--jobs", jobs, "Worker threads for rollouts and gradients")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (default: $BILEVEL_OUTPUT_ROOT/<name> or runs/<name>)");
    run->add_flag("--quiet", quiet, "No progress output");

    std::string dir_a, dir_b, metric, csv_out;
    auto* cmp = app.add_subcommand("compare", "Compare one metric across two runs");
    cmp->add_option("run_a", dir_a)->required();
    cmp->add_option("run_b", dir_b)->required();
    cmp->add_option("--metric", metric, "Metric name")->required();
    cmp->add_option("--csv", csv_out, "Also write the table as CSV");

    std::string validate_path;
    auto* val = app.add_subcommand("validate-config", "Check a config file and print it resolved");
    val->add_option("config", validate_path)->required();

    auto* list = app.add_subcommand("list-tasks", "Print the known task names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            ExperimentConfig cfg = load_config(config_path);
            if (seed) cfg.seed = *seed;
            if (jobs) cfg.jobs = *jobs;
            const fs::path out = out_dir.empty() ? default_out(cfg) : fs::path(out_dir);
            run_to_directory(cfg, out, quiet ? nullptr : &std::cerr);
            std::cout << out.string() << "\n";
            return 0;
        }
        if (*cmp) {
            try {
                auto lines = compare_runs(dir_a, dir_b, metric);
                print_comparison(std::cout, metric, lines);
                if (!csv_out.empty()) write_comparison_csv(csv_out, lines);
                return 0;
            } catch (const MissingMetricError& e) {
                std::cerr << "error: " << e.what() << "; available metrics:\n";
                for (const auto& m : e.available()) std::cerr << "  " << m << "\n";
                return kSchema;
            }
        }
        if (*val) {
            ExperimentConfig cfg = load_config(validate_path);
            std::cout << resolved_json(cfg).dump(2) << "\n";
            return 0;
        }
        if (*list) {
            for (const auto& t : task_names()) std::cout << t << "\n";
            return 0;
        }
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kSchema;
    } catch (const NonFiniteError& e) {
        std::cerr << "aborted: " << e.what() << "\n";
        return kNonFinite;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
