#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel/harness/config.hpp"

namespace bilevel::harness {

/// One CSV line: experiment, metric, step, rollout, value.
/// Evaluation rows use step = training_iterations and the rollout index;
/// training curves use rollout 0 and the outer iteration as step.
struct MetricRow {
    std::string experiment;
    std::string metric;
    long step = 0;
    long rollout = 0;
    double value = 0.0;
};

/// Runs the configured task end to end and returns its metric rows.
/// Progress lines go to `log` when given.
std::vector<MetricRow> run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

void write_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_csv(const std::filesystem::path& path);

struct MetricStats {
    std::size_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double final = 0.0;  // mean over rows at the largest step
};

using SummaryKey = std::pair<std::string, std::string>;  // experiment, metric

/// Per (experiment, metric) statistics; computed from rows only.
std::map<SummaryKey, MetricStats> summarize(const std::vector<MetricRow>& rows);
nlohmann::json summary_json(const std::map<SummaryKey, MetricStats>& s);

/// Rows with the given experiment and metric, in row order.
std::vector<double> select(const std::vector<MetricRow>& rows, const std::string& experiment, const std::string& metric);

/// Identifier of the build, fixed at configure time.
std::string build_id();

/// Runs the experiment and writes metrics.csv, summary.json and
/// manifest.json under `out_dir`. Returns the directory used.
std::filesystem::path run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       std::ostream* log = nullptr);

struct ComparisonLine {
    std::string experiment;
    MetricStats a, b;
    double delta_mean = 0.0, delta_min = 0.0, delta_max = 0.0;
    int sign = 0;  // sign of delta_mean (b - a)
};

/// Side-by-side comparison of one metric across two run directories.
/// Throws MissingMetricError when neither run has the metric.
std::vector<ComparisonLine> compare_runs(const std::filesystem::path& a, const std::filesystem::path& b,
                                         const std::string& metric);

class MissingMetricError : public std::runtime_error {
public:
    MissingMetricError(const std::string& metric, std::vector<std::string> available);
    const std::vector<std::string>& available() const noexcept { return available_; }

private:
    std::vector<std::string> available_;
};

void print_comparison(std::ostream& os, const std::string& metric, const std::vector<ComparisonLine>& lines);
void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonLine>& lines);

}  // namespace bilevel::harness
