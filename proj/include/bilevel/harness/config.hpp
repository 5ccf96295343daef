#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel/envs/cobweb.hpp"
#include "bilevel/envs/entry.hpp"
#include "bilevel/envs/market_maker.hpp"
#include "bilevel/envs/taxai.hpp"
#include "bilevel/ppo.hpp"

namespace bilevel::harness {

enum class Task { PolicyDesign, Calibrate, Scenario, MetaMm };

std::string to_string(Task t);
std::optional<Task> task_from_string(const std::string& s);
std::vector<std::string> task_names();

/// Config schema problem; carries the offending field path.
class SchemaError : public ConfigError {
public:
    SchemaError(std::string path, const std::string& what)
        : ConfigError(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct LearnerConfig {
    PpoConfig follower;
    PpoConfig leader;
    std::size_t episodes_per_follower_update = 4;
    std::size_t episodes_per_leader_update = 4;
};

struct CalibrateConfig {
    cobweb::Params env;
    enum class Outer { Rl, Bayes };
    Outer outer = Outer::Rl;
    std::string target_file;            // empty: generate a synthetic target
    double target_mu = 10.0;            // synthetic ground truth
    double target_sigma = 3.0;
    std::size_t target_rollouts = 10;
    std::optional<std::size_t> target_training_iterations;  // defaults to training_iterations
    std::size_t bootstrap_resamples = 100;
    bool run_baselines = true;          // also train the rational (lambda = 0) simulator
};

struct MetaMmConfig {
    mm::Params env;
    std::vector<double> omega_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> baseline_omegas;  // each trains its own fixed-preference policy
};

struct ExperimentConfig {
    Task task = Task::PolicyDesign;
    std::string name;  // experiment label in the CSV; defaults to the task name
    std::uint64_t seed = 0;
    std::size_t rollouts = 10;
    std::size_t training_iterations = 100;
    std::string output_dir;
    int jobs = 1;
    TimescaleSchedule schedule;
    bool leader_period_set = false;
    LearnerConfig learner;

    taxai::Params taxai;
    CalibrateConfig calibrate;
    entry::Params scenario;
    MetaMmConfig meta_mm;

    nlohmann::json source;  // config as written, for the manifest
};

/// Parses and validates a config document. Unknown keys, wrong types and
/// out-of-range values raise SchemaError naming the field path.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

/// The fully resolved config (all defaults filled in).
nlohmann::json resolved_json(const ExperimentConfig& cfg);

}  // namespace bilevel::harness
