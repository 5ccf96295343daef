#pragma once

// Partially observable Markov game with one leader (index 0) and n followers.
// The leader shapes the followers' world only through the characteristics
// vector; followers see their slice of it inside their observation.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bilevel/errors.hpp"

namespace bilevel {

enum class Role { Leader, Follower };

struct AgentId {
    std::size_t index = 0;

    constexpr Role role() const noexcept { return index == 0 ? Role::Leader : Role::Follower; }
    static constexpr AgentId leader() noexcept { return AgentId{0}; }
    static constexpr AgentId follower(std::size_t i) noexcept { return AgentId{i + 1}; }
    friend constexpr bool operator==(AgentId, AgentId) = default;
    friend constexpr auto operator<=>(AgentId, AgentId) = default;
};

std::string to_string(AgentId id);

struct Bound {
    double lo = 0.0;
    double hi = 0.0;

    double clamp(double v) const noexcept { return v < lo ? lo : (v > hi ? hi : v); }
    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
    double width() const noexcept { return hi - lo; }
};

/// Leader-controlled environment parameters. Writes are clamped into bounds;
/// the dimension is fixed at construction.
class Characteristics {
public:
    Characteristics() = default;
    Characteristics(std::vector<Bound> bounds, std::vector<double> values);
    explicit Characteristics(std::vector<Bound> bounds);  // values at lower bounds

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_.at(i); }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const Bound> bounds() const noexcept { return bounds_; }

    void set(std::size_t i, double v);
    void assign(std::span<const double> v);

private:
    std::vector<Bound> bounds_;
    std::vector<double> values_;
};

using Observation = std::vector<double>;

struct ActionSpace {
    enum class Kind { Discrete, Continuous };
    Kind kind = Kind::Discrete;
    std::size_t arity = 0;       // discrete: number of choices
    std::vector<Bound> bounds;   // continuous: one per component

    static ActionSpace discrete(std::size_t k) { return {Kind::Discrete, k, {}}; }
    static ActionSpace continuous(std::vector<Bound> b) { return {Kind::Continuous, 0, std::move(b)}; }
    std::size_t dim() const noexcept { return kind == Kind::Discrete ? 1 : bounds.size(); }
};

/// Either a discrete choice or a bounded real vector.
class ActionValue {
public:
    ActionValue() = default;
    static ActionValue discrete(std::size_t index) { return ActionValue(index); }
    static ActionValue continuous(std::vector<double> v) { return ActionValue(std::move(v)); }

    bool is_discrete() const noexcept { return std::holds_alternative<std::size_t>(v_); }
    std::size_t index() const { return std::get<std::size_t>(v_); }
    const std::vector<double>& vector() const { return std::get<std::vector<double>>(v_); }

    /// Throws ParameterError when the value does not fit the space.
    void validate(const ActionSpace& space) const;

    friend bool operator==(const ActionValue&, const ActionValue&) = default;

private:
    explicit ActionValue(std::size_t i) : v_(i) {}
    explicit ActionValue(std::vector<double> v) : v_(std::move(v)) {}
    std::variant<std::size_t, std::vector<double>> v_{std::size_t{0}};
};

/// One decision of one agent.
struct Transition {
    Observation observation;
    ActionValue action;
    std::vector<double> raw_action;  // pre-squash sample the log-prob refers to
    double log_prob = 0.0;
    double reward = 0.0;
    double value_estimate = 0.0;
    double info_cost_weight = 0.0;   // weight of the KL-to-uniform cost folded into reward
};

struct Trajectory {
    AgentId agent;
    std::vector<Transition> steps;
    double bootstrap_value = 0.0;  // V(s_T) when truncated, 0 on termination
    double gamma = 1.0;

    std::size_t size() const noexcept { return steps.size(); }
    std::vector<double> rewards() const;
};

/// Result of one simultaneous follower move.
struct StepResult {
    std::vector<Observation> observations;  // next follower observations
    std::vector<double> follower_rewards;
    double leader_reward = 0.0;
    bool done = false;
};

using NamedValues = std::vector<std::pair<std::string, double>>;

/// The pluggable simulator. Implementations must be deterministic given
/// (seed, characteristics, action sequence).
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual std::size_t num_followers() const = 0;
    virtual std::size_t observation_dim(Role role) const = 0;
    virtual ActionSpace action_space(Role role) const = 0;
    /// Typical magnitude of each observation slot, used to scale network inputs.
    virtual std::vector<double> observation_scale(Role role) const;
    /// Default characteristics (with bounds) used at reset when none supplied.
    virtual Characteristics default_characteristics() const = 0;
    /// Env steps between leader actions; >= horizon means once per episode.
    virtual std::size_t leader_action_period() const = 0;

    virtual std::vector<Observation> reset(const Characteristics& theta, std::uint64_t seed) = 0;
    virtual std::vector<Observation> follower_observe() const = 0;
    virtual Observation leader_observe() const = 0;
    virtual const Characteristics& leader_apply(const ActionValue& action) = 0;
    virtual StepResult follower_step(std::span<const ActionValue> actions) = 0;
    /// Follower i's (0-based) local view of the characteristics.
    virtual std::vector<double> follower_view(std::size_t i) const = 0;
    virtual const Characteristics& characteristics() const = 0;

    /// Weight of the information cost on follower i's policy (0 = fully rational).
    virtual double information_cost_weight(std::size_t /*i*/) const { return 0.0; }
    /// Extra leader reward settled when the episode ends (e.g. distribution matching).
    virtual double finish_episode() { return 0.0; }
    /// Per-step diagnostics recorded into the episode log.
    virtual NamedValues step_metrics() const { return {}; }
    /// End-of-episode diagnostics.
    virtual NamedValues episode_metrics() const { return {}; }

    virtual std::unique_ptr<Environment> clone() const = 0;
};

struct TimescaleSchedule {
    std::size_t inner_updates_per_outer = 10;
    std::size_t leader_action_period = 1;
    std::size_t total_outer_iterations = 100;

    void validate() const;
};

/// Sum_t gamma^t r_t.
double discounted_return(std::span<const double> rewards, double gamma);

}  // namespace bilevel
