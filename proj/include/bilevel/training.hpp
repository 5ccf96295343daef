#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bilevel/bayes.hpp"
#include "bilevel/info.hpp"
#include "bilevel/learner.hpp"
#include "bilevel/metrics.hpp"
#include "bilevel/rollout.hpp"

namespace bilevel {

struct TrainingConfig {
    TimescaleSchedule schedule;
    std::size_t horizon = 100;
    double gamma = 0.99;
    std::size_t follower_episodes = 4;  // episodes collected per follower update
    std::size_t leader_episodes = 4;    // episodes collected per leader update
    int jobs = 1;
    std::uint64_t seed = 0;
    /// Called after every outer iteration with (iteration, leader return, follower return).
    std::function<void(std::size_t, double, double)> on_iteration;
};

struct TrainingReport {
    MetricSeries leader_return{"leader_return"};
    MetricSeries follower_return{"follower_return"};
    std::vector<std::vector<double>> theta;  // mean final theta of the leader-phase episodes
    std::size_t follower_rounds = 0;         // follower update rounds (each updates every group)
    std::size_t leader_updates = 0;
};

/// Alternating optimization on nested timescales: per outer iteration, K
/// rounds of (collect, update every follower group) with the leader fixed,
/// then one leader update with the followers fixed.
TrainingReport alternating_train(const Environment& env, Learner& leader, std::span<Learner* const> followers,
                                 const PolicyBinding& binding, const TrainingConfig& cfg);

/// Evaluation episodes with the learners' evaluation actors (leader) and
/// behaviour actors (followers).
std::vector<Episode> evaluate(const Environment& env, const Learner& leader, std::span<Learner* const> followers,
                              const PolicyBinding& binding, const RolloutOptions& opt, std::uint64_t seed,
                              std::size_t rollouts, int jobs);

/// Always plays the same action.
class ConstantActor final : public Actor {
public:
    explicit ConstantActor(ActionValue a) : action_(std::move(a)) {}
    std::vector<ActionSample> act(const nn::Matrix& obs, std::span<Rng* const> rngs) const override;
    const ActionValue& action() const noexcept { return action_; }
    void set_action(ActionValue a) { action_ = std::move(a); }

private:
    ActionValue action_;
};

/// A leader that never changes its action (e.g. the free-market baseline).
class FixedLeader final : public Learner {
public:
    explicit FixedLeader(ActionValue a) : actor_(std::move(a)) {}
    std::string name() const override { return "fixed-leader"; }
    const Actor& actor() const override { return actor_; }
    UpdateStats update(std::span<const Trajectory* const>) override;
    bool needs_experience() const override { return false; }

private:
    ConstantActor actor_;
};

/// Draws its action uniformly from a preference grid each decision: the
/// closed-form maximizer of the entropy of the sampled preferences.
class MaxEntropyLeader final : public Learner {
public:
    explicit MaxEntropyLeader(PreferenceGrid grid) : grid_(std::move(grid)), actor_(grid_) {}
    std::string name() const override { return "max-entropy-leader"; }
    const Actor& actor() const override { return actor_; }
    UpdateStats update(std::span<const Trajectory* const>) override;
    bool needs_experience() const override { return false; }
    const PreferenceGrid& grid() const noexcept { return grid_; }

private:
    class Sampler final : public Actor {
    public:
        explicit Sampler(const PreferenceGrid& g) : grid_(g) {}
        std::vector<ActionSample> act(const nn::Matrix& obs, std::span<Rng* const> rngs) const override;

    private:
        const PreferenceGrid& grid_;
    };
    PreferenceGrid grid_;
    Sampler actor_;
};

/// Surrogate-model outer loop: plays one candidate per update batch, records
/// the batch's mean leader return and asks the GP for the next candidate.
/// Evaluation plays the best candidate observed so far.
class BayesLeader final : public Learner {
public:
    BayesLeader(std::vector<Bound> bounds, std::uint64_t seed, BayesConfig cfg = {});
    std::string name() const override { return "bayes-leader"; }
    const Actor& actor() const override { return current_; }
    const Actor& eval_actor() const override { return best_; }
    UpdateStats update(std::span<const Trajectory* const> batch) override;
    const SurrogateState& state() const noexcept { return state_; }

private:
    std::vector<Bound> bounds_;
    BayesConfig cfg_;
    Rng rng_;
    SurrogateState state_;
    ConstantActor current_;
    ConstantActor best_;
};

}  // namespace bilevel
