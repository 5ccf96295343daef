#pragma once

// Small deterministic environments for exercising the core machinery.

#include <cmath>
#include <memory>

#include "bilevel/core.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::test {

/// n followers with a one-slot observation (a noisy counter), reward 1 per
/// step, never done. The leader picks theta in [0, 1] and is rewarded
/// -(theta - 0.5)^2 every step.
class StubEnv final : public Environment {
public:
    explicit StubEnv(std::size_t n = 2, std::size_t period = 1000, bool discrete = true)
        : n_(n), period_(period), discrete_(discrete) {}

    std::string name() const override { return "stub"; }
    std::size_t num_followers() const override { return n_; }
    std::size_t observation_dim(Role role) const override { return role == Role::Leader ? 1 : 2; }
    ActionSpace action_space(Role role) const override {
        if (role == Role::Leader) return ActionSpace::continuous({{0.0, 1.0}});
        return discrete_ ? ActionSpace::discrete(2) : ActionSpace::continuous({{-1.0, 1.0}});
    }
    Characteristics default_characteristics() const override { return Characteristics({{0.0, 1.0}}, {0.0}); }
    std::size_t leader_action_period() const override { return period_; }

    std::vector<Observation> reset(const Characteristics& theta, std::uint64_t seed) override {
        rng_ = make_rng(seed);
        theta_ = default_characteristics();
        theta_.assign(theta.values());
        t_ = 0;
        return follower_observe();
    }
    std::vector<Observation> follower_observe() const override {
        std::vector<Observation> o(n_);
        for (std::size_t i = 0; i < n_; ++i) o[i] = {static_cast<double>(t_) * 0.01, theta_[0]};
        return o;
    }
    Observation leader_observe() const override { return {1.0}; }
    const Characteristics& leader_apply(const ActionValue& a) override {
        theta_.assign(a.vector());
        return theta_;
    }
    StepResult follower_step(std::span<const ActionValue> actions) override {
        StepResult r;
        last_noise_ = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
        for (std::size_t i = 0; i < actions.size(); ++i) r.follower_rewards.push_back(1.0);
        const double d = theta_[0] - 0.5;
        r.leader_reward = -d * d;
        ++t_;
        r.observations = follower_observe();
        return r;
    }
    std::vector<double> follower_view(std::size_t) const override { return {theta_[0]}; }
    const Characteristics& characteristics() const override { return theta_; }
    NamedValues step_metrics() const override { return {{"noise", last_noise_}}; }
    std::unique_ptr<Environment> clone() const override { return std::make_unique<StubEnv>(*this); }

private:
    std::size_t n_, period_;
    bool discrete_;
    Rng rng_;
    Characteristics theta_;
    std::size_t t_ = 0;
    double last_noise_ = 0.0;
};

}  // namespace bilevel::test
